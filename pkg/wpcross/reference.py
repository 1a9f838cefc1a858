from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from loguru import logger

from wpcross.lib.callback import Callback
from wpcross.lib.errors import BoxEscapeError, ConfigurationError, ResolutionError
from wpcross.lib.utils import read_complex_dump, write_complex_dump, write_csv
from wpcross.potential import CROSSING_THRESHOLD, PauliPotential, sample_on_grid
from wpcross.transition import WavePacket

ESCAPE_FRACTION = 1e-8
CFL_PHASE = np.pi / 4
CHECKPOINT_HEADER = 5


@dataclass(frozen=True)
class GridState:
    """
    Two-component wave function on the periodic box [−L, L)^d, psi of shape (2, n, ..., n)
    """
    dim: int
    n: int
    half_width: float
    psi: np.ndarray
    t: float
    eps: float

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ConfigurationError(f"Reference runs support d ∈ {{1, 2}}, got {self.dim}")
        psi = np.asarray(self.psi, dtype=np.complex128)
        if psi.shape != (2, *(self.n,) * self.dim):
            raise ConfigurationError(f"State of shape {psi.shape} does not fit a {self.dim}-d grid of {self.n} points")
        object.__setattr__(self, "psi", psi)

    @property
    def spacing(self) -> float:
        return 2 * self.half_width / self.n

    @property
    def cell(self) -> float:
        return self.spacing ** self.dim

    @property
    def axes(self) -> list[np.ndarray]:
        axis = -self.half_width + self.spacing * np.arange(self.n)
        return [axis] * self.dim

    @property
    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    @property
    def wavenumbers(self) -> list[np.ndarray]:
        k = 2 * np.pi * np.fft.fftfreq(self.n, self.spacing)
        return np.meshgrid(*([k] * self.dim), indexing="ij")

    def mass(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.cell)

    def boundary_fraction(self, layer: int | None = None) -> float:
        layer = layer or max(2, self.n // 32)
        density = np.sum(np.abs(self.psi) ** 2, axis=0)
        inside = np.ones(density.shape, dtype=bool)
        for axis in range(self.dim):
            index = [slice(None)] * self.dim
            index[axis] = np.r_[0:layer, self.n - layer:self.n]
            inside[tuple(index)] = False
        total = float(np.sum(density))
        return 0.0 if total == 0 else float(np.sum(density[~inside])) / total

    def with_psi(self, psi: np.ndarray, t: float) -> GridState:
        return replace(self, psi=psi, t=t)

    def dump(self, path: str) -> None:
        write_complex_dump(path, (self.dim, self.n, self.half_width, self.eps, self.t), self.psi)


def load_checkpoint(path: str) -> GridState:
    header, values = read_complex_dump(path, CHECKPOINT_HEADER)
    dim, n = int(header[0]), int(header[1])
    return GridState(dim, n, float(header[2]), values.reshape((2, *(n,) * dim)), float(header[4]),
                     float(header[3]))


def resolution_limit(eps: float, p_max: float = 0.0) -> float:
    """
    Largest admissible spacing: 2π√ε/8, and the Nyquist bound for momenta up to |p| + 8√ε
    """
    root = math.sqrt(eps)
    return min(2 * np.pi * root / 8, np.pi * eps / (p_max + 8 * root))


def check_resolution(state: GridState, p_max: float = 0.0) -> None:
    """
    :raises ResolutionError: If the grid spacing cannot carry the packet oscillations
    """
    limit = resolution_limit(state.eps, p_max)
    if state.spacing > limit:
        raise ResolutionError(f"Grid spacing {state.spacing:.4g} exceeds {limit:.4g} at ε={state.eps:g}; "
                              f"use more points or a smaller box")


def empty_state(dim: int, n: int, half_width: float, eps: float, t: float = 0.0) -> GridState:
    return GridState(dim, n, half_width, np.zeros((2, *(n,) * dim), dtype=np.complex128), t, eps)


def state_from_packets(packets: WavePacket | Sequence[WavePacket], n: int, half_width: float,
                       t: float | None = None) -> GridState:
    packets = [packets] if isinstance(packets, WavePacket) else list(packets)
    first = packets[0]
    state = empty_state(first.center.dim, n, half_width, first.eps, first.time if t is None else t)
    check_resolution(state, max(float(np.linalg.norm(p.center.p)) for p in packets))
    psi = sum(p.realize(state.axes) for p in packets)
    return state.with_psi(psi, state.t)


class PotentialFactor:
    """
    Pointwise e^{−iV(x)τ} in closed form from the Pauli decomposition
    """

    def __init__(self, pot: PauliPotential, state: GridState) -> None:
        self.v, self.w = sample_on_grid(pot, state.mesh)
        self.gap = np.hypot(self.w[0], self.w[1])
        self._cache: dict[float, np.ndarray] = {}

    def max_phase(self, dt: float, eps: float) -> float:
        return float(np.max(np.abs(self.v) + self.gap)) * dt / eps

    def matrix(self, tau: float) -> np.ndarray:
        """
        e^{−ivτ}(cos(|w|τ)I − iτ·sinc(|w|τ)A(w)), shape (2, 2, *grid)
        """
        if tau not in self._cache:
            phase = np.exp(-1j * self.v * tau)
            cos = np.cos(self.gap * tau)
            # τ·sin(|w|τ)/(|w|τ) is smooth through |w| = 0
            sin = tau * np.sinc(self.gap * tau / np.pi)
            w1, w2 = self.w
            self._cache[tau] = phase * np.array([[cos - 1j * sin * w1, -1j * sin * w2],
                                                 [-1j * sin * w2, cos + 1j * sin * w1]])
        return self._cache[tau]

    def __call__(self, psi: np.ndarray, tau: float) -> np.ndarray:
        m = self.matrix(tau)
        return np.stack([m[0, 0] * psi[0] + m[0, 1] * psi[1], m[1, 0] * psi[0] + m[1, 1] * psi[1]])


class Observables(NamedTuple):
    t: float
    mass: float
    m_minus: float
    m_plus: float
    q_mean: np.ndarray
    p_mean: np.ndarray


def mode_masses(pot: PauliPotential, state: GridState, w: np.ndarray | None = None) -> tuple[float, float]:
    """
    ∫|Π±ψ|² with Π± = ½(I ± A(w/|w|)); on the crossing set the direction of a neighbouring point is used

    :return: (m₋, m₊)
    """
    if w is None:
        _, w = sample_on_grid(pot, state.mesh)
    gap = np.hypot(w[0], w[1])
    valid = gap > CROSSING_THRESHOLD
    safe = np.where(valid, gap, 1.0)
    e = np.where(valid, w / safe, 0.0)
    if not np.all(valid):
        neighbour = np.roll(e, 1, axis=1)
        neighbour_valid = np.roll(valid, 1, axis=0)
        fallback = np.where(neighbour_valid, neighbour, np.array([1.0, 0.0]).reshape((2,) + (1,) * state.dim))
        e = np.where(valid, e, fallback)

    # A(e)ψ
    rotated = np.stack([e[0] * state.psi[0] + e[1] * state.psi[1], e[1] * state.psi[0] - e[0] * state.psi[1]])
    plus = 0.5 * (state.psi + rotated)
    minus = 0.5 * (state.psi - rotated)
    return float(np.sum(np.abs(minus) ** 2) * state.cell), float(np.sum(np.abs(plus) ** 2) * state.cell)


def observables(pot: PauliPotential, state: GridState, w: np.ndarray | None = None) -> Observables:
    density = np.sum(np.abs(state.psi) ** 2, axis=0)
    total = float(np.sum(density))
    mass = total * state.cell
    m_minus, m_plus = mode_masses(pot, state, w)
    q_mean = np.array([float(np.sum(x * density)) / total for x in state.mesh])

    spectrum = np.sum(np.abs(np.fft.fftn(state.psi, axes=tuple(range(1, state.dim + 1)))) ** 2, axis=0)
    p_mean = np.array([state.eps * float(np.sum(k * spectrum)) / float(np.sum(spectrum)) for k in state.wavenumbers])
    return Observables(state.t, mass, m_minus, m_plus, q_mean, p_mean)


class ObservablesRecorder:
    """
    Collects observables from an evolve callback and writes them as CSV
    """

    def __init__(self, pot: PauliPotential) -> None:
        self.pot = pot
        self.rows: list[Observables] = []
        self._w: np.ndarray | None = None

    def __call__(self, state: GridState) -> None:
        if self._w is None or self._w.shape[1:] != state.psi.shape[1:]:
            _, self._w = sample_on_grid(self.pot, state.mesh)
        self.rows.append(observables(self.pot, state, self._w))

    def to_csv(self, path: str) -> None:
        if not self.rows:
            return
        d = self.rows[0].q_mean.shape[0]
        header = ["t", "mass", "m_minus", "m_plus", *[f"q{i}" for i in range(d)], *[f"p{i}" for i in range(d)]]
        write_csv(path, header, ([o.t, o.mass, o.m_minus, o.m_plus, *map(float, o.q_mean), *map(float, o.p_mean)]
                                 for o in self.rows))


def _check_box(state: GridState) -> None:
    fraction = state.boundary_fraction()
    if fraction > ESCAPE_FRACTION:
        raise BoxEscapeError(f"Wave function reached the box edge at t={state.t:.6g}: "
                             f"boundary mass fraction {fraction:.3e}")


def evolve(pot: PauliPotential, state: GridState, t_end: float, dt: float,
           observer: Callback[GridState] | None = None, check_every: int = 25, check_box: bool = True) -> GridState:
    """
    Strang splitting of iε∂ₜψ = −(ε²/2)Δψ + Vψ: half potential step, full kinetic step, half potential step

    :param observer: Called with the state after every step, forced on the last one
    :param check_box: Disable for data that fills the box, such as plane waves
    :raises BoxEscapeError: If mass reaches the edge of the periodic box
    """
    if not dt > 0:
        raise ConfigurationError(f"Time step must be positive, got {dt}")
    span = t_end - state.t
    if span < 0:
        raise ConfigurationError(f"Reference runs go forward in time, got t_end={t_end} < t={state.t}")
    steps = max(1, math.ceil(span / dt - 1e-9)) if span > 0 else 0
    h = span / steps if steps else 0.0

    eps = state.eps
    potential = PotentialFactor(pot, state)
    if potential.max_phase(h, eps) > CFL_PHASE:
        logger.warning(f"Potential phase per step {potential.max_phase(h, eps):.3f} exceeds π/4 "
                       f"(dt={h:.3g}, ε={eps:g})")
    kinetic = np.exp(-0.5j * eps * h * sum(k ** 2 for k in state.wavenumbers))
    axes = tuple(range(1, state.dim + 1))
    initial_mass = state.mass()

    psi = state.psi
    if check_box:
        _check_box(state)
    for k in range(1, steps + 1):
        psi = potential(psi, 0.5 * h / eps)
        psi = np.fft.ifftn(kinetic * np.fft.fftn(psi, axes=axes), axes=axes)
        psi = potential(psi, 0.5 * h / eps)
        t = state.t + k * h
        current = state.with_psi(psi, t)
        if check_box and (k % check_every == 0 or k == steps):
            _check_box(current)
        if observer:
            observer(current, force=k == steps)

    final = state.with_psi(psi, t_end) if steps else state
    logger.debug(f"Reference run to t={t_end:.6g} in {steps} steps, mass drift {abs(final.mass() - initial_mass):.2e}")
    return final


def compare_to_packet(state: GridState, packets: WavePacket | Sequence[WavePacket]) -> float:
    """
    ‖ψ − Σ realized packets‖ in L²
    """
    packets = [packets] if isinstance(packets, WavePacket) else list(packets)
    approximation = sum(p.realize(state.axes) for p in packets)
    return float(np.sqrt(np.sum(np.abs(state.psi - approximation) ** 2) * state.cell))
