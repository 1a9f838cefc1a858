from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from loguru import logger

from wpcross.classical import Trajectory
from wpcross.lib.enums import ModeSign
from wpcross.lib.errors import ConfigurationError, GridOverflowError, SingularTimeError
from wpcross.lib.utils import write_complex_dump, write_csv
from wpcross.potential import CrossingEvent, PauliPotential, hess_lambda

DEFAULT_POINTS = 256
DEFAULT_HALF_WIDTH = 12.0
OVERFLOW_FRACTION = 1e-6
# steps shrink like this fraction of the distance to t♭
REFINEMENT_FACTOR = 0.05

MatrixHook = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class ProfileGrid:
    """
    A profile sampled on the periodic grid [−L, L)^d with n points per axis
    """
    dim: int
    n: int
    half_width: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.n < 2 or self.n & (self.n - 1):
            raise ConfigurationError(f"Profile grid size must be a power of two, got {self.n}")
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != (self.n,) * self.dim:
            raise ConfigurationError(f"Profile values of shape {values.shape} do not fit a {self.dim}-d grid "
                                     f"of {self.n} points")
        object.__setattr__(self, "values", values)

    @property
    def spacing(self) -> float:
        return 2 * self.half_width / self.n

    @property
    def cell(self) -> float:
        return self.spacing ** self.dim

    @property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n)

    @property
    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij")

    @property
    def wavenumbers(self) -> list[np.ndarray]:
        k = 2 * np.pi * np.fft.fftfreq(self.n, self.spacing)
        return np.meshgrid(*([k] * self.dim), indexing="ij")

    def with_values(self, values: np.ndarray) -> ProfileGrid:
        return ProfileGrid(self.dim, self.n, self.half_width, values)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell))

    def mass(self) -> float:
        return self.norm() ** 2

    def inner(self, other: ProfileGrid) -> complex:
        return complex(np.sum(np.conj(self.values) * other.values) * self.cell)

    def derivative(self, orders: tuple[int, ...]) -> np.ndarray:
        if not any(orders):
            return self.values
        symbol = np.ones_like(self.values)
        for k, order in zip(self.wavenumbers, orders):
            symbol = symbol * (1j * k) ** order
        return np.fft.ifftn(symbol * np.fft.fftn(self.values))

    def sigma_norm(self, k: int) -> float:
        """
        sup over |a| + |b| ≤ k of ‖y^a ∂^b u‖, k ∈ {0, 1, 2}
        """
        if k not in (0, 1, 2):
            raise ConfigurationError(f"Σ^k norms are available for k ≤ 2, got {k}")
        mesh = self.mesh
        best = 0.0
        exponents = [e for e in itertools.product(range(k + 1), repeat=self.dim) if sum(e) <= k]
        for a in exponents:
            weight = np.ones(self.values.shape)
            for y, power in zip(mesh, a):
                weight = weight * y ** power
            for b in exponents:
                if sum(a) + sum(b) > k:
                    continue
                value = weight * self.derivative(b)
                best = max(best, float(np.sqrt(np.sum(np.abs(value) ** 2) * self.cell)))
        return best

    def boundary_fraction(self, layer: int | None = None) -> float:
        """
        Share of the mass sitting in the outer layer of cells along any axis
        """
        layer = layer or max(2, self.n // 32)
        inside = np.ones(self.values.shape, dtype=bool)
        for axis in range(self.dim):
            index = [slice(None)] * self.dim
            index[axis] = np.r_[0:layer, self.n - layer:self.n]
            inside[tuple(index)] = False
        density = np.abs(self.values) ** 2
        total = float(np.sum(density))
        return 0.0 if total == 0 else float(np.sum(density[~inside])) / total

    def to_csv(self, path: str) -> None:
        header = [*[f"y{i}" for i in range(self.dim)], "re", "im"]
        coordinates = [m.ravel() for m in self.mesh]
        flat = self.values.ravel()
        write_csv(path, header, ([*(float(c[k]) for c in coordinates), float(flat[k].real), float(flat[k].imag)]
                                 for k in range(flat.size)))

    def to_binary(self, path: str) -> None:
        write_complex_dump(path, (self.dim, self.n, self.half_width), self.values)


def gaussian_profile(dim: int, n: int = DEFAULT_POINTS, half_width: float = DEFAULT_HALF_WIDTH,
                     center: np.ndarray | None = None, width: float = 1.0) -> ProfileGrid:
    """
    π^{−d/4}w^{−d/2}exp(−|y−c|²/(2w²)), unit L² norm
    """
    grid = ProfileGrid(dim, n, half_width, np.zeros((n,) * dim))
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    r2 = sum((y - c) ** 2 for y, c in zip(grid.mesh, center))
    values = np.pi ** (-dim / 4) * width ** (-dim / 2) * np.exp(-r2 / (2 * width ** 2))
    return grid.with_values(values)


def quadratic_form(grid: ProfileGrid, matrix: np.ndarray) -> np.ndarray:
    mesh = grid.mesh
    return sum(matrix[i, j] * mesh[i] * mesh[j] for i in range(grid.dim) for j in range(grid.dim))


@dataclass(frozen=True)
class HessianExpansion:
    M: np.ndarray
    gamma_alpha: np.ndarray
    gamma0: np.ndarray
    gamma1: np.ndarray
    g_scalar: float

    def hessian(self, mode: ModeSign) -> np.ndarray:
        return self.M + mode.sign * self.g_scalar * self.gamma_alpha


def gamma_matrices(event: CrossingEvent) -> tuple[np.ndarray, np.ndarray]:
    """
    Γ₀ = (1/r)dwᵀ(I − e_θe_θᵀ)dw and Γ₁ = (1/r)(dwᵀe_θ)(dwᵀe_θ)ᵀ at q♭
    """
    E = event.dw_flat.T @ event.e_theta
    E_perp = event.dw_flat.T @ event.e_theta_perp
    return np.outer(E_perp, E_perp) / event.r, np.outer(E, E) / event.r


def _gap_squared(event: CrossingEvent, t: float) -> float:
    tau = t - event.t_flat
    D = event.alpha ** 2 + (event.r * tau) ** 2
    if D == 0.0:
        raise SingularTimeError("Phase matrices are singular at t = t♭ when α = 0")
    return D


def hessian_expansion(pot: PauliPotential, event: CrossingEvent, mode: ModeSign, t: float) -> HessianExpansion:
    """
    Hess λ±(q±(t)) = M±(t) ± g(t)Γ_α(t) with the regular part assembled from the derivatives at q♭
    """
    D = _gap_squared(event, t)
    tau = t - event.t_flat
    root = np.sqrt(D)
    sigma = mode.sign
    a, r = event.signed_alpha, event.r
    q = event.z_flat.q

    E = event.dw_flat.T @ event.e_theta
    E_perp = event.dw_flat.T @ event.e_theta_perp
    gamma0, gamma1 = gamma_matrices(event)
    unit = (a * event.e_theta_perp + r * tau * event.e_theta) / root
    hess_w = np.asarray(pot.hess_w(q), dtype=float)

    cross = a ** 2 * np.outer(E_perp, E_perp) + r * a * tau * (np.outer(E_perp, E) + np.outer(E, E_perp))
    M = np.asarray(pot.hess_v(q), dtype=float) + sigma * (unit[0] * hess_w[0] + unit[1] * hess_w[1]) \
        - sigma * cross / D ** 1.5
    gamma_alpha = gamma0 + (event.alpha ** 2 / D) * gamma1
    return HessianExpansion(M, gamma_alpha, gamma0, gamma1, float(r / root))


@dataclass(frozen=True)
class PhaseMatrixG:
    gamma0: np.ndarray
    gamma1: np.ndarray
    r: float
    alpha: float
    t_flat: float

    def _distance(self, t: float) -> tuple[float, float]:
        tau = abs(t - self.t_flat)
        D = self.alpha ** 2 + (self.r * tau) ** 2
        if D == 0.0:
            raise SingularTimeError("G_α is singular at t = t♭ when α = 0")
        return tau, float(np.sqrt(D))

    def h(self, t: float) -> float:
        """
        h_α(t) = ln(r|t−t♭| + √(α² + r²(t−t♭)²))
        """
        tau, root = self._distance(t)
        return float(np.log(self.r * tau + root))

    def __call__(self, t: float) -> np.ndarray:
        tau, root = self._distance(t)
        return self.gamma0 * np.log(self.r * tau + root) + (self.r * tau / root) * self.gamma1

    def g(self, t: float) -> np.ndarray:
        """
        g_α(t)Γ_α(t), the derivative of sgn(t−t♭)G_α(t)
        """
        _, root = self._distance(t)
        return (self.r / root) * (self.gamma0 + (self.alpha ** 2 / root ** 2) * self.gamma1)


def phase_matrix(event: CrossingEvent) -> PhaseMatrixG:
    gamma0, gamma1 = gamma_matrices(event)
    return PhaseMatrixG(gamma0, gamma1, event.r, event.alpha, event.t_flat)


def phase_matrix_G(event: CrossingEvent, t: float) -> np.ndarray:
    return phase_matrix(event)(t)


@dataclass
class ProfileHistory:
    times: list[float] = field(default_factory=list)
    grids: list[ProfileGrid] = field(default_factory=list)

    def append(self, t: float, grid: ProfileGrid) -> None:
        self.times.append(float(t))
        self.grids.append(grid)

    @property
    def final(self) -> ProfileGrid:
        return self.grids[-1]

    def at(self, t: float) -> ProfileGrid:
        index = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.grids[index]


class ProfilePropagator:
    """
    Strang splitting for i∂ₜu = −½Δu + ½H(t)y·y u: kinetic half steps in Fourier space around an exact
    quadratic phase evaluated at the midpoint
    """

    def __init__(self, grid: ProfileGrid, hessian: MatrixHook) -> None:
        self.grid = grid
        self.hessian = hessian
        self._k2 = sum(k ** 2 for k in grid.wavenumbers)
        self._kinetic: dict[float, np.ndarray] = {}

    def _exp_kinetic(self, dt: float) -> np.ndarray:
        if dt not in self._kinetic:
            # latest step only
            self._kinetic.clear()
            self._kinetic[dt] = np.exp(-0.25j * dt * self._k2)
        return self._kinetic[dt]

    def _exp_potential(self, t_mid: float, dt: float) -> np.ndarray:
        return np.exp(-0.5j * dt * quadratic_form(self.grid, self.hessian(t_mid)))

    def __call__(self, values: np.ndarray, t: float, dt: float) -> np.ndarray:
        kinetic = self._exp_kinetic(dt)
        values = np.fft.ifftn(kinetic * np.fft.fftn(values))
        values = self._exp_potential(t + 0.5 * dt, dt) * values
        return np.fft.ifftn(kinetic * np.fft.fftn(values))


def _check_overflow(grid: ProfileGrid, t: float) -> None:
    fraction = grid.boundary_fraction()
    if fraction > OVERFLOW_FRACTION:
        raise GridOverflowError(f"Profile left the box at t={t:.6g}: boundary mass fraction {fraction:.3e}")


def solve_profile(pot: PauliPotential, traj: Trajectory, u_init: ProfileGrid, t_init: float, t_end: float,
                  dt: float, event: CrossingEvent | None = None, hessian: MatrixHook | None = None,
                  snapshot_times: list[float] | None = None) -> ProfileHistory:
    """
    Evolve the profile equation of the mode carried by the trajectory

    :param event: When given, steps shrink geometrically towards t♭
    :param hessian: Replace Hess λ(q(t)) by this map
    :raises GridOverflowError: If the profile reaches the edge of its box
    """
    if not dt > 0:
        raise ConfigurationError(f"Profile time step must be positive, got {dt}")
    if hessian is None:
        sign = traj.mode.sign

        def hessian(t: float) -> np.ndarray:
            return hess_lambda(pot, traj.interpolate(t).q, sign)

    propagator = ProfilePropagator(u_init, hessian)
    direction = 1.0 if t_end >= t_init else -1.0
    stops = sorted({t for t in (snapshot_times or []) if min(t_init, t_end) < t < max(t_init, t_end)},
                   reverse=direction < 0) + [t_end]

    history = ProfileHistory()
    history.append(t_init, u_init)
    values, t, steps = u_init.values, t_init, 0
    for stop in stops:
        while direction * (stop - t) > 1e-14:
            h = dt
            if event is not None:
                h = min(h, max(REFINEMENT_FACTOR * abs(t - event.t_flat), 1e-8))
            h = min(h, abs(stop - t))
            values = propagator(values, t, direction * h)
            t = stop if abs(stop - t) <= h else t + direction * h
            steps += 1
            if steps % 50 == 0:
                _check_overflow(u_init.with_values(values), t)
        grid = u_init.with_values(values)
        _check_overflow(grid, t)
        history.append(t, grid)

    logger.debug(f"Profile solved over [{t_init:.6g}, {t_end:.6g}] in {steps} steps, "
                 f"norm drift {abs(history.final.norm() - u_init.norm()):.2e}")
    return history


def _quadratic_phase(grid: ProfileGrid, event: CrossingEvent, t: float, sign: float,
                     matrix: MatrixHook | None) -> np.ndarray:
    G = (matrix or phase_matrix(event))(t)
    return np.exp(0.5j * sign * quadratic_form(grid, G))


def extract_ingoing_profile(u_at: ProfileGrid, event: CrossingEvent, mode: ModeSign, t: float,
                            matrix: MatrixHook | None = None) -> ProfileGrid:
    """
    Remove the logarithmic quadratic phase accumulated near t♭: e^{∓(i/2)G_α(t)y·y}u(t) before t♭
    """
    sign = mode.sign * np.sign(t - event.t_flat)
    return u_at.with_values(_quadratic_phase(u_at, event, t, sign, matrix) * u_at.values)


def seed_outgoing_profile(u_out: ProfileGrid, event: CrossingEvent, mode: ModeSign, t_start: float,
                          matrix: MatrixHook | None = None) -> ProfileGrid:
    """
    Initial condition after t♭ whose extraction at t_start gives back u_out
    """
    sign = -mode.sign * np.sign(t_start - event.t_flat)
    return u_out.with_values(_quadratic_phase(u_out, event, t_start, sign, matrix) * u_out.values)
