from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from wpcross.lib.enums import ModeSign
from wpcross.lib.errors import ConfigurationError, CrossingPointError, EvaluationError

CROSSING_THRESHOLD = 1e-12

VectorMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PauliPotential:
    """
    V(x) = v(x)·I + A(w(x)) with the first and second derivatives of v and w
    """
    dim: int
    v: Callable[[np.ndarray], float]
    grad_v: VectorMap
    hess_v: VectorMap
    w: VectorMap
    dw: VectorMap
    hess_w: VectorMap
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # optional vectorized (v, w) over a meshgrid, shapes grid and (2, *grid)
    grid_fields: Callable[[list[np.ndarray]], tuple[np.ndarray, np.ndarray]] | None = None


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def shifted(self, dp: np.ndarray) -> PhasePoint:
        return PhasePoint(self.q.copy(), self.p + dp)


@dataclass(frozen=True)
class CrossingEvent:
    t_flat: float
    z_flat: PhasePoint
    r: float
    theta: float
    alpha: float
    e_theta: np.ndarray
    e_theta_perp: np.ndarray
    V_theta: np.ndarray
    V_theta_perp: np.ndarray
    # dw(q♭), kept so the phase matrices need no potential
    dw_flat: np.ndarray
    action_flat: float = 0.0
    # sign of w(q♭)·e_θ^⊥, so that w(q♭) = orientation·α·e_θ^⊥
    orientation: float = 1.0

    @property
    def signed_alpha(self) -> float:
        return self.orientation * self.alpha


def pauli_matrix(w: np.ndarray) -> np.ndarray:
    """
    A(w) = [[w₁, w₂], [w₂, −w₁]]
    """
    return np.array([[w[0], w[1]], [w[1], -w[0]]], dtype=float)


def perp(e: np.ndarray) -> np.ndarray:
    return np.array([-e[1], e[0]], dtype=float)


def fixed_sign(vector: np.ndarray) -> np.ndarray:
    """
    Pin the sign of a real eigenvector: nonnegative first component, ties settled by the second
    """
    if abs(vector[0]) > 1e-15:
        return vector if vector[0] > 0 else -vector
    return vector if vector[1] >= 0 else -vector


def theta_vectors(theta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    :return: e_θ, e_θ^⊥, V_θ and V_θ^⊥ for the crossing angle θ
    """
    e = np.array([np.cos(theta), np.sin(theta)])
    V = fixed_sign(np.array([np.cos(theta / 2), np.sin(theta / 2)]))
    return e, perp(e), V, perp(V)


def _checked(x: np.ndarray, value, what: str) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise EvaluationError(x, what)
    return value


def w_of(pot: PauliPotential, x: np.ndarray) -> np.ndarray:
    return _checked(x, pot.w(x), "w")


def on_crossing(pot: PauliPotential, x: np.ndarray) -> bool:
    return float(np.linalg.norm(w_of(pot, x))) <= CROSSING_THRESHOLD * (1.0 + float(np.linalg.norm(x)))


def eval_matrix(pot: PauliPotential, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = float(_checked(x, pot.v(x), "v"))
    return v * np.eye(2) + pauli_matrix(w_of(pot, x))


def eigenvalues(pot: PauliPotential, x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    v = float(_checked(x, pot.v(x), "v"))
    gap = float(np.hypot(*w_of(pot, x)))
    return v - gap, v + gap


def mode_eigenvalue(pot: PauliPotential, x: np.ndarray, mode: ModeSign) -> float:
    low, high = eigenvalues(pot, x)
    return high if mode is ModeSign.PLUS else low


def unit_w(pot: PauliPotential, x: np.ndarray, p: np.ndarray | None = None, time_sign: int = 1) -> np.ndarray:
    """
    w(x)/|w(x)|; on the crossing set the one-sided limit along the motion dw(x)p/|dw(x)p| is used
    when a momentum is given
    """
    x = np.asarray(x, dtype=float)
    w = w_of(pot, x)
    if not on_crossing(pot, x):
        return w / np.hypot(*w)
    if p is None:
        raise CrossingPointError(x)
    direction = _checked(x, pot.dw(x), "dw") @ np.asarray(p, dtype=float)
    norm = float(np.hypot(*direction))
    if norm == 0.0:
        raise CrossingPointError(x)
    return time_sign * direction / norm


def projector(pot: PauliPotential, x: np.ndarray, mode: ModeSign) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if on_crossing(pot, x):
        raise CrossingPointError(x)
    return 0.5 * (np.eye(2) + mode.sign * pauli_matrix(unit_w(pot, x)))


def eigenvector(pot: PauliPotential, x: np.ndarray, mode: ModeSign) -> np.ndarray:
    """
    Normalized real eigenvector of V(x) for the given mode, sign fixed by convention
    """
    e = unit_w(pot, x)
    angle = np.arctan2(e[1], e[0])
    plus = np.array([np.cos(angle / 2), np.sin(angle / 2)])
    return fixed_sign(plus if mode is ModeSign.PLUS else perp(plus))


def _unit_w_derivative(w: np.ndarray, dw_xi: np.ndarray) -> np.ndarray:
    norm = np.hypot(*w)
    return dw_xi / norm - w * float(w @ dw_xi) / norm ** 3


def coupling_matrix_B(pot: PauliPotential, x: np.ndarray, xi: np.ndarray, mode: ModeSign) -> np.ndarray:
    """
    B± = ±Π∓(ξ·∇Π₊)Π±, the generator of parallel transport of the mode eigenvector
    """
    x = np.asarray(x, dtype=float)
    if on_crossing(pot, x):
        raise CrossingPointError(x)
    w = w_of(pot, x)
    dw_xi = _checked(x, pot.dw(x), "dw") @ np.asarray(xi, dtype=float)
    d_projector = 0.5 * pauli_matrix(_unit_w_derivative(w, dw_xi))
    plus = projector(pot, x, ModeSign.PLUS)
    minus = np.eye(2) - plus
    if mode is ModeSign.PLUS:
        return minus @ d_projector @ plus
    return -plus @ d_projector @ minus


def sigma_residual(pot: PauliPotential, z: PhasePoint) -> float:
    """
    w(x)·dw(x)ξ, zero exactly on Σ
    """
    return float(w_of(pot, z.q) @ (_checked(z.q, pot.dw(z.q), "dw") @ z.p))


def grad_norm_w(pot: PauliPotential, x: np.ndarray, p: np.ndarray | None = None, time_sign: int = 1) -> np.ndarray:
    return _checked(x, pot.dw(x), "dw").T @ unit_w(pot, x, p, time_sign)


def grad_lambda(pot: PauliPotential, x: np.ndarray, sign: int, p: np.ndarray | None = None,
                time_sign: int = 1) -> np.ndarray:
    """
    ∇(v + sign·|w|), sign 0 for the averaged flow
    """
    x = np.asarray(x, dtype=float)
    grad = _checked(x, pot.grad_v(x), "grad v")
    if sign == 0:
        return grad
    return grad + sign * grad_norm_w(pot, x, p, time_sign)


def hess_norm_w(pot: PauliPotential, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if on_crossing(pot, x):
        raise CrossingPointError(x)
    w = w_of(pot, x)
    dw = _checked(x, pot.dw(x), "dw")
    hw = _checked(x, pot.hess_w(x), "hess w")
    norm = np.hypot(*w)
    g = dw.T @ w
    return (dw.T @ dw + w[0] * hw[0] + w[1] * hw[1]) / norm - np.outer(g, g) / norm ** 3


def hess_lambda(pot: PauliPotential, x: np.ndarray, sign: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    hess = _checked(x, pot.hess_v(x), "hess v")
    if sign == 0:
        return hess
    return hess + sign * hess_norm_w(pot, x)


def scalar_hamiltonian(pot: PauliPotential, z: PhasePoint, sign: int) -> float:
    v = float(_checked(z.q, pot.v(z.q), "v"))
    return 0.5 * float(z.p @ z.p) + v + sign * float(np.hypot(*w_of(pot, z.q)))


def sample_on_grid(pot: PauliPotential, mesh: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """
    v and w over a meshgrid, pointwise when the potential has no vectorized form

    :raises EvaluationError: If any sample is not finite
    """
    if pot.grid_fields is not None:
        v, w = pot.grid_fields(mesh)
    else:
        points = np.stack([m.ravel() for m in mesh], axis=-1)
        v = np.array([pot.v(x) for x in points], dtype=float).reshape(mesh[0].shape)
        w = np.stack([pot.w(x) for x in points], axis=-1).reshape((2, *mesh[0].shape))
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    bad = ~(np.isfinite(v) & np.all(np.isfinite(w), axis=0))
    if np.any(bad):
        index = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise EvaluationError([float(m[index]) for m in mesh], "grid sample")
    return v, w


def _fd_step(x: np.ndarray) -> float:
    return 1e-5 * (1.0 + float(np.linalg.norm(x)))


def fd_gradient(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """
    Central differences, columns indexed by the coordinate
    """
    x = np.asarray(x, dtype=float)
    h = _fd_step(x)
    columns = []
    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = h
        columns.append((np.asarray(f(x + step)) - np.asarray(f(x - step))) / (2 * h))
    return np.stack(columns, axis=-1)


def from_functions(dim: int, v: Callable[[np.ndarray], float], w: VectorMap, name: str = "custom") -> PauliPotential:
    """
    Build a potential from v and w alone, derivatives by central finite differences
    """

    def grad_v(x: np.ndarray) -> np.ndarray:
        return fd_gradient(lambda y: np.atleast_1d(v(y)), x)[0]

    def dw(x: np.ndarray) -> np.ndarray:
        return fd_gradient(w, x)

    def hess_v(x: np.ndarray) -> np.ndarray:
        return fd_gradient(grad_v, x)

    def hess_w(x: np.ndarray) -> np.ndarray:
        full = fd_gradient(dw, x)
        return np.stack([0.5 * (full[k] + full[k].T) for k in range(2)])

    return PauliPotential(dim, v, grad_v, hess_v, w, dw, hess_w, name=name)


def linear_potential(dim: int = 2, alpha0: float = 0.0, c: float = 0.0, name: str = "custom") -> PauliPotential:
    """
    w(x) = (x₁, x₂ + α₀) and v(x) = ½c|x|²
    """
    if dim < 1:
        raise ConfigurationError(f"Dimension must be positive, got {dim}")

    jacobian = np.zeros((2, dim))
    jacobian[0, 0] = 1.0
    if dim > 1:
        jacobian[1, 1] = 1.0
    offset = np.array([0.0, alpha0])

    return PauliPotential(
        dim=dim,
        v=lambda x: 0.5 * c * float(x @ x),
        grad_v=lambda x: c * np.asarray(x, dtype=float),
        hess_v=lambda x: c * np.eye(dim),
        w=lambda x: jacobian @ x + offset,
        dw=lambda x: jacobian,
        hess_w=lambda x: np.zeros((2, dim, dim)),
        name=name,
        params={"alpha0": alpha0, "c": c},
        grid_fields=lambda mesh: (0.5 * c * sum(m ** 2 for m in mesh),
                                  np.stack([sum(jacobian[k, j] * mesh[j] for j in range(dim)) + offset[k]
                                            for k in range(2)])),
    )


def constant_gap_potential(dim: int = 2, w0: tuple[float, float] = (10.0, 0.0),
                           force: np.ndarray | None = None) -> PauliPotential:
    """
    Constant w and a linear v; every Hessian vanishes
    """
    w0 = np.asarray(w0, dtype=float)
    force = np.zeros(dim) if force is None else np.asarray(force, dtype=float)
    return PauliPotential(
        dim=dim,
        v=lambda x: -float(force @ x),
        grad_v=lambda x: -force,
        hess_v=lambda x: np.zeros((dim, dim)),
        w=lambda x: w0,
        dw=lambda x: np.zeros((2, dim)),
        hess_w=lambda x: np.zeros((2, dim, dim)),
        name="constant-gap",
        grid_fields=lambda mesh: (-sum(f * m for f, m in zip(force, mesh)) + np.zeros(mesh[0].shape),
                                  np.stack([np.full(mesh[0].shape, w0[0]), np.full(mesh[0].shape, w0[1])])),
    )


NAMED_POTENTIALS = ("isotropic-linear", "shifted-linear", "quadratic-v")


def named_potential(name: str, dim: int = 2, alpha0: float = 0.0, c: float = 1.0) -> PauliPotential:
    if name == "isotropic-linear":
        return linear_potential(dim, name=name)
    if name == "shifted-linear":
        return linear_potential(dim, alpha0=alpha0, name=name)
    if name == "quadratic-v":
        return linear_potential(dim, c=c, name=name)
    raise ConfigurationError(f"Unknown potential id '{name}', expected one of {', '.join(NAMED_POTENTIALS)}")
