from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.integrate import solve_ivp
from scipy.special import xlogy

from wpcross.lib.enums import Direction, LZMethod, TransferArgument
from wpcross.lib.errors import ConfigurationError, GammaPoleError, SingularTimeError, ToleranceError
from wpcross.lib.utils import write_csv
from wpcross.potential import CrossingEvent, theta_vectors

# g = 7, n = 9 Lanczos coefficients
LANCZOS_G = 7.0
LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


@dataclass(frozen=True)
class LZParameters:
    """
    Parameters of (1/i)∂ₛu = [[s+z₁, z₂], [z₂, −s−z₁]]u; z₁ and z₂ may be arrays over a profile grid
    """
    z1: np.ndarray | float
    z2: np.ndarray | float
    r: float = 1.0
    alpha: float = 0.0
    eps: float = 1.0
    theta: float = 0.0

    @classmethod
    def from_geometry(cls, eta: np.ndarray, event: CrossingEvent, eps: float) -> LZParameters:
        """
        :param eta: η = dw(q♭)y, shape (2, ...)
        """
        root = math.sqrt(event.r)
        H1 = event.e_theta[0] * eta[0] + event.e_theta[1] * eta[1]
        H2 = event.e_theta_perp[0] * eta[0] + event.e_theta_perp[1] * eta[1]
        return cls(H1 / root, (H2 + event.signed_alpha / math.sqrt(eps)) / root,
                   event.r, event.signed_alpha, eps, event.theta)

    @property
    def H1(self) -> np.ndarray | float:
        return math.sqrt(self.r) * np.asarray(self.z1)

    @property
    def H2(self) -> np.ndarray | float:
        return math.sqrt(self.r) * np.asarray(self.z2) - self.alpha / math.sqrt(self.eps)


@dataclass(frozen=True)
class ScatteringData:
    a: np.ndarray | float
    b: np.ndarray | complex
    S: np.ndarray
    # relative sign linking the LZ components to (V_θ^⊥, V_θ)
    zeta: int = 1
    argument: TransferArgument = TransferArgument.PRINTED


def complex_gamma(z: np.ndarray | complex) -> np.ndarray | complex:
    """
    Lanczos approximation of Γ(z), reflection formula for Re z < ½

    :raises GammaPoleError: At nonpositive integers
    """
    z = np.asarray(z, dtype=np.complex128)
    pole = (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))
    if np.any(pole):
        raise GammaPoleError(f"Γ has a pole at {z[pole].ravel()[0].real:g}")

    reflect = z.real < 0.5
    x = np.where(reflect, 1.0 - z, z) - 1.0
    series = np.full(x.shape, LANCZOS_COEFFICIENTS[0], dtype=np.complex128)
    for k, coefficient in enumerate(LANCZOS_COEFFICIENTS[1:], start=1):
        series = series + coefficient / (x + k)
    t = x + LANCZOS_G + 0.5
    direct = np.sqrt(2 * np.pi) * np.exp((x + 0.5) * np.log(t) - t) * series
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(reflect, np.pi / (np.sin(np.pi * z) * direct), direct)
    return value if value.ndim else complex(value)


def coeff_a(z: np.ndarray | float) -> np.ndarray | float:
    return np.exp(-0.5 * np.pi * np.asarray(z, dtype=float) ** 2)


def coeff_b(z: np.ndarray | float) -> np.ndarray | complex:
    """
    b(z) = e^{iπ/4}(2i/(z√π))2^{−iz²/2}e^{−πz²/4}Γ(1 + iz²/2)sinh(πz²/2), continued by b(0) = 0

    The e^{iπ/4} matches the phase stripped by λ(s), so that b ≈ iz√π e^{iπ/4} for small z.
    """
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    half = 0.5 * safe ** 2
    value = np.exp(0.25j * np.pi) * (2j / (safe * np.sqrt(np.pi))) * np.exp(-1j * half * np.log(2.0)) \
        * np.exp(-0.5 * np.pi * half) * complex_gamma(1.0 + 1j * half) * np.sinh(np.pi * half)
    value = np.where(z == 0.0, 0.0j, value)
    return value if value.ndim else complex(value)


def transfer_argument(params: LZParameters, argument: TransferArgument) -> np.ndarray | float:
    if argument is TransferArgument.GAP_SHIFTED:
        return params.z2
    return np.asarray(params.H2) / math.sqrt(params.r)


def lz_basis_signs(theta: float) -> int:
    """
    ζ = sign((ℛe₁)·V_θ^⊥)·sign((ℛe₂)·V_θ) for the rotation of the LZ reduction
    """
    _, _, V, V_perp = theta_vectors(theta)
    R = rotation_matrix(theta - np.pi)
    return int(np.sign(R[:, 0] @ V_perp) * np.sign(R[:, 1] @ V))


def scattering_matrix(params: LZParameters, argument: TransferArgument = TransferArgument.PRINTED) -> ScatteringData:
    """
    𝒮 = [[a, −b̄], [b, a]] acting on (α₁, α₂)
    """
    z = transfer_argument(params, argument)
    a = coeff_a(z)
    b = coeff_b(z)
    S = np.stack([np.stack([a + 0j, -np.conj(b)], axis=-1), np.stack([b, a + 0j], axis=-1)], axis=-2)
    return ScatteringData(a, b, S, lz_basis_signs(params.theta), argument)


def _log_scale(params: LZParameters) -> float:
    return 2.0 * math.sqrt(params.r * params.eps)


def phase_Lambda(params: LZParameters, s: np.ndarray | float) -> np.ndarray | float:
    """
    Λ(s) = ½[(s√r + z₁)² + z₂² ln|s√r|]
    """
    s = np.asarray(s, dtype=float)
    if np.any(s == 0.0):
        raise SingularTimeError("Λ is undefined at s = 0")
    root = math.sqrt(params.r)
    return 0.5 * ((s * root + np.asarray(params.z1)) ** 2 + np.asarray(params.z2) ** 2 * np.log(np.abs(s) * root))


def _alpha_logs(params: LZParameters) -> tuple[float, float]:
    """
    α²ln(|α|/2√(rε)) and α·ln(|α|/2√(rε)), both continued by 0 at α = 0
    """
    a = abs(params.alpha)
    scale = _log_scale(params)
    return float(xlogy(a ** 2, a / scale)), float(np.sign(params.alpha) * xlogy(a, a / scale))


def phase_Phi(params: LZParameters, gamma1_quadratic: np.ndarray | float = 0.0) -> np.ndarray | float:
    r, eps = params.r, params.eps
    H1, H2 = params.H1, params.H2
    square_log, linear_log = _alpha_logs(params)
    return params.alpha ** 2 / (4 * r * eps) - square_log / (2 * r * eps) - H1 ** 2 / (2 * r) \
        - linear_log * H2 / (r * math.sqrt(eps)) - (H2 ** 2 / (2 * r)) * math.log(1.0 / _log_scale(params)) \
        + 0.5 * np.asarray(gamma1_quadratic)


def phase_Lambda_tilde(params: LZParameters, gamma1_quadratic: np.ndarray | float = 0.0) -> np.ndarray | float:
    """
    Real phase whose exponential e^{iΛ̃} multiplies b̄ in the outgoing minus profile
    """
    r, eps = params.r, params.eps
    H1, H2 = params.H1, params.H2
    square_log, linear_log = _alpha_logs(params)
    return -np.asarray(gamma1_quadratic) + H1 ** 2 / r - params.alpha ** 2 / (2 * r * eps) \
        + (H2 ** 2 / r) * math.log(1.0 / _log_scale(params)) + square_log / (r * eps) \
        + 2 * linear_log * H2 / (r * math.sqrt(eps))


def strip_phase(params: LZParameters, s: np.ndarray | float) -> np.ndarray | float:
    """
    λ(s) = ½[(s+z₁)² + z₂² ln|s+z₁|]
    """
    shifted = np.asarray(s, dtype=float) + params.z1
    return 0.5 * (shifted ** 2 + np.asarray(params.z2) ** 2 * np.log(np.abs(shifted)))


def rotation_matrix(phi: float) -> np.ndarray:
    return np.array([[np.cos(phi / 2), -np.sin(phi / 2)], [np.sin(phi / 2), np.cos(phi / 2)]])


def rotation_reduce(params: LZParameters, vector: np.ndarray, direction: Direction,
                    s: float = 0.0) -> tuple[float, np.ndarray]:
    """
    Map a model solution value v(s) to the LZ unknown ℛ(φ)⁻¹v at LZ time √r·s (forward), or back (inverse),
    with e_φ = −e_θ
    """
    R = rotation_matrix(params.theta - np.pi)
    root = math.sqrt(params.r)
    vector = np.asarray(vector)
    if direction is Direction.FORWARD:
        return s * root, R.T @ vector
    return s / root, R @ vector


@dataclass(frozen=True)
class LZSolution:
    s: np.ndarray
    u: np.ndarray

    def norm_drift(self) -> float:
        norms = np.linalg.norm(self.u, axis=-1)
        return float(np.max(np.abs(norms - norms[0])))


def _lz_matrix(params: LZParameters, s: float) -> np.ndarray:
    a = s + float(params.z1)
    z2 = float(params.z2)
    return np.array([[a, z2], [z2, -a]], dtype=float)


def _magnus(params: LZParameters, s0: float, s1: float, ds: float, u0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Fourth-order Magnus steps with the exact exponential,
    u(s+h) = exp(i[h a_m σz + h z₂ σx − (h³/6) z₂ σy]) u(s)
    """
    n = max(1, math.ceil(abs(s1 - s0) / ds - 1e-9))
    h = (s1 - s0) / n
    z1, z2 = float(params.z1), float(params.z2)
    kx = h * z2
    ky = -h ** 3 * z2 / 6.0
    u1, u2 = complex(u0[0]), complex(u0[1])
    values = np.empty((n + 1, 2), dtype=np.complex128)
    values[0] = (u1, u2)
    for k in range(n):
        kz = h * (s0 + (k + 0.5) * h + z1)
        norm = math.sqrt(kx * kx + ky * ky + kz * kz)
        c = math.cos(norm)
        sn = math.sin(norm) / norm if norm > 0 else 1.0
        m11 = complex(c, sn * kz)
        m22 = complex(c, -sn * kz)
        m12 = 1j * sn * complex(kx, -ky)
        m21 = 1j * sn * complex(kx, ky)
        u1, u2 = m11 * u1 + m12 * u2, m21 * u1 + m22 * u2
        values[k + 1] = (u1, u2)
    return s0 + h * np.arange(n + 1), values


def integrate_lz_ode(params: LZParameters, s_span: tuple[float, float], ds: float = 0.01,
                     u_init: np.ndarray | None = None, method: LZMethod = LZMethod.MAGNUS) -> LZSolution:
    """
    Solve (1/i)∂ₛu = [[s+z₁, z₂], [z₂, −s−z₁]]u from s_span[0] to s_span[1]

    :raises ToleranceError: If the adaptive integrator fails
    """
    if not ds > 0:
        raise ConfigurationError(f"LZ step must be positive, got {ds}")
    u0 = np.array([0.0, 1.0], dtype=np.complex128) if u_init is None else np.asarray(u_init, dtype=np.complex128)
    s0, s1 = map(float, s_span)

    if method is LZMethod.MAGNUS:
        s, u = _magnus(params, s0, s1, ds, u0)
        return LZSolution(s, u)

    n = max(1, math.ceil(abs(s1 - s0) / ds))
    result = solve_ivp(lambda s, u: 1j * (_lz_matrix(params, s) @ u), (s0, s1), u0, method="DOP853",
                       rtol=1e-10, atol=1e-12, t_eval=np.linspace(s0, s1, n + 1))
    if not result.success:
        raise ToleranceError(f"LZ integration failed: {result.message}")
    return LZSolution(result.t, result.y.T)


@dataclass(frozen=True)
class LZTransfer:
    T: float
    S: np.ndarray
    formula: ScatteringData
    deviation: float


def _adiabatic_state(params: LZParameters, s: float, component: int) -> np.ndarray:
    _, vectors = np.linalg.eigh(_lz_matrix(params, s))
    vector = vectors[:, int(np.argmax(np.abs(vectors[component])))]
    return vector if vector[component] > 0 else -vector


def lz_transfer_matrix(params: LZParameters, T: float, ds: float = 0.01, window: float = 0.25,
                       method: LZMethod = LZMethod.MAGNUS) -> LZTransfer:
    """
    Phase-stripped transfer of the LZ flow from −T to T

    Each column starts on the adiabatic state carrying α₁ = 1 or α₂ = 1. The deviation is the largest gap
    between extracted and closed-form complex entries over extraction times in [T, (1 + window)T].
    """
    if not T > 0:
        raise ConfigurationError(f"Extraction time must be positive, got {T}")
    formula = scattering_matrix(params, TransferArgument.GAP_SHIFTED)
    lam0 = strip_phase(params, -T)

    columns, deviation = [], 0.0
    for component, phase in ((0, lam0), (1, -lam0)):
        start = np.exp(1j * phase) * _adiabatic_state(params, -T, component)
        solution = integrate_lz_ode(params, (-T, (1 + window) * T), ds, start, method)
        tail = solution.s >= T - 1e-9
        lam = strip_phase(params, solution.s[tail])
        extracted = np.stack([np.exp(-1j * lam) * solution.u[tail, 0], np.exp(1j * lam) * solution.u[tail, 1]],
                             axis=-1)
        deviation = max(deviation, float(np.max(np.abs(extracted - formula.S[:, component]))))
        columns.append(extracted[0])

    S = np.stack(columns, axis=-1)
    logger.debug(f"LZ transfer at T={T:g}, z₂={float(params.z2):.3f}: deviation {deviation:.3e}")
    return LZTransfer(T, S, formula, deviation)


def lz_table(z_values: list[float]) -> list[list[float]]:
    z = np.asarray(z_values, dtype=float)
    a, b = coeff_a(z), coeff_b(z)
    return [[float(z[k]), float(a[k]), float(b[k].real), float(b[k].imag), float(abs(b[k]) ** 2),
             float(a[k] ** 2 + abs(b[k]) ** 2)]
            for k in range(z.size)]


def write_lz_table(path: str, z_values: list[float]) -> None:
    write_csv(path, ["z", "a", "re_b", "im_b", "b_squared", "unitarity"], lz_table(z_values))
