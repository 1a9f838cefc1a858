from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

TWO_PI = 2.0 * np.pi


def fold_phase(phase: np.ndarray | float) -> np.ndarray | float:
    """
    Reduce a real phase to [0, 2π) before it is exponentiated
    """
    return np.remainder(phase, TWO_PI)


def unimodular(phase: np.ndarray | float) -> np.ndarray | complex:
    return np.exp(1j * fold_phase(phase))


class Primitive(NamedTuple):
    integrand: Callable[[np.ndarray], np.ndarray]
    primitive: Callable[[np.ndarray], np.ndarray]


# every primitive vanishes at x = 0
PRIMITIVES: dict[str, Primitive] = {
    "inv_sqrt": Primitive(
        lambda u: 1.0 / np.sqrt(1.0 + u ** 2),
        lambda x: np.arcsinh(x),
    ),
    "u_inv_sqrt": Primitive(
        lambda u: u / np.sqrt(1.0 + u ** 2),
        lambda x: np.sqrt(1.0 + x ** 2) - 1.0,
    ),
    "inv_sqrt_cubed": Primitive(
        lambda u: (1.0 + u ** 2) ** -1.5,
        lambda x: x / np.sqrt(1.0 + x ** 2),
    ),
    "u_inv_sqrt_cubed": Primitive(
        lambda u: u * (1.0 + u ** 2) ** -1.5,
        lambda x: 1.0 - 1.0 / np.sqrt(1.0 + x ** 2),
    ),
    "sqrt": Primitive(
        lambda u: np.sqrt(1.0 + u ** 2),
        lambda x: 0.5 * (x * np.sqrt(1.0 + x ** 2) + np.arcsinh(x)),
    ),
    "argsh": Primitive(
        lambda u: np.arcsinh(u),
        lambda x: x * np.arcsinh(x) - np.sqrt(1.0 + x ** 2) + 1.0,
    ),
    "log_sqrt": Primitive(
        lambda u: np.log(u + np.sqrt(1.0 + u ** 2)),
        lambda x: x * np.log(x + np.sqrt(1.0 + x ** 2)) - np.sqrt(1.0 + x ** 2) + 1.0,
    ),
}


def alpha_argsh(alpha: float, r: float, tau: np.ndarray | float) -> np.ndarray | float:
    """
    α·Argsh(rτ/|α|) for a signed α, continued by its limit 0 at α = 0
    """
    if alpha == 0.0:
        return np.zeros_like(np.asarray(tau, dtype=float)) if np.ndim(tau) else 0.0
    return alpha * np.arcsinh(r * np.asarray(tau) / abs(alpha))


def gap_sqrt(alpha: float, r: float, tau: np.ndarray | float) -> np.ndarray | float:
    return np.sqrt(alpha ** 2 + (r * np.asarray(tau)) ** 2)


def integral_gap_sqrt(alpha: float, r: float, tau: np.ndarray | float) -> np.ndarray | float:
    """
    ∫₀^τ √(α² + r²s²) ds
    """
    tau = np.asarray(tau, dtype=float)
    if alpha == 0.0:
        return 0.5 * r * tau * np.abs(tau)
    return (alpha ** 2 / r) * PRIMITIVES["sqrt"].primitive(r * tau / alpha)


def hermite_cubic(t0: float, t1: float, y0: np.ndarray, y1: np.ndarray,
                  dy0: np.ndarray, dy1: np.ndarray, t: float) -> np.ndarray:
    h = t1 - t0
    s = (t - t0) / h
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * y0 + h10 * h * dy0 + h01 * y1 + h11 * h * dy1
