from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.optimize import brentq

from wpcross.lib import calc
from wpcross.lib.enums import FlowMode, ModeSign
from wpcross.lib.errors import (
    ConfigurationError,
    DegenerateCrossingError,
    GapCollapseError,
    InterpolationCoverageError,
    NoMinimumError,
    SecondCrossingError,
)
from wpcross.lib.utils import write_csv
from wpcross.potential import (
    CrossingEvent,
    PauliPotential,
    PhasePoint,
    coupling_matrix_B,
    grad_lambda,
    on_crossing,
    sigma_residual,
    theta_vectors,
    w_of,
)

# substeps per sample used when polishing the passage time
REFINE_SUBSTEPS = 64


@dataclass(frozen=True)
class Trajectory:
    """
    A time-sampled flow. Samples are stored in integration order, so times decrease for backward runs.
    """
    mode: FlowMode
    drifted: bool
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    force: np.ndarray
    action: np.ndarray
    lagrangian: np.ndarray
    energy: np.ndarray
    eigvec: np.ndarray | None = None

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def states(self) -> list[PhasePoint]:
        return [PhasePoint(q, p) for q, p in zip(self.q, self.p)]

    def state(self, k: int) -> PhasePoint:
        return PhasePoint(self.q[k], self.p[k])

    @property
    def t_first(self) -> float:
        return float(self.times[0])

    @property
    def t_last(self) -> float:
        return float(self.times[-1])

    def _bracket(self, t: float) -> tuple[int, int]:
        lo, hi = sorted((self.t_first, self.t_last))
        tolerance = 1e-12 * (1.0 + abs(t))
        if t < lo - tolerance or t > hi + tolerance:
            raise InterpolationCoverageError(f"t={t} outside trajectory span [{lo}, {hi}]")
        ascending = self.times if self.times[-1] >= self.times[0] else self.times[::-1]
        k = int(np.clip(np.searchsorted(ascending, t) - 1, 0, len(self) - 2))
        if ascending is self.times:
            return k, k + 1
        n = len(self) - 1
        return n - k, n - k - 1

    def interpolate(self, t: float) -> PhasePoint:
        """
        Cubic Hermite interpolation of the state, using q̇ = p and ṗ = force
        """
        i, j = self._bracket(t)
        t0, t1 = self.times[i], self.times[j]
        q = calc.hermite_cubic(t0, t1, self.q[i], self.q[j], self.p[i], self.p[j], t)
        p = calc.hermite_cubic(t0, t1, self.p[i], self.p[j], self.force[i], self.force[j], t)
        return PhasePoint(q, p)

    def action_at(self, t: float) -> float:
        i, j = self._bracket(t)
        return float(calc.hermite_cubic(self.times[i], self.times[j], self.action[i], self.action[j],
                                        self.lagrangian[i], self.lagrangian[j], t))

    def eigvec_at(self, t: float) -> np.ndarray:
        if self.eigvec is None:
            raise ConfigurationError("Trajectory carries no transported eigenvector")
        i, j = self._bracket(t)
        s = (t - self.times[i]) / (self.times[j] - self.times[i])
        y = (1 - s) * self.eigvec[i] + s * self.eigvec[j]
        return y / np.linalg.norm(y)

    def gap(self, pot: PauliPotential) -> np.ndarray:
        return np.array([np.hypot(*w_of(pot, q)) for q in self.q])

    def to_csv(self, path: str, pot: PauliPotential) -> None:
        d = self.q.shape[1]
        header = ["t", *[f"q{i}" for i in range(d)], *[f"p{i}" for i in range(d)], "action",
                  "eigvec0", "eigvec1", "gap"]
        eigvec = self.eigvec if self.eigvec is not None else np.full((len(self), 2), np.nan)
        gap = self.gap(pot)
        rows = (
            [float(self.times[k]), *map(float, self.q[k]), *map(float, self.p[k]), float(self.action[k]),
             float(eigvec[k, 0]), float(eigvec[k, 1]), float(gap[k])]
            for k in range(len(self))
        )
        write_csv(path, header, rows)


class _FlowField:
    """
    Force and Lagrangian of a scalar Hamiltonian flow; the first evaluation may sit on the crossing set,
    in which case the one-sided limit along the motion is used
    """

    def __init__(self, pot: PauliPotential, mode: FlowMode, time_sign: int, check_gap: bool) -> None:
        self.pot = pot
        self.sign = mode.sign
        self.time_sign = time_sign
        self.check_gap = check_gap

    def force(self, q: np.ndarray, p: np.ndarray, first: bool = False) -> np.ndarray:
        if self.sign != 0 and not first and self.check_gap and on_crossing(self.pot, q):
            raise GapCollapseError(f"Gap collapsed at q={list(q)}; stop the flow before the crossing")
        return -grad_lambda(self.pot, q, self.sign, p, self.time_sign)

    def eigenvalue(self, q: np.ndarray) -> float:
        v = float(self.pot.v(q))
        return v + self.sign * float(np.hypot(*w_of(self.pot, q)))

    def lagrangian(self, q: np.ndarray, p: np.ndarray) -> float:
        # |p|² − h evaluated pointwise
        return 0.5 * float(p @ p) - self.eigenvalue(q)


def integrate_flow(pot: PauliPotential, mode: ModeSign | FlowMode, drifted: bool, z_init: PhasePoint,
                   t_init: float, t_end: float, step: float, initial_eigvec: np.ndarray | None = None,
                   action_init: float = 0.0, stop_at_crossing: bool = False,
                   check_gap: bool = True) -> Trajectory:
    """
    Störmer–Verlet integration of q̇ = p, ṗ = −∇λ(q), backward in time when t_end < t_init

    :param stop_at_crossing: Stop at the first sample past a sign change of w·dw(q)p
    :raises GapCollapseError: If the flow lands on the crossing set after its first sample
    """
    if not step > 0:
        raise ConfigurationError(f"Time step must be positive, got {step}")
    flow_mode = FlowMode.of(mode)
    if initial_eigvec is not None and flow_mode is FlowMode.AVERAGED:
        raise ConfigurationError("The averaged flow carries no eigenvector")

    span = t_end - t_init
    n = max(1, math.ceil(abs(span) / step - 1e-9))
    h = span / n
    field = _FlowField(pot, flow_mode, 1 if h >= 0 else -1, check_gap)

    q = np.array(z_init.q, dtype=float)
    p = np.array(z_init.p, dtype=float)
    f = field.force(q, p, first=True)
    lag = field.lagrangian(q, p)

    times, qs, ps, forces, actions, lags, energies = [t_init], [q], [p], [f], [action_init], [lag], []
    energies.append(0.5 * float(p @ p) + field.eigenvalue(q))
    residual = sigma_residual(pot, z_init)

    for k in range(1, n + 1):
        p_half = p + 0.5 * h * f
        q = q + h * p_half
        f_new = field.force(q, p_half)
        p = p_half + 0.5 * h * f_new

        lag_new = field.lagrangian(q, p)
        # trapezoid with end corrections, d/dt(|p|²/2 − λ) = 2 p·force
        action = actions[-1] + 0.5 * h * (lag + lag_new) + h * h / 12.0 * (
            2 * float(ps[-1] @ f) - 2 * float(p @ f_new))

        f, lag = f_new, lag_new
        times.append(t_init + k * h)
        qs.append(q)
        ps.append(p)
        forces.append(f)
        actions.append(action)
        lags.append(lag)
        energies.append(0.5 * float(p @ p) + field.eigenvalue(q))

        if stop_at_crossing:
            new_residual = sigma_residual(pot, PhasePoint(q, p))
            if h > 0 and residual < 0 <= new_residual:
                break
            residual = new_residual

    times_a = np.array(times)
    q_a = np.array(qs)
    p_a = np.array(ps)
    eigvec = None
    if initial_eigvec is not None:
        eigvec = _transport_eigvec(pot, flow_mode.mode_sign, times_a, q_a, p_a, np.array(forces),
                                   np.asarray(initial_eigvec, dtype=float))

    logger.debug(f"Integrated {flow_mode.name.lower()} flow over [{t_init:.6g}, {times[-1]:.6g}] "
                 f"in {len(times) - 1} steps")
    return Trajectory(flow_mode, drifted, times_a, q_a, p_a, np.array(forces), np.array(actions),
                      np.array(lags), np.array(energies), eigvec)


def _transport_eigvec(pot: PauliPotential, mode: ModeSign, times: np.ndarray, q: np.ndarray, p: np.ndarray,
                      force: np.ndarray, y0: np.ndarray) -> np.ndarray:
    """
    RK4 for Ẏ = B(q, p)Y on the integrator grid, half-step states from Hermite interpolation
    """

    def rhs(x: np.ndarray, xi: np.ndarray, y: np.ndarray) -> np.ndarray:
        return coupling_matrix_B(pot, x, xi, mode) @ y

    ys = [y0]
    for k in range(len(times) - 1):
        t0, t1 = times[k], times[k + 1]
        h = t1 - t0
        tm = t0 + 0.5 * h
        q_mid = calc.hermite_cubic(t0, t1, q[k], q[k + 1], p[k], p[k + 1], tm)
        p_mid = 0.5 * (p[k] + p[k + 1])
        y = ys[-1]
        k1 = rhs(q[k], p[k], y)
        k2 = rhs(q_mid, p_mid, y + 0.5 * h * k1)
        k3 = rhs(q_mid, p_mid, y + 0.5 * h * k2)
        k4 = rhs(q[k + 1], p[k + 1], y + h * k3)
        ys.append(y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
    return np.array(ys)


def crossing_event_at(pot: PauliPotential, t_flat: float, z_flat: PhasePoint,
                      action_flat: float = 0.0) -> CrossingEvent:
    """
    Crossing geometry (r, θ, α, e_θ, V_θ) at a phase-space point on Σ

    :raises DegenerateCrossingError: If dw(q♭)p♭ vanishes
    """
    dw = np.asarray(pot.dw(z_flat.q), dtype=float)
    velocity = dw @ z_flat.p
    r = float(np.hypot(*velocity))
    if r < 1e-10:
        raise DegenerateCrossingError(f"|dw(q♭)p♭| = {r:.3e} at q♭={list(z_flat.q)}")

    theta = float(np.arctan2(velocity[1], velocity[0]))
    e, e_perp, V, V_perp = theta_vectors(theta)
    w = w_of(pot, z_flat.q)
    alpha = float(np.hypot(*w))
    orientation = 1.0 if float(w @ e_perp) >= 0 else -1.0
    return CrossingEvent(
        t_flat=float(t_flat), z_flat=z_flat, r=r, theta=theta, alpha=alpha, e_theta=e, e_theta_perp=e_perp,
        V_theta=V, V_theta_perp=V_perp, dw_flat=dw, action_flat=float(action_flat), orientation=orientation,
    )


def detect_crossing_event(pot: PauliPotential, traj: Trajectory) -> CrossingEvent:
    """
    Locate the passage time t♭ where J(t) = |w(q(t))| is minimal

    The sampled minimum is bracketed by a sign change of J′ = w·dw(q)p, estimated by a parabola through
    J² and polished by root finding on J′ along a re-integrated substep flow.
    """
    if traj.times[-1] <= traj.times[0]:
        raise ConfigurationError("Crossing detection needs a forward-in-time trajectory")

    residuals = np.array([sigma_residual(pot, z) for z in traj.states])
    changes = np.nonzero((residuals[:-1] < 0) & (residuals[1:] >= 0))[0]
    if changes.size == 0:
        raise NoMinimumError("|w(q(t))| has no interior minimum on the trajectory span")
    k = int(changes[0])

    j2 = traj.gap(pot) ** 2
    m = int(np.clip(k + (1 if j2[k + 1] < j2[k] else 0), 1, len(traj) - 2))
    t3, j3 = traj.times[m - 1:m + 2], j2[m - 1:m + 2]
    coefficients = np.polyfit(t3 - t3[1], j3, 2)
    estimate = t3[1] - coefficients[1] / (2 * coefficients[0]) if coefficients[0] > 0 else traj.times[k]

    z_k = traj.state(k)
    t_k = float(traj.times[k])
    step = (traj.times[k + 1] - traj.times[k]) / REFINE_SUBSTEPS

    def local(t: float) -> Trajectory:
        return integrate_flow(pot, traj.mode, traj.drifted, z_k, t_k, t, step, action_init=float(traj.action[k]),
                              check_gap=False)

    def residual(t: float) -> float:
        if t == t_k:
            return float(residuals[k])
        return sigma_residual(pot, local(t).state(-1))

    t_next = float(traj.times[k + 1])
    if residual(t_next) < 0:
        # the substep flow has not passed Σ yet at the next coarse sample
        t_flat = t_next
    else:
        t_flat = brentq(residual, t_k, t_next, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    logger.debug(f"Passage time {t_flat:.12f}, parabola estimate {estimate:.12f}")

    if t_flat == t_k:
        z_flat, action_flat = z_k, float(traj.action[k])
    else:
        refined = local(t_flat)
        z_flat, action_flat = refined.state(-1), float(refined.action[-1])

    event = crossing_event_at(pot, t_flat, z_flat, action_flat)
    logger.info(f"Crossing at t♭={event.t_flat:.8f}: r={event.r:.6g}, θ={event.theta:.6g}, α={event.alpha:.3e}")
    return event


def assert_single_passage(pot: PauliPotential, traj: Trajectory, event: CrossingEvent, delta: float) -> None:
    """
    :raises SecondCrossingError: If w·dw(q)p changes sign again within δ of t♭
    """
    for t, z in zip(traj.times, traj.states):
        tau = t - event.t_flat
        if 1e-9 < abs(tau) <= delta and sigma_residual(pot, z) * tau < 0:
            raise SecondCrossingError(f"Second near-crossing at t={t:.8f} within δ={delta:.4g} of t♭")


def compute_drift(event: CrossingEvent, from_mode: ModeSign) -> np.ndarray:
    """
    Momentum kick of the newly generated mode, ∓(2α/r)dw(q♭)ᵀe_θ for a minus (plus) start
    """
    return from_mode.sign * (2 * event.alpha / event.r) * (event.dw_flat.T @ event.e_theta)


def taylor_reference(event: CrossingEvent, pot: PauliPotential, mode: ModeSign, t: float,
                     drifted: bool = False, step: float = 1e-4) -> tuple[np.ndarray, np.ndarray, float]:
    """
    Closed-form expansion of the mode flow around t♭, relative to the averaged flow from z♭

    :param drifted: Expand the flow started from z♭ shifted by the drift of a start in the other mode
    :return: predicted q, p and action at time t
    """
    z = event.z_flat
    tau = t - event.t_flat
    if tau == 0.0:
        dp = compute_drift(event, mode.other) if drifted else np.zeros(z.dim)
        return z.q.copy(), z.p + dp, event.action_flat

    averaged = integrate_flow(pot, FlowMode.AVERAGED, False, z, event.t_flat, t, step)
    q0, p0, s0 = averaged.q[-1], averaged.p[-1], float(averaged.action[-1])

    sigma = mode.sign
    a, r = event.alpha, event.r
    signed = event.signed_alpha
    E = event.dw_flat.T @ event.e_theta
    E_perp = event.dw_flat.T @ event.e_theta_perp
    root = calc.gap_sqrt(a, r, tau)
    argsh = calc.alpha_argsh(signed, r, tau)

    p = p0 - sigma * E * (root - a) / r - sigma * E_perp * argsh / r
    q = q0 - sigma * E * (calc.integral_gap_sqrt(a, r, tau) - a * tau) / r \
        - sigma * E_perp * (tau * argsh - signed * (root - a) / r) / r
    action = event.action_flat + s0 - sigma * tau * root - sigma * a * calc.alpha_argsh(a, r, tau) / r \
        + sigma * a * tau

    if drifted:
        dp = compute_drift(event, mode.other)
        p = p + dp
        q = q + dp * tau
        action += float(z.p @ dp) * tau
    return q, p, float(action)
