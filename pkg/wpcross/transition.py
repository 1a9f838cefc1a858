from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np
from loguru import logger
from scipy.ndimage import map_coordinates

from wpcross.classical import (
    Trajectory,
    assert_single_passage,
    compute_drift,
    detect_crossing_event,
    integrate_flow,
)
from wpcross.lib.calc import fold_phase, unimodular
from wpcross.lib.enums import FlowMode, ModeSign, TransferArgument
from wpcross.lib.errors import InterpolationCoverageError, OnSigmaError, RegimeError
from wpcross.lib.utils import write_json
from wpcross.landau_zener import (
    LZParameters,
    coeff_a,
    coeff_b,
    phase_Lambda_tilde,
    phase_Phi,
    scattering_matrix,
    transfer_argument,
)
from wpcross.potential import CrossingEvent, PauliPotential, PhasePoint, eigenvector, on_crossing, sigma_residual
from wpcross.profiles import (
    ProfileGrid,
    extract_ingoing_profile,
    gamma_matrices,
    quadratic_form,
    seed_outgoing_profile,
    solve_profile,
)

if TYPE_CHECKING:
    from wpcross.reference import GridState

SIGMA_TOLERANCE = 1e-12
REGIME_LIMIT = 1.0


@dataclass(frozen=True)
class WavePacket:
    eps: float
    center: PhasePoint
    action: float
    direction: np.ndarray
    profile: ProfileGrid
    mode: ModeSign | None = None
    time: float = 0.0

    def mass(self) -> float:
        return self.profile.mass()

    def realize(self, axes: list[np.ndarray]) -> np.ndarray:
        """
        e^{iS/ε}ε^{−d/4}e^{ip·(x−q)/ε}u((x−q)/√ε)·direction on the physical grid, shape (2, *grid)
        """
        mesh = np.meshgrid(*axes, indexing="ij")
        shifted = [x - q for x, q in zip(mesh, self.center.q)]
        root = math.sqrt(self.eps)
        grid = self.profile
        index = [(dx / root + grid.half_width) / grid.spacing for dx in shifted]
        envelope = map_coordinates(grid.values.real, index, order=3, mode="constant", cval=0.0) \
            + 1j * map_coordinates(grid.values.imag, index, order=3, mode="constant", cval=0.0)
        phase = self.action / self.eps + sum(p * dx for p, dx in zip(self.center.p, shifted)) / self.eps
        scalar = self.eps ** (-grid.dim / 4) * unimodular(phase) * envelope
        return np.stack([self.direction[0] * scalar, self.direction[1] * scalar])


@dataclass(frozen=True)
class TransitionSettings:
    step: float = 1e-3
    profile_step: float = 1e-2
    delta: float | None = None
    beta: float = 1.0 / 60.0
    t_max: float = 10.0
    argument: TransferArgument = TransferArgument.PRINTED
    localize: bool = False

    def delta_for(self, eps: float) -> float:
        return self.delta if self.delta is not None else eps ** (5.0 / 14.0)


@dataclass(frozen=True)
class IngoingData:
    alpha_in: ProfileGrid
    u_in: ProfileGrid
    zeta: int
    params: LZParameters
    phases: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TransferResult:
    u_in: ProfileGrid
    u_plus_out: ProfileGrid
    u_minus_out: ProfileGrid
    record: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TransitionResult:
    out_minus: WavePacket
    out_plus: WavePacket
    ingoing_profile: ProfileGrid
    transfer_record: dict
    error_budget: float
    event: CrossingEvent | None = None
    incoming: WavePacket | None = None
    drift: np.ndarray | None = None

    def summary(self) -> dict:
        event = self.event
        return {
            "masses": {
                "ingoing": self.ingoing_profile.mass(),
                "out_plus": self.out_plus.mass(),
                "out_minus": self.out_minus.mass(),
            },
            "centers": {
                "out_plus": {"q": self.out_plus.center.q, "p": self.out_plus.center.p},
                "out_minus": {"q": self.out_minus.center.q, "p": self.out_minus.center.p},
            },
            "actions": {"out_plus": self.out_plus.action, "out_minus": self.out_minus.action},
            "crossing": None if event is None else {
                "t_flat": event.t_flat, "q_flat": event.z_flat.q, "p_flat": event.z_flat.p, "r": event.r,
                "theta": event.theta, "alpha": event.alpha, "action_flat": event.action_flat,
            },
            "drift": self.drift,
            "zeta": self.transfer_record.get("zeta"),
            "error_budget": self.error_budget,
        }

    def export(self, directory: str, tag: str) -> None:
        write_json(f"{directory}/{tag}_transition.json", self.summary())
        self.out_plus.profile.to_binary(f"{directory}/{tag}_out_plus.bin")
        self.out_minus.profile.to_binary(f"{directory}/{tag}_out_minus.bin")
        self.ingoing_profile.to_binary(f"{directory}/{tag}_ingoing.bin")


def error_budget(eps: float, beta: float) -> float:
    return eps ** (1.0 / 14.0 - beta) * (1.0 + abs(math.log(eps)))


def build_initial_packet(pot: PauliPotential, z0: PhasePoint, mode: ModeSign, phi: ProfileGrid, eps: float,
                         t0: float = 0.0) -> WavePacket:
    """
    :raises OnSigmaError: If z0 lies on Σ or q0 on the crossing set
    """
    if on_crossing(pot, z0.q):
        raise OnSigmaError(f"Initial position {list(z0.q)} lies on the crossing set")
    if abs(sigma_residual(pot, z0)) <= SIGMA_TOLERANCE:
        raise OnSigmaError(f"Initial point ({list(z0.q)}, {list(z0.p)}) lies on Σ")
    return WavePacket(eps, z0, 0.0, eigenvector(pot, z0.q, mode), phi, mode, t0)


def check_regime(eps: float, delta: float, alpha: float = 0.0) -> dict:
    """
    :return: The ratios √ε/δ, δ³/ε and α/√ε
    :raises RegimeError: Naming the first inequality that fails
    """
    ratios = {"sqrt_eps_over_delta": math.sqrt(eps) / delta, "delta_cubed_over_eps": delta ** 3 / eps,
              "alpha_over_sqrt_eps": alpha / math.sqrt(eps)}
    for name in ("sqrt_eps_over_delta", "delta_cubed_over_eps"):
        if ratios[name] >= REGIME_LIMIT:
            raise RegimeError(f"Regime inequality {name} < {REGIME_LIMIT} fails: {ratios[name]:.3g}")
    if ratios["alpha_over_sqrt_eps"] > 5.0:
        logger.warning(f"Gap α is large against √ε: α/√ε = {ratios['alpha_over_sqrt_eps']:.3g}")
    return ratios


def eta_field(grid: ProfileGrid, event: CrossingEvent) -> np.ndarray:
    """
    η(y) = dw(q♭)y on the profile grid, shape (2, *grid)
    """
    mesh = grid.mesh
    return np.stack([sum(event.dw_flat[k, j] * mesh[j] for j in range(grid.dim)) for k in range(2)])


def localization_cutoff(grid: ProfileGrid, R: float, dw_norm: float) -> np.ndarray:
    """
    χ₀(|y|): 1 below R/(2‖dw‖), 0 beyond R/‖dw‖, quintic joint in between
    """
    inner, outer = R / (2 * dw_norm), R / dw_norm
    radius = np.sqrt(sum(y ** 2 for y in grid.mesh))
    x = np.clip((radius - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - x ** 3 * (10 - 15 * x + 6 * x ** 2)


def ingoing_data(pot: PauliPotential, event: CrossingEvent, packet: WavePacket, delta: float,
                 localize_radius: float | None = None) -> IngoingData:
    """
    Landau–Zener input amplitude on the y-grid from the incoming packet at t♭ − δ

    For a minus start this is α₂^{in} = ζe^{iS♭/ε − iΦ − iαH₁/(r√ε)}u^{in}, for a plus start
    α₁^{in} = ζe^{iS♭/ε + iΦ + iαH₁/(r√ε)}u^{in}.
    """
    eps = packet.eps
    mode = packet.mode or ModeSign.MINUS
    check_regime(eps, delta, event.alpha)

    u_in = extract_ingoing_profile(packet.profile, event, mode, event.t_flat - delta)
    if localize_radius is not None:
        u_in = u_in.with_values(localization_cutoff(u_in, localize_radius, np.linalg.norm(event.dw_flat, 2))
                                * u_in.values)

    target = event.V_theta if mode is ModeSign.MINUS else event.V_theta_perp
    zeta = 1 if float(packet.direction @ target) >= 0 else -1

    params = LZParameters.from_geometry(eta_field(u_in, event), event, eps)
    _, gamma1 = gamma_matrices(event)
    phi = phase_Phi(params, quadratic_form(u_in, gamma1))
    linear = event.alpha * params.H1 / (event.r * math.sqrt(eps))
    action = event.action_flat / eps
    exponent = action + mode.sign * (phi + linear)

    alpha_in = u_in.with_values(zeta * unimodular(exponent) * u_in.values)
    return IngoingData(alpha_in, u_in, zeta, params, {"phi": phi, "linear": linear, "action": action})


def apply_transfer(u_in: ProfileGrid, event: CrossingEvent, eps: float, mode: ModeSign = ModeSign.MINUS,
                   argument: TransferArgument = TransferArgument.PRINTED, zeta: int = 1) -> TransferResult:
    """
    Pointwise transfer of the ingoing profile to the two outgoing profiles

    Minus start: u₊^{out} = e^{iS♭/ε}a u^{in}, u₋^{out} = −e^{iS♭/ε}e^{iΛ̃}b̄ u^{in}.
    Plus start: u₋^{out} = e^{iS♭/ε}a u^{in}, u₊^{out} = e^{iS♭/ε}e^{−iΛ̃}b u^{in}.
    """
    params = LZParameters.from_geometry(eta_field(u_in, event), event, eps)
    _, gamma1 = gamma_matrices(event)
    lam = phase_Lambda_tilde(params, quadratic_form(u_in, gamma1))
    z = transfer_argument(params, argument)
    a, b = coeff_a(z), coeff_b(z)
    base = zeta * unimodular(event.action_flat / eps) * u_in.values

    if mode is ModeSign.MINUS:
        transferred = a * base
        retained = -unimodular(lam) * np.conj(b) * base
        u_plus, u_minus = transferred, retained
    else:
        transferred = a * base
        retained = unimodular(-lam) * b * base
        u_plus, u_minus = retained, transferred

    record = {"a": a, "b": b, "lambda_tilde": lam, "zeta": zeta, "argument": argument.name.lower(),
              "start": mode.name.lower()}
    return TransferResult(u_in, u_in.with_values(u_plus), u_in.with_values(u_minus), record)


def transfer_through_scattering(ingoing: IngoingData, event: CrossingEvent, mode: ModeSign = ModeSign.MINUS,
                                argument: TransferArgument = TransferArgument.PRINTED) -> TransferResult:
    """
    The same transfer assembled from the LZ amplitudes: α^{out} = 𝒮α^{in}, then the outgoing frame phases
    """
    params = ingoing.params
    scattering = scattering_matrix(params, argument)
    phi, linear = ingoing.phases["phi"], ingoing.phases["linear"]
    alpha = ingoing.alpha_in.values

    if mode is ModeSign.MINUS:
        alpha1_out = -np.conj(scattering.b) * alpha
        alpha2_out = scattering.a * alpha
        u_minus = unimodular(-phi + linear) * alpha1_out
        u_plus = unimodular(phi + linear) * alpha2_out
    else:
        alpha1_out = scattering.a * alpha
        alpha2_out = scattering.b * alpha
        u_minus = unimodular(-phi - linear) * alpha1_out
        u_plus = unimodular(phi - linear) * alpha2_out

    grid = ingoing.alpha_in
    return TransferResult(ingoing.u_in, grid.with_values(u_plus), grid.with_values(u_minus),
                          {"zeta": ingoing.zeta, "route": "scattering"})


def residual_linear_phase(event: CrossingEvent, grid: ProfileGrid, eps: float, from_mode: ModeSign) -> np.ndarray:
    """
    y-linear phase left in the frame of the newly generated mode, −(2α/(r√ε))H₁(y) ∓ (1/√ε)δ·y
    """
    eta = eta_field(grid, event)
    H1 = event.e_theta[0] * eta[0] + event.e_theta[1] * eta[1]
    drift = compute_drift(event, from_mode)
    drift_y = sum(drift[j] * y for j, y in enumerate(grid.mesh))
    return from_mode.sign * (2 * event.alpha / (event.r * math.sqrt(eps))) * H1 - drift_y / math.sqrt(eps)


def _outgoing_flows(pot: PauliPotential, event: CrossingEvent, delta: float, step: float,
                    from_mode: ModeSign) -> tuple[Trajectory, Trajectory, np.ndarray]:
    """
    :return: the undrifted flow of the starting mode, the drifted flow of the other mode and the drift
    """
    drift = compute_drift(event, from_mode)
    t_end = event.t_flat + delta
    same = integrate_flow(pot, from_mode, False, event.z_flat, event.t_flat, t_end, step)
    other = integrate_flow(pot, from_mode.other, True, event.z_flat.shifted(drift), event.t_flat, t_end, step)
    return same, other, drift


def assemble_outgoing(pot: PauliPotential, event: CrossingEvent, transfer: TransferResult, delta: float, eps: float,
                      from_mode: ModeSign = ModeSign.MINUS, step: float = 1e-3,
                      beta: float = 1.0 / 60.0) -> TransitionResult:
    """
    Outgoing packets at t♭ + δ: the minus packet on V_θ^⊥ with e^{(i/2)G}u₋^{out}, the plus packet on V_θ with
    e^{−(i/2)G}u₊^{out}; the newly generated mode follows the drifted flow
    """
    same, other, drift = _outgoing_flows(pot, event, delta, step, from_mode)
    flows = {from_mode: same, from_mode.other: other}
    t_out = event.t_flat + delta

    def packet(mode: ModeSign, profile: ProfileGrid, direction: np.ndarray) -> WavePacket:
        flow = flows[mode]
        return WavePacket(eps, flow.state(-1), float(flow.action[-1]), direction,
                          seed_outgoing_profile(profile, event, mode, t_out), mode, t_out)

    out_minus = packet(ModeSign.MINUS, transfer.u_minus_out, event.V_theta_perp)
    out_plus = packet(ModeSign.PLUS, transfer.u_plus_out, event.V_theta)
    for flow in (same, other):
        assert_single_passage(pot, flow, event, delta)

    return TransitionResult(out_minus, out_plus, transfer.u_in, transfer.record,
                            error_budget(eps, beta), event, drift=drift)


def transition(pot: PauliPotential, z0: PhasePoint, mode: ModeSign, phi: ProfileGrid, eps: float,
               settings: TransitionSettings = TransitionSettings()) -> TransitionResult:
    """
    Full pipeline from an initial packet on one mode to the two outgoing packets at t♭ + δ
    """
    packet0 = build_initial_packet(pot, z0, mode, phi, eps)
    incoming = integrate_flow(pot, mode, False, z0, packet0.time, packet0.time + settings.t_max, settings.step,
                              initial_eigvec=packet0.direction, stop_at_crossing=True)
    event = detect_crossing_event(pot, incoming)
    delta = settings.delta_for(eps)
    t_in = event.t_flat - delta
    if t_in <= packet0.time:
        raise RegimeError(f"Crossing at t♭={event.t_flat:.4g} comes before t0 + δ={packet0.time + delta:.4g}")
    assert_single_passage(pot, incoming, event, delta)

    history = solve_profile(pot, incoming, phi, packet0.time, t_in, settings.profile_step, event=event)
    packet_in = WavePacket(eps, incoming.interpolate(t_in), incoming.action_at(t_in), incoming.eigvec_at(t_in),
                           history.final, mode, t_in)
    logger.info(f"Incoming packet at t♭−δ={t_in:.6f}, profile norm {history.final.norm():.12f}")

    localize = eps ** -settings.beta if settings.localize else None
    ingoing = ingoing_data(pot, event, packet_in, delta, localize)
    transfer = apply_transfer(ingoing.u_in, event, eps, mode, settings.argument, ingoing.zeta)
    result = assemble_outgoing(pot, event, transfer, delta, eps, mode, settings.step, settings.beta)
    logger.success(f"Transition done: ‖u₊‖²={result.out_plus.mass():.6f}, "
                   f"‖u₋‖²={result.out_minus.mass():.6f}")
    return replace(result, incoming=packet_in)


def plus_mode_transition(pot: PauliPotential, z0: PhasePoint, phi: ProfileGrid, eps: float,
                         settings: TransitionSettings = TransitionSettings()) -> TransitionResult:
    return transition(pot, z0, ModeSign.PLUS, phi, eps, settings)


def rescaled_unknown(state: GridState, averaged: Trajectory, t: float, template: ProfileGrid) -> list[ProfileGrid]:
    """
    u(y) = ε^{d/4}e^{−iS₀/ε}e^{−ip₀·(x−q₀)/ε}ψ(x) at x = q₀ + √εy, one profile per component

    :param averaged: Averaged flow from z♭ whose action vanishes at t♭
    :raises InterpolationCoverageError: If the packet core leaves the physical box
    """
    eps = state.eps
    center = averaged.interpolate(t)
    action = averaged.action_at(t)
    root = math.sqrt(eps)
    reach = 6 * root
    if np.any(np.abs(center.q) + reach > state.half_width):
        raise InterpolationCoverageError(f"Packet at q={list(center.q)} leaves the box of half-width "
                                         f"{state.half_width}")

    axes = state.axes
    mesh = np.meshgrid(*axes, indexing="ij")
    phase = -(action + sum(p * (x - q) for p, x, q in zip(center.p, mesh, center.q))) / eps
    demodulated = eps ** (state.dim / 4) * unimodular(fold_phase(phase)) * state.psi

    query = [(q + root * y + state.half_width) / state.spacing for q, y in zip(center.q, template.mesh)]
    profiles = []
    for component in demodulated:
        values = map_coordinates(component.real, query, order=3, mode="grid-wrap") \
            + 1j * map_coordinates(component.imag, query, order=3, mode="grid-wrap")
        profiles.append(template.with_values(values))
    return profiles
