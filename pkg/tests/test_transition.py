from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from wpcross.classical import integrate_flow
from wpcross.lib.enums import FlowMode, ModeSign, TransferArgument
from wpcross.lib.errors import InterpolationCoverageError, OnSigmaError, RegimeError
from wpcross.landau_zener import coeff_a
from wpcross.potential import CrossingEvent, PauliPotential, PhasePoint, constant_gap_potential
from wpcross.profiles import ProfileGrid, gaussian_profile
from wpcross.reference import state_from_packets
from wpcross.transition import (
    TransitionSettings,
    WavePacket,
    apply_transfer,
    assemble_outgoing,
    build_initial_packet,
    check_regime,
    error_budget,
    ingoing_data,
    localization_cutoff,
    plus_mode_transition,
    rescaled_unknown,
    residual_linear_phase,
    transfer_through_scattering,
    transition,
)

EPS = 1e-2


def _random_profile(rng: np.random.Generator, n: int = 8, half_width: float = 4.0) -> ProfileGrid:
    values = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return ProfileGrid(2, n, half_width, values)


def test_initial_packet_follows_the_eigenvector(isotropic: PauliPotential, z0: PhasePoint,
                                                gaussian: ProfileGrid) -> None:
    packet = build_initial_packet(isotropic, z0, ModeSign.MINUS, gaussian, EPS)
    np.testing.assert_allclose(np.abs(packet.direction), [1.0, 0.0], atol=1e-15)
    assert packet.mode is ModeSign.MINUS
    assert packet.mass() == pytest.approx(1.0, abs=1e-12)


def test_initial_packet_must_start_off_sigma(isotropic: PauliPotential, gaussian: ProfileGrid) -> None:
    with pytest.raises(OnSigmaError):
        build_initial_packet(isotropic, PhasePoint([0.0, 0.0], [1.0, 0.0]), ModeSign.MINUS, gaussian, EPS)
    with pytest.raises(OnSigmaError):
        build_initial_packet(isotropic, PhasePoint([0.0, 0.5], [1.0, 0.0]), ModeSign.PLUS, gaussian, EPS)


def test_realized_packet_keeps_unit_mass() -> None:
    profile = gaussian_profile(2, 128, 8.0)
    packet = WavePacket(EPS, PhasePoint([0.1, -0.2], [0.5, 0.0]), 0.3, np.array([0.6, 0.8]), profile)
    axis = -1.0 + (2.0 / 256) * np.arange(256)
    psi = packet.realize([axis, axis])
    mass = float(np.sum(np.abs(psi) ** 2) * (2.0 / 256) ** 2)
    assert mass == pytest.approx(1.0, rel=1e-4)


def test_rescaled_unknown_inverts_realization() -> None:
    profile = gaussian_profile(2, 128, 8.0)
    center = PhasePoint([0.1, -0.2], [0.5, 0.0])
    direction = np.array([0.6, 0.8])
    packet = WavePacket(EPS, center, 0.0, direction, profile)
    state = state_from_packets(packet, 256, 1.0)
    averaged = integrate_flow(constant_gap_potential(), FlowMode.AVERAGED, False, center, 0.0, 0.1, 1e-2)
    template = gaussian_profile(2, 64, 4.0)

    first, second = rescaled_unknown(state, averaged, 0.0, template)
    np.testing.assert_allclose(first.values, direction[0] * template.values, atol=1e-4)
    np.testing.assert_allclose(second.values, direction[1] * template.values, atol=1e-4)

    edge = integrate_flow(constant_gap_potential(), FlowMode.AVERAGED, False, PhasePoint([0.95, 0.0], [0.0, 0.0]),
                          0.0, 0.1, 1e-2)
    with pytest.raises(InterpolationCoverageError):
        rescaled_unknown(state, edge, 0.0, template)


@pytest.mark.parametrize("mode", [ModeSign.MINUS, ModeSign.PLUS])
def test_transfer_is_pointwise_unitary(event_factory: Callable[..., CrossingEvent], mode: ModeSign) -> None:
    rng = np.random.default_rng(11)
    event = event_factory(r=1.3, theta=0.4, alpha=0.05, action_flat=0.7)
    for _ in range(100):
        u_in = _random_profile(rng)
        result = apply_transfer(u_in, event, EPS, mode)
        total = np.abs(result.u_plus_out.values) ** 2 + np.abs(result.u_minus_out.values) ** 2
        np.testing.assert_allclose(total, np.abs(u_in.values) ** 2, rtol=1e-10)


def test_transferred_mass_of_a_gaussian(event_factory: Callable[..., CrossingEvent]) -> None:
    # ∫a(y·e⊥/√r)²|u|² dy = 1/√(1 + π/r) for the unit Gaussian
    event = event_factory(r=2.0, theta=0.4)
    result = apply_transfer(gaussian_profile(2, 64, 8.0), event, EPS)
    assert result.u_plus_out.mass() == pytest.approx(1.0 / math.sqrt(1.0 + math.pi / 2.0), rel=1e-8)
    assert result.u_plus_out.mass() == pytest.approx(0.62369, abs=1e-5)
    assert result.u_plus_out.mass() + result.u_minus_out.mass() == pytest.approx(1.0, abs=1e-10)


def test_narrow_packet_follows_the_landau_zener_law(event_factory: Callable[..., CrossingEvent]) -> None:
    event = event_factory(r=2.0, theta=0.4)
    z = 0.5
    u_in = gaussian_profile(2, 256, 2.0, center=z * math.sqrt(event.r) * event.e_theta_perp, width=0.05)
    result = apply_transfer(u_in, event, EPS)
    assert result.u_plus_out.mass() == pytest.approx(float(coeff_a(z)) ** 2, rel=2e-2)


def test_plus_start_mirrors_minus_start(event_factory: Callable[..., CrossingEvent], gaussian: ProfileGrid) -> None:
    event = event_factory(alpha=0.05, action_flat=0.2)
    minus = apply_transfer(gaussian, event, EPS, ModeSign.MINUS)
    plus = apply_transfer(gaussian, event, EPS, ModeSign.PLUS)
    np.testing.assert_array_equal(plus.u_minus_out.values, minus.u_plus_out.values)
    np.testing.assert_allclose(np.abs(plus.u_plus_out.values), np.abs(minus.u_minus_out.values), atol=1e-15)
    assert plus.record["start"] == "plus"


def test_assemble_outgoing_keeps_the_ingoing_profile(tmp_path: Path, isotropic: PauliPotential,
                                                     minus_event: CrossingEvent, gaussian: ProfileGrid) -> None:
    transfer = apply_transfer(gaussian, minus_event, EPS)
    assert transfer.u_in is gaussian
    result = assemble_outgoing(isotropic, minus_event, transfer, 0.1, EPS)

    assert result.ingoing_profile is gaussian
    assert result.incoming is None
    assert result.out_plus.mass() == pytest.approx(transfer.u_plus_out.mass(), abs=1e-12)
    assert result.out_minus.mass() == pytest.approx(transfer.u_minus_out.mass(), abs=1e-12)
    assert result.out_plus.mass() < 1.0 - 1e-3

    result.export(str(tmp_path), "direct")
    summary = json.loads((tmp_path / "direct_transition.json").read_text())
    assert summary["masses"]["ingoing"] == pytest.approx(1.0, abs=1e-10)
    assert summary["masses"]["out_plus"] < 0.9


@pytest.mark.parametrize("mode", [ModeSign.MINUS, ModeSign.PLUS])
@pytest.mark.parametrize("flip", [1.0, -1.0])
def test_scattering_route_agrees_with_direct_transfer(isotropic: PauliPotential,
                                                      event_factory: Callable[..., CrossingEvent],
                                                      gaussian: ProfileGrid, mode: ModeSign, flip: float) -> None:
    event = event_factory(r=1.5, theta=0.9, alpha=0.05, t_flat=1.0, action_flat=0.4)
    target = event.V_theta if mode is ModeSign.MINUS else event.V_theta_perp
    delta = 0.2
    packet = WavePacket(EPS, event.z_flat, 0.0, flip * target, gaussian, mode, event.t_flat - delta)
    ingoing = ingoing_data(isotropic, event, packet, delta)
    assert ingoing.zeta == int(flip)
    np.testing.assert_allclose(np.abs(ingoing.alpha_in.values), np.abs(ingoing.u_in.values), atol=1e-15)

    direct = apply_transfer(ingoing.u_in, event, EPS, mode, zeta=ingoing.zeta)
    routed = transfer_through_scattering(ingoing, event, mode)
    np.testing.assert_allclose(routed.u_plus_out.values, direct.u_plus_out.values, atol=1e-10)
    np.testing.assert_allclose(routed.u_minus_out.values, direct.u_minus_out.values, atol=1e-10)


def test_gap_shifted_argument_differs_only_with_a_gap(event_factory: Callable[..., CrossingEvent],
                                                      gaussian: ProfileGrid) -> None:
    closed = event_factory(alpha=0.0)
    printed = apply_transfer(gaussian, closed, EPS, argument=TransferArgument.PRINTED)
    shifted = apply_transfer(gaussian, closed, EPS, argument=TransferArgument.GAP_SHIFTED)
    np.testing.assert_allclose(printed.u_plus_out.values, shifted.u_plus_out.values, atol=1e-15)

    gapped = event_factory(alpha=0.1)
    printed = apply_transfer(gaussian, gapped, EPS, argument=TransferArgument.PRINTED)
    shifted = apply_transfer(gaussian, gapped, EPS, argument=TransferArgument.GAP_SHIFTED)
    assert shifted.u_plus_out.mass() != pytest.approx(printed.u_plus_out.mass(), abs=1e-3)


@pytest.mark.parametrize("mode", [ModeSign.MINUS, ModeSign.PLUS])
def test_drift_cancels_the_linear_phase(event_factory: Callable[..., CrossingEvent], gaussian: ProfileGrid,
                                        mode: ModeSign) -> None:
    event = event_factory(r=1.7, theta=-0.6, alpha=0.08)
    assert float(np.max(np.abs(residual_linear_phase(event, gaussian, EPS, mode)))) <= 1e-10


def test_regime_inequalities() -> None:
    ratios = check_regime(EPS, EPS ** (5.0 / 14.0))
    assert ratios["sqrt_eps_over_delta"] == pytest.approx(0.518, abs=1e-3)
    assert ratios["delta_cubed_over_eps"] == pytest.approx(0.720, abs=1e-3)
    with pytest.raises(RegimeError, match="delta_cubed_over_eps"):
        check_regime(EPS, 0.9)
    with pytest.raises(RegimeError, match="sqrt_eps_over_delta"):
        check_regime(EPS, 0.05)
    assert check_regime(EPS, 0.2, alpha=1.0)["alpha_over_sqrt_eps"] == pytest.approx(10.0)


def test_localization_cutoff_profile() -> None:
    grid = gaussian_profile(1, 64, 4.0)
    chi = localization_cutoff(grid, 2.0, 1.0)
    axis = grid.axis
    assert chi[np.argmin(np.abs(axis))] == pytest.approx(1.0)
    assert chi[np.argmin(np.abs(axis - 1.5))] == pytest.approx(0.5)
    assert np.all(chi[np.abs(axis) >= 2.0] == 0.0)
    assert np.all(np.diff(chi[axis >= 0]) <= 0)


def test_error_budget_value() -> None:
    assert error_budget(EPS, 1.0 / 60.0) == pytest.approx(4.3558, rel=1e-4)


def test_minus_transition_on_isotropic_cone(tmp_path: Path, isotropic: PauliPotential, z0: PhasePoint,
                                            gaussian: ProfileGrid) -> None:
    result = transition(isotropic, z0, ModeSign.MINUS, gaussian, EPS)
    event = result.event
    delta = EPS ** (5.0 / 14.0)
    assert event.t_flat == pytest.approx(2 - math.sqrt(2), abs=1e-8)
    assert result.out_plus.time == pytest.approx(event.t_flat + delta)

    # both outgoing flows leave the tip along the first axis with speed √2
    np.testing.assert_allclose(result.out_plus.center.q, [math.sqrt(2) * delta - 0.5 * delta ** 2, 0.0], atol=1e-6)
    np.testing.assert_allclose(result.out_minus.center.q, [math.sqrt(2) * delta + 0.5 * delta ** 2, 0.0], atol=1e-6)
    np.testing.assert_allclose(result.out_plus.direction, event.V_theta)
    np.testing.assert_allclose(result.out_minus.direction, event.V_theta_perp)

    ingoing = result.ingoing_profile.mass()
    assert ingoing == pytest.approx(1.0, abs=1e-8)
    total = result.out_plus.mass() + result.out_minus.mass()
    assert total == pytest.approx(ingoing, abs=1e-10)
    assert total <= 1 + 1e-8
    assert 0.0 < result.out_plus.mass() < 1.0

    result.export(str(tmp_path), "iso")
    for suffix in ("transition.json", "out_plus.bin", "out_minus.bin", "ingoing.bin"):
        assert (tmp_path / f"iso_{suffix}").is_file()
    summary = json.loads((tmp_path / "iso_transition.json").read_text())
    assert summary["crossing"]["t_flat"] == pytest.approx(event.t_flat)
    assert set(summary["masses"]) == {"ingoing", "out_plus", "out_minus"}


def test_plus_transition_on_isotropic_cone(isotropic: PauliPotential, z0: PhasePoint, gaussian: ProfileGrid) -> None:
    result = plus_mode_transition(isotropic, z0, gaussian, EPS)
    assert result.event.t_flat == pytest.approx(math.sqrt(6) - 2, abs=1e-8)
    assert result.transfer_record["start"] == "plus"
    total = result.out_plus.mass() + result.out_minus.mass()
    assert total == pytest.approx(result.ingoing_profile.mass(), abs=1e-10)


def test_crossing_too_early_for_the_window(isotropic: PauliPotential, z0: PhasePoint, gaussian: ProfileGrid) -> None:
    with pytest.raises(RegimeError):
        plus_mode_transition(isotropic, z0, gaussian, EPS, TransitionSettings(delta=0.5))
