from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from wpcross.lib.callback import Callback
from wpcross.lib.enums import ModeSign
from wpcross.lib.errors import BoxEscapeError, ConfigurationError, ResolutionError
from wpcross.potential import PauliPotential, PhasePoint, constant_gap_potential, from_functions, linear_potential
from wpcross.profiles import gaussian_profile
from wpcross.reference import (
    GridState,
    ObservablesRecorder,
    check_resolution,
    compare_to_packet,
    empty_state,
    evolve,
    load_checkpoint,
    mode_masses,
    resolution_limit,
    state_from_packets,
)
from wpcross.transition import WavePacket, build_initial_packet, transition

EPS = 1e-2


def _packet_1d(q: float, p: float, direction: tuple[float, float] = (1.0, 0.0)) -> WavePacket:
    return WavePacket(EPS, PhasePoint([q], [p]), 0.0, np.array(direction), gaussian_profile(1, 128, 8.0))


def _gaussian_state(dim: int, n: int, half_width: float, center: float = 0.0, momentum: float = 0.0,
                    direction: tuple[float, float] = (1.0, 0.0)) -> GridState:
    q = [center] + [0.0] * (dim - 1)
    p = [momentum] + [0.0] * (dim - 1)
    packet = WavePacket(EPS, PhasePoint(q, p), 0.0, np.array(direction), gaussian_profile(dim, 64, 8.0))
    return state_from_packets(packet, n, half_width)


def test_state_shape_is_checked() -> None:
    with pytest.raises(ConfigurationError):
        GridState(3, 8, 1.0, np.zeros((2, 8, 8, 8)), 0.0, EPS)
    with pytest.raises(ConfigurationError):
        GridState(2, 8, 1.0, np.zeros((2, 8, 4)), 0.0, EPS)


def test_plane_wave_under_constant_potential() -> None:
    # V ≡ cI only rotates the phase: ψ(t) = e^{−ict/ε}e^{−iεk²t/2}ψ(0)
    c, n, half_width = 0.7, 128, math.pi
    pot = from_functions(1, lambda x: c, lambda x: np.zeros(2))
    state = empty_state(1, n, half_width, EPS)
    k = 3.0
    psi0 = np.exp(1j * k * state.axes[0])
    state = state.with_psi(np.stack([psi0, 0.5 * psi0]), 0.0)
    final = evolve(pot, state, 0.5, 1e-2, check_box=False)
    expected = np.exp(-1j * c * 0.5 / EPS - 0.5j * EPS * k ** 2 * 0.5) * state.psi
    np.testing.assert_allclose(final.psi, expected, atol=1e-10)


def test_mass_is_conserved_in_one_dimension() -> None:
    pot = linear_potential(dim=1, alpha0=0.3)
    state = state_from_packets(_packet_1d(-0.5, 1.0), 512, 3.0)
    final = evolve(pot, state, 1.0, 1e-3)
    assert final.mass() == pytest.approx(state.mass(), abs=1e-9)
    assert final.t == 1.0


def test_constant_gap_keeps_mode_populations() -> None:
    pot = constant_gap_potential(dim=1, w0=(0.6, 0.8))
    # (cos φ/2, sin φ/2) is the plus eigenvector of A(w0/|w0|) with φ its angle
    angle = math.atan2(0.8, 0.6)
    plus = (math.cos(angle / 2), math.sin(angle / 2))
    minus = (-plus[1], plus[0])
    state = state_from_packets([_packet_1d(0.0, 0.5, plus), _packet_1d(0.0, 0.5, minus)], 256, 2.0)
    half = 0.5 * state.mass()
    m_minus, m_plus = mode_masses(pot, state)
    assert m_minus == pytest.approx(half, abs=1e-12)
    assert m_plus == pytest.approx(half, abs=1e-12)

    final = evolve(pot, state, 0.3, 1e-3)
    m_minus, m_plus = mode_masses(pot, final)
    assert m_minus == pytest.approx(half, abs=1e-10)
    assert m_plus == pytest.approx(half, abs=1e-10)


def test_mode_masses_for_aligned_and_mixed_states() -> None:
    # w = f(x)·(1, 0) with f = |x| vanishes at the origin only
    pot = from_functions(1, lambda x: 0.0, lambda x: np.array([abs(x[0]), 0.0]))
    upper = state_from_packets(_packet_1d(0.5, 0.0, (1.0, 0.0)), 256, 2.0)
    m_minus, m_plus = mode_masses(pot, upper)
    assert m_plus == pytest.approx(upper.mass(), abs=1e-12)
    assert m_minus == pytest.approx(0.0, abs=1e-12)

    mixed = state_from_packets(_packet_1d(-0.5, 0.0, (math.sqrt(0.5), math.sqrt(0.5))), 256, 2.0)
    m_minus, m_plus = mode_masses(pot, mixed)
    assert m_minus == pytest.approx(0.5 * mixed.mass(), abs=1e-6)
    assert m_plus == pytest.approx(0.5 * mixed.mass(), abs=1e-6)


def test_observer_sees_every_fifth_step(isotropic: PauliPotential) -> None:
    state = _gaussian_state(2, 128, 2.0, center=-0.5)
    recorder = ObservablesRecorder(isotropic)
    observer: Callback = Callback(every=5)
    observer.register(recorder)
    evolve(isotropic, state, 0.02, 1e-3, observer)
    assert len(recorder.rows) == 5
    assert recorder.rows[-1].t == pytest.approx(0.02)
    assert recorder.rows[0].mass == pytest.approx(state.mass(), abs=1e-10)


def test_observables_csv(tmp_path: Path, isotropic: PauliPotential) -> None:
    state = _gaussian_state(2, 256, 2.0, center=-0.5, momentum=1.0)
    recorder = ObservablesRecorder(isotropic)
    recorder(state)
    path = tmp_path / "observables.csv"
    recorder.to_csv(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "t,mass,m_minus,m_plus,q0,q1,p0,p1"
    assert len(lines) == 2
    row = recorder.rows[0]
    np.testing.assert_allclose(row.q_mean, [-0.5, 0.0], atol=1e-8)
    np.testing.assert_allclose(row.p_mean, [1.0, 0.0], atol=1e-8)


def test_checkpoint_round_trip(tmp_path: Path) -> None:
    state = _gaussian_state(2, 256, 2.0, center=0.3, momentum=-0.5, direction=(0.6, 0.8))
    path = str(tmp_path / "state.bin")
    state.dump(path)
    loaded = load_checkpoint(path)
    assert (loaded.dim, loaded.n, loaded.half_width, loaded.t, loaded.eps) == (2, 256, 2.0, state.t, EPS)
    np.testing.assert_array_equal(loaded.psi, state.psi)


def test_comparison_with_packets() -> None:
    first = _packet_1d(-0.5, 0.0, (1.0, 0.0))
    second = _packet_1d(0.5, 0.0, (0.0, 1.0))
    state = state_from_packets(first, 256, 2.0)
    assert compare_to_packet(state, first) == pytest.approx(0.0, abs=1e-14)
    # disjoint supports on orthogonal components
    expected = math.sqrt(state.mass() + state_from_packets(second, 256, 2.0).mass())
    assert compare_to_packet(state, second) == pytest.approx(expected, rel=1e-10)


def test_resolution_is_checked() -> None:
    assert resolution_limit(EPS) == pytest.approx(min(2 * math.pi * 0.1 / 8, math.pi * EPS / 0.8))
    with pytest.raises(ResolutionError):
        check_resolution(empty_state(2, 32, 4.0, EPS), 1.0)
    with pytest.raises(ResolutionError):
        state_from_packets(_packet_1d(0.0, 2.0), 64, 2.0)


def test_time_arguments_are_checked() -> None:
    pot = linear_potential(dim=1)
    state = empty_state(1, 64, 1.0, EPS, t=1.0)
    with pytest.raises(ConfigurationError):
        evolve(pot, state, 2.0, 0.0)
    with pytest.raises(ConfigurationError):
        evolve(pot, state, 0.5, 1e-3)


def test_packet_reaching_the_edge_is_reported() -> None:
    pot = constant_gap_potential(dim=1)
    state = state_from_packets(_packet_1d(1.2, 1.0), 512, 2.0)
    with pytest.raises(BoxEscapeError):
        evolve(pot, state, 1.0, 1e-3)


def test_strang_splitting_is_second_order() -> None:
    pot = linear_potential(dim=1, alpha0=0.5, c=1.0)
    state = state_from_packets(_packet_1d(-0.3, 0.5, (0.6, 0.8)), 256, 2.0)
    fine = evolve(pot, state, 0.2, 1e-4)
    errors = []
    for dt in (4e-3, 2e-3):
        coarse = evolve(pot, state, 0.2, dt)
        errors.append(math.sqrt(float(np.sum(np.abs(coarse.psi - fine.psi) ** 2)) * state.cell))
    assert errors[0] / errors[1] > 3.0


@pytest.mark.slow
def test_minus_packet_mass_splits_like_the_reference(isotropic: PauliPotential, z0: PhasePoint) -> None:
    phi = gaussian_profile(2, 128, 8.0)
    result = transition(isotropic, z0, ModeSign.MINUS, phi, EPS)
    packet0 = build_initial_packet(isotropic, z0, ModeSign.MINUS, phi, EPS)
    state = state_from_packets(packet0, 512, 2.5, t=0.0)
    final = evolve(isotropic, state, result.out_plus.time, 1e-3)
    _, m_plus = mode_masses(isotropic, final)
    assert abs(m_plus - result.out_plus.mass()) / result.out_plus.mass() <= 0.1
