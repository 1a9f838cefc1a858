from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np
import pytest
from scipy.special import gamma

from wpcross.lib.enums import Direction, LZMethod, TransferArgument
from wpcross.lib.errors import ConfigurationError, GammaPoleError, SingularTimeError
from wpcross.landau_zener import (
    LZParameters,
    coeff_a,
    coeff_b,
    complex_gamma,
    integrate_lz_ode,
    lz_basis_signs,
    lz_table,
    lz_transfer_matrix,
    phase_Lambda,
    phase_Lambda_tilde,
    phase_Phi,
    rotation_reduce,
    scattering_matrix,
    transfer_argument,
    write_lz_table,
)
from wpcross.potential import CrossingEvent


def test_coefficients_are_unitary() -> None:
    z = np.linspace(0.0, 6.0, 121)
    np.testing.assert_allclose(coeff_a(z) ** 2 + np.abs(coeff_b(z)) ** 2, 1.0, atol=1e-11)
    assert coeff_a(1.0) ** 2 == pytest.approx(math.exp(-math.pi), rel=1e-14)
    assert coeff_b(0.0) == 0j


def test_gamma_modulus_identity() -> None:
    y = np.linspace(0.05, 6.0, 120)
    np.testing.assert_allclose(np.abs(complex_gamma(1.0 + 1j * y)) ** 2, np.pi * y / np.sinh(np.pi * y), rtol=1e-11)


def test_b_matches_first_order_transition() -> None:
    z = 1e-2
    assert coeff_b(z) == pytest.approx(1j * z * math.sqrt(math.pi) * np.exp(0.25j * np.pi), rel=1e-3)


def test_complex_gamma_matches_scipy() -> None:
    points = np.array([0.3 + 0.2j, 1.0 + 1.0j, 5.5, -2.5 + 0.1j, 1.0 + 3.0j, 0.5])
    np.testing.assert_allclose(complex_gamma(points), gamma(points), rtol=1e-11)
    assert complex_gamma(4.0) == pytest.approx(6.0, rel=1e-13)


@pytest.mark.parametrize("pole", [0.0, -1.0, -3.0])
def test_complex_gamma_poles(pole: float) -> None:
    with pytest.raises(GammaPoleError):
        complex_gamma(pole)


def test_scattering_matrix_is_unitary() -> None:
    params = LZParameters(z1=np.zeros(7), z2=np.linspace(-2.0, 2.0, 7))
    data = scattering_matrix(params)
    product = data.S @ np.conj(np.swapaxes(data.S, -1, -2))
    np.testing.assert_allclose(product, np.broadcast_to(np.eye(2), product.shape), atol=1e-11)
    assert data.zeta in (-1, 1)


def test_geometry_round_trip(event_factory: Callable[..., CrossingEvent]) -> None:
    event = event_factory(r=2.0, theta=0.4, alpha=0.05)
    eps = 1e-2
    eta = np.random.default_rng(3).normal(size=(2, 5))
    params = LZParameters.from_geometry(eta, event, eps)
    np.testing.assert_allclose(params.H1, event.e_theta @ eta, atol=1e-14)
    np.testing.assert_allclose(params.H2, event.e_theta_perp @ eta, atol=1e-13)
    # the printed argument drops the gap shift
    shift = event.alpha / math.sqrt(eps * event.r)
    np.testing.assert_allclose(transfer_argument(params, TransferArgument.GAP_SHIFTED)
                               - transfer_argument(params, TransferArgument.PRINTED), shift, atol=1e-13)


def test_lambda_tilde_is_minus_twice_phi(event_factory: Callable[..., CrossingEvent]) -> None:
    eta = np.random.default_rng(5).normal(size=(2, 9))
    quadratic = np.random.default_rng(7).normal(size=9)
    for alpha, orientation in ((0.0, 1.0), (0.05, 1.0), (0.05, -1.0)):
        event = replace(event_factory(r=1.5, theta=-1.1, alpha=alpha), orientation=orientation)
        params = LZParameters.from_geometry(eta, event, 4e-2)
        np.testing.assert_allclose(phase_Lambda_tilde(params, quadratic), -2 * phase_Phi(params, quadratic),
                                   atol=1e-12)


def test_lambda_is_singular_at_zero() -> None:
    params = LZParameters(z1=0.2, z2=0.5, r=2.0)
    assert np.isfinite(phase_Lambda(params, 0.1))
    with pytest.raises(SingularTimeError):
        phase_Lambda(params, np.array([-1.0, 0.0, 1.0]))


def test_rotation_reduction_round_trip() -> None:
    params = LZParameters(z1=0.0, z2=0.7, r=3.0, theta=0.9)
    vector = np.array([0.6 - 0.2j, 0.1 + 0.7j])
    s, reduced = rotation_reduce(params, vector, Direction.FORWARD, s=0.4)
    assert s == pytest.approx(0.4 * math.sqrt(3.0))
    assert np.linalg.norm(reduced) == pytest.approx(np.linalg.norm(vector), rel=1e-14)
    s_back, back = rotation_reduce(params, reduced, Direction.INVERSE, s=s)
    assert s_back == pytest.approx(0.4)
    np.testing.assert_allclose(back, vector, atol=1e-15)
    assert lz_basis_signs(0.9) in (-1, 1)


def test_magnus_and_adaptive_agree() -> None:
    params = LZParameters(z1=0.3, z2=0.8)
    magnus = integrate_lz_ode(params, (-5.0, 5.0), ds=1e-3)
    adaptive = integrate_lz_ode(params, (-5.0, 5.0), ds=1e-2, method=LZMethod.ADAPTIVE)
    np.testing.assert_allclose(magnus.u[-1], adaptive.u[-1], atol=1e-7)
    assert magnus.norm_drift() <= 1e-10
    assert adaptive.norm_drift() <= 1e-8


def test_lz_step_must_be_positive() -> None:
    params = LZParameters(z1=0.0, z2=0.5)
    with pytest.raises(ConfigurationError):
        integrate_lz_ode(params, (-1.0, 1.0), ds=0.0)
    with pytest.raises(ConfigurationError):
        lz_transfer_matrix(params, T=0.0)


@pytest.mark.parametrize("z2", [0.3, 0.8, 1.5])
def test_ode_transfer_matches_closed_form(z2: float) -> None:
    params = LZParameters(z1=0.0, z2=z2)
    short = lz_transfer_matrix(params, T=200.0, ds=1e-2)
    long = lz_transfer_matrix(params, T=400.0, ds=1e-2)
    assert short.deviation <= 3e-2
    assert long.deviation <= 0.6 * short.deviation
    np.testing.assert_allclose(long.S, long.formula.S, atol=3e-2)
    assert long.S[1, 0] == pytest.approx(coeff_b(z2), abs=3e-2)


def test_lz_table_file(tmp_path: Path) -> None:
    rows = lz_table([0.0, 0.5, 1.0])
    assert rows[0][:4] == [0.0, 1.0, 0.0, 0.0]
    for row in rows:
        assert row[-1] == pytest.approx(1.0, abs=1e-11)

    path = tmp_path / "lz_table.csv"
    write_lz_table(str(path), [0.0, 0.5, 1.0])
    lines = path.read_text().splitlines()
    assert lines[0] == "z,a,re_b,im_b,b_squared,unitarity"
    assert len(lines) == 4
    write_lz_table(str(tmp_path / "again.csv"), [0.0, 0.5, 1.0])
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
