from __future__ import annotations

from typing import Callable

import numpy as np
import pytest

from wpcross.classical import detect_crossing_event, integrate_flow
from wpcross.lib.enums import ModeSign
from wpcross.potential import CrossingEvent, PauliPotential, PhasePoint, named_potential, theta_vectors
from wpcross.profiles import ProfileGrid, gaussian_profile


def _make_event(r: float = 2.0, theta: float = 0.4, alpha: float = 0.0, t_flat: float = 1.0,
                action_flat: float = 0.0) -> CrossingEvent:
    e, e_perp, V, V_perp = theta_vectors(theta)
    return CrossingEvent(t_flat=t_flat, z_flat=PhasePoint(np.zeros(2), r * e), r=r, theta=theta, alpha=alpha,
                         e_theta=e, e_theta_perp=e_perp, V_theta=V, V_theta_perp=V_perp, dw_flat=np.eye(2),
                         action_flat=action_flat)


@pytest.fixture
def isotropic() -> PauliPotential:
    return named_potential("isotropic-linear")


@pytest.fixture
def z0() -> PhasePoint:
    return PhasePoint(np.array([-1.0, 0.0]), np.array([2.0, 0.0]))


@pytest.fixture
def minus_event(isotropic: PauliPotential, z0: PhasePoint) -> CrossingEvent:
    incoming = integrate_flow(isotropic, ModeSign.MINUS, False, z0, 0.0, 2.0, 1e-3, stop_at_crossing=True)
    return detect_crossing_event(isotropic, incoming)


@pytest.fixture
def event_factory() -> Callable[..., CrossingEvent]:
    return _make_event


@pytest.fixture
def gaussian() -> ProfileGrid:
    return gaussian_profile(2, 64, 8.0)
