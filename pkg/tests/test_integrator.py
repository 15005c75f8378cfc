import numpy as np
import pytest

from cartan_kill.exceptions import DomainExitError, IntegrationError
from cartan_kill.integrator import CashKarp54


def rotation(y):
    return np.array([y[1], -y[0]])


def test_harmonic_oscillator_quarter_period():
    """y' = (y2, -y1) from (1, 0) reaches (0, -1) at t = pi/2"""
    y, diagnostics = CashKarp54(tol=1e-12).integrate(rotation, np.array([1.0, 0.0]), np.pi / 2)
    assert np.allclose(y, [0.0, -1.0], atol=1e-9), y
    assert diagnostics.accepted_steps > 0


def test_backward_integration_returns_to_start():
    """Integrating forward then backward recovers the initial value"""
    solver = CashKarp54(tol=1e-12)
    forward, _ = solver.integrate(rotation, np.array([0.3, 0.7]), 1.3)
    back, _ = solver.integrate(rotation, forward, -1.3)
    assert np.allclose(back, [0.3, 0.7], atol=1e-9), back


def test_zero_time_is_identity():
    """t_end = 0 takes no steps"""
    y, diagnostics = CashKarp54().integrate(rotation, np.array([1.0, 2.0]), 0.0)
    assert np.array_equal(y, [1.0, 2.0])
    assert diagnostics.accepted_steps == 0


def test_domain_exit_reports_time():
    """Leaving the domain raises DomainExitError near the exit time"""
    with pytest.raises(DomainExitError) as info:
        CashKarp54(tol=1e-10).integrate(
            lambda y: np.array([1.0]), np.array([0.0]), 2.0, inside=lambda y: abs(y[0]) < 0.5
        )
    assert abs(info.value.exit_time - 0.5) < 1e-6, info.value.exit_time


def test_step_budget():
    """A tiny step budget raises IntegrationError"""
    with pytest.raises(IntegrationError):
        CashKarp54(tol=1e-14, max_steps=3).integrate(rotation, np.array([1.0, 0.0]), 100.0)


def test_local_error_within_tolerance():
    """Accepted local errors respect the requested tolerance"""
    tol = 1e-8
    y0 = np.array([1.0, 0.0])
    _, diagnostics = CashKarp54(tol=tol).integrate(rotation, y0, 3.0)
    assert diagnostics.max_local_error <= tol * 2.0, diagnostics


def test_states_at_several_times():
    """One pass lands on every requested time"""
    solver = CashKarp54(tol=1e-12)
    times = [0.5, 1.0, 1.0, 2.5]
    states, _ = solver.integrate_to_times(rotation, np.array([1.0, 0.0]), times)
    assert len(states) == 4
    for t, y in zip(times, states):
        assert np.allclose(y, [np.cos(t), -np.sin(t)], atol=1e-9), (t, y)
    end, _ = solver.integrate(rotation, np.array([1.0, 0.0]), 2.5)
    assert np.allclose(states[-1], end, atol=1e-10)


def test_backward_times():
    """Negative times are integrated backwards"""
    states, _ = CashKarp54(tol=1e-12).integrate_to_times(rotation, np.array([1.0, 0.0]), [-0.3, -0.6])
    assert np.allclose(states[1], [np.cos(0.6), np.sin(0.6)], atol=1e-9), states[1]


def test_unordered_times_rejected():
    """Times of mixed sign or shrinking magnitude are refused"""
    solver = CashKarp54()
    with pytest.raises(ValueError):
        solver.integrate_to_times(rotation, np.array([1.0, 0.0]), [0.5, -0.5])
    with pytest.raises(ValueError):
        solver.integrate_to_times(rotation, np.array([1.0, 0.0]), [1.0, 0.5])
