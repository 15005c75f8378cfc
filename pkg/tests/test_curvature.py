import numpy as np
import pytest

from cartan_kill.curvature import (
    central_difference,
    contract,
    curvature_at,
    curvature_full,
    derivative_along,
    dump_jet,
    equivariance_check,
    jet_steps,
    omega_jet,
    section_independence,
    sectional_curvature,
    vertical_identity_residual,
)
import cartan_kill.curvature as curvature_module
from cartan_kill.bundle import flow, omega_of_bracket
from cartan_kill.exceptions import DomainExitError, GeometryError, JetStepError
from cartan_kill.frontends import chart_for, gauss_curvature
from cartan_kill.integrator import CashKarp54

SPHERE_POINT = np.array([0.2, 0.1, 0.0])
BUMP_POINT = np.array([0.2, 0.1, 0.0])


def test_klein_geometry_is_flat(so3_chart):
    """Maurer-Cartan charts have K = 0"""
    full = curvature_full(so3_chart, np.array([0.3, -0.2, 0.4]))
    assert np.max(np.abs(full)) <= 1e-9


def test_flat_metric_is_flat(flat_chart):
    """The Euclidean plane has K = 0"""
    assert np.max(np.abs(curvature_at(flat_chart, np.array([0.4, -0.3, 0.2])))) <= 1e-10


def test_sphere_sectional_curvature(sphere_chart):
    """The unit sphere has sectional curvature +1"""
    assert abs(sectional_curvature(sphere_chart, np.array([0.4, -0.3, 0.5])) - 1.0) <= 1e-8


def test_hyperbolic_sectional_curvature():
    """The Poincare disk has sectional curvature -1"""
    chart = chart_for("hyperbolic2")
    assert abs(sectional_curvature(chart, np.array([0.2, 0.1, 0.3])) + 1.0) <= 1e-8


def test_revolution_matches_gauss_curvature(revolution_chart):
    """Sectional curvature agrees with the Riemann tensor of the metric"""
    x = np.array([0.5, 0.2])
    expected = gauss_curvature(revolution_chart.metric, x)
    computed = sectional_curvature(revolution_chart, np.concatenate([x, [0.1]]))
    assert abs(computed - expected) <= 1e-8 * max(abs(expected), 1.0), (computed, expected)


def test_sectional_curvature_needs_metric(so3_chart):
    with pytest.raises(GeometryError):
        sectional_curvature(so3_chart, np.zeros(3))


def test_levi_civita_is_torsion_free(bump_chart):
    """K has no translation component on a metric chart"""
    full = curvature_full(bump_chart, BUMP_POINT)
    assert np.max(np.abs(full[:2, :2, :2])) <= 1e-8
    assert np.max(np.abs(full[:, 2:, :])) <= 1e-8


def test_section_independence(revolution_chart):
    """p-shifts of the arguments leave K unchanged"""
    assert section_independence(revolution_chart, np.array([0.5, 0.2, 0.1])) <= 1e-8


def test_jet_steps():
    """Steps grow by the configured factor up to the cap"""
    assert jet_steps(4) == pytest.approx([1e-3, 1e-2, 0.1, 0.1])
    assert jet_steps(2, h0=1e-2, growth=2.0) == pytest.approx([1e-2, 2e-2])


def test_central_difference():
    """Fourth order stencil for sin at 0"""
    assert abs(central_difference(np.sin, 1e-2) - 1.0) <= 1e-8


def test_nonpositive_step(sphere_chart):
    with pytest.raises(JetStepError):
        derivative_along(sphere_chart, SPHERE_POINT, np.eye(3)[0], lambda b: b, 0.0)


def test_jet_order_and_steps(sphere_chart):
    with pytest.raises(ValueError):
        omega_jet(sphere_chart, SPHERE_POINT, 10)
    with pytest.raises(JetStepError):
        omega_jet(sphere_chart, SPHERE_POINT, 2, steps=[1e-3])


def test_sphere_jet_is_constant(sphere_chart):
    """A space form has D K = 0"""
    jet = omega_jet(sphere_chart, SPHERE_POINT, 1)
    assert jet[1].shape == (3, 2, 2, 3)
    assert np.max(np.abs(jet[1])) <= 1e-6


def test_vertical_identity(bump_chart):
    """J_r contracted with p is minus the p-action on J_(r-1)"""
    jet = omega_jet(bump_chart, BUMP_POINT, 2)
    for r in (1, 2):
        assert vertical_identity_residual(bump_chart, jet, r) <= 1e-4, r


def test_jet_reuse(bump_chart):
    """Lower orders of a base jet are kept"""
    low = omega_jet(bump_chart, BUMP_POINT, 1)
    high = omega_jet(bump_chart, BUMP_POINT, 2, base=low)
    assert np.array_equal(high[1], low[1])
    assert high.order == 2


def test_equivariance(bump_chart):
    """Jets transform by Ad p along the fiber"""
    residuals = equivariance_check(bump_chart, BUMP_POINT, np.eye(3)[2], 0.3, 1)
    assert max(residuals) <= 1e-4, residuals
    with pytest.raises(ValueError):
        equivariance_check(bump_chart, BUMP_POINT, np.eye(3)[0], 0.3, 1)


def test_contract_and_dump(sphere_chart):
    jet = omega_jet(sphere_chart, SPHERE_POINT, 1)
    assert contract(jet, 1, np.eye(3)[0]).shape == (2, 2, 3)
    with pytest.raises(ValueError):
        contract(jet, 2, np.eye(3)[0])
    dumped = dump_jet(jet)
    assert set(dumped["values"]) == {"J0", "J1"}
    assert dumped["labels"] == ["t1", "t2", "r12"]


def test_sphere_equivariance_to_second_order(sphere_chart):
    """D^r K(b p^-1) = p . D^r K(b) for r <= 2 on the round sphere"""
    residuals = equivariance_check(sphere_chart, SPHERE_POINT, np.eye(3)[2], 0.3, 2)
    assert len(residuals) == 3
    assert max(residuals) <= 1e-4, residuals


def _derivative_along_flow(chart, X, func, h):
    """Nested-difference oracle that moves along the integrated flow of X~"""

    def derivative(q):
        def along(t):
            return func(flow(chart, q, X, t, tol=1e-12, pushforward=False).endpoint)

        return central_difference(along, h)

    return derivative


def test_second_jet_is_not_symmetric(bump_chart):
    """J_2(X, Y) - J_2(Y, X) is the derivative along [X~, Y~]"""
    jet = omega_jet(bump_chart, BUMP_POINT, 2)
    X, Y = np.eye(3)[0], np.eye(3)[1]
    defect = jet[2][0, 1] - jet[2][1, 0]
    along_bracket = contract(jet, 1, omega_of_bracket(bump_chart, BUMP_POINT, X, Y))
    scale = max(float(np.max(np.abs(jet[2]))), 1.0)
    assert np.max(np.abs(defect - along_bracket)) <= 1e-4 * scale
    assert np.max(np.abs(defect)) > 1e-4, defect


def test_jet_matches_differences_along_flows(bump_chart):
    """Segment stencils agree with stencils along the omega-constant flows"""
    jet = omega_jet(bump_chart, BUMP_POINT, 2)
    X, Y = np.eye(3)[0], np.eye(3)[1]
    inner = _derivative_along_flow(bump_chart, Y, lambda q: curvature_at(bump_chart, q), 1e-3)
    nested = _derivative_along_flow(bump_chart, X, inner, 1e-2)(BUMP_POINT)
    scale = max(float(np.max(np.abs(jet[2]))), 1.0)
    assert np.max(np.abs(nested - jet[2][0, 1])) <= 1e-6 * scale


def test_jet_needs_no_integration(bump_chart, monkeypatch):
    """Jets cost (4N)^r curvature evaluations per order and no flows"""

    def forbidden(*args, **kwargs):
        raise AssertionError("jets must not integrate flows")

    monkeypatch.setattr(CashKarp54, "integrate_to_times", forbidden)
    calls = []
    original = curvature_module.curvature_at

    def counting(chart, b):
        calls.append(1)
        return original(chart, b)

    monkeypatch.setattr(curvature_module, "curvature_at", counting)
    omega_jet(bump_chart, BUMP_POINT, 2, richardson=False)
    assert len(calls) == 1 + 12 + 12 * 12
    calls.clear()
    omega_jet(bump_chart, BUMP_POINT, 1)
    assert len(calls) == 1 + 3 * 6


def test_stencil_outside_chart(sphere_chart):
    """A stencil past the chart boundary raises DomainExitError"""
    with pytest.raises(DomainExitError):
        derivative_along(sphere_chart, np.array([1.49, 0.0, 0.0]), np.eye(3)[0], lambda b: b, 0.1)
