import json

import numpy as np
import pytest

from cartan_kill.exceptions import GeometryError, MetricDefinitionError, MetricParseError
from cartan_kill.frontends import (
    builtin,
    builtin_names,
    chart_for,
    christoffel,
    gauss_curvature,
    klein_exp,
    klein_log,
    lift_point,
    load_metric_file,
    parse_metric,
    riemannian_to_cartan,
)
from cartan_kill.bundle import flow, log, zeta


def test_flat_metric_parses():
    """The identity matrix is the flat metric"""
    spec = parse_metric("[[1, 0], [0, 1]]")
    assert spec.n == 2
    assert np.allclose(spec.metric([0.3, -0.4]), np.eye(2))
    assert np.allclose(spec.metric_derivative([0.3, -0.4]), 0.0)


def test_builtin_flat_equals_parsed():
    """builtin('flat2') is the parsed identity metric"""
    assert builtin("flat2").g == parse_metric("[[1,0],[0,1]]").g


def test_indefinite_metric_lists_failing_points():
    """Positivity failures name the check points"""
    with pytest.raises(MetricDefinitionError) as info:
        parse_metric("[[1, 0], [0, -1]]")
    assert len(info.value.details["failing_points"]) == 25


def test_asymmetric_metric():
    """Off-diagonal entries must agree"""
    with pytest.raises(MetricDefinitionError):
        parse_metric("[[1, x1], [0, 1]]")


def test_non_square_metric():
    """Rows must match the number of rows"""
    with pytest.raises(MetricDefinitionError):
        parse_metric("[[1, 0, 0], [0, 1, 0]]")


def test_polar_christoffel():
    """Flat metric in polar coordinates: Gamma^1_22 = -r, Gamma^2_12 = 1/r"""
    spec = parse_metric("[[1, 0], [0, x1^2]]", domain=[[0.5, 3.0], [-1.0, 1.0]])
    G = christoffel(spec, [2.0, 0.3])
    assert abs(G[0, 1, 1] + 2.0) < 1e-12, G[0, 1, 1]
    assert abs(G[1, 0, 1] - 0.5) < 1e-12, G[1, 0, 1]
    assert np.allclose(G, np.transpose(G, (0, 2, 1)))


def test_gauss_curvature_of_model_spaces():
    """Round sphere has curvature +1 and the Poincare disk -1"""
    assert abs(gauss_curvature(builtin("sphere2"), [0.4, -0.3]) - 1.0) < 1e-10
    assert abs(gauss_curvature(builtin("hyperbolic2"), [0.2, 0.1]) + 1.0) < 1e-10


def test_revolution_profile_positive():
    """revolution(1 + x1^2/4) is positive over its domain"""
    spec = builtin("revolution(1 + x1^2/4)")
    for x in spec.check_points():
        assert spec.metric(x)[1, 1] > 0.0
    with pytest.raises(MetricDefinitionError):
        builtin("revolution(1 + x2)")


def test_default_revolution_profile():
    """The default profile is f(r) = 1 + r^2/4"""
    spec = builtin("revolution")
    assert spec.name == "revolution(1 + x1^2 / 4)", spec.name
    assert abs(spec.metric([1.0, 0.3])[1, 1] - 1.25**2) < 1e-12
    assert abs(spec.metric([0.0, 0.0])[1, 1] - 1.0) < 1e-12


def test_bump_without_perturbation_is_flat():
    """bump(0) is the flat metric"""
    spec = builtin("bump(0)")
    assert np.allclose(spec.metric([0.1, 0.2]), np.eye(2))


def test_bump_is_flat_outside_support():
    """The perturbation vanishes outside the support disk"""
    spec = builtin("bump")
    assert np.allclose(spec.metric([1.2, 0.9]), np.eye(2))
    assert not np.allclose(spec.metric([0.2, 0.1]), np.eye(2))


def test_unknown_geometry():
    """Unknown names raise GeometryError with the known names"""
    with pytest.raises(GeometryError) as info:
        builtin("torus")
    assert "sphere2" in info.value.details["known"]
    with pytest.raises(GeometryError):
        builtin("flat2(3)")
    assert "klein:so3" in builtin_names()


def test_frame_bundle_chart_shape(sphere_chart):
    """Metric charts have coordinates (x, theta)"""
    assert sphere_chart.N == 3
    assert sphere_chart.base_dim == 2
    assert sphere_chart.lie.name == "euc(2)"
    assert np.allclose(sphere_chart.domain[2], [-np.pi / 2, np.pi / 2])


def test_lift_point(sphere_chart):
    """Lifts add the identity frame; wrong sizes are rejected"""
    assert np.array_equal(lift_point(sphere_chart, [0.1, 0.2]), [0.1, 0.2, 0.0])
    with pytest.raises(GeometryError):
        lift_point(sphere_chart, [0.1])


def test_klein_flow_is_right_multiplication(so3_chart):
    """exp(b, X) on SO(3) is g(b) exp(X)"""
    lie = so3_chart.lie
    b = np.array([0.1, 0.2, -0.1])
    X = np.array([0.3, -0.2, 0.4])
    end = flow(so3_chart, b, X, 1.0, pushforward=False).endpoint
    assert np.allclose(klein_exp(lie, end), klein_exp(lie, b) @ klein_exp(lie, X), atol=1e-9)


def test_klein_log_matches_matrix_log(so3_chart):
    """The bundle logarithm on SO(3) is log(g(b0)^-1 g(b1))"""
    lie = so3_chart.lie
    b0 = np.array([0.2, -0.1, 0.15])
    b1 = np.array([-0.1, 0.3, 0.05])
    expected = klein_log(lie, np.linalg.inv(klein_exp(lie, b0)) @ klein_exp(lie, b1))
    X = log(so3_chart, b0, b1, tol=1e-10)
    assert np.allclose(X, expected, atol=1e-8), (X, expected)
    assert np.allclose(klein_log(lie, klein_exp(lie, b1)), b1, atol=1e-12)


def test_heisenberg_zeta_is_exact_bch(heisenberg_chart):
    """Two-step nilpotent: zeta(X, Y) = X + Y + [X, Y]/2"""
    lie = heisenberg_chart.lie
    X = np.array([0.4, 0.1, -0.3])
    Y = np.array([-0.2, 0.3, 0.5])
    z = zeta(heisenberg_chart, np.zeros(3), X, Y)
    assert np.allclose(z, X + Y + 0.5 * lie.bracket(X, Y), atol=1e-8), z


def test_abelian_zeta_is_sum():
    """On R^n, zeta(X, Y) = X + Y"""
    chart = chart_for("klein:abelian")
    X, Y = np.array([0.3, -0.1]), np.array([0.2, 0.4])
    assert np.allclose(zeta(chart, np.zeros(2), X, Y), X + Y, atol=1e-9)


def test_load_metric_file(tmp_path):
    """Metric files follow {n, g, domain, name}"""
    path = tmp_path / "metric.json"
    payload = {"n": 2, "g": [["1", "0"], ["0", "1 + x1^2"]], "domain": [[-1, 1], [-1, 1]], "name": "warped"}
    path.write_text(json.dumps(payload), encoding="utf-8")
    spec = load_metric_file(path)
    assert spec.name == "warped"
    assert np.allclose(spec.metric([0.5, 0.0]), np.diag([1.0, 1.25]))
    assert riemannian_to_cartan(spec).N == 3


def test_corrupted_metric_file(tmp_path):
    """Broken expressions and broken JSON are geometry errors"""
    path = tmp_path / "broken.json"
    payload = {"n": 2, "g": [["1", "0"], ["0", "1 +"]], "domain": [[-1, 1], [-1, 1]]}
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(MetricParseError):
        load_metric_file(path)
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(MetricDefinitionError):
        load_metric_file(path)
