import numpy as np
import pytest

from cartan_kill.exceptions import AlgebraDefinitionError
from cartan_kill.liealg import BUILTIN_ALGEBRAS, LieAlgebraSpec, abelian, euc, so3


def test_so3_bracket():
    """[e1, e2] = e3 in so(3)"""
    lie = so3()
    e = np.eye(3)
    assert np.allclose(lie.bracket(e[0], e[1]), e[2]), lie.bracket(e[0], e[1])
    assert np.allclose(lie.bracket(e[1], e[0]), -e[2])


def test_builtin_algebras_satisfy_jacobi():
    """Every built-in algebra passes antisymmetry and Jacobi"""
    algebras = [factory() for factory in BUILTIN_ALGEBRAS.values()] + [euc(2), euc(3), abelian(2)]
    for lie in algebras:
        assert lie.jacobi_residual() <= 1e-12, f"{lie.name}: {lie.jacobi_residual()}"
        assert lie.antisymmetry_residual() == 0.0, lie.name
        assert lie.is_subalgebra_p(), lie.name


def test_euc_dimensions():
    """euc(n) has n translations followed by the rotations"""
    lie = euc(3)
    assert lie.dim_g == 6
    assert lie.p_start == 3
    assert lie.labels[:3] == ["t1", "t2", "t3"]


def test_jacobi_violation_is_rejected():
    """Structure constants breaking Jacobi raise AlgebraDefinitionError"""
    payload = {"name": "broken", "dim": 3, "p_start": 3, "brackets": [[0, 1, 1, 1.0], [0, 2, 1, 1.0], [1, 2, 0, 1.0]]}
    with pytest.raises(AlgebraDefinitionError):
        LieAlgebraSpec.from_file(payload)


def test_ideal_in_p_is_rejected():
    """p may not contain a nonzero ideal of g"""
    payload = {"name": "trivial", "dim": 2, "p_start": 1, "brackets": []}
    with pytest.raises(AlgebraDefinitionError) as info:
        LieAlgebraSpec.from_file(payload)
    assert "ideal" in str(info.value)


def test_algebra_file_payload_loads_back():
    """to_file_payload produces an equivalent algebra"""
    lie = so3()
    loaded = LieAlgebraSpec.from_file(lie.to_file_payload())
    assert np.allclose(loaded.structure, lie.structure)
    assert loaded.p_start == lie.p_start


def test_malformed_algebra_file(tmp_path):
    """Unreadable algebra files raise AlgebraDefinitionError"""
    path = tmp_path / "algebra.json"
    path.write_text('{"name": "x", "dim": 2}', encoding="utf-8")
    with pytest.raises(AlgebraDefinitionError):
        LieAlgebraSpec.from_file(path)


def test_ad_matrix_matches_bracket(rng):
    """ad_matrix(X) @ Y == [X, Y]"""
    lie = euc(2)
    X, Y = rng.normal(size=(2, lie.dim_g))
    assert np.allclose(lie.ad_matrix(X) @ Y, lie.bracket(X, Y))


def test_infinitesimal_action_is_derivative_of_group_action(rng):
    """d/dt exp(tX) . J at t = 0 equals the infinitesimal action"""
    lie = euc(2)
    X = np.zeros(lie.dim_g)
    X[lie.p_start] = 1.0
    J = rng.normal(size=lie.hom_shape(1))
    t = 1e-4
    forward = lie.act_on_hom(lie.adjoint_of_group_element(t * X), J, 1)
    backward = lie.act_on_hom(lie.adjoint_of_group_element(-t * X), J, 1)
    derivative = (forward - backward) / (2 * t)
    assert np.allclose(derivative, lie.infinitesimal_on_hom(X, J, 1), atol=1e-6)


def test_rep_on_hom_is_linear_operator(rng):
    """rep_on_hom applies act_on_hom to flattened arrays"""
    lie = so3(2)
    adP = lie.adjoint_of_group_element(np.array([0.0, 0.0, 0.4]))
    J = rng.normal(size=lie.hom_shape(2))
    op = lie.rep_on_hom(2, adP)
    assert np.allclose(op.matvec(J.ravel()), lie.act_on_hom(adP, J, 2).ravel())


def test_adjoint_requires_p_element():
    """Only elements of p act through adjoint_of_group_element"""
    with pytest.raises(ValueError):
        so3().adjoint_of_group_element(np.array([1.0, 0.0, 0.0]))


def test_hat_and_vee(rng):
    """vee inverts hat on the matrix representation"""
    lie = so3()
    X = rng.normal(size=3)
    M = lie.hat(X)
    assert np.allclose(M, -M.T)
    assert np.allclose(lie.vee(M), X)


def test_rep_on_V_composition_law(rng):
    """(Ad p1) . ((Ad p2) . phi) = (Ad p1 Ad p2) . phi on V and on Hom(g, V)"""
    lie = euc(3)
    X1, X2 = np.zeros((2, lie.dim_g))
    X1[lie.p_start:] = [0.3, -0.2, 0.5]
    X2[lie.p_start:] = [-0.4, 0.1, 0.2]
    A1 = lie.adjoint_of_group_element(X1)
    A2 = lie.adjoint_of_group_element(X2)
    phi = rng.normal(size=lie.hom_shape(0))
    composed = lie.rep_on_V(A1).matvec(lie.rep_on_V(A2).matvec(phi.ravel()))
    assert np.allclose(composed, lie.rep_on_V(A1 @ A2).matvec(phi.ravel()), atol=1e-10)
    assert np.allclose(lie.act_on_V(np.eye(lie.dim_g), phi), phi)
    J = rng.normal(size=lie.hom_shape(1))
    twice = lie.rep_on_hom(1, A1).matvec(lie.rep_on_hom(1, A2).matvec(J.ravel()))
    assert np.allclose(twice, lie.rep_on_hom(1, A1 @ A2).matvec(J.ravel()), atol=1e-10)


def test_one_parameter_group_action(rng):
    """exp(sX) . exp(tX) . phi = exp((s + t)X) . phi"""
    lie = euc(3)
    X = np.zeros(lie.dim_g)
    X[lie.p_start:] = [0.2, 0.7, -0.3]
    phi = rng.normal(size=lie.hom_shape(0))
    s, t = 0.4, -1.1
    stepwise = lie.act_on_V(lie.adjoint_of_group_element(s * X), lie.act_on_V(lie.adjoint_of_group_element(t * X), phi))
    assert np.allclose(stepwise, lie.act_on_V(lie.adjoint_of_group_element((s + t) * X), phi), atol=1e-10)


def test_infinitesimal_on_V_is_derivative_of_act_on_V(rng):
    """Central difference of exp(tX) . phi at t = 0"""
    lie = euc(3)
    X = np.zeros(lie.dim_g)
    X[lie.p_start:] = [0.5, -0.3, 0.8]
    phi = rng.normal(size=lie.hom_shape(0))
    t = 1e-5
    forward = lie.act_on_V(lie.adjoint_of_group_element(t * X), phi)
    backward = lie.act_on_V(lie.adjoint_of_group_element(-t * X), phi)
    assert np.allclose((forward - backward) / (2 * t), lie.infinitesimal_on_V(X, phi), atol=1e-7)
