"""Curvature function K and its iterated omega-derivatives.

K_b(X, Y) = [X, Y] - omega_b([X~, Y~]) for omega-constant fields X~, Y~.
J_r = D^r K(b) is stored with the outermost derivative in the first slot:
J_r[i, ...] = (e_i~ . J_{r-1})(b).
"""
import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from cartan_kill.bundle import CartanChart, omega_constant_field, vertical_flow
from cartan_kill.config import settings
from cartan_kill.exceptions import DomainExitError, GeometryError, JetStepError
from cartan_kill.schemas import NumpyModel

logger = logging.getLogger(__name__)

VERTICAL_TOL = 1e-8


class CurvatureJet(NumpyModel):
    point: np.ndarray
    order: int
    values: List[np.ndarray]
    steps: List[float]
    labels: List[str]
    richardson: bool = True

    def __getitem__(self, r: int) -> np.ndarray:
        return self.values[r]


def curvature_full(chart: CartanChart, b) -> np.ndarray:
    """full[i, j, :] = K(e_i, e_j) before quotienting by p"""
    b = np.asarray(b, dtype=float)
    W_inv = np.linalg.inv(chart.omega(b))
    dW = chart.omega_derivative(b)
    # A[i, j, k] = ((d_{e_i~} W) e_j~)_k
    A = np.einsum("kal,li,aj->ijk", dW, W_inv, W_inv)
    return chart.lie.structure + A - np.transpose(A, (1, 0, 2))


def vertical_residual(chart: CartanChart, full: np.ndarray) -> float:
    """Largest curvature value with a p-direction in either slot"""
    s = chart.lie.p_start
    return float(np.max(np.abs(full[:, s:, :]), initial=0.0))


def curvature_at(chart: CartanChart, b) -> np.ndarray:
    """K(b) in V, both slots over the sigma coordinates"""
    full = curvature_full(chart, b)
    residual = vertical_residual(chart, full)
    if residual > VERTICAL_TOL * (1.0 + float(np.max(np.abs(full)))):
        logger.warning(f"{chart.name}: curvature does not vanish on p at {np.asarray(b).tolist()} ({residual:.3e})")
    s = chart.lie.p_start
    return full[:s, :s, :]


def evaluate_curvature(chart: CartanChart, V: np.ndarray, X, Y) -> np.ndarray:
    """K(X, Y) for full g-vectors, through their classes in g/p"""
    s = chart.lie.p_start
    return np.einsum("a,b,abk->k", np.asarray(X)[:s], np.asarray(Y)[:s], V)


def sectional_curvature(chart: CartanChart, b, plane: Sequence[int] = (0, 1)) -> float:
    """Sectional curvature of a frame plane, read from the so(n)-part of K"""
    if chart.base_dim is None:
        raise GeometryError(f"{chart.name} is not a metric frame bundle chart")
    n = chart.base_dim
    i, j = plane
    value = curvature_full(chart, b)[i, j].copy()
    value[:n] = 0.0
    return float(chart.lie.hat(value)[i, j])


def section_independence(chart: CartanChart, b, samples: int = 5, seed: int = 0) -> float:
    """Change of K(X, Y) under shifting X and Y by elements of p"""
    lie = chart.lie
    full = curvature_full(chart, b)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        X, Y = rng.normal(size=(2, lie.dim_g))
        P, Q = rng.normal(size=(2, lie.dim_g))
        P[: lie.p_start] = 0.0
        Q[: lie.p_start] = 0.0
        base = np.einsum("i,j,ijk->k", X, Y, full)
        shifted = np.einsum("i,j,ijk->k", X + P, Y + Q, full)
        worst = max(worst, float(np.max(np.abs(shifted - base))))
    return worst


# -------------------------------------------------------------------- jets

def jet_steps(
    m: int,
    h0: Optional[float] = None,
    growth: Optional[float] = None,
    h_max: Optional[float] = None,
) -> List[float]:
    """h_r = min(h0 * growth^(r-1), h_max) for r = 1..m"""
    h0 = h0 or settings.JET_STEP
    growth = growth or settings.JET_STEP_GROWTH
    h_max = h_max or settings.JET_STEP_MAX
    return [min(h0 * growth ** (r - 1), h_max) for r in range(1, m + 1)]


def central_difference(func: Callable[[float], np.ndarray], h: float) -> np.ndarray:
    """4th order central difference of func at 0"""
    return (-func(2 * h) + 8 * func(h) - 8 * func(-h) + func(-2 * h)) / (12 * h)


def derivative_along(
    chart: CartanChart,
    b,
    X,
    func: Callable[[np.ndarray], np.ndarray],
    h: float,
    richardson: bool = True,
) -> np.ndarray:
    """(X~ . func)(b) by central differences.

    A first derivative at b only sees the field's value v = W(b)^{-1} X there,
    so func is sampled on the chart segment b + t v.
    """
    if h <= 0:
        raise JetStepError(f"Step size must be positive, got {h}")
    b = np.asarray(b, dtype=float)
    v = omega_constant_field(chart, X)(b)

    offsets = [0.5, 1.0, 2.0] if richardson else [1.0, 2.0]
    times = [h * o for o in offsets] + [-h * o for o in offsets]
    values = {}
    for t in times:
        point = b + t * v
        if not chart.contains(point):
            raise DomainExitError(f"Difference stencil leaves the chart at {point.tolist()}", exit_time=t)
        values[t] = func(point)

    D = central_difference(values.__getitem__, h)
    if richardson:
        D = (16 * central_difference(values.__getitem__, h / 2) - D) / 15
    return D


def _jet_component(chart: CartanChart, b: np.ndarray, r: int, steps: List[float], outer: bool):
    if r == 0:
        return curvature_at(chart, b)
    basis = np.eye(chart.N)

    def lower(point: np.ndarray) -> np.ndarray:
        return _jet_component(chart, point, r - 1, steps, False)

    return np.stack(
        [derivative_along(chart, b, X, lower, steps[r - 1], richardson=outer) for X in basis]
    )


def omega_jet(
    chart: CartanChart,
    b,
    m: int,
    steps: Optional[Sequence[float]] = None,
    base: Optional[CurvatureJet] = None,
    richardson: bool = True,
) -> CurvatureJet:
    """(K(b), D^1 K(b), ..., D^m K(b)) by nested differences along omega-constant fields.

    Orders already present in ``base`` (a jet at the same point with the same
    steps and extrapolation) are reused. ``richardson`` extrapolates the
    outermost difference of every order; inner levels never do.
    """
    if m < 0 or m > max(settings.M_MAX, 4) + 1:
        raise ValueError(f"Jet order must lie in 0..{max(settings.M_MAX, 4) + 1}, got {m}")
    b = np.asarray(b, dtype=float)
    steps = list(steps) if steps is not None else jet_steps(m)
    if len(steps) < m:
        raise JetStepError(f"Need {m} step sizes, got {len(steps)}")
    chart.ensure_regular(b)

    values = []
    if (
        base is not None
        and np.array_equal(base.point, b)
        and base.steps == steps[: base.order]
        and base.richardson == richardson
    ):
        values = list(base.values[: m + 1])
    values += [_jet_component(chart, b, r, steps, richardson) for r in range(len(values), m + 1)]
    logger.debug(f"{chart.name}: jet of order {m} at {b.tolist()} with steps {steps[:m]}")
    return CurvatureJet(
        point=b, order=m, values=values, steps=steps[:m], labels=list(chart.lie.labels), richardson=richardson
    )


def contract(jet: CurvatureJet, r: int, A) -> np.ndarray:
    """(J_r _| A)(X_1, ..., X_{r-1}) = J_r(A, X_1, ..., X_{r-1})"""
    if not 1 <= r <= jet.order:
        raise ValueError(f"Contraction order must lie in 1..{jet.order}, got {r}")
    return np.tensordot(np.asarray(A, dtype=float), jet.values[r], axes=(0, 0))


def jet_norm(jet: CurvatureJet, orders: Optional[Sequence[int]] = None) -> float:
    orders = range(jet.order + 1) if orders is None else orders
    return max((float(np.max(np.abs(jet.values[r]))) for r in orders), default=0.0)


def _relative(actual: np.ndarray, expected: np.ndarray) -> float:
    return float(np.max(np.abs(actual - expected), initial=0.0)) / max(float(np.max(np.abs(expected), initial=0.0)), 1.0)


def vertical_identity_residual(chart: CartanChart, jet: CurvatureJet, r: int) -> float:
    """max over p-basis X of |J_r _| X + X.J_{r-1}|, relative"""
    lie = chart.lie
    worst = 0.0
    for X in np.eye(lie.dim_g)[lie.p_start:]:
        expected = -lie.infinitesimal_on_hom(X, jet.values[r - 1], r - 1)
        worst = max(worst, _relative(contract(jet, r, X), expected))
    return worst


def equivariance_check(chart: CartanChart, b, X, t: float, m: int, tol: Optional[float] = None) -> List[float]:
    """Residual per order of D^r K(b p^{-1}) = p . D^r K(b) with p = exp(tX)"""
    lie = chart.lie
    X = np.asarray(X, dtype=float)
    if not lie.in_p(X):
        raise ValueError("equivariance_check expects an element of p")
    jet = omega_jet(chart, b, m)
    if t == 0.0:
        return [0.0] * (m + 1)
    moved = omega_jet(chart, vertical_flow(chart, b, X, t, tol=tol), m)
    adP = lie.adjoint_of_group_element(t * X)
    residuals = [_relative(moved.values[r], lie.act_on_hom(adP, jet.values[r], r)) for r in range(m + 1)]
    logger.info(f"{chart.name}: equivariance residuals {residuals}")
    return residuals


def dump_jet(jet: CurvatureJet) -> dict:
    """Nested lists with basis labels"""
    return {
        "point": jet.point.tolist(),
        "order": jet.order,
        "labels": jet.labels,
        "steps": jet.steps,
        "values": {f"J{r}": jet.values[r].tolist() for r in range(jet.order + 1)},
    }
