"""Local Killing fields and local automorphisms built by flowing along
omega-constant fields, with the checks that certify them.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from cartan_kill.bundle import CartanChart, flow, log, normal_radius, omega_constant_field, vector_field_bracket, zeta
from cartan_kill.config import settings
from cartan_kill.curvature import curvature_at, derivative_along, evaluate_curvature, jet_norm, omega_jet
from cartan_kill.exceptions import GeometryError, InfeasibleGeneratorError, NotRelatedError
from cartan_kill.integrator import CashKarp54
from cartan_kill.killing import feasibility_residual, stabilization_order
from cartan_kill.schemas import GeneratorCheck, NumpyModel

logger = logging.getLogger(__name__)

PULLBACK_FD_STEP = 1e-3


class LocalKillingField(NumpyModel):
    point: np.ndarray
    generator: np.ndarray
    radius: float
    parameters: np.ndarray
    points: np.ndarray
    vectors: np.ndarray


class LocalAutomorphism(NumpyModel):
    source: np.ndarray
    target: np.ndarray
    radius: float
    parameters: np.ndarray
    sources: np.ndarray
    images: np.ndarray
    residuals: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals, initial=0.0))


class BaseKillingField(NumpyModel):
    base_points: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals, initial=0.0))


class DeltaRow(NumpyModel):
    k: int
    direct: np.ndarray
    plus: Optional[np.ndarray] = None
    minus: Optional[np.ndarray] = None
    plus_error: Optional[float] = None
    minus_error: Optional[float] = None
    verdict: str = ""


class DeltaReport(NumpyModel):
    rows: List[DeltaRow]
    first_order_residual: float
    sign: str


def local_radius(chart: CartanChart, b, factor: Optional[float] = None) -> float:
    factor = settings.LOCAL_RADIUS_FACTOR if factor is None else factor
    return factor * normal_radius(chart, b)


def _ball_samples(N: int, radius: float, count: int, seed: int) -> np.ndarray:
    """count points of the ball of given radius, the center first"""
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(max(count - 1, 0), N))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=(max(count - 1, 0), 1)) ** (1.0 / N)
    return np.vstack([np.zeros((1, N)), directions * radii])[:count]


# --------------------------------------------------------- Killing fields

def killing_field_at(chart: CartanChart, b, A, point, tol: Optional[float] = None) -> np.ndarray:
    """A~ at a chart point near b: push W(b)^{-1} A along the flow from b to the point"""
    b = np.asarray(b, dtype=float)
    X = log(chart, b, point, tol=tol)
    result = flow(chart, b, X, 1.0, tol=tol, pushforward=True)
    return result.pushforward @ np.linalg.solve(chart.omega(b), np.asarray(A, dtype=float))


def integrate_killing_field(
    chart: CartanChart,
    b,
    A,
    radius: Optional[float] = None,
    samples: int = 10,
    seed: Optional[int] = None,
    check_generator: bool = True,
    tol: Optional[float] = None,
) -> LocalKillingField:
    """Sample the local Killing field with A~(b) = W(b)^{-1} A on an exponential ball"""
    b = np.asarray(b, dtype=float)
    A = np.asarray(A, dtype=float)
    seed = settings.SEED if seed is None else seed

    if check_generator and np.any(A != 0.0):
        m, solution = stabilization_order(chart, b)
        residual = feasibility_residual(solution.jet, A, m)
        if residual > settings.TOL_FEAS:
            raise InfeasibleGeneratorError(
                "Vector is not a stabilized Killing generator", {"residual": residual, "order": m}
            )

    radius = local_radius(chart, b) if radius is None else radius
    parameters = _ball_samples(chart.N, radius, samples, seed)
    start = np.linalg.solve(chart.omega(b), A)
    points, vectors = [], []
    for X in parameters:
        result = flow(chart, b, X, 1.0, tol=tol, pushforward=True)
        points.append(result.endpoint)
        vectors.append(result.pushforward @ start)
    logger.info(f"{chart.name}: integrated Killing field of {A.tolist()} at {len(points)} samples")
    return LocalKillingField(
        point=b,
        generator=A,
        radius=radius,
        parameters=parameters,
        points=np.array(points),
        vectors=np.array(vectors),
    )


def _pullback_residual(
    chart: CartanChart,
    field_func: Callable[[np.ndarray], np.ndarray],
    q: np.ndarray,
    s: float,
    tol: float,
) -> float:
    """|W(phi_s(q)) D phi_s(q) - W(q)| for the flow phi of a chart vector field"""
    solver = CashKarp54(tol=tol)
    inside = chart.contains

    def advance(start: np.ndarray) -> np.ndarray:
        end, _ = solver.integrate(field_func, start, s, inside=inside)
        return end

    image = advance(q)
    h = PULLBACK_FD_STEP
    D = np.empty((chart.N, chart.N))
    for l in range(chart.N):
        e = np.zeros(chart.N)
        e[l] = h
        D[:, l] = (advance(q + e) - advance(q - e)) / (2 * h)
    return float(np.max(np.abs(chart.omega(image) @ D - chart.omega(q))))


def verify_killing(
    chart: CartanChart,
    field: LocalKillingField,
    basis_dirs: Optional[np.ndarray] = None,
    t_samples: Sequence[float] = (-0.1, 0.1),
    tol: float = 1e-4,
    sample_limit: int = 3,
    bracket_step: float = 1e-4,
) -> GeneratorCheck:
    """Bracket [A~, Y~] = 0 and flow pullback of omega, at the first sample points"""
    basis_dirs = np.eye(chart.N) if basis_dirs is None else np.atleast_2d(basis_dirs)
    if not np.any(field.generator):
        return GeneratorCheck(generator=field.generator.tolist(), bracket_residual=0.0, pullback_residual=0.0, passed=True)

    def field_func(q: np.ndarray) -> np.ndarray:
        return killing_field_at(chart, field.point, field.generator, q)

    points = field.points[:sample_limit]
    bracket = 0.0
    for q in points:
        for Y in basis_dirs:
            value = vector_field_bracket(field_func, omega_constant_field(chart, Y), h=bracket_step)(q)
            bracket = max(bracket, float(np.max(np.abs(value))))

    pullback = 0.0
    ode_tol = min(settings.TOL_ODE, 1e-10)
    for q in points:
        for s in t_samples:
            pullback = max(pullback, _pullback_residual(chart, field_func, q, s, ode_tol))

    passed = pullback <= tol and bracket <= tol
    if not passed:
        logger.warning(f"{chart.name}: Killing check failed (bracket {bracket:.3e}, pullback {pullback:.3e})")
    return GeneratorCheck(
        generator=field.generator.tolist(),
        bracket_residual=bracket,
        pullback_residual=pullback,
        passed=passed,
    )


def field_uniqueness(chart: CartanChart, b, A, Z, X, tol: Optional[float] = None) -> float:
    """Field at exp(b, X) computed directly and through the intermediate point exp(b, Z)"""
    b = np.asarray(b, dtype=float)
    target = flow(chart, b, X, 1.0, tol=tol, pushforward=False).endpoint
    direct = killing_field_at(chart, b, A, target, tol=tol)

    middle = flow(chart, b, Z, 1.0, tol=tol, pushforward=True)
    value_middle = middle.pushforward @ np.linalg.solve(chart.omega(b), np.asarray(A, dtype=float))
    A_middle = chart.omega(middle.endpoint) @ value_middle
    indirect = killing_field_at(chart, middle.endpoint, A_middle, target, tol=tol)
    return float(np.max(np.abs(direct - indirect)))


def dimension_match(chart: CartanChart, b, samples: int = 4, radius: Optional[float] = None) -> Tuple[int, int]:
    """(number of independent integrated fields, k) at b"""
    m, solution = stabilization_order(chart, b)
    if solution.dim == 0:
        return 0, 0
    stacked = []
    for A in solution.basis:
        field = integrate_killing_field(chart, b, A, radius=radius, samples=samples, check_generator=False)
        stacked.append(field.vectors.ravel())
    independent = int(np.linalg.matrix_rank(np.array(stacked), tol=1e-6))
    return independent, solution.dim


def corruption_sweep(
    chart: CartanChart,
    b,
    A,
    direction,
    epsilons: Sequence[float],
    m: Optional[int] = None,
) -> List[float]:
    """Feasibility residual of A + eps * direction for each eps"""
    if m is None:
        m, solution = stabilization_order(chart, b)
        jet = solution.jet
    else:
        jet = omega_jet(chart, b, m)
    A = np.asarray(A, dtype=float)
    direction = np.asarray(direction, dtype=float)
    return [feasibility_residual(jet, A + eps * direction, m) for eps in epsilons]


# ----------------------------------------------------------- automorphisms

def m_related(chart: CartanChart, b, b2, m: int, tol: float = 1e-5) -> Tuple[bool, float]:
    """Jets of orders 0..m agree at b and b2, relative to their size"""
    first = omega_jet(chart, b, m)
    second = omega_jet(chart, b2, m)
    scale = max(jet_norm(first), jet_norm(second), 1.0)
    residual = max(float(np.max(np.abs(first.values[r] - second.values[r]))) for r in range(m + 1)) / scale
    return residual <= tol, residual


def local_automorphism(
    chart: CartanChart,
    b,
    b2,
    radius: Optional[float] = None,
    samples: int = 100,
    seed: Optional[int] = None,
    tol: float = 1e-5,
    m: Optional[int] = None,
) -> LocalAutomorphism:
    """f(exp(b, Y)) = exp(b2, Y) with pullback residuals |W(f q) Df - W(q)|"""
    b = np.asarray(b, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    seed = settings.SEED if seed is None else seed
    if m is None:
        m, _ = stabilization_order(chart, b)
    related, residual = m_related(chart, b, b2, m, tol)
    if not related:
        raise NotRelatedError(f"Points are not {m}-related", {"residual": residual, "order": m})

    if radius is None:
        radius = min(local_radius(chart, b), local_radius(chart, b2))
    parameters = _ball_samples(chart.N, radius, samples, seed)
    sources, images, residuals = [], [], []
    for Y in parameters:
        here = flow(chart, b, Y, 1.0, pushforward=False, sensitivity=True)
        there = flow(chart, b2, Y, 1.0, pushforward=False, sensitivity=True)
        Df = there.sensitivity @ np.linalg.inv(here.sensitivity)
        sources.append(here.endpoint)
        images.append(there.endpoint)
        residuals.append(float(np.max(np.abs(chart.omega(there.endpoint) @ Df - chart.omega(here.endpoint)))))
    residuals = np.array(residuals)
    logger.info(f"{chart.name}: local automorphism residual {residuals.max():.3e} over {samples} samples")
    return LocalAutomorphism(
        source=b,
        target=b2,
        radius=radius,
        parameters=parameters,
        sources=np.array(sources),
        images=np.array(images),
        residuals=residuals,
    )


def apply_automorphism(chart: CartanChart, automorphism: LocalAutomorphism, point) -> np.ndarray:
    Y = log(chart, automorphism.source, point)
    return flow(chart, automorphism.target, Y, 1.0, pushforward=False).endpoint


def composition_residual(chart: CartanChart, b0, b1, b2, samples: int = 5, radius: float = 0.1, seed: int = 0) -> float:
    """f_{12} o f_{01} against f_{02} on a small ball around b0"""
    f01 = local_automorphism(chart, b0, b1, radius=radius, samples=samples, seed=seed)
    f12 = local_automorphism(chart, b1, b2, radius=radius, samples=1)
    f02 = local_automorphism(chart, b0, b2, radius=radius, samples=1)
    worst = 0.0
    for q in f01.sources:
        composed = apply_automorphism(chart, f12, apply_automorphism(chart, f01, q))
        worst = max(worst, float(np.max(np.abs(composed - apply_automorphism(chart, f02, q)))))
    return worst


def zeta_agreement(chart: CartanChart, b, b2, X, Y, tol: Optional[float] = None) -> float:
    """|zeta_b(X, Y) - zeta_b2(X, Y)|, zero for infinity-related points"""
    return float(np.max(np.abs(zeta(chart, b, X, Y, tol=tol) - zeta(chart, b2, X, Y, tol=tol))))


# ---------------------------------------------------------------- Delta_k

def direct_delta(chart: CartanChart, b, X, Y, k: int, h: float = 1e-3) -> np.ndarray:
    """Delta_k = ad_X^k Y - omega_b(ad_{X~}^k Y~) with nested numerical brackets"""
    lie = chart.lie
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    field_x = omega_constant_field(chart, X)
    nested = omega_constant_field(chart, Y)
    algebraic = Y
    for _ in range(k):
        nested = vector_field_bracket(field_x, nested, h=h)
        algebraic = lie.bracket(X, algebraic)
    return algebraic - chart.omega(b) @ nested(np.asarray(b, dtype=float))


def delta_k(
    chart: CartanChart,
    b,
    X,
    Y,
    k_max: int = 3,
    tol: float = 1e-4,
    bracket_step: float = 1e-3,
    flow_step: float = 1e-2,
) -> DeltaReport:
    """Delta_k directly and through both sign candidates of the recursion
    Delta_{k+1} = K(X, ad_X^k Y - Delta_k) +- X~.Delta_k + [X, Delta_k]
    """
    if not 1 <= k_max <= 3:
        raise ValueError("k_max must lie in 1..3")
    lie = chart.lie
    b = np.asarray(b, dtype=float)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    V = curvature_at(chart, b)

    rows = [DeltaRow(k=1, direct=direct_delta(chart, b, X, Y, 1, bracket_step), verdict="base")]
    first_order = float(np.max(np.abs(rows[0].direct - evaluate_curvature(chart, V, X, Y))))

    ad_power = lie.bracket(X, Y)
    verdicts = []
    for k in range(1, k_max):
        current = rows[-1].direct
        derivative = derivative_along(
            chart, b, X, lambda q: direct_delta(chart, q, X, Y, k, bracket_step), flow_step, richardson=False
        )
        common = evaluate_curvature(chart, V, X, ad_power - current) + lie.bracket(X, current)
        plus = common + derivative
        minus = common - derivative
        direct = direct_delta(chart, b, X, Y, k + 1, bracket_step)
        scale = max(float(np.max(np.abs(direct))), 1.0)
        plus_error = float(np.max(np.abs(plus - direct))) / scale
        minus_error = float(np.max(np.abs(minus - direct))) / scale
        if plus_error <= tol and minus_error <= tol:
            verdict = "degenerate"
        elif plus_error <= tol:
            verdict = "plus"
        elif minus_error <= tol:
            verdict = "minus"
        else:
            verdict = "neither"
        verdicts.append(verdict)
        rows.append(
            DeltaRow(
                k=k + 1,
                direct=direct,
                plus=plus,
                minus=minus,
                plus_error=plus_error,
                minus_error=minus_error,
                verdict=verdict,
            )
        )
        ad_power = lie.bracket(X, ad_power)

    decided = {v for v in verdicts if v in ("plus", "minus")}
    if "neither" in verdicts or len(decided) > 1:
        sign = "inconsistent"
    elif decided:
        sign = decided.pop()
    else:
        sign = "degenerate"
    logger.info(f"{chart.name}: Delta_k recursion sign {sign} ({verdicts})")
    return DeltaReport(rows=rows, first_order_residual=first_order, sign=sign)


# ---------------------------------------------------------------- descent

def descend_to_base(chart: CartanChart, field: LocalKillingField, h: float = 1e-3, sample_limit: int = 5) -> BaseKillingField:
    """Project A~ to the base and measure |L_A g| by central differences"""
    spec = chart.metric
    n = chart.base_dim
    if spec is None or n is None:
        raise GeometryError(f"{chart.name} carries no base metric")

    def base_field(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        point = np.concatenate([x, theta])
        return killing_field_at(chart, field.point, field.generator, point)[:n]

    points = field.points[:sample_limit]
    vectors = field.vectors[:sample_limit, :n]
    residuals = []
    for q, v in zip(points, vectors):
        x, theta = q[:n], q[n:]
        if not np.any(field.generator):
            residuals.append(0.0)
            continue
        dA = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            dA[:, i] = (
                -base_field(x + 2 * e, theta) + 8 * base_field(x + e, theta)
                - 8 * base_field(x - e, theta) + base_field(x - 2 * e, theta)
            ) / (12 * h)
        g = spec.metric(x)
        dg = spec.metric_derivative(x)
        # (L_A g)_ij = A^k d_k g_ij + g_kj d_i A^k + g_ik d_j A^k
        lie_derivative = np.einsum("k,kij->ij", v, dg) + np.einsum("kj,ki->ij", g, dA) + np.einsum("ik,kj->ij", g, dA)
        residuals.append(float(np.max(np.abs(lie_derivative))))
    return BaseKillingField(base_points=points[:, :n], vectors=vectors, residuals=np.array(residuals))
