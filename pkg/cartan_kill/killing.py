"""Killing generators Kill^m(b), their stabilization and the k-level strata of a chart."""
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from itertools import combinations_with_replacement, product
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.linalg import subspace_angles, svd

from cartan_kill.bundle import CartanChart, flow_through, vertical_flow
from cartan_kill.config import settings
from cartan_kill.curvature import CurvatureJet, contract, jet_norm, omega_jet
from cartan_kill.exceptions import CartanError, InfeasibleGeneratorError, NotStabilizedError
from cartan_kill.frontends import MetricSpec, chart_for, lift_point, load_metric_file
from cartan_kill.schemas import (
    GridAxis,
    NumpyModel,
    StrataReport,
    StrataSample,
    StrataSummary,
    StratumSummary,
)
from cartan_kill.utils import report_writer

logger = logging.getLogger(__name__)


class KillingJetSolution(NumpyModel):
    point: np.ndarray
    order: int
    basis: np.ndarray
    singular_values: np.ndarray
    tol_rank: float
    cutoff: float
    rank_gap: Optional[float] = None
    ill_separated: bool = False
    stabilization_order: Optional[int] = None
    jet: Optional[CurvatureJet] = None

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])


class GeneratorTrajectory(NumpyModel):
    times: np.ndarray
    points: np.ndarray
    generators: np.ndarray
    residuals: np.ndarray
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residuals <= self.tolerance))


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles between the row spans of A and B"""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[0] == 0 or B.shape[0] == 0 or A.size == 0 or B.size == 0:
        return np.array([])
    return subspace_angles(A.T, B.T)


def same_subspace(A: np.ndarray, B: np.ndarray, tol: Optional[float] = None) -> bool:
    tol = settings.TOL_ANGLE if tol is None else tol
    if A.shape[0] != B.shape[0]:
        return False
    angles = principal_angles(A, B)
    return bool(angles.size == 0 or np.max(angles) <= tol)


def constraint_matrix(jet: CurvatureJet, m: int) -> np.ndarray:
    """Stacked linear map A -> (J_r _| A)_{r=1..m}, one column per g-basis vector"""
    N = jet.values[0].shape[-1]
    return np.vstack([jet.values[r].reshape(N, -1).T for r in range(1, m + 1)])


def feasibility_residual(jet: CurvatureJet, A, m: Optional[int] = None) -> float:
    """max_r |J_r _| A| relative to the jet size"""
    m = jet.order if m is None else m
    if m == 0:
        return 0.0
    worst = max(float(np.max(np.abs(contract(jet, r, A)))) for r in range(1, m + 1))
    return worst / max(jet_norm(jet, range(1, m + 1)), 1.0)


def killing_generators(
    chart: CartanChart,
    b,
    m: int,
    tol_rank: Optional[float] = None,
    tol_zero: Optional[float] = None,
    jet: Optional[CurvatureJet] = None,
    min_rank: int = 0,
) -> KillingJetSolution:
    """Kill^m(b) as the numerical kernel of the stacked contractions.

    ``min_rank`` is the rank found at order m - 1; the stacked constraints only
    grow with m, so the rank is never taken below it.
    """
    tol_rank = settings.TOL_RANK if tol_rank is None else tol_rank
    tol_zero = settings.TOL_ZERO if tol_zero is None else tol_zero
    b = np.asarray(b, dtype=float)
    if jet is None or jet.order < m:
        jet = omega_jet(chart, b, m, base=jet, richardson=jet.richardson if jet is not None else True)

    N = chart.N
    M = constraint_matrix(jet, m)
    _, sv, Vt = svd(M, full_matrices=True)
    sv = np.concatenate([sv, np.zeros(N - sv.size)])
    cutoff = max(tol_rank * (float(sv[0]) if sv.size else 0.0), tol_zero)
    rank = int(np.sum(sv > cutoff))
    if rank < min_rank:
        logger.debug(f"{chart.name}: rank {rank} at order {m} raised to {min_rank} from the previous order")
        rank = min(min_rank, N)

    if 0 < rank < N:
        gap = float(sv[rank - 1]) / max(float(sv[rank]), 1e-300)
    elif rank == N:
        gap = float(sv[-1]) / cutoff
    else:
        gap = cutoff / float(sv[0]) if sv[0] > 0 else None
    if gap is not None and not np.isfinite(gap):
        gap = None
    ill = gap is not None and gap < settings.GAP_RATIO
    if ill:
        logger.warning(f"{chart.name}: ill separated spectrum at {b.tolist()} (gap ratio {gap:.3g})")

    return KillingJetSolution(
        point=b,
        order=m,
        basis=Vt[rank:],
        singular_values=sv,
        tol_rank=tol_rank,
        cutoff=cutoff,
        rank_gap=gap,
        ill_separated=ill,
        jet=jet,
    )


def killing_sequence(
    chart: CartanChart,
    b,
    m: int,
    tol_rank: Optional[float] = None,
    tol_zero: Optional[float] = None,
    jet: Optional[CurvatureJet] = None,
) -> List[KillingJetSolution]:
    """Kill^1(b), ..., Kill^m(b) from one jet, with non-increasing dimensions"""
    if jet is None or jet.order < m:
        jet = omega_jet(chart, b, m, base=jet, richardson=jet.richardson if jet is not None else True)
    solutions = []
    for r in range(1, m + 1):
        floor = chart.N - solutions[-1].dim if solutions else 0
        solutions.append(killing_generators(chart, b, r, tol_rank, tol_zero, jet=jet, min_rank=floor))
    return solutions


def stabilization_order(
    chart: CartanChart,
    b,
    m_max: Optional[int] = None,
    tol_rank: Optional[float] = None,
    tol_zero: Optional[float] = None,
    tol_angle: Optional[float] = None,
    jet: Optional[CurvatureJet] = None,
) -> Tuple[int, KillingJetSolution]:
    """Smallest m with Kill^m(b) = Kill^{m+1}(b), and the solution at that order"""
    m_max = settings.M_MAX if m_max is None else m_max
    if m_max < 1:
        raise ValueError("m_max must be at least 1")

    current = killing_generators(chart, b, 1, tol_rank, tol_zero, jet=jet)
    for m in range(1, m_max + 1):
        if current.dim == 0:
            return m, current.model_copy(update={"stabilization_order": m})
        if m == m_max:
            break
        following = killing_generators(
            chart, b, m + 1, tol_rank, tol_zero, jet=current.jet, min_rank=chart.N - current.dim
        )
        if same_subspace(current.basis, following.basis, tol_angle):
            logger.info(f"{chart.name}: Kill^m stabilized at m = {m} with dimension {current.dim}")
            return m, current.model_copy(update={"stabilization_order": m})
        current = following
    logger.error(f"{chart.name}: Kill^m did not stabilize at {np.asarray(b).tolist()} up to m = {m_max}")
    raise NotStabilizedError(m_max)


def transported_basis(chart: CartanChart, solution: KillingJetSolution, X, t: float) -> np.ndarray:
    """Ad(exp tX) applied to each basis vector"""
    adP = chart.lie.adjoint_of_group_element(t * np.asarray(X, dtype=float))
    return solution.basis @ adP.T


def fiber_consistency(chart: CartanChart, b, X, t: float, m: int) -> float:
    """Largest principal angle between Kill^m(b p^{-1}) and Ad(p) Kill^m(b), p = exp(tX)"""
    here = killing_generators(chart, b, m)
    if t == 0.0:
        return 0.0
    there = killing_generators(chart, vertical_flow(chart, b, X, t), m)
    if here.dim != there.dim:
        logger.warning(f"{chart.name}: Kill^{m} dimension changes along the fiber ({here.dim} -> {there.dim})")
        return float(np.pi / 2)
    angles = principal_angles(there.basis, transported_basis(chart, here, X, t))
    return float(np.max(angles)) if angles.size else 0.0


def transport_generator(
    chart: CartanChart,
    b,
    A,
    X,
    T: float,
    checkpoints: int = 11,
    m: Optional[int] = None,
    tol: Optional[float] = None,
) -> GeneratorTrajectory:
    """A(t) = omega(phi^t_* A~) along gamma(t) = exp(b, tX) with membership residuals"""
    b = np.asarray(b, dtype=float)
    A = np.asarray(A, dtype=float)
    X = np.asarray(X, dtype=float)
    tol = settings.TOL_FEAS if tol is None else tol
    if m is None:
        m, _ = stabilization_order(chart, b)

    start = omega_jet(chart, b, m)
    if feasibility_residual(start, A) > tol:
        raise InfeasibleGeneratorError(
            "Vector is not a Killing generator at the base point",
            {"residual": feasibility_residual(start, A), "tolerance": tol},
        )

    field = np.linalg.solve(chart.omega(b), A)
    times = np.linspace(-T, T, checkpoints)
    points, generators, residuals = [], [], []
    for result in flow_through(chart, b, X, times, pushforward=True):
        At = chart.omega(result.endpoint) @ (result.pushforward @ field)
        points.append(result.endpoint)
        generators.append(At)
        residuals.append(feasibility_residual(omega_jet(chart, result.endpoint, m), At))
    residuals = np.array(residuals)
    if np.any(residuals > tol):
        logger.warning(f"{chart.name}: transported generator leaves Kill^{m} (max residual {residuals.max():.3e})")
    return GeneratorTrajectory(
        times=times,
        points=np.array(points),
        generators=np.array(generators),
        residuals=residuals,
        tolerance=tol,
    )


# ------------------------------------------------------------ base oracle

def _monomials(n: int, degree: int) -> List[Tuple[int, ...]]:
    exponents = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            exponents.append(tuple(combo.count(i) for i in range(n)))
    return exponents


def base_killing_dimension(
    spec: MetricSpec,
    x,
    radius: float = 0.1,
    degree: int = 2,
    per_axis: int = 5,
    tol: float = 1e-8,
) -> Tuple[int, np.ndarray]:
    """Dimension of polynomial Killing fields of the base metric near x.

    Collocates L_A g = 0 on a small grid for A with polynomial components of
    the given degree and returns the nullity with the singular values.
    """
    n = spec.n
    x = np.asarray(x, dtype=float)
    exponents = _monomials(n, degree)
    offsets = np.array(list(product(np.linspace(-1.0, 1.0, per_axis), repeat=n)))
    pairs = [(i, j) for i in range(n) for j in range(i, n)]

    rows = []
    for u in offsets:
        y = x + radius * u
        g = spec.metric(y)
        dg = spec.metric_derivative(y)
        values = np.array([np.prod(u ** np.array(a)) for a in exponents])
        grads = np.zeros((n, len(exponents)))
        for col, a in enumerate(exponents):
            for i in range(n):
                if a[i] == 0:
                    continue
                lowered = list(a)
                lowered[i] -= 1
                grads[i, col] = a[i] * np.prod(u ** np.array(lowered)) / radius
        for i, j in pairs:
            row = np.zeros((n, len(exponents)))
            for k in range(n):
                row[k] += dg[k, i, j] * values + g[k, j] * grads[i] + g[i, k] * grads[j]
            rows.append(row.ravel())

    sv = svd(np.array(rows), compute_uv=False)
    nullity = int(np.sum(sv <= tol * sv[0])) + max(0, n * len(exponents) - sv.size)
    return nullity, sv


# ------------------------------------------------------------------ strata

@lru_cache(maxsize=4)
def _chart_from_source(source: str) -> CartanChart:
    if Path(source).suffix == ".json" and Path(source).exists():
        return chart_for(load_metric_file(source))
    return chart_for(source)


def _grid_points(grid: Sequence[GridAxis]) -> List[Tuple[Tuple[int, ...], List[float]]]:
    axes = [axis.values() for axis in grid]
    out = []
    for index in product(*[range(len(a)) for a in axes]):
        out.append((index, [axes[d][i] for d, i in enumerate(index)]))
    return out


def _spans_base(chart: CartanChart, basis: np.ndarray) -> bool:
    s = chart.lie.p_start
    if basis.shape[0] == 0 or s == 0:
        return s == 0
    return bool(np.linalg.matrix_rank(basis[:, :s], tol=1e-6) == s)


def classify_sample(
    chart: CartanChart,
    index: Tuple[int, ...],
    coords: List[float],
    m: int,
    tol_rank: Optional[float] = None,
    tol_zero: Optional[float] = None,
) -> StrataSample:
    """k_1..k_m, k and m(b) at one grid sample; failures are recorded inline"""
    try:
        b = lift_point(chart, coords)
        jet = omega_jet(chart, b, m, richardson=False)
        solutions = killing_sequence(chart, b, m, tol_rank, tol_zero, jet=jet)
    except CartanError as e:
        logger.info(f"{chart.name}: sample {coords} failed: {e}")
        return StrataSample(index=index, coords=coords, error=str(e))

    k_m = [s.dim for s in solutions]
    stab = None
    for r in range(m):
        if k_m[r] == 0:
            stab = r + 1
            break
        if r + 1 < m and same_subspace(solutions[r].basis, solutions[r + 1].basis):
            stab = r + 1
            break
    chosen = solutions[stab - 1] if stab is not None else solutions[-1]
    return StrataSample(
        index=index,
        coords=coords,
        k_m=k_m,
        k=chosen.dim,
        stabilization_order=stab,
        spans_base=_spans_base(chart, chosen.basis),
    )


def _classify_from_source(source: str, index, coords, m, tol_rank, tol_zero, snapshot: dict) -> StrataSample:
    settings.update(snapshot)
    return classify_sample(_chart_from_source(source), index, coords, m, tol_rank, tol_zero)


def _mark_regular(
    samples: List[StrataSample], shape: Tuple[int, ...], radius: int
) -> Tuple[np.ndarray, np.ndarray]:
    """k constant over the stencil neighborhood of every sample"""
    k = np.full(shape, -1, dtype=int)
    for s in samples:
        if s.error is None and s.k is not None:
            k[s.index] = s.k
    regular = np.zeros(shape, dtype=bool)
    for idx in np.ndindex(*shape):
        if k[idx] < 0:
            continue
        window = tuple(slice(max(i - radius, 0), i + radius + 1) for i in idx)
        regular[idx] = bool(np.all(k[window] == k[idx]))
    return regular, k


def semicontinuity_violations(k: np.ndarray) -> List[List[int]]:
    """Samples whose classified neighbors all have strictly smaller k.

    k is lower semicontinuous, so such an isolated maximum points at a
    numerical failure. Unclassified samples carry k = -1 and are skipped.
    """
    out = []
    for idx in np.ndindex(*k.shape):
        if k[idx] < 0:
            continue
        window = tuple(slice(max(i - 1, 0), i + 2) for i in idx)
        around = k[window].copy()
        around[tuple(i - w.start for i, w in zip(idx, window))] = -1
        classified = around[around >= 0]
        if classified.size and np.all(classified < k[idx]):
            out.append([int(i) for i in idx])
    return out


def scan_strata(
    geometry: Union[str, MetricSpec, CartanChart],
    grid: Sequence[GridAxis],
    m: int = 2,
    tol_rank: Optional[float] = None,
    tol_zero: Optional[float] = None,
    workers: Optional[int] = None,
    seed: Optional[int] = None,
    stencil_radius: Optional[int] = None,
) -> StrataReport:
    """k-level sets of a chart over a grid of base points"""
    if not grid:
        raise ValueError("Grid must have at least one axis")
    tol_rank = settings.TOL_RANK if tol_rank is None else tol_rank
    tol_zero = settings.TOL_ZERO if tol_zero is None else tol_zero
    workers = workers or settings.WORKERS
    seed = settings.SEED if seed is None else seed
    radius = settings.STENCIL_RADIUS if stencil_radius is None else stencil_radius

    points = _grid_points(grid)
    shape = tuple(axis.steps for axis in grid)
    logger.info(f"Scanning {len(points)} samples with {workers} workers")

    if isinstance(geometry, str) and workers > 1:
        chart = _chart_from_source(geometry)
        snapshot = settings.snapshot()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_classify_from_source, geometry, index, coords, m, tol_rank, tol_zero, snapshot)
                for index, coords in points
            ]
            samples = [f.result() for f in futures]
    else:
        chart = _chart_from_source(geometry) if isinstance(geometry, str) else chart_for(geometry)
        samples = [classify_sample(chart, index, coords, m, tol_rank, tol_zero) for index, coords in points]
    samples.sort(key=lambda s: s.index)

    regular, k = _mark_regular(samples, shape, radius)
    violations = semicontinuity_violations(k)
    if violations:
        logger.warning(f"{len(violations)} samples have k above all their neighbors: {violations[:5]}")
    labels = np.zeros(shape, dtype=int)
    structure = np.ones((3,) * len(shape), dtype=int)
    strata = []
    offset = 0
    for value in sorted(set(int(v) for v in k[regular])):
        labeled, count = ndimage.label(regular & (k == value), structure=structure)
        labels[labeled > 0] = labeled[labeled > 0] + offset
        sizes = [int(np.sum(labeled == c)) for c in range(1, count + 1)]
        strata.append(StratumSummary(k=value, samples=int(np.sum(sizes)), components=sizes))
        offset += count

    samples = [
        s.model_copy(update={"regular": bool(regular[s.index]), "component": int(labels[s.index]) or None})
        for s in samples
    ]
    regular_samples = [s for s in samples if s.regular]
    orders = [s.stabilization_order for s in samples if s.stabilization_order is not None]
    homogeneous = (
        len(strata) == 1
        and len(regular_samples) == len(samples)
        and all(s.spans_base for s in regular_samples)
    )
    summary = StrataSummary(
        strata=strata,
        regular_fraction=len(regular_samples) / len(samples),
        max_stabilization_order=max(orders) if orders else None,
        locally_homogeneous=homogeneous,
        insufficient_neighborhood=len(samples) == 1,
        semicontinuity_violations=violations,
    )
    name = geometry if isinstance(geometry, str) else chart.name
    return StrataReport(
        geometry=name,
        grid=list(grid),
        m=m,
        tol_rank=tol_rank,
        tol_zero=tol_zero,
        seed=seed,
        samples=samples,
        summary=summary,
    )


def strata_table(report: StrataReport) -> Tuple[List[str], List[list]]:
    """One row per sample: coordinates, k_1..k_m, k, m(b), regular, component"""
    header = [f"x{d + 1}" for d in range(len(report.grid))] + [f"k_{r}" for r in range(1, report.m + 1)]
    header += ["k", "m_b", "regular", "component", "error"]
    rows = []
    for s in report.samples:
        rows.append(
            list(s.coords)
            + s.k_m
            + [""] * (report.m - len(s.k_m))
            + [
                "" if s.k is None else s.k,
                "" if s.stabilization_order is None else s.stabilization_order,
                int(s.regular),
                "" if s.component is None else s.component,
                s.error or "",
            ]
        )
    return header, rows


def write_strata_csv(report: StrataReport, path: Union[str, Path]) -> Path:
    return report_writer.write_csv(path, *strata_table(report))


def write_strata_json(report: StrataReport, path: Union[str, Path], metadata: Optional[dict] = None) -> Path:
    return report_writer.write_json(path, {"metadata": metadata or {}, "report": report.model_dump(mode="json")})
