import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from cartan_kill import __version__
from cartan_kill.bch import BracketPolynomial, bch_terms, series_composition, verify_prop_bch
from cartan_kill.bundle import CartanChart, check_axioms, flow
from cartan_kill.config import settings
from cartan_kill.curvature import (
    curvature_full,
    equivariance_check,
    omega_jet,
    section_independence,
    sectional_curvature,
    vertical_identity_residual,
    vertical_residual,
)
from cartan_kill.exceptions import GeometryError, NotRelatedError
from cartan_kill.frobenius import (
    delta_k,
    descend_to_base,
    dimension_match,
    integrate_killing_field,
    local_automorphism,
    verify_killing,
)
from cartan_kill.frontends import chart_for, gauss_curvature, lift_point, load_metric_file
from cartan_kill.liealg import so3
from cartan_kill.killing import (
    base_killing_dimension,
    fiber_consistency,
    killing_generators,
    scan_strata,
    stabilization_order,
    strata_table,
    transport_generator,
    write_strata_csv,
    write_strata_json,
)
from cartan_kill.schemas import (
    BchReport,
    CheckResult,
    KillingReport,
    RunConfig,
    StrataReport,
    SuiteReport,
)
from cartan_kill.utils import report_writer

logger = logging.getLogger(__name__)


@dataclass
class SuiteContext:
    chart: CartanChart
    point: np.ndarray
    rng: np.random.Generator
    tol: float


@dataclass
class Check:
    name: str
    description: str
    run: Callable[[SuiteContext], CheckResult]
    metric_only: bool = False


def _result(name: str, value: float, tolerance: float, **details) -> CheckResult:
    return CheckResult(name=name, value=value, tolerance=tolerance, passed=bool(value <= tolerance), details=details)


def _skipped(name: str, reason: str) -> CheckResult:
    return CheckResult(name=name, passed=True, details={"skipped": reason})


def _random_pair(ctx: SuiteContext, scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    X, Y = ctx.rng.normal(size=(2, ctx.chart.N))
    return scale * X / np.linalg.norm(X), scale * Y / np.linalg.norm(Y)


# ------------------------------------------------------------------ checks

def check_jacobi(ctx: SuiteContext) -> CheckResult:
    return _result("liealg.jacobi", ctx.chart.lie.jacobi_residual(), 1e-12)


def check_axioms_at_point(ctx: SuiteContext) -> CheckResult:
    residuals = check_axioms(ctx.chart, ctx.point)
    value = max(residuals["vertical_residual"], residuals["equivariance_residual"])
    return _result("bundle.axioms", value, 1e-6, **residuals)


def check_torsion_free(ctx: SuiteContext) -> CheckResult:
    full = curvature_full(ctx.chart, ctx.point)
    s = ctx.chart.lie.p_start
    torsion = float(np.max(np.abs(full[:s, :s, :s]), initial=0.0))
    return _result("curvature.torsion_free", torsion, 1e-8, vertical=vertical_residual(ctx.chart, full))


def check_section_independence(ctx: SuiteContext) -> CheckResult:
    value = section_independence(ctx.chart, ctx.point, seed=int(ctx.rng.integers(1 << 31)))
    return _result("curvature.section_independence", value, 1e-8)


def check_gauss(ctx: SuiteContext) -> CheckResult:
    chart = ctx.chart
    if chart.base_dim != 2:
        return _skipped("curvature.gauss", "base is not a surface")
    x = chart.base_point(ctx.point)
    computed = sectional_curvature(chart, ctx.point)
    expected = gauss_curvature(chart.metric, x)
    error = abs(computed - expected) / max(abs(expected), 1.0)
    return _result("curvature.gauss", error, 1e-5, computed=computed, expected=expected)


def check_vertical_identity(ctx: SuiteContext) -> CheckResult:
    if ctx.chart.lie.p_dim == 0:
        return _skipped("curvature.vertical_identity", "p is trivial")
    jet = omega_jet(ctx.chart, ctx.point, 2)
    residuals = [vertical_identity_residual(ctx.chart, jet, r) for r in (1, 2)]
    return _result("curvature.vertical_identity", max(residuals), 1e-4, per_order=residuals)


def check_equivariance(ctx: SuiteContext) -> CheckResult:
    lie = ctx.chart.lie
    if lie.p_dim == 0:
        return _skipped("curvature.equivariance", "p is trivial")
    X = np.eye(lie.dim_g)[lie.p_start]
    residuals = equivariance_check(ctx.chart, ctx.point, X, 0.3, 2)
    return _result("curvature.equivariance", max(residuals), 1e-4, per_order=residuals)


def check_stabilization(ctx: SuiteContext) -> CheckResult:
    m, solution = stabilization_order(ctx.chart, ctx.point)
    return CheckResult(
        name="killing.stabilization",
        value=solution.rank_gap,
        tolerance=settings.GAP_RATIO,
        passed=not solution.ill_separated,
        details={"k": solution.dim, "stabilization_order": m},
    )


def check_fiber_consistency(ctx: SuiteContext) -> CheckResult:
    lie = ctx.chart.lie
    if lie.p_dim == 0:
        return _skipped("killing.fiber_consistency", "p is trivial")
    X = np.eye(lie.dim_g)[lie.p_start]
    angle = fiber_consistency(ctx.chart, ctx.point, X, 0.3, 2)
    return _result("killing.fiber_consistency", angle, settings.TOL_ANGLE)


def check_base_dimension(ctx: SuiteContext) -> CheckResult:
    chart = ctx.chart
    _, solution = stabilization_order(chart, ctx.point)
    nullity, _ = base_killing_dimension(chart.metric, chart.base_point(ctx.point))
    return CheckResult(
        name="killing.base_dimension",
        value=float(nullity),
        passed=nullity == solution.dim,
        details={"k": solution.dim, "polynomial_killing_fields": nullity},
    )


def check_transport(ctx: SuiteContext) -> CheckResult:
    chart = ctx.chart
    m, solution = stabilization_order(chart, ctx.point)
    if solution.dim == 0:
        return _skipped("killing.transport", "no Killing generators")
    X = np.eye(chart.N)[0]
    trajectory = transport_generator(chart, ctx.point, solution.basis[0], X, 0.3, checkpoints=5, m=m)
    return _result("killing.transport", float(trajectory.residuals.max()), trajectory.tolerance)


def check_killing_fields(ctx: SuiteContext) -> CheckResult:
    chart = ctx.chart
    _, solution = stabilization_order(chart, ctx.point)
    if solution.dim == 0:
        return _skipped("frobenius.killing_fields", "no Killing generators")
    worst = 0.0
    for A in solution.basis:
        field = integrate_killing_field(chart, ctx.point, A, samples=3, check_generator=False)
        check = verify_killing(chart, field, tol=ctx.tol, sample_limit=1)
        worst = max(worst, check.bracket_residual, check.pullback_residual)
        if chart.metric is not None:
            worst = max(worst, descend_to_base(chart, field, sample_limit=2).max_residual)
    return _result("frobenius.killing_fields", worst, ctx.tol, generators=solution.dim)


def check_dimension_match(ctx: SuiteContext) -> CheckResult:
    independent, k = dimension_match(ctx.chart, ctx.point, samples=4)
    return CheckResult(
        name="frobenius.dimension_match",
        value=float(independent),
        passed=independent == k,
        details={"integrated": independent, "k": k},
    )


def check_automorphism(ctx: SuiteContext) -> CheckResult:
    chart = ctx.chart
    direction = np.zeros(chart.N)
    direction[0] = 0.1
    b2 = flow(chart, ctx.point, direction, 1.0, pushforward=False).endpoint
    try:
        automorphism = local_automorphism(chart, ctx.point, b2, radius=0.1, samples=10)
    except NotRelatedError as e:
        return _skipped("frobenius.automorphism", str(e))
    return _result("frobenius.automorphism", automorphism.max_residual, 1e-5)


def check_delta_sign(ctx: SuiteContext) -> CheckResult:
    X, Y = _random_pair(ctx, 0.5)
    report = delta_k(ctx.chart, ctx.point, X, Y, k_max=2)
    return CheckResult(
        name="frobenius.delta_sign",
        value=report.first_order_residual,
        tolerance=1e-4,
        passed=report.first_order_residual <= 1e-4 and report.sign != "inconsistent",
        details={"sign": report.sign},
    )


def check_bch_symbolic(ctx: SuiteContext) -> CheckResult:
    half = sympy.Rational(1, 2)
    expected = [
        BracketPolynomial({(0,): 1, (1,): 1}),
        BracketPolynomial({(0, 1): 1}),
        BracketPolynomial({(0, 0, 1): half, (0, 1, 1): half}),
    ]
    terms = bch_terms(3)
    return CheckResult(
        name="bch.symbolic",
        passed=terms == expected,
        details={"terms": [str(a) for a in terms]},
    )


def check_bch_zeta(ctx: SuiteContext) -> CheckResult:
    chart = ctx.chart
    X, Y = _random_pair(ctx)
    report = verify_prop_bch(chart, ctx.point, X, Y, 2 if chart.metric is not None else 4, tol=1e-5)
    errors = [t.error for t in report.terms if t.error is not None]
    return CheckResult(
        name="bch.zeta",
        value=max(errors) if errors else None,
        tolerance=1e-5,
        passed=bool(report.passed),
        details={"orders": len(report.terms)},
    )


def check_bch_series(ctx: SuiteContext) -> CheckResult:
    lie = so3()
    X, Y = np.array([0.3, -0.2, 0.5]), np.array([-0.4, 0.1, 0.2])
    _, slope = series_composition(lie, X, Y, 3, [0.05, 0.1, 0.2])
    return CheckResult(name="bch.series", value=slope, passed=bool(slope >= 3.5), details={"k_max": 3})


CHECKS: List[Check] = [
    Check("liealg.jacobi", "Jacobi identity of the structure constants", check_jacobi),
    Check("bundle.axioms", "vertical reproduction and infinitesimal equivariance of omega", check_axioms_at_point),
    Check("curvature.torsion_free", "curvature has no g/p component", check_torsion_free, metric_only=True),
    Check("curvature.section_independence", "K is independent of the p-parts of its arguments", check_section_independence),
    Check("curvature.gauss", "sectional curvature against the Gauss curvature of the metric", check_gauss, metric_only=True),
    Check("curvature.vertical_identity", "D^r K contracted with p equals minus the p-action on D^(r-1) K", check_vertical_identity),
    Check("curvature.equivariance", "jets transform by Ad p along vertical flows", check_equivariance),
    Check("killing.stabilization", "Kill^m stabilizes with a clear rank gap", check_stabilization),
    Check("killing.fiber_consistency", "Kill^m(b p^-1) = Ad p Kill^m(b)", check_fiber_consistency),
    Check("killing.base_dimension", "k agrees with polynomial Killing fields of the metric", check_base_dimension, metric_only=True),
    Check("killing.transport", "transported generators stay Killing generators", check_transport),
    Check("frobenius.killing_fields", "integrated generators preserve omega", check_killing_fields),
    Check("frobenius.dimension_match", "integrated fields are independent", check_dimension_match),
    Check("frobenius.automorphism", "local automorphism pulls omega back to omega", check_automorphism),
    Check("frobenius.delta_sign", "Delta_k recursion sign", check_delta_sign),
    Check("bch.symbolic", "closed forms of a_1, a_2, a_3", check_bch_symbolic),
    Check("bch.zeta", "Taylor coefficients of zeta against bracket polynomials", check_bch_zeta),
    Check("bch.series", "truncated series reproduces group multiplication", check_bch_series),
]


class AnalysisService:
    def __init__(self):
        self.checks: Dict[str, Check] = {check.name: check for check in CHECKS}

    def apply_overrides(self, config: RunConfig) -> None:
        """Command-line tolerances take precedence over the environment"""
        settings.TOL_ODE = config.tol_ode
        settings.TOL_RANK = config.tol_rank
        settings.SEED = config.seed
        settings.WORKERS = config.workers

    def settings_echo(self) -> dict:
        return settings.snapshot()

    def envelope(self, config: RunConfig, result: dict, passed: Optional[bool]) -> dict:
        """Common frame of every report"""
        return {
            "tool": "cartan-kill",
            "version": __version__,
            "command": config.command,
            "config": config.model_dump(mode="json"),
            "settings": self.settings_echo(),
            "seed": config.seed,
            "result": result,
            "pass": passed,
        }

    def load_chart(self, config: RunConfig) -> CartanChart:
        if config.metric_file:
            return chart_for(load_metric_file(config.metric_file))
        if config.geometry:
            return chart_for(config.geometry)
        raise GeometryError("Either --geometry or --metric-file is required")

    def source_of(self, config: RunConfig) -> Optional[str]:
        return config.metric_file or config.geometry

    def chart_point(self, chart: CartanChart, coords: Optional[Sequence[float]]) -> np.ndarray:
        """Point of the chart over the given base coordinates (identity frame)"""
        if coords is None or len(coords) == 0:
            if chart.base_dim is None:
                return np.zeros(chart.N)
            coords = np.mean(chart.domain[: chart.base_dim], axis=1)
        b = lift_point(chart, coords)
        if b.shape != (chart.N,):
            raise GeometryError(f"Point must have {chart.N} coordinates, got {b.size}")
        chart.ensure_regular(b)
        return b

    # ------------------------------------------------------------- killing

    def killing_report(
        self,
        chart: CartanChart,
        config: RunConfig,
        coords: Optional[Sequence[float]],
        verify: bool = True,
    ) -> KillingReport:
        """k_1..k_m, m(b), generators and their verification at one point"""
        b = self.chart_point(chart, coords)
        m_max = max(config.m, settings.M_MAX)
        jet = omega_jet(chart, b, config.m)
        k_m = [killing_generators(chart, b, r, jet=jet).dim for r in range(1, config.m + 1)]
        m, solution = stabilization_order(chart, b, m_max=m_max, jet=jet)

        checks = []
        if verify:
            for A in solution.basis:
                field = integrate_killing_field(
                    chart, b, A, radius=config.radius, samples=config.samples, seed=config.seed, check_generator=False
                )
                check = verify_killing(chart, field, tol=config.tol_verify)
                if chart.metric is not None:
                    base = descend_to_base(chart, field)
                    check = check.model_copy(
                        update={
                            "base_killing_residual": base.max_residual,
                            "passed": check.passed and base.max_residual <= config.tol_verify,
                        }
                    )
                checks.append(check)

        passed = all(c.passed for c in checks) and not solution.ill_separated
        logger.info(f"{chart.name}: k = {solution.dim} at {b.tolist()} (m(b) = {m})")
        return KillingReport(
            point=b.tolist(),
            k_m=k_m,
            k=solution.dim,
            stabilization_order=m,
            generators=solution.basis.tolist(),
            singular_values=solution.singular_values.tolist(),
            rank_gap=solution.rank_gap,
            ill_separated=solution.ill_separated,
            checks=checks,
            passed=passed,
        )

    # -------------------------------------------------------------- strata

    def strata_report(self, config: RunConfig) -> StrataReport:
        if not config.grid:
            raise GeometryError("Grid must have at least one axis")
        source = self.source_of(config)
        if source is None:
            raise GeometryError("Either --geometry or --metric-file is required")
        return scan_strata(
            source,
            config.grid,
            m=config.m,
            tol_rank=config.tol_rank,
            workers=config.workers,
            seed=config.seed,
        )

    def write_strata(self, report: StrataReport, config: RunConfig, out: str) -> List[Path]:
        """Write the report as JSON and the per-sample table as CSV next to it"""
        out = Path(out)
        metadata = {"tool": "cartan-kill", "version": __version__, "config": config.model_dump(mode="json")}
        return [
            write_strata_json(report, out.with_suffix(".json"), metadata),
            write_strata_csv(report, out.with_suffix(".csv")),
        ]

    def strata_csv(self, report: StrataReport) -> str:
        return report_writer.dumps_csv(*strata_table(report))

    # ----------------------------------------------------------------- bch

    def bch_expansions(self, order: int) -> List[dict]:
        return [{"order": k, "expansion": str(a)} for k, a in enumerate(bch_terms(order), start=1)]

    def bch_report(self, chart: CartanChart, config: RunConfig, coords: Optional[Sequence[float]]) -> BchReport:
        b = self.chart_point(chart, coords)
        rng = np.random.default_rng(config.seed)
        X, Y = rng.normal(size=(2, chart.N))
        X /= np.linalg.norm(X)
        Y /= np.linalg.norm(Y)
        return verify_prop_bch(chart, b, X, Y, config.k_max, tol=config.tol_verify)

    # -------------------------------------------------------------- verify

    def list_checks(self) -> List[dict]:
        return [
            {"name": c.name, "description": c.description, "metric_only": c.metric_only} for c in self.checks.values()
        ]

    def run_suite(
        self,
        chart: CartanChart,
        config: RunConfig,
        coords: Optional[Sequence[float]] = None,
        names: Optional[Sequence[str]] = None,
    ) -> SuiteReport:
        """Run the invariant battery at one point; numerical failures become failed checks"""
        b = self.chart_point(chart, coords)
        selected = list(self.checks) if not names else list(names)
        unknown = [name for name in selected if name not in self.checks]
        if unknown:
            raise GeometryError(f"Unknown checks: {', '.join(unknown)}", {"known": list(self.checks)})

        results = []
        for name in selected:
            check = self.checks[name]
            if check.metric_only and chart.metric is None:
                results.append(_skipped(name, "needs a metric frontend"))
                continue
            ctx = SuiteContext(chart=chart, point=b, rng=np.random.default_rng(config.seed), tol=config.tol_verify)
            try:
                result = check.run(ctx)
            except GeometryError:
                raise
            except Exception as e:
                logger.error(f"Check {name} failed: {e}")
                result = CheckResult(name=name, passed=False, details={"error": str(e)})
            logger.info(f"{name}: {'pass' if result.passed else 'FAIL'}")
            results.append(result)
        return SuiteReport(geometry=chart.name, checks=results, passed=all(r.passed for r in results))


# Create global service instance
analysis_service = AnalysisService()
