"""Frontends turning concrete inputs into Cartan charts.

* Riemannian metrics on a box in R^n become charts of the orthonormal frame
  bundle with the Levi-Civita connection, modeled on Euc(n)/SO(n).
* Matrix Klein geometries become exp-coordinate charts with the
  Maurer-Cartan form.
"""
import json
import logging
import re
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import sympy
from scipy.linalg import expm, expm_frechet, logm

from cartan_kill.bundle import CartanChart
from cartan_kill.exceptions import GeometryError, MetricDefinitionError, SingularFrameError
from cartan_kill.expressions import Expression, parse_expression, parse_matrix, variable_symbol
from cartan_kill.liealg import (
    BUILTIN_ALGEBRAS,
    LieAlgebraSpec,
    abelian,
    euc,
    rotation_generator,
    rotation_pairs,
)
from cartan_kill.schemas import MetricFile

logger = logging.getLogger(__name__)


def _compile(symbols: Sequence[sympy.Symbol], expr) -> Callable[[np.ndarray], np.ndarray]:
    """Lambdify a sympy expression or matrix into a float-array function of x"""
    func = sympy.lambdify(list(symbols), expr, modules="numpy")

    def evaluate(x: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return np.array(func(*x), dtype=float)

    return evaluate


class MetricSpec:
    def __init__(
        self,
        n: int,
        g: sympy.Matrix,
        domain: Sequence[Sequence[float]],
        name: str,
        source: Optional[List[List[Expression]]] = None,
    ):
        self.n = n
        self.g = sympy.Matrix(g)
        self.domain = np.array(domain, dtype=float)
        self.name = name
        self.source = source
        self.symbols = [variable_symbol(i + 1) for i in range(n)]

    def __repr__(self) -> str:
        return f"MetricSpec(name={self.name!r}, n={self.n})"

    def __str__(self) -> str:
        if self.source is not None:
            return "[" + ", ".join("[" + ", ".join(str(e) for e in row) + "]" for row in self.source) + "]"
        return str(self.g.tolist())

    @cached_property
    def _metric(self):
        return _compile(self.symbols, self.g)

    @cached_property
    def _metric_d1(self):
        return _compile(self.symbols, [self.g.diff(x) for x in self.symbols])

    @cached_property
    def _metric_d2(self):
        return _compile(self.symbols, [[self.g.diff(x).diff(y) for y in self.symbols] for x in self.symbols])

    def metric(self, x) -> np.ndarray:
        return self._metric(np.asarray(x, dtype=float))

    def metric_derivative(self, x) -> np.ndarray:
        """dg[l, i, j] = d g_ij / d x_l, exact"""
        return self._metric_d1(np.asarray(x, dtype=float))

    def metric_second_derivative(self, x) -> np.ndarray:
        """d2g[l, m, i, j] = d^2 g_ij / d x_l d x_m, exact"""
        return self._metric_d2(np.asarray(x, dtype=float))

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.domain[:, 0]) and np.all(x <= self.domain[:, 1]))

    def check_points(self, per_axis: int = 5) -> np.ndarray:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.domain]
        return np.array(np.meshgrid(*axes, indexing="ij")).reshape(self.n, -1).T

    def check_positive(self, per_axis: int = 5) -> None:
        """Cholesky must succeed and values must be finite at every check point"""
        failing = []
        for x in self.check_points(per_axis):
            g = self.metric(x)
            if not np.all(np.isfinite(g)):
                failing.append(x.tolist())
                continue
            try:
                np.linalg.cholesky(g)
            except np.linalg.LinAlgError:
                failing.append(x.tolist())
        if failing:
            raise MetricDefinitionError(
                f"{self.name}: metric is not positive definite at {len(failing)} check points",
                {"failing_points": failing},
            )


# ------------------------------------------------------------------- parsing

def parse_metric(
    text: str,
    domain: Optional[Sequence[Sequence[float]]] = None,
    name: str = "metric",
) -> MetricSpec:
    """Parse '[[g11, g12], [g21, g22]]' into a validated MetricSpec"""
    rows = parse_matrix(text)
    n = len(rows)
    if any(len(row) != n for row in rows):
        raise MetricDefinitionError(f"{name}: metric must be square, got rows of lengths {[len(r) for r in rows]}")

    used = set().union(*(e.variables() for row in rows for e in row))
    if used and (min(used) < 1 or max(used) > n):
        raise MetricDefinitionError(
            f"{name}: variables {sorted(used)} do not match dimension {n}", {"variables": sorted(used)}
        )

    for i in range(n):
        for j in range(i + 1, n):
            if rows[i][j] != rows[j][i]:
                if sympy.simplify(rows[i][j].to_sympy() - rows[j][i].to_sympy()) != 0:
                    raise MetricDefinitionError(f"{name}: metric is not symmetric at ({i + 1},{j + 1})")
            rows[j][i] = rows[i][j]

    domain = domain if domain is not None else [[-1.0, 1.0]] * n
    if len(domain) != n:
        raise MetricDefinitionError(f"{name}: domain needs {n} intervals")
    g = sympy.Matrix(n, n, lambda i, j: rows[i][j].to_sympy())
    spec = MetricSpec(n, g, domain, name, source=rows)
    spec.check_positive()
    return spec


def load_metric_file(path: Union[str, Path]) -> MetricSpec:
    """Load the JSON metric file {n, g, domain, name}"""
    try:
        payload = MetricFile(**json.loads(Path(path).read_text(encoding="utf-8")))
    except Exception as e:
        logger.error(f"Failed to read metric file {path}: {e}")
        raise MetricDefinitionError(f"Could not read metric file: {str(e)}")
    text = "[" + ", ".join("[" + ", ".join(row) + "]" for row in payload.g) + "]"
    spec = parse_metric(text, domain=payload.domain, name=payload.name)
    if spec.n != payload.n:
        raise MetricDefinitionError(f"{payload.name}: n = {payload.n} but g is {spec.n}x{spec.n}")
    return spec


# ----------------------------------------------------------- base geometry

def christoffel(spec: MetricSpec, x) -> np.ndarray:
    """Gamma[k, i, j] = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)"""
    g = spec.metric(x)
    dg = spec.metric_derivative(x)
    try:
        g_inv = np.linalg.inv(g)
    except np.linalg.LinAlgError as e:
        raise SingularFrameError(f"{spec.name}: metric is singular at {np.asarray(x).tolist()}: {e}")
    lowered = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    return np.einsum("kl,lij->kij", g_inv, lowered)


def _christoffel_derivative(spec: MetricSpec, x) -> np.ndarray:
    """dGamma[m, k, i, j] = d_m Gamma^k_ij"""
    g = spec.metric(x)
    dg = spec.metric_derivative(x)
    d2g = spec.metric_second_derivative(x)
    g_inv = np.linalg.inv(g)
    lowered = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    d_lowered = 0.5 * (np.einsum("mijl->mlij", d2g) + np.einsum("mjil->mlij", d2g) - d2g)
    d_inv = -np.einsum("ka,mab,bl->mkl", g_inv, dg, g_inv)
    return np.einsum("mkl,lij->mkij", d_inv, lowered) + np.einsum("kl,mlij->mkij", g_inv, d_lowered)


def riemann_tensor(spec: MetricSpec, x) -> np.ndarray:
    """R[l, i, j, k] with R(d_j, d_k) d_i = R^l_ijk d_l"""
    G = christoffel(spec, x)
    dG = _christoffel_derivative(spec, x)
    return (
        np.einsum("jlik->lijk", dG)
        - np.einsum("klij->lijk", dG)
        + np.einsum("ljm,mik->lijk", G, G)
        - np.einsum("lkm,mij->lijk", G, G)
    )


def gauss_curvature(spec: MetricSpec, x, plane: Sequence[int] = (0, 1)) -> float:
    """Sectional curvature of the coordinate plane, the classical oracle"""
    i, j = plane
    g = spec.metric(x)
    R = riemann_tensor(spec, x)
    # <R(d_i, d_j) d_j, d_i>
    numerator = float(np.einsum("l,l->", g[i], R[:, j, i, j]))
    return numerator / float(g[i, i] * g[j, j] - g[i, j] ** 2)


# ------------------------------------------------------ frame-bundle charts

def _so_vee(M: np.ndarray, pairs) -> np.ndarray:
    return np.array([M[j, i] for i, j in pairs])


def _so_hat(theta: np.ndarray, n: int, pairs) -> np.ndarray:
    out = np.zeros((n, n))
    for value, (i, j) in zip(theta, pairs):
        out += value * rotation_generator(n, i, j)
    return out


def _dexp_block(ad: np.ndarray, direction: Optional[np.ndarray] = None) -> np.ndarray:
    """(1 - exp(-ad)) / ad, or its derivative along ``direction``"""
    r = ad.shape[0]
    block = np.zeros((2 * r, 2 * r))
    block[:r, :r] = -ad
    block[:r, r:] = np.eye(r)
    if direction is None:
        return expm(block)[:r, r:]
    tangent = np.zeros((2 * r, 2 * r))
    tangent[:r, :r] = -direction
    return expm_frechet(block, tangent, compute_expm=False)[:r, r:]


class FrameBundleConnection:
    """Levi-Civita connection form on the orthonormal frame bundle of a metric.

    Chart coordinates b = (x, theta); the frame is E(x, theta) = E0(x) exp(hat theta)
    with E0 the Gram-Schmidt orthonormalization of the coordinate frame. The
    x-dependent factors are built symbolically and differentiated exactly.
    """

    def __init__(self, spec: MetricSpec):
        self.spec = spec
        self.n = n = spec.n
        self.lie = euc(n)
        self.pairs = rotation_pairs(n)
        self.rot = len(self.pairs)
        x = spec.symbols

        try:
            L = spec.g.cholesky(hermitian=False)
        except Exception as e:
            logger.error(f"Gram-Schmidt failed for {spec.name}: {e}")
            raise MetricDefinitionError(f"{spec.name}: Gram-Schmidt breakdown ({str(e)})")
        frame_inv = L.T
        frame = frame_inv.inv()
        g_inv = spec.g.inv()

        conn = sympy.zeros(self.rot, n)
        for l in range(n):
            gamma_l = sympy.Matrix(
                n,
                n,
                lambda k, j: sum(
                    g_inv[k, m]
                    * (spec.g[j, m].diff(x[l]) + spec.g[l, m].diff(x[j]) - spec.g[l, j].diff(x[m]))
                    for m in range(n)
                )
                / 2,
            )
            A_l = frame_inv * (frame.diff(x[l]) + gamma_l * frame)
            for a, (i, j) in enumerate(self.pairs):
                conn[a, l] = A_l[j, i]

        self._frame_inv = _compile(x, frame_inv)
        self._frame_inv_d = _compile(x, [frame_inv.diff(xm) for xm in x])
        self._conn = _compile(x, conn)
        self._conn_d = _compile(x, [conn.diff(xm) for xm in x])

        p_ad = [self.lie.ad_matrix(e)[n:, n:] for e in np.eye(self.lie.dim_g)[n:]]
        self._p_ad = np.array(p_ad)

    def _ad_theta(self, theta: np.ndarray) -> np.ndarray:
        return np.tensordot(theta, self._p_ad, axes=(0, 0))

    def frame(self, b: np.ndarray) -> np.ndarray:
        """Orthonormal frame E(x, theta) as columns in coordinate components"""
        n = self.n
        E0 = np.linalg.inv(self._frame_inv(b[:n]))
        return E0 @ expm(_so_hat(b[n:], n, self.pairs))

    def connection_forms(self, x: np.ndarray) -> np.ndarray:
        """so(n)-coordinates of the connection form in the frame E0, columns over dx_l"""
        return self._conn(np.asarray(x, dtype=float))

    def omega(self, b: np.ndarray) -> np.ndarray:
        n = self.n
        x, theta = b[:n], b[n:]
        R = expm(_so_hat(theta, n, self.pairs))
        ad = self._ad_theta(theta)
        W = np.zeros((n + self.rot, n + self.rot))
        W[:n, :n] = R.T @ self._frame_inv(x)
        W[n:, :n] = expm(-ad) @ self._conn(x)
        W[n:, n:] = _dexp_block(ad)
        return W

    def omega_derivative(self, b: np.ndarray) -> np.ndarray:
        n = self.n
        N = n + self.rot
        x, theta = b[:n], b[n:]
        hat = _so_hat(theta, n, self.pairs)
        R = expm(hat)
        ad = self._ad_theta(theta)
        ad_inv_R = expm(-ad)
        frame_inv = self._frame_inv(x)
        frame_inv_d = self._frame_inv_d(x)
        conn = self._conn(x)
        conn_d = self._conn_d(x)

        dW = np.zeros((N, N, N))
        for m in range(n):
            dW[:n, :n, m] = R.T @ frame_inv_d[m]
            dW[n:, :n, m] = ad_inv_R @ conn_d[m]
        for a in range(self.rot):
            direction = np.zeros(self.rot)
            direction[a] = 1.0
            dR = expm_frechet(hat, _so_hat(direction, n, self.pairs), compute_expm=False)
            d_ad = self._p_ad[a]
            dW[:n, :n, n + a] = dR.T @ frame_inv
            dW[n:, :n, n + a] = expm_frechet(-ad, -d_ad, compute_expm=False) @ conn
            dW[n:, n:, n + a] = _dexp_block(ad, d_ad)
        return dW


def riemannian_to_cartan(spec: MetricSpec, theta_bound: Optional[float] = None) -> CartanChart:
    """Orthonormal frame bundle chart of a metric with its Levi-Civita Cartan connection"""
    connection = FrameBundleConnection(spec)
    rot = connection.rot
    bound = theta_bound if theta_bound is not None else (np.pi / 2) / np.sqrt(max(rot, 1))
    domain = np.vstack([spec.domain, np.tile([-bound, bound], (rot, 1))])
    chart = CartanChart(
        connection.lie,
        connection.omega,
        domain,
        name=spec.name,
        omega_derivative=connection.omega_derivative,
        base_dim=spec.n,
        metric=spec,
    )
    chart.frame_bundle = connection
    return chart


def lift_point(chart: CartanChart, x: Sequence[float], theta: Optional[Sequence[float]] = None) -> np.ndarray:
    """Chart point over base point x (frame E0(x) unless theta is given)"""
    x = np.asarray(x, dtype=float)
    if chart.base_dim is None:
        return x
    rot = chart.N - chart.base_dim
    if x.shape != (chart.base_dim,):
        raise GeometryError(f"Point must have {chart.base_dim} coordinates, got {x.size}")
    theta = np.zeros(rot) if theta is None else np.asarray(theta, dtype=float)
    return np.concatenate([x, theta])


# ------------------------------------------------------------- Klein charts

KLEIN_DOMAINS = {"so3": 1.5, "se2": 2.0, "heisenberg": 3.0, "sl2": 0.8, "abelian": 5.0}


def klein_algebra(group: str, p_start: Optional[int] = None, n: int = 2) -> LieAlgebraSpec:
    if group == "abelian":
        return abelian(n)
    if group not in BUILTIN_ALGEBRAS:
        raise GeometryError(f"Unknown Klein group '{group}'", {"known": sorted(BUILTIN_ALGEBRAS) + ["abelian"]})
    factory = BUILTIN_ALGEBRAS[group]
    return factory() if p_start is None else factory(p_start)


def klein_chart(group: str, p_start: Optional[int] = None, n: int = 2) -> CartanChart:
    """Exp-coordinate chart of a matrix group with the left Maurer-Cartan form"""
    lie = klein_algebra(group, p_start, n)
    ad_basis = np.array([lie.ad_matrix(e) for e in np.eye(lie.dim_g)])

    def omega(b: np.ndarray) -> np.ndarray:
        return _dexp_block(np.tensordot(b, ad_basis, axes=(0, 0)))

    def omega_derivative(b: np.ndarray) -> np.ndarray:
        ad = np.tensordot(b, ad_basis, axes=(0, 0))
        return np.stack([_dexp_block(ad, ad_basis[l]) for l in range(lie.dim_g)], axis=-1)

    bound = KLEIN_DOMAINS[group]
    domain = np.tile([-bound, bound], (lie.dim_g, 1))
    return CartanChart(lie, omega, domain, name=f"klein:{group}", omega_derivative=omega_derivative)


def klein_exp(lie: LieAlgebraSpec, b) -> np.ndarray:
    """Group element with exp-coordinates b"""
    return expm(lie.hat(np.asarray(b, dtype=float)))


def klein_log(lie: LieAlgebraSpec, group_element: np.ndarray) -> np.ndarray:
    """Exp-coordinates of a group element near the identity"""
    return lie.vee(np.real(logm(group_element)))


# ---------------------------------------------------------------- built-ins

SPHERE_FACTOR = "4/(1 + x1^2 + x2^2)^2"
HYPERBOLIC_FACTOR = "4/(1 - x1^2 - x2^2)^2"
DEFAULT_PROFILE = "1 + x1^2/4"
BUMP_RADIUS = 0.8


def flat2() -> MetricSpec:
    return parse_metric("[[1, 0], [0, 1]]", domain=[[-2.0, 2.0]] * 2, name="flat2")


def sphere2() -> MetricSpec:
    return parse_metric(f"[[{SPHERE_FACTOR}, 0], [0, {SPHERE_FACTOR}]]", domain=[[-1.5, 1.5]] * 2, name="sphere2")


def hyperbolic2() -> MetricSpec:
    return parse_metric(
        f"[[{HYPERBOLIC_FACTOR}, 0], [0, {HYPERBOLIC_FACTOR}]]", domain=[[-0.6, 0.6]] * 2, name="hyperbolic2"
    )


def revolution(profile: str = DEFAULT_PROFILE) -> MetricSpec:
    """dr^2 + f(r)^2 dtheta^2 with r = x1, theta = x2"""
    f = parse_expression(profile)
    if not f.variables() <= {1}:
        raise MetricDefinitionError(f"Profile '{profile}' may only depend on x1")
    return parse_metric(
        f"[[1, 0], [0, ({f})^2]]", domain=[[-1.8, 1.8], [-1.5, 1.5]], name=f"revolution({f})"
    )


def bump(eps: float = 0.1, radius: float = BUMP_RADIUS) -> MetricSpec:
    """Flat metric with a conformal, compactly supported, non-symmetric perturbation"""
    x1, x2 = variable_symbol(1), variable_symbol(2)
    s = (x1**2 + x2**2) / sympy.Float(radius) ** 2
    profile = sympy.exp(1 - 1 / (1 - s)) * (1 + x1 / 2 + x2**2 / 3 + x1 * x2 / 4)
    factor = 1 + sympy.Float(eps) * sympy.Piecewise((profile, s < 1), (0, True))
    g = sympy.Matrix([[factor, 0], [0, factor]])
    spec = MetricSpec(2, g, [[-1.5, 1.5]] * 2, name=f"bump({eps:g})")
    spec.check_positive()
    return spec


BUILTIN_METRICS: Dict[str, Callable[..., MetricSpec]] = {
    "flat2": flat2,
    "sphere2": sphere2,
    "hyperbolic2": hyperbolic2,
    "revolution": revolution,
    "bump": bump,
}

_CALL = re.compile(r"^\s*([a-z0-9]+)\s*(?:\((.*)\))?\s*$")


def builtin_names() -> List[str]:
    return sorted(BUILTIN_METRICS) + [f"klein:{group}" for group in sorted(KLEIN_DOMAINS)]


def builtin(name: str, **params) -> Union[MetricSpec, CartanChart]:
    """Built-in geometry by name: 'sphere2', 'revolution(1 + x1^2/4)', 'bump(0.1)', 'klein:so3'"""
    if name.startswith("klein:"):
        return klein_chart(name.split(":", 1)[1], **params)
    match = _CALL.match(name)
    if not match or match.group(1) not in BUILTIN_METRICS:
        raise GeometryError(f"Unknown geometry '{name}'", {"known": builtin_names()})
    key, argument = match.group(1), match.group(2)
    if argument:
        if key == "revolution":
            params.setdefault("profile", argument)
        elif key == "bump":
            try:
                params.setdefault("eps", float(argument))
            except ValueError:
                raise GeometryError(f"bump expects a number, got '{argument}'")
        else:
            raise GeometryError(f"Geometry '{key}' takes no parameter")
    return BUILTIN_METRICS[key](**params)


def chart_for(geometry: Union[str, MetricSpec, CartanChart], **params) -> CartanChart:
    """Cartan chart for a built-in name, a metric spec or an existing chart"""
    if isinstance(geometry, CartanChart):
        return geometry
    source = builtin(geometry, **params) if isinstance(geometry, str) else geometry
    if isinstance(source, CartanChart):
        return source
    return riemannian_to_cartan(source)
