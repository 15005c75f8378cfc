"""Charts of a Cartan bundle B with the connection form as data.

A chart is a box in R^N (N = dim g) with a matrix-valued function W, where
omega_b(v) = W(b) v in g-coordinates. The omega-constant field of X in g is
W(b)^{-1} X; its flow is the bundle exponential exp(b, tX).
"""
import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from cartan_kill.config import settings
from cartan_kill.exceptions import (
    DomainExitError,
    IntegrationError,
    LogConvergenceError,
    NumericalError,
    SingularFrameError,
)
from cartan_kill.integrator import CashKarp54
from cartan_kill.liealg import LieAlgebraSpec
from cartan_kill.schemas import FlowDiagnostics, NumpyModel

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e8


class CartanChart:
    def __init__(
        self,
        lie: LieAlgebraSpec,
        omega_matrix: Callable[[np.ndarray], np.ndarray],
        domain: Sequence[Sequence[float]],
        name: str,
        omega_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        base_dim: Optional[int] = None,
        metric=None,
        fd_step: float = 1e-6,
    ):
        self.lie = lie
        self.N = lie.dim_g
        self.domain = np.array(domain, dtype=float)
        if self.domain.shape != (self.N, 2):
            raise ValueError(f"Chart domain must have shape ({self.N}, 2), got {self.domain.shape}")
        self.name = name
        self.base_dim = base_dim
        self.metric = metric
        self._omega = omega_matrix
        self._omega_derivative = omega_derivative
        self.fd_step = fd_step

    def __repr__(self) -> str:
        return f"CartanChart(name={self.name!r}, lie={self.lie.name!r})"

    def omega(self, b: np.ndarray) -> np.ndarray:
        return np.asarray(self._omega(np.asarray(b, dtype=float)), dtype=float)

    def omega_derivative(self, b: np.ndarray) -> np.ndarray:
        """dW[i, j, l] = d W_ij / d b_l"""
        b = np.asarray(b, dtype=float)
        if self._omega_derivative is not None:
            return np.asarray(self._omega_derivative(b), dtype=float)
        # central differences when the frontend has no closed form
        h = self.fd_step
        dW = np.empty((self.N, self.N, self.N))
        for l in range(self.N):
            e = np.zeros(self.N)
            e[l] = h
            dW[:, :, l] = (self.omega(b + e) - self.omega(b - e)) / (2 * h)
        return dW

    def contains(self, b: np.ndarray, margin: float = 0.0) -> bool:
        b = np.asarray(b)
        return bool(np.all(b >= self.domain[:, 0] + margin) and np.all(b <= self.domain[:, 1] - margin))

    def condition_number(self, b: np.ndarray) -> float:
        return float(np.linalg.cond(self.omega(b)))

    def ensure_regular(self, b: np.ndarray) -> None:
        """Reject points where W is singular or badly conditioned"""
        if not self.contains(b):
            raise DomainExitError(f"Point {np.asarray(b).tolist()} lies outside the chart domain", exit_time=0.0)
        cond = self.condition_number(b)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise SingularFrameError(
                f"Connection matrix is singular at {np.asarray(b).tolist()}", {"condition_number": cond}
            )

    def base_point(self, b: np.ndarray) -> np.ndarray:
        if self.base_dim is None:
            raise ValueError(f"{self.name} has no base projection")
        return np.asarray(b)[: self.base_dim]


class FlowResult(NumpyModel):
    endpoint: np.ndarray
    pushforward: Optional[np.ndarray] = None
    sensitivity: Optional[np.ndarray] = None
    diagnostics: FlowDiagnostics


def omega_constant_field(chart: CartanChart, X) -> Callable[[np.ndarray], np.ndarray]:
    """The field b -> W(b)^{-1} X"""
    X = np.asarray(X, dtype=float)

    def field(b: np.ndarray) -> np.ndarray:
        try:
            return np.linalg.solve(chart.omega(b), X)
        except np.linalg.LinAlgError as e:
            raise SingularFrameError(f"Connection matrix is singular at {np.asarray(b).tolist()}: {e}")

    return field


def field_jacobian(chart: CartanChart, b: np.ndarray, X) -> np.ndarray:
    """Jacobian of the omega-constant field of X at b"""
    W = chart.omega(b)
    W_inv = np.linalg.inv(W)
    v = W_inv @ np.asarray(X, dtype=float)
    return -W_inv @ np.einsum("ijl,j->il", chart.omega_derivative(b), v)


def omega_of_bracket(chart: CartanChart, b: np.ndarray, X, Y) -> np.ndarray:
    """omega_b([X~, Y~]) from the derivative of W"""
    W = chart.omega(b)
    dW = chart.omega_derivative(b)
    x = np.linalg.solve(W, np.asarray(X, dtype=float))
    y = np.linalg.solve(W, np.asarray(Y, dtype=float))
    return np.einsum("ijl,l,j->i", dW, y, x) - np.einsum("ijl,l,j->i", dW, x, y)


def _flow_rhs(chart: CartanChart, X: np.ndarray, pushforward: bool, sensitivity: bool):
    N = chart.N
    N2 = N * N

    def rhs(y: np.ndarray) -> np.ndarray:
        b = y[:N]
        W_inv = np.linalg.inv(chart.omega(b))
        v = W_inv @ X
        if not (pushforward or sensitivity):
            return v
        Dv = -W_inv @ np.einsum("ijl,j->il", chart.omega_derivative(b), v)
        parts = [v]
        offset = N
        if pushforward:
            parts.append((Dv @ y[offset:offset + N2].reshape(N, N)).ravel())
            offset += N2
        if sensitivity:
            parts.append((Dv @ y[offset:offset + N2].reshape(N, N) + W_inv).ravel())
        return np.concatenate(parts)

    return rhs


def flow(
    chart: CartanChart,
    b: np.ndarray,
    X,
    t: float = 1.0,
    tol: Optional[float] = None,
    pushforward: bool = True,
    sensitivity: bool = False,
) -> FlowResult:
    """exp(b, tX): flow of the omega-constant field of X for time t.

    With ``pushforward`` the differential of the flow in b is integrated along
    (variational equation); with ``sensitivity`` the derivative of the endpoint
    with respect to X is returned as well.
    """
    N = chart.N
    b = np.asarray(b, dtype=float)
    X = np.asarray(X, dtype=float)
    if b.shape != (N,) or X.shape != (N,):
        raise ValueError(f"flow expects a chart point and a g-vector of length {N}")

    y0 = [b]
    if pushforward:
        y0.append(np.eye(N).ravel())
    if sensitivity:
        y0.append(np.zeros(N * N))
    y0 = np.concatenate(y0)

    solver = CashKarp54(tol=tol or settings.TOL_ODE)
    try:
        y, diagnostics = solver.integrate(
            _flow_rhs(chart, X, pushforward, sensitivity),
            y0,
            float(t),
            inside=lambda y: chart.contains(y[:N]),
        )
    except (DomainExitError, IntegrationError) as e:
        logger.debug(f"Flow from {b.tolist()} along {X.tolist()} failed: {e}")
        raise

    offset = N
    pf = sens = None
    if pushforward:
        pf = y[offset:offset + N * N].reshape(N, N)
        offset += N * N
    if sensitivity:
        sens = y[offset:offset + N * N].reshape(N, N)
    return FlowResult(endpoint=y[:N], pushforward=pf, sensitivity=sens, diagnostics=diagnostics)


def flow_through(
    chart: CartanChart,
    b: np.ndarray,
    X,
    times: Sequence[float],
    tol: Optional[float] = None,
    pushforward: bool = False,
) -> List[FlowResult]:
    """exp(b, tX) for each t in ``times``, one integration per sign of t.

    Diagnostics are those of the pass that reached each time.
    """
    N = chart.N
    b = np.asarray(b, dtype=float)
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    y0 = np.concatenate([b, np.eye(N).ravel()]) if pushforward else b
    states = np.tile(y0, (times.size, 1))
    diagnostics = [FlowDiagnostics(accepted_steps=0, rejected_steps=0, max_local_error=0.0)] * times.size
    solver = CashKarp54(tol=tol or settings.TOL_ODE)
    rhs = _flow_rhs(chart, X, pushforward, False)
    for sign in (1.0, -1.0):
        chosen = np.flatnonzero(sign * times > 0)
        if chosen.size == 0:
            continue
        order = chosen[np.argsort(np.abs(times[chosen]), kind="stable")]
        try:
            reached, diag = solver.integrate_to_times(rhs, y0, times[order], inside=lambda y: chart.contains(y[:N]))
        except (DomainExitError, IntegrationError) as e:
            logger.debug(f"Flow from {b.tolist()} along {X.tolist()} failed: {e}")
            raise
        states[order] = reached
        for i in order:
            diagnostics[i] = diag
    return [
        FlowResult(
            endpoint=y[:N],
            pushforward=y[N:].reshape(N, N) if pushforward else None,
            diagnostics=d,
        )
        for y, d in zip(states, diagnostics)
    ]


def log(
    chart: CartanChart,
    b0: np.ndarray,
    b1: np.ndarray,
    tol: Optional[float] = None,
    max_iter: int = 50,
) -> np.ndarray:
    """X with exp(b0, X) = b1, by Newton shooting from X0 = W(b0)(b1 - b0)"""
    b0 = np.asarray(b0, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    tol_ode = settings.TOL_ODE if tol is None else min(tol, settings.TOL_ODE)
    target = tol if tol is not None else 10 * settings.TOL_ODE
    target = target * (1.0 + float(np.max(np.abs(b1))))

    X = chart.omega(b0) @ (b1 - b0)
    if np.max(np.abs(b1 - b0)) == 0.0:
        return np.zeros(chart.N)

    residual = np.inf
    for iteration in range(max_iter):
        result = flow(chart, b0, X, 1.0, tol=tol_ode, pushforward=False, sensitivity=True)
        F = result.endpoint - b1
        residual = float(np.max(np.abs(F)))
        if residual <= target:
            return X
        try:
            dX = np.linalg.solve(result.sensitivity, F)
        except np.linalg.LinAlgError as e:
            logger.error(f"Singular shooting Jacobian at iteration {iteration}: {e}")
            raise LogConvergenceError("Singular shooting Jacobian", {"iteration": iteration})

        # damp the update while the trial trajectory leaves the chart
        for _ in range(12):
            trial = X - dX
            try:
                flow(chart, b0, trial, 1.0, tol=tol_ode, pushforward=False)
                break
            except NumericalError:
                dX = 0.5 * dX
        else:
            raise LogConvergenceError("Shooting trajectories leave the chart", {"iteration": iteration})
        X = trial
        if np.max(np.abs(dX)) <= 1e-13 * (1.0 + np.max(np.abs(X))) and residual <= 100 * target:
            return X

    logger.error(f"log did not converge after {max_iter} iterations, residual {residual:.3e}")
    raise LogConvergenceError(
        "Shooting did not converge (target outside the normal neighborhood?)",
        {"residual": residual, "iterations": max_iter},
    )


def zeta(chart: CartanChart, b: np.ndarray, X, Y, tol: Optional[float] = None) -> np.ndarray:
    """zeta_b(X, Y) = log_b(exp(exp(b, X), Y))"""
    first = flow(chart, b, X, 1.0, tol=tol, pushforward=False).endpoint
    second = flow(chart, first, Y, 1.0, tol=tol, pushforward=False).endpoint
    return log(chart, b, second, tol=tol)


def vertical_flow(chart: CartanChart, b: np.ndarray, X, t: float, tol: Optional[float] = None) -> np.ndarray:
    """Right action b . exp(tX)^{-1} for X in p, i.e. b p^{-1} with p = exp(tX)"""
    if not chart.lie.in_p(np.asarray(X, dtype=float)):
        raise ValueError("vertical_flow expects an element of p")
    return flow(chart, b, X, -t, tol=tol, pushforward=False).endpoint


def vector_field_bracket(
    F: Callable[[np.ndarray], np.ndarray],
    G: Callable[[np.ndarray], np.ndarray],
    h: float = 1e-4,
) -> Callable[[np.ndarray], np.ndarray]:
    """[F, G] = DG.F - DF.G with 4th order central differences in chart coordinates"""

    def directional(field, b, v):
        return (
            -field(b + 2 * h * v) + 8 * field(b + h * v) - 8 * field(b - h * v) + field(b - 2 * h * v)
        ) / (12 * h)

    def bracket(b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        return directional(G, b, F(b)) - directional(F, b, G(b))

    return bracket


def check_axioms(chart: CartanChart, b: np.ndarray) -> dict:
    """Residuals of the Cartan connection axioms at b.

    Vertical fields of p have no base component, and R_g^* omega = Ad g^{-1} omega
    holds infinitesimally: omega([X~, Y~]) = [X, Y] for X in p.
    """
    lie = chart.lie
    basis = np.eye(lie.dim_g)
    vertical = 0.0
    equivariance = 0.0
    for X in basis[lie.p_start:]:
        field = omega_constant_field(chart, X)(b)
        if chart.base_dim is not None:
            vertical = max(vertical, float(np.max(np.abs(field[: chart.base_dim]), initial=0.0)))
        for Y in basis:
            defect = omega_of_bracket(chart, b, X, Y) - lie.bracket(X, Y)
            equivariance = max(equivariance, float(np.max(np.abs(defect))))
    return {
        "condition_number": chart.condition_number(b),
        "vertical_residual": vertical,
        "equivariance_residual": equivariance,
    }


def normal_radius(
    chart: CartanChart,
    b: np.ndarray,
    r_max: float = 1.0,
    directions: int = 6,
    seed: int = 0,
    iterations: int = 10,
    tol: Optional[float] = None,
) -> float:
    """Empirical normal-neighborhood radius at b by bisection on log(exp(b, X)) = X"""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(directions, chart.N))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def invertible(r: float) -> bool:
        for d in dirs:
            X = r * d
            try:
                end = flow(chart, b, X, 1.0, tol=tol, pushforward=False).endpoint
                back = log(chart, b, end, tol=tol)
            except NumericalError:
                return False
            if np.max(np.abs(back - X)) > 1e-6 * (1.0 + r):
                return False
        return True

    if invertible(r_max):
        return r_max
    lo, hi = 0.0, r_max
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if invertible(mid):
            lo = mid
        else:
            hi = mid
    logger.info(f"Normal radius at {np.asarray(b).tolist()} estimated as {lo:.4g}")
    return lo
