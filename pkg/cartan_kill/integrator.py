import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from cartan_kill.exceptions import DomainExitError, IntegrationError
from cartan_kill.schemas import FlowDiagnostics

logger = logging.getLogger(__name__)


class CashKarp54:
    """Cash-Karp 5(4) pair. Six stages, 5th order propagation with an embedded
    4th order error estimate, explicit and adaptive.

    Integrates autonomous systems y' = f(y) on [0, t_end] (t_end may be
    negative). The error of every accepted step satisfies
    |e_i| <= tol * (1 + |y_i|) componentwise.
    """

    def __init__(self, tol: float = 1e-10, max_steps: int = 20000, min_step: float = 1e-13):
        self.tol = tol
        self.max_steps = max_steps
        self.min_step = min_step

        #number of stages and orders
        self.s = 6
        self.n = 5
        self.m = 4

        #extended butcher table, last row holds the propagating weights
        self.BT = {
            0: [       1/5],
            1: [      3/40,    9/40],
            2: [      3/10,   -9/10,       6/5],
            3: [    -11/54,     5/2,    -70/27,        35/27],
            4: [1631/55296, 175/512, 575/13824, 44275/110592, 253/4096],
            5: [    37/378,       0,   250/621,      125/594,        0, 512/1771]
            }

        #coefficients for local truncation error estimate
        self.TR = [-277/64512, 0, 6925/370944, -6925/202752, -277/14336, 277/7084]

    def step(self, f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
        """One trial step; returns the 5th order solution and the error estimate"""
        ks = [f(y)]
        for i in range(self.s - 1):
            slope = sum(a * k for a, k in zip(self.BT[i], ks))
            ks.append(f(y + h * slope))
        y_new = y + h * sum(b * k for b, k in zip(self.BT[self.s - 1], ks))
        error = h * sum(e * k for e, k in zip(self.TR, ks))
        return y_new, error

    def integrate(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        y0: np.ndarray,
        t_end: float,
        inside: Optional[Callable[[np.ndarray], bool]] = None,
        h0: Optional[float] = None,
    ) -> Tuple[np.ndarray, FlowDiagnostics]:
        states, diagnostics = self.integrate_to_times(f, y0, [t_end], inside=inside, h0=h0)
        return states[-1], diagnostics

    def integrate_to_times(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        y0: np.ndarray,
        times: Sequence[float],
        inside: Optional[Callable[[np.ndarray], bool]] = None,
        h0: Optional[float] = None,
    ) -> Tuple[List[np.ndarray], FlowDiagnostics]:
        """States at each of ``times`` from a single pass.

        The times share one sign and grow in magnitude; steps are clipped to
        land on every one of them.
        """
        y = np.array(y0, dtype=float)
        times = [float(t) for t in times]
        if not times:
            raise ValueError("At least one output time is required")
        direction = 1.0 if times[-1] >= 0 else -1.0
        if any(direction * (b - a) < 0 for a, b in zip([0.0] + times, times)):
            raise ValueError(f"Output times must share one sign and grow in magnitude, got {times}")

        t = 0.0
        first = next((abs(s) for s in times if s != 0.0), 0.0)
        h = direction * min(abs(h0) if h0 else first, abs(times[-1]))
        accepted = rejected = 0
        max_error = 0.0
        states = []

        for target in times:
            while direction * (target - t) > 0:
                if accepted + rejected > self.max_steps:
                    raise IntegrationError(f"Step budget of {self.max_steps} exhausted at t = {t}", {"t": t})
                planned = h
                last = direction * (t + h - target) >= 0
                if last:
                    h = target - t

                try:
                    y_new, error = self.step(f, y, h)
                    finite = np.all(np.isfinite(y_new)) and np.all(np.isfinite(error))
                except (np.linalg.LinAlgError, FloatingPointError, ValueError) as e:
                    logger.debug(f"Stage evaluation failed at t = {t}, h = {h}: {e}")
                    finite = False

                if finite and inside is not None and not inside(y_new):
                    rejected += 1
                    if abs(h) < self.min_step:
                        raise DomainExitError(f"Trajectory leaves the domain near t = {t + h:.6g}", exit_time=t + h)
                    h *= 0.5
                    continue
                if not finite:
                    rejected += 1
                    h *= 0.25
                    if abs(h) < self.min_step:
                        raise IntegrationError(f"Step size underflow at t = {t}", {"t": t})
                    continue

                scale = self.tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))
                err = float(np.max(np.abs(error) / scale))

                if err <= 1.0:
                    t = target if last else t + h
                    y = y_new
                    accepted += 1
                    max_error = max(max_error, float(np.max(np.abs(error))))
                    if last:
                        # a clipped step says nothing about the next one
                        h = planned
                        continue
                else:
                    rejected += 1

                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-1.0 / self.n)))
                h *= factor
                if abs(h) < self.min_step and direction * (target - t) > self.min_step:
                    raise IntegrationError(f"Step size underflow at t = {t} (stiff or singular field)", {"t": t})
            states.append(y.copy())

        return states, FlowDiagnostics(accepted_steps=accepted, rejected_steps=rejected, max_local_error=max_error)
