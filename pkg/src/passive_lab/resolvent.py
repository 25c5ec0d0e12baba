"""Solvers for the monotone feedback equations and the implicit Euler integrator.

The basic equation is ``y = r + Q phi(u - y)`` with ``Re Q >= c I`` for
some ``c > 0`` and ``phi`` continuous and monotone; it has exactly one
solution.  The resolvent of the closed-loop generator and the implicit
Euler step both reduce to it with ``Q = P(lambda)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .node import SystemNode, SpectrumError, hermitian_part
from .nonlinearity import MonotoneMap
from .trajectory import InputSignal, Trajectory, ZeroInput

__all__ = [
    "SOLVER_TOLERANCE",
    "MAX_ITERATIONS",
    "SolveReport",
    "PreconditionError",
    "NonConvergenceError",
    "IntegrationError",
    "solve_output_equation",
    "ShiftedResolvent",
    "resolvent_A_phi",
    "resolvent_with_input",
    "implicit_euler_step",
    "integrate",
    "ProbeResult",
    "crandall_liggett_probe",
    "observed_orders",
]

log = logging.getLogger(__name__)

SOLVER_TOLERANCE = 1e-12
MAX_ITERATIONS = 10_000
_NEWTON_ITERATIONS = 60


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual: float
    method: str
    converged: bool = True


class PreconditionError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


class IntegrationError(RuntimeError):
    """A time step failed; ``trajectory`` holds the steps completed before it."""

    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


def _real_rep(Q: np.ndarray) -> np.ndarray:
    return np.block([[Q.real, -Q.imag], [Q.imag, Q.real]])


def _is_real(*arrays) -> bool:
    return all(not np.iscomplexobj(a) or not np.any(np.imag(a)) for a in arrays)


class _OutputEquation:
    """``F(y) = y - r - Q phi(u - y)`` for a fixed ``Q`` and ``phi``.

    Holds what can be reused across many right-hand sides (one per time step).
    """

    def __init__(self, Q, phi: MonotoneMap, tol=SOLVER_TOLERANCE, max_iter=MAX_ITERATIONS):
        Q = np.atleast_2d(np.asarray(Q))
        m = phi.io_dim
        if Q.shape != (m, m):
            raise ValueError(f"Q has shape {Q.shape}, expected {(m, m)}")
        self.c = float(np.linalg.eigvalsh(hermitian_part(Q))[0])
        # Q = 0 (no port coupling) leaves y = r, which is trivially well posed
        self.trivial = not np.any(Q)
        if not (self.c > 0 or self.trivial):
            raise PreconditionError(f"Re Q is not coercive (smallest eigenvalue {self.c:.3e})")
        self.Q = Q
        self.phi = phi
        self.m = m
        self.tol = tol
        self.max_iter = max_iter
        self.q_real = _is_real(Q)
        self.Q_stacked = _real_rep(Q.astype(complex))

    def _residual(self, y, u, r):
        return y - r - self.Q @ self.phi(u - y)

    def solve(self, u, r, y0=None, method="auto") -> SolveReport:
        u = np.asarray(u).reshape(self.m)
        r = np.asarray(r).reshape(self.m)
        real = self.q_real and self.phi.preserves_real and _is_real(u, r) and (
            y0 is None or _is_real(y0))
        if real:
            u, r = np.real(u).astype(float), np.real(r).astype(float)
            Q = np.real(self.Q)
        else:
            u, r = u.astype(complex), r.astype(complex)
            Q = self.Q
        if self.trivial:
            return SolveReport(r.copy(), 0, 0.0, "trivial")
        target = self.tol * (1.0 + float(np.linalg.norm(r)))
        y = r.copy() if y0 is None else np.asarray(y0, dtype=u.dtype).reshape(self.m).copy()

        if method in ("auto", "newton"):
            rep = self._newton(y, u, r, Q, real, target)
            if rep.converged or method == "newton":
                return rep
            y = rep.solution
        if method == "scalar_bisection" and not (real and self.m == 1):
            raise ValueError("bisection needs a real scalar problem")
        if method == "scalar_bisection" or (method == "auto" and real and self.m == 1):
            return self._bisection(u, r, float(np.real(Q[0, 0])), target)
        if method in ("auto", "damped_fixed_point"):
            return self._damped_fixed_point(y, u, r, Q, target)
        raise ValueError(f"unknown method {method!r}")

    def _newton(self, y, u, r, Q, real, target):
        F = y - r - Q @ self.phi(u - y)
        fn = float(np.linalg.norm(F))
        it = 0
        while fn > target and it < _NEWTON_ITERATIONS:
            it += 1
            if real:
                J = np.eye(self.m) + Q @ self.phi.real_jacobian(u - y)
                step = np.linalg.solve(J, -F)
            else:
                w = np.concatenate([(u - y).real, (u - y).imag])
                J = np.eye(2 * self.m) + self.Q_stacked @ self.phi.real_jacobian(w)
                s = np.linalg.solve(J, -np.concatenate([F.real, F.imag]))
                step = s[:self.m] + 1j * s[self.m:]
            t = 1.0
            while True:
                y_try = y + t * step
                F_try = y_try - r - Q @ self.phi(u - y_try)
                fn_try = float(np.linalg.norm(F_try))
                if fn_try <= (1 - 1e-4 * t) * fn or fn_try <= target:
                    break
                t *= 0.5
                if t < 1e-6:
                    return SolveReport(y, it, fn, "newton", converged=False)
            y, F, fn = y_try, F_try, fn_try
        return SolveReport(y, it, fn, "newton", converged=fn <= target)

    def _bisection(self, u, r, q, target):
        phi = self.phi

        def f(y):
            return y - r[0] - q * float(phi(np.array([u[0] - y]))[0])

        # f is increasing with slope >= 1, so the root lies within |f(r)| of r
        span = abs(f(r[0])) + 1.0
        lo, hi = r[0] - span, r[0] + span
        while f(lo) > 0:
            lo -= span
            span *= 2
        while f(hi) < 0:
            hi += span
            span *= 2
        slope = 1.0 + q * (phi.lipschitz or 1.0)
        y, res = brentq(f, lo, hi, xtol=max(target / slope, 1e-300), rtol=4 * np.finfo(float).eps,
                        maxiter=self.max_iter, full_output=True, disp=False)
        fy = abs(f(y))
        return SolveReport(np.array([y]), res.iterations, fy, "scalar_bisection",
                           converged=bool(res.converged and fy <= target))

    def _damped_fixed_point(self, y, u, r, Q, target):
        # Residual iteration on z = u - y for the strongly monotone map
        # z -> Q^{-1} z + phi(z), which shares its root with F.
        Qi = np.linalg.inv(Q)
        mu = float(np.linalg.eigvalsh(hermitian_part(Qi))[0])
        lip = self.phi.lipschitz
        if lip is None:
            lip = max(1.0, float(np.linalg.norm(self.phi.real_jacobian(
                np.zeros(self.m if np.isrealobj(u) else 2 * self.m)), 2)))
        gamma = mu / (np.linalg.norm(Qi, 2) + lip) ** 2
        rhs = Qi @ (u - r)
        z = u - y
        best = (math.inf, y)
        for it in range(1, self.max_iter + 1):
            z = z - gamma * (Qi @ z + self.phi(z) - rhs)
            y = u - z
            fn = float(np.linalg.norm(self._residual(y, u, r)))
            if fn < best[0]:
                best = (fn, y)
            if fn <= target:
                return SolveReport(y, it, fn, "damped_fixed_point")
        return SolveReport(best[1], self.max_iter, best[0], "damped_fixed_point", converged=False)


def solve_output_equation(Q, phi: MonotoneMap, u, r, y0=None, tol: float = SOLVER_TOLERANCE,
                          max_iter: int = MAX_ITERATIONS, method: str = "auto") -> SolveReport:
    """Solve ``y = r + Q phi(u - y)``.

    Newton's method (with backtracking) runs first; if it stalls, scalar
    real problems fall back to bracketing and all others to a damped
    residual iteration that converges for any monotone ``phi``.

    Raises
    ------
    PreconditionError
        if ``Re Q`` is not positive definite (``Q = 0`` is accepted: ``y = r``).
    NonConvergenceError
        if the residual ``|F(y)|`` does not reach ``tol (1 + |r|)``.
    """
    eq = _OutputEquation(Q, phi, tol=tol, max_iter=max_iter)
    rep = eq.solve(u, r, y0=y0, method=method)
    if not rep.converged:
        raise NonConvergenceError(
            f"output equation did not converge (residual {rep.residual:.3e})", rep)
    return rep


class ShiftedResolvent:
    """``(lambda - A_phi)^{-1}`` for a fixed node, nonlinearity and ``lambda > 0``.

    Precomputes ``R = (lambda - A)^{-1}``, ``R B``, ``C R`` and
    ``P(lambda) = C R B + D`` so that each application costs two dense
    matrix-vector products and one small monotone solve.
    """

    def __init__(self, node: SystemNode, phi: MonotoneMap, lam: float,
                 tol: float = SOLVER_TOLERANCE, max_iter: int = MAX_ITERATIONS):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        if phi.io_dim != node.m:
            raise ValueError(f"phi acts on C^{phi.io_dim} but the node has m={node.m}")
        self.node, self.phi, self.lam = node, phi, float(lam)
        n = node.n
        try:
            lu = sla.lu_factor(self.lam * np.eye(n) - node.A, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SpectrumError(f"lambda={lam} is in the spectrum of A") from exc
        if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * max(1.0, np.max(np.abs(lu[0]))):
            raise SpectrumError(f"lambda={lam} is (numerically) in the spectrum of A")
        self.R = sla.lu_solve(lu, np.eye(n, dtype=np.result_type(node.A, float)))
        self.RB = self.R @ node.B
        self.CR = node.C @ self.R
        self.P = node.C @ self.RB + node.D
        self.equation = _OutputEquation(self.P, phi, tol=tol, max_iter=max_iter)

    @property
    def coercivity(self) -> float:
        return self.equation.c

    def apply(self, x1, u0=None, y0=None):
        """Return ``(x, v, report)`` with ``(lambda - A)x - B phi(u0 - v) = x1``
        and ``v = Cx + D phi(u0 - v)``."""
        m = self.node.m
        x1 = np.asarray(x1).reshape(self.node.n)
        u0 = np.zeros(m) if u0 is None else np.asarray(u0).reshape(m)
        r = self.CR @ x1
        rep = self.equation.solve(u0, r, y0=y0)
        if not rep.converged:
            raise NonConvergenceError(
                f"resolvent solve did not converge (residual {rep.residual:.3e})", rep)
        v = rep.solution
        x = self.R @ x1 + self.RB @ self.phi(u0 - v)
        return x, v, rep


def resolvent_A_phi(node: SystemNode, phi: MonotoneMap, lam: float, x1):
    """One application of ``(lambda - A_phi)^{-1}``: returns ``(x, v)`` with
    ``v = C R x1 + P(lambda) phi(-v)`` and ``x = R x1 + R B phi(-v)``."""
    x, v, _ = ShiftedResolvent(node, phi, lam).apply(x1)
    return x, v


def resolvent_with_input(node: SystemNode, phi: MonotoneMap, lam: float, x1, u0):
    """Resolvent equations with a frozen input ``u0``: returns ``(x, v)``."""
    x, v, _ = ShiftedResolvent(node, phi, lam).apply(x1, u0)
    return x, v


def implicit_euler_step(node: SystemNode, phi: MonotoneMap, h: float, x_n, u_n):
    """``x_next = x_n + h (A x_next + B phi(u_n - y_n))``, ``y_n = C x_next + D phi(u_n - y_n)``.

    Returns ``(x_next, y_n)``.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    x, y, _ = ShiftedResolvent(node, phi, 1.0 / h).apply(np.asarray(x_n) / h, u_n)
    return x, y


def _n_steps(T: float, h: float) -> int:
    if not (T > 0 and 0 < h <= T):
        raise ValueError("need T > 0 and 0 < h <= T")
    return int(math.ceil(T / h - 1e-9))


def integrate(node: SystemNode, phi: MonotoneMap, x0, input: InputSignal | None = None,
              T: float = 1.0, h: float = 1e-2, label: str = "",
              tol: float = SOLVER_TOLERANCE) -> Trajectory:
    """Implicit Euler with zero-order-hold input over ``ceil(T/h)`` steps."""
    N = _n_steps(T, h)
    input = input if input is not None else ZeroInput()
    stepper = ShiftedResolvent(node, phi, 1.0 / h, tol=tol)
    n, m = node.n, node.m
    x = np.asarray(x0).reshape(n)
    times = h * np.arange(N + 1)
    us = input.sample(times[:-1], m)
    dtype = np.result_type(node.dtype, x.dtype, us.dtype, float)
    states = np.empty((N + 1, n), dtype=dtype)
    outputs = np.empty((N, m), dtype=dtype)
    phis = np.empty((N, m), dtype=dtype)
    residuals = np.empty(N)
    states[0] = x
    y_prev = None
    for k in range(N):
        try:
            x_new, y, rep = stepper.apply(states[k] / h, us[k], y0=y_prev)
        except NonConvergenceError as exc:
            partial = Trajectory(h, times[:k + 1], states[:k + 1], outputs[:k], us[:k], phis[:k],
                                 residuals[:k], node, phi, label)
            raise IntegrationError(f"step {k} failed: {exc}", partial) from exc
        states[k + 1] = x_new
        outputs[k] = y
        phis[k] = phi(us[k] - y)
        residuals[k] = rep.residual
        y_prev = y
    return Trajectory(h, times, states, outputs, us.astype(dtype), phis, residuals, node, phi, label)


@dataclass(frozen=True)
class ProbeResult:
    """Final states of the exponential-formula probe, one per step size."""

    states: list
    differences: list
    orders: list


def observed_orders(pairs) -> tuple[list, list]:
    """Successive differences ``|x_{h_i} - x_{h_{i+1}}|`` and the orders they imply."""
    diffs = [float(np.linalg.norm(pairs[i][1] - pairs[i + 1][1])) for i in range(len(pairs) - 1)]
    orders = []
    for i in range(len(diffs) - 1):
        ratio = pairs[i][0] / pairs[i + 1][0]
        if diffs[i] > 0 and diffs[i + 1] > 0:
            orders.append(math.log(diffs[i] / diffs[i + 1]) / math.log(ratio))
        else:
            orders.append(math.nan)
    return diffs, orders


def crandall_liggett_probe(node: SystemNode, phi: MonotoneMap, x0, T: float, h_list,
                           input: InputSignal | None = None) -> ProbeResult:
    """Run ``(I - h A_phi)^{-T/h} x0`` for each ``h`` and estimate the convergence order."""
    h_list = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing")
    pairs = []
    for h in h_list:
        N = round(T / h)
        if abs(N * h - T) > 1e-9 * T:
            raise ValueError(f"T={T} is not a multiple of h={h}")
        traj = integrate(node, phi, x0, input, T=T, h=h)
        pairs.append((h, traj.states[-1]))
    diffs, orders = observed_orders(pairs)
    return ProbeResult(pairs, diffs, orders)

