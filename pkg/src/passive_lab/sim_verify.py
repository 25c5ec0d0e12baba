"""Trajectory checks: each function turns one proved inequality into a verdict.

All checks are pure functions of their trajectories.  Discrete quadratures
follow the implicit Euler step, so the inequalities hold as identities up
to solver residuals:

* passivity uses the step identity
  ``|x_{k+1}|^2 - |x_k|^2 = 2h Re<A x_{k+1} + B phi_k, x_{k+1}> - |x_{k+1} - x_k|^2``;
* the incremental estimate pairs the dissipation term ``kappa h |dphi_k|^2``
  with the input term ``h |du_k|^2 / kappa`` (inputs held on each step).
"""

from __future__ import annotations

import numpy as np

from .node import SystemNode, negative_feedback_closed_loop, spectral_abscissa
from .nonlinearity import LinearGain
from .report import FAIL, PASS, SKIPPED, VerificationReport
from .resolvent import integrate
from .trajectory import Trajectory

__all__ = [
    "Trajectory",
    "VerificationReport",
    "PASS",
    "FAIL",
    "SKIPPED",
    "CHECK_TOLERANCE",
    "STABILITY_PREREQ_TOL",
    "passivity_check",
    "incremental_estimate_check",
    "contraction_check",
    "stability_check",
    "linear_comparator_run",
    "comparator_abscissa",
]

CHECK_TOLERANCE = 1e-8
STABILITY_PREREQ_TOL = 1e-10


def _worst(margins: np.ndarray) -> tuple[float, int | None]:
    if margins.size == 0:
        return 0.0, None
    k = int(np.argmin(margins))
    return float(margins[k]), k


def passivity_check(traj: Trajectory, tol: float = CHECK_TOLERANCE) -> VerificationReport:
    """``|x_{k+1}|^2 - |x_k|^2 <= 2h Re<phi_k, y_k> + tol (1 + |x_k|^2)`` for every step.

    The implicit Euler step also dissipates ``|x_{k+1} - x_k|^2``, so the
    sharper form with that term on the left is asserted as well (with the
    same slack).  It is what exposes corruptions that preserve norms, such
    as a sign flip of the state.  ``worst_margin`` refers to the plain form
    unless only the sharper one is violated.
    """
    sq = np.sum(np.abs(traj.states) ** 2, axis=1)
    supply = 2 * traj.h * np.real(np.sum(np.conj(traj.outputs) * traj.phis, axis=1))
    margins = supply - (sq[1:] - sq[:-1])
    jumps = np.sum(np.abs(np.diff(traj.states, axis=0)) ** 2, axis=1)
    sharp = margins - jumps
    slack = tol * (1 + sq[:-1])
    worst, k = _worst(margins + slack)
    worst_sharp, k_sharp = _worst(sharp + slack)
    details = {"margins": margins, "sharp_margins": sharp}
    if worst < 0:
        return VerificationReport("passivity", FAIL, worst, k, tol, details=details)
    if worst_sharp < 0:
        return VerificationReport("passivity", FAIL, worst_sharp, k_sharp, tol,
                                  note="step_dissipation_violated", details=details)
    raw, k = _worst(margins)
    return VerificationReport("passivity", PASS, raw, k, tol, details=details)


def _same_grid(t1: Trajectory, t2: Trajectory) -> None:
    if t1.h != t2.h or t1.states.shape != t2.states.shape or t1.inputs.shape != t2.inputs.shape:
        raise ValueError("trajectories are not on the same time grid / dimensions")
    if not np.array_equal(t1.times, t2.times):
        raise ValueError("trajectories have different time grids")


def incremental_estimate_check(traj1: Trajectory, traj2: Trajectory, kappa: float,
                               tol: float = CHECK_TOLERANCE) -> VerificationReport:
    """Cumulative incremental estimate with declared sector constant ``kappa``.

    For every ``K``:
    ``|dx_K|^2 + kappa h sum_{k<K} |dphi_k|^2 <= |dx_0|^2 + (h/kappa) sum_{k<K} |du_k|^2``
    up to the slack ``K tol (1 + |dx_0|^2)``.
    """
    _same_grid(traj1, traj2)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    h = traj1.h
    dx2 = np.sum(np.abs(traj2.states - traj1.states) ** 2, axis=1)
    dphi = h * np.sum(np.abs(traj2.phis - traj1.phis) ** 2, axis=1)
    du = h * np.sum(np.abs(traj2.inputs - traj1.inputs) ** 2, axis=1)
    lhs = dx2[1:] + (kappa * np.cumsum(dphi) if np.isfinite(kappa) else 0.0)
    rhs = dx2[0] + np.cumsum(du) / kappa
    margins = rhs - lhs
    slack = tol * (1 + dx2[0]) * np.arange(1, len(margins) + 1)
    worst, k = _worst(margins + slack)
    raw, _ = _worst(margins)
    status = PASS if worst >= 0 else FAIL
    return VerificationReport("incremental", status, raw if status == PASS else worst, k, tol,
                              details={"margins": margins})


def contraction_check(traj1: Trajectory, traj2: Trajectory,
                      tol: float = CHECK_TOLERANCE) -> VerificationReport:
    """``|dx_k| <= |dx_0| + tol`` for every ``k`` and ``|dx_{k+1}| <= |dx_k| + tol`` step to step."""
    _same_grid(traj1, traj2)
    if not (traj1.input_is_zero() and traj2.input_is_zero()):
        raise ValueError("contraction_check requires zero input in both trajectories")
    d = np.linalg.norm(traj2.states - traj1.states, axis=1)
    bound = d[0] - d[1:]
    monotone = d[:-1] - d[1:]
    worst_b, kb = _worst(bound)
    worst_m, km = _worst(monotone)
    if worst_b <= worst_m:
        worst, k = worst_b, kb
    else:
        worst, k = worst_m, km
    status = PASS if worst >= -tol else FAIL
    return VerificationReport("contraction", status, worst, k, tol,
                              details={"distances": d, "bound_margin": worst_b,
                                       "monotone_margin": worst_m})


def comparator_abscissa(node: SystemNode) -> float:
    return spectral_abscissa(negative_feedback_closed_loop(node))


def stability_check(traj: Trajectory, epsilon: float, n_doublings: int = 3,
                    ratio: float = 0.9, node: SystemNode | None = None) -> VerificationReport:
    """Decay ``|x_N| <= epsilon |x_0|`` plus geometric shrinkage of the tail output energy.

    The linear comparator ``A_K`` must be exponentially stable; otherwise the
    report is ``SKIPPED`` (hypothesis not met).  The tail criterion compares
    output energy increments over consecutive dyadic windows
    ``[T/2^{j+1}, T/2^j]`` (``n_doublings`` ratios) and requires each ratio
    to stay below ``ratio`` (increments below ``1e-14`` of the total count
    as converged).
    """
    node = node if node is not None else traj.node
    if node is None:
        raise ValueError("stability_check needs the node (for the comparator hypothesis)")
    if not traj.input_is_zero():
        raise ValueError("stability_check requires zero input")
    abscissa = comparator_abscissa(node)
    details = {"abscissa": abscissa}
    if not abscissa < -STABILITY_PREREQ_TOL:
        return VerificationReport("stability", SKIPPED, abscissa, None, STABILITY_PREREQ_TOL,
                                  note="hypothesis_not_met:comparator_not_stable", details=details)
    norms = traj.state_norms()
    x0 = norms[0]
    decay_margin = epsilon * x0 - norms[-1]
    energy = traj.output_energy()
    N = traj.n_steps
    cuts = [N >> j for j in range(n_doublings + 2)][::-1]
    incs = np.diff(energy[cuts])
    total = max(energy[-1], np.finfo(float).tiny)
    ratios = []
    tail_ok = True
    for a, b in zip(incs[:-1], incs[1:]):
        if b <= 1e-14 * total:
            ratios.append(0.0)
            continue
        r = b / a if a > 0 else np.inf
        ratios.append(float(r))
        tail_ok &= r < ratio
    details.update(final_ratio=float(norms[-1] / x0) if x0 > 0 else 0.0,
                   tail_increments=incs, tail_ratios=ratios)
    tail_margin = min((ratio - r for r in ratios), default=0.0)
    worst = min(decay_margin / max(x0, 1e-300), tail_margin)
    status = PASS if decay_margin >= 0 and tail_ok else FAIL
    return VerificationReport("stability", status, float(worst), N, epsilon,
                              note="tail_energy_ratio_is_a_proxy_for_L2_output", details=details)


def linear_comparator_run(node: SystemNode, x0, T: float, h: float) -> Trajectory:
    """Closed loop under unit negative output feedback, ``x' = A_K x``, with the same stepper."""
    negative_feedback_closed_loop(node)  # raises if I + D is singular
    return integrate(node, LinearGain(node.m, 1.0), x0, T=T, h=h, label="linear_comparator")
