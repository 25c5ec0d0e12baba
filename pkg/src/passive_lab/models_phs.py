"""One-dimensional port-Hamiltonian systems with boundary control.

The PDE is ``x_t = P1 (H x)_zeta + P0 H x`` on ``[a, b]`` with boundary
input/output

    [WB1; WB2] ((Hx)(b); (Hx)(a)) = (u; 0),   y = WC ((Hx)(b); (Hx)(a)).

Spatial discretization
----------------------
States live on the ``N + 1`` nodes of a uniform grid.  The energy inner
product ``<x, x'> = int x* H x'`` is approximated by the trapezoidal
(diagonal SBP) norm, and ``d/dzeta`` by the second-order central SBP
operator plus an optional upwind dissipation ``-(theta/2) K (x) |P1|``.
Because the end nodes carry the exact traces, ``Re<Lx, x>`` equals the
continuous boundary form ``1/2 <Xi g, g>`` minus nonnegative dissipation.
Boundary conditions enter weakly through penalty (SAT) terms chosen so that

    Re<A z + B u, z> <= Re<u, C z>     for every state z and input u,

i.e. the discrete node is impedance passive in the full LMI sense, not only
on a constraint set.  The boundary node returned by :func:`discretize`
carries the input as ``p`` extra port coordinates (``G`` reads them out,
``L`` keeps them fixed); :func:`from_boundary_node` followed by
:func:`~passive_lab.node.remove_inert_states` recovers the node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .node import (BoundaryNode, SystemNode, from_boundary_node, hermitian_part,
                   remove_inert_states)

__all__ = [
    "PHSSpec",
    "Assumption61Report",
    "PHSDiscretization",
    "boundary_matrices",
    "audit_assumption61",
    "discretize",
    "phs_system_node",
    "timoshenko_preset",
    "transport_preset",
    "timoshenko_energy",
    "timoshenko_distance",
    "coefficient",
]

_AUDIT_TOL = 1e-10


def _as_fn(c) -> Callable:
    if callable(c):
        return c
    value = float(c)
    return lambda z: value


def coefficient(kind: str = "constant", **params) -> Callable[[float], float]:
    """Named coefficient profiles: ``constant(value)``, ``linear(a0, a1)``,
    ``exponential(scale, rate)``."""
    if kind == "constant":
        v = float(params.get("value", 1.0))
        return lambda z: v
    if kind == "linear":
        a0, a1 = float(params.get("a0", 1.0)), float(params.get("a1", 0.0))
        return lambda z: a0 + a1 * z
    if kind == "exponential":
        s, k = float(params.get("scale", 1.0)), float(params.get("rate", 0.0))
        return lambda z: s * np.exp(k * z)
    raise ValueError(f"unknown coefficient profile {kind!r}")


@dataclass(frozen=True, eq=False)
class PHSSpec:
    """Data of a boundary-controlled port-Hamiltonian system on ``[a, b]``.

    ``H`` maps ``zeta`` to a Hermitian positive definite ``n x n`` matrix.
    The boundary matrices act on ``((Hx)(b); (Hx)(a))``: ``WB1`` and ``WC``
    are ``p x 2n``, ``WB2`` is ``(n - p) x 2n``.  ``N`` is the number of
    grid cells.
    """

    n: int
    p: int
    P1: np.ndarray
    P0: np.ndarray
    H: Callable[[float], np.ndarray]
    a: float
    b: float
    WB1: np.ndarray
    WB2: np.ndarray
    WC: np.ndarray
    N: int = 50
    name: str = "phs"

    def __post_init__(self):
        n, p = self.n, self.p
        if not 0 < p <= n:
            raise ValueError("need 0 < p <= n")
        if not self.a < self.b:
            raise ValueError("need a < b")
        P1 = np.atleast_2d(np.asarray(self.P1))
        P0 = np.atleast_2d(np.asarray(self.P0))
        WB1 = np.asarray(self.WB1).reshape(p, 2 * n)
        WB2 = np.asarray(self.WB2).reshape(n - p, 2 * n)
        WC = np.asarray(self.WC).reshape(p, 2 * n)
        if P1.shape != (n, n) or P0.shape != (n, n):
            raise ValueError("P1 and P0 must be n x n")
        if np.max(np.abs(P1 - P1.conj().T)) > 1e-12:
            raise ValueError("P1 must be Hermitian")
        if np.linalg.eigvalsh(hermitian_part(P0))[-1] > 1e-12:
            raise ValueError("Re P0 must be negative semidefinite")
        if np.linalg.matrix_rank(np.vstack([WB1, WB2])) != n:
            raise ValueError("[WB1; WB2] must have full row rank n")
        for name, M in (("P1", P1), ("P0", P0), ("WB1", WB1), ("WB2", WB2), ("WC", WC)):
            M = M.astype(np.result_type(M, float))
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    def H_at(self, zeta: float) -> np.ndarray:
        Hz = np.atleast_2d(np.asarray(self.H(zeta), dtype=np.result_type(self.P1, float)))
        if Hz.shape != (self.n, self.n):
            raise ValueError(f"H({zeta}) has shape {Hz.shape}")
        return Hz

    def with_grid(self, N: int) -> "PHSSpec":
        return PHSSpec(self.n, self.p, self.P1, self.P0, self.H, self.a, self.b,
                       self.WB1, self.WB2, self.WC, N, self.name)


def boundary_matrices(spec: PHSSpec) -> dict:
    """``R0``, ``Xi`` and the transformed ``W_B``, ``W_B1``, ``W_B2``, ``W_C``."""
    n = spec.n
    I = np.eye(n)
    R0 = np.block([[spec.P1, -spec.P1], [I, I]]) / np.sqrt(2.0)
    if np.linalg.cond(R0) > 1e12:
        raise ValueError("R0 is singular (P1 not invertible)")
    Xi = np.block([[np.zeros((n, n)), I], [I, np.zeros((n, n))]])
    R0inv = np.linalg.inv(R0)
    WB1, WB2, WC = spec.WB1 @ R0inv, spec.WB2 @ R0inv, spec.WC @ R0inv
    return {"R0": R0, "Xi": Xi, "WB": np.vstack([WB1, WB2]), "WB1": WB1, "WB2": WB2, "WC": WC}


@dataclass(frozen=True)
class Assumption61Report:
    part_a: bool
    part_b: bool
    part_c: bool
    WB_Xi_WB: np.ndarray
    lambda_min_a: float
    rank_BC: int
    rank_C: int
    lambda_min_b: float
    kernel_basis: np.ndarray
    kernel_residuals: np.ndarray
    witness: np.ndarray | None
    eig_condition: np.ndarray
    discontinuities: tuple = ()
    defective: tuple = ()

    @property
    def passed(self) -> bool:
        return self.part_a and self.part_b and self.part_c

    def lines(self) -> list[str]:
        def flag(ok):
            return "PASS" if ok else "FAIL"
        return [
            f"AUDIT part_a {flag(self.part_a)} lambda_min={self.lambda_min_a:.6e} "
            f"max_abs_WBXiWB={np.max(np.abs(self.WB_Xi_WB)):.3e} rank_BC={self.rank_BC} "
            f"rank_C={self.rank_C}",
            f"AUDIT part_b {flag(self.part_b)} lambda_min={self.lambda_min_b:.6e} "
            f"max_kernel_residual={np.max(self.kernel_residuals, initial=0.0):.3e}",
            f"AUDIT part_c {flag(self.part_c)} max_eigvec_cond={np.max(self.eig_condition):.3e} "
            f"discontinuities={len(self.discontinuities)} defective={len(self.defective)}",
        ]


def _sorted_eigs(spec: PHSSpec, zeta: float) -> np.ndarray:
    return np.sort(np.linalg.eigvals(spec.P1 @ spec.H_at(zeta)).real)


def audit_assumption61(spec: PHSSpec, n_zeta_samples: int = 50) -> Assumption61Report:
    """Check the boundary and diagonalisability conditions on ``spec``.

    (a) ``W_B Xi W_B* >= 0`` and ``rank [W_B; W_C] = n + rank W_C``;
    (b) ``2 Re<W_B1 g, W_C g> >= <Xi g, g>`` on ``ker W_B2``;
    (c) ``P1 H(zeta)`` diagonalisable with well-conditioned eigenvectors
        and eigenvalues continuous in ``zeta`` (sampled).
    """
    mats = boundary_matrices(spec)
    n = spec.n
    WB, WB1, WB2, WC, Xi = mats["WB"], mats["WB1"], mats["WB2"], mats["WC"], mats["Xi"]

    M_a = WB @ Xi @ WB.conj().T
    lam_a = float(np.linalg.eigvalsh(hermitian_part(M_a))[0])
    rank_BC = int(np.linalg.matrix_rank(np.vstack([WB, WC]), tol=1e-10))
    rank_C = int(np.linalg.matrix_rank(WC, tol=1e-10))
    part_a = lam_a >= -_AUDIT_TOL and rank_BC == n + rank_C

    Z = sla.null_space(WB2) if WB2.shape[0] else np.eye(2 * n)
    form = WB1.conj().T @ WC + WC.conj().T @ WB1 - Xi
    restricted = Z.conj().T @ form @ Z
    evals, evecs = np.linalg.eigh(hermitian_part(restricted))
    lam_b = float(evals[0])
    part_b = lam_b >= -_AUDIT_TOL
    witness = None if part_b else Z @ evecs[:, 0]
    residuals = np.array([
        abs(2 * np.real(np.vdot(WC @ g, WB1 @ g)) - np.real(np.vdot(g, Xi @ g))) for g in Z.T
    ])

    zetas = np.linspace(spec.a, spec.b, max(2, n_zeta_samples))
    conds, defective = [], []
    for z in zetas:
        _, V = np.linalg.eig(spec.P1 @ spec.H_at(z))
        c = float(np.linalg.cond(V))
        conds.append(c)
        if not c <= 1e8:
            defective.append(float(z))
    eigs = [_sorted_eigs(spec, z) for z in zetas]
    scale = max(1.0, max(float(np.max(np.abs(e))) for e in eigs))
    thr = 1e-6 * scale
    jumps = []
    for i in range(len(zetas) - 1):
        lo, hi, e_lo, e_hi = zetas[i], zetas[i + 1], eigs[i], eigs[i + 1]
        if np.max(np.abs(e_hi - e_lo)) <= thr:
            continue
        # a continuous branch has vanishing jumps under bisection, a jump persists
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            e_mid = _sorted_eigs(spec, mid)
            if np.max(np.abs(e_mid - e_lo)) >= np.max(np.abs(e_hi - e_mid)):
                hi, e_hi = mid, e_mid
            else:
                lo, e_lo = mid, e_mid
            if np.max(np.abs(e_hi - e_lo)) <= thr:
                break
        else:
            jumps.append(float(0.5 * (lo + hi)))
    part_c = not defective and not jumps
    return Assumption61Report(part_a, part_b, part_c, M_a, lam_a, rank_BC, rank_C, lam_b, Z,
                              residuals, witness, np.array(conds), tuple(jumps), tuple(defective))


def _sbp_first_derivative(N: int):
    """Diagonal SBP norm weights (unit spacing) and ``Q`` with ``Q + Q^T = diag(-1, 0.., 1)``."""
    w = np.ones(N + 1)
    w[0] = w[-1] = 0.5
    Q = 0.5 * (np.eye(N + 1, k=1) - np.eye(N + 1, k=-1))
    Q[0, 0], Q[-1, -1] = -0.5, 0.5
    lap = 2 * np.eye(N + 1) - np.eye(N + 1, k=1) - np.eye(N + 1, k=-1)
    lap[0, 0] = lap[-1, -1] = 1.0
    return w, Q, lap


def _herm_sqrt(M: np.ndarray):
    vals, vecs = np.linalg.eigh(hermitian_part(M))
    if vals[0] <= 0:
        raise ValueError("H(zeta) must be positive definite")
    root = (vecs * np.sqrt(vals)) @ vecs.conj().T
    inv_root = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return root, inv_root


@dataclass(frozen=True, eq=False)
class PHSDiscretization:
    """Passivity-preserving discretization of a :class:`PHSSpec`.

    The node state ``z`` is scaled so that ``|z|^2`` equals the discrete
    energy norm ``sum_j w_j x_j* H_j x_j`` of the physical node values ``x``.
    """

    spec: PHSSpec
    dissipation: float = 1.0
    zeta: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    A: np.ndarray = field(init=False, repr=False)
    B: np.ndarray = field(init=False, repr=False)
    C: np.ndarray = field(init=False, repr=False)
    sat_penalty: float = field(init=False)

    def __post_init__(self):
        spec = self.spec
        n, p, N = spec.n, spec.p, spec.N
        if N < 4:
            raise ValueError("need at least 4 grid cells")
        if not self.dissipation >= 0:
            raise ValueError("dissipation must be nonnegative")
        mats = boundary_matrices(spec)
        hz = (spec.b - spec.a) / N
        zeta = np.linspace(spec.a, spec.b, N + 1)
        w1, Q, lap = _sbp_first_derivative(N)
        w = hz * w1
        Hs = np.array([spec.H_at(z) for z in zeta])
        for z, Hz in zip(zeta, Hs):
            if np.max(np.abs(Hz - Hz.conj().T)) > 1e-12 or np.linalg.eigvalsh(hermitian_part(Hz))[0] <= 0:
                raise ValueError(f"H({z}) is not Hermitian positive definite")
        dtype = np.result_type(spec.P1, spec.P0, Hs, spec.WB1, spec.WB2, spec.WC, float)

        evals, evecs = np.linalg.eigh(spec.P1)
        absP1 = (evecs * np.abs(evals)) @ evecs.conj().T
        interior = (np.kron(Q, spec.P1) - 0.5 * self.dissipation * np.kron(lap, absP1)
                    + np.kron(np.diag(w), spec.P0))

        # penalty matrix Sigma = [Sigma1, Sigma2] acting on WB g~ - (u; 0)
        Xi, WB1, WB2, WC = mats["Xi"], mats["WB1"], mats["WB2"], mats["WC"]
        Q0 = 0.5 * Xi - hermitian_part(WC.conj().T @ WB1)
        sigma1 = -spec.WC.conj().T
        mu = 0.0
        if n > p:
            pinv = np.linalg.pinv(WB2)
            proj = pinv @ WB2
            worst = float(np.linalg.eigvalsh(hermitian_part(-proj @ Q0 @ proj))[-1])
            smin = float(np.linalg.svd(WB2, compute_uv=False)[-1])
            mu = (max(worst, 0.0) + 1.0) / smin ** 2
            F2 = -2.0 * Q0 @ pinv - mu * WB2.conj().T
            sigma2 = mats["R0"].conj().T @ F2
            sigma = np.hstack([sigma1, sigma2])
        else:
            sigma = sigma1
        WB_tilde = np.vstack([spec.WB1, spec.WB2])

        dim = n * (N + 1)
        T = np.zeros((2 * n, dim))
        T[:n, N * n:] = np.eye(n)
        T[n:, :n] = np.eye(n)
        E = sla.block_diag(*Hs)
        Winv = np.kron(np.diag(1.0 / w), np.eye(n))
        A_x = Winv @ (interior + T.T @ sigma @ WB_tilde @ T) @ E
        B_x = -Winv @ T.T @ sigma1
        C_x = spec.WC @ T @ E

        roots = [_herm_sqrt(wj * Hj) for wj, Hj in zip(w, Hs)]
        Ms = sla.block_diag(*[r for r, _ in roots])
        Ms_inv = sla.block_diag(*[ri for _, ri in roots])
        A = (Ms @ A_x @ Ms_inv).astype(dtype)
        B = (Ms @ B_x).astype(dtype)
        C = (C_x @ Ms_inv).astype(dtype)
        for name, value in (("zeta", zeta), ("weights", w), ("A", A), ("B", B), ("C", C),
                            ("sat_penalty", mu), ("_Hs", Hs), ("_Ms", Ms), ("_Ms_inv", Ms_inv)):
            object.__setattr__(self, name, value)

    @property
    def n_nodes(self) -> int:
        return self.spec.N + 1

    @property
    def state_dim(self) -> int:
        return self.spec.n * self.n_nodes

    @property
    def boundary_node(self) -> BoundaryNode:
        """Boundary node on ``(z, beta)`` with ``G = beta``, ``L = (Az + B beta; 0)``, ``K = Cz``."""
        n, p = self.state_dim, self.spec.p
        L = np.block([[self.A, self.B], [np.zeros((p, n)), np.zeros((p, p))]])
        G = np.hstack([np.zeros((p, n)), np.eye(p)])
        K = np.hstack([self.C, np.zeros((p, p))])
        return BoundaryNode(L, G, K, G.T.copy())

    def system_node(self) -> SystemNode:
        node, keep = remove_inert_states(from_boundary_node(self.boundary_node))
        if keep.size != self.state_dim:
            raise RuntimeError("unexpected inert coordinates in the discretized node")
        return node

    def to_state(self, x_phys) -> np.ndarray:
        """Physical node values (``(N+1, n)`` or flat) to node coordinates ``z``."""
        x = np.asarray(x_phys).reshape(self.state_dim)
        return self._Ms @ x

    def to_physical(self, z) -> np.ndarray:
        return (self._Ms_inv @ np.asarray(z).reshape(self.state_dim)).reshape(self.n_nodes, self.spec.n)

    def sample(self, profiles) -> np.ndarray:
        """Node coordinates of the physical state ``x(zeta) = (f_1(zeta), ..., f_n(zeta))``."""
        x = np.array([[f(z) for f in profiles] for z in self.zeta])
        return self.to_state(x)

    def energy(self, z) -> float:
        return 0.5 * float(np.linalg.norm(z) ** 2)

    def co_energy(self, z) -> np.ndarray:
        x = self.to_physical(z)
        return np.einsum("jab,jb->ja", self._Hs, x)


def discretize(spec: PHSSpec, dissipation: float = 1.0) -> BoundaryNode:
    """Boundary node of the discretized system (see module docstring).

    Raises ``ValueError`` if Assumption (a) or (b) of the audit fails or ``N < 4``.
    """
    report = audit_assumption61(spec, n_zeta_samples=2)
    if not (report.part_a and report.part_b):
        raise ValueError("boundary conditions fail the passivity audit (parts a/b)")
    return PHSDiscretization(spec, dissipation).boundary_node


def phs_system_node(spec: PHSSpec, dissipation: float = 1.0) -> SystemNode:
    report = audit_assumption61(spec, n_zeta_samples=2)
    if not (report.part_a and report.part_b):
        raise ValueError("boundary conditions fail the passivity audit (parts a/b)")
    return PHSDiscretization(spec, dissipation).system_node()


# -- presets -------------------------------------------------------------------

def timoshenko_preset(rho=1.0, Irho=1.0, EI=1.0, Kshear=1.0, N: int = 50,
                      a: float = 0.0, b: float = 1.0) -> PHSSpec:
    """Timoshenko beam clamped at ``a`` with boundary damping/input at ``b``.

    State ``x = (w_z - phi, rho w_t, phi_z, I_rho phi_t)``; input
    ``u = (EI phi_z(b), K(w_z - phi)(b))``; output ``y = (phi_t(b), w_t(b))``.
    Coefficients are callables of ``zeta`` or constants.
    """
    rho, Irho, EI, Kshear = (_as_fn(c) for c in (rho, Irho, EI, Kshear))
    for z in np.linspace(a, b, 101):
        if min(rho(z), Irho(z), EI(z), Kshear(z)) <= 0:
            raise ValueError(f"nonpositive Timoshenko coefficient at zeta={z}")
    P1 = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float)
    P0 = np.array([[0, 0, 0, -1], [0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0]], dtype=float)

    def H(z):
        return np.diag([Kshear(z), 1.0 / rho(z), EI(z), 1.0 / Irho(z)])

    WB1 = np.zeros((2, 8))
    WB1[0, 2] = WB1[1, 0] = 1.0
    WB2 = np.zeros((2, 8))
    WB2[0, 5] = WB2[1, 7] = 1.0
    WC = np.zeros((2, 8))
    WC[0, 3] = WC[1, 1] = 1.0
    return PHSSpec(4, 2, P1, P0, H, a, b, WB1, WB2, WC, N, name="timoshenko")


def transport_preset(N: int = 50, H=1.0, a: float = 0.0, b: float = 1.0) -> PHSSpec:
    """``x_t = (H x)_zeta`` with inflow ``(Hx)(b) = u`` and output ``y = (Hx)(b) - (Hx)(a)``."""
    Hf = _as_fn(H)
    return PHSSpec(1, 1, np.array([[1.0]]), np.array([[0.0]]),
                   lambda z: np.array([[Hf(z)]]), a, b,
                   np.array([[1.0, 0.0]]), np.zeros((0, 2)), np.array([[1.0, -1.0]]), N,
                   name="transport")


def _quadrature(spec: PHSSpec, state):
    N, n = spec.N, spec.n
    x = np.asarray(state)
    if x.size != n * (N + 1):
        raise ValueError(f"state has {x.size} entries, expected {n * (N + 1)}")
    x = x.reshape(N + 1, n)
    zeta = np.linspace(spec.a, spec.b, N + 1)
    w, _, _ = _sbp_first_derivative(N)
    w = w * (spec.b - spec.a) / N
    return sum(wj * float(np.real(np.vdot(xj, spec.H_at(zj) @ xj))) for wj, zj, xj in zip(w, zeta, x))


def timoshenko_energy(state, spec: PHSSpec) -> float:
    """``1/2 int x* H x`` by the trapezoidal rule on physical node values."""
    return 0.5 * _quadrature(spec, state)


def timoshenko_distance(state1, state2, spec: PHSSpec) -> float:
    """Squared energy distance of two physical states (twice the energy of the difference)."""
    return 2.0 * timoshenko_energy(np.asarray(state2) - np.asarray(state1), spec)
