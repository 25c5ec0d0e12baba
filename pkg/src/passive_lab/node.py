"""Finite-dimensional system nodes ``(A, B, C, D)`` and boundary nodes ``(G, L, K)``.

A node is impedance passive when, for all ``(x, u)``,
``Re<Ax + Bu, x> <= Re<Cx + Du, u>``, i.e. when the Hermitian matrix

    [[A + A*, B - C*], [B* - C, -(D + D*)]]

is negative semidefinite.  Eigenvalue tests use dense solvers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

__all__ = [
    "LMI_TOLERANCE",
    "MAX_STATE_DIM",
    "SpectrumError",
    "SystemNode",
    "BoundaryNode",
    "impedance_passivity_margin",
    "boundary_passivity_margin",
    "transfer_function",
    "coercivity_margin",
    "from_boundary_node",
    "remove_inert_states",
    "negative_feedback_closed_loop",
    "spectral_abscissa",
    "hermitian_part",
    "read_matrix",
    "write_matrix",
    "format_matrix",
    "parse_matrix",
]

LMI_TOLERANCE = 1e-10
MAX_STATE_DIM = 5000


class SpectrumError(ValueError):
    """Raised when a shifted matrix ``lambda - A`` is numerically singular."""


def hermitian_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def _matrix(M, shape=None, name="matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M))
    if not np.issubdtype(M.dtype, np.inexact):
        M = M.astype(float)
    if shape is not None and M.shape != shape:
        raise ValueError(f"{name} has shape {M.shape}, expected {shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _check_size(n: int) -> None:
    if n > MAX_STATE_DIM:
        raise ValueError(f"state dimension {n} exceeds the dense-solver cap {MAX_STATE_DIM}")


@dataclass(frozen=True, eq=False)
class SystemNode:
    """Matrix quadruple of ``x' = Ax + Bu, y = Cx + Du`` on ``C^n`` with ports ``C^m``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        B = _matrix(B, name="B")
        m = B.shape[1]
        C = np.asarray(self.C)
        if C.ndim < 2 and C.size == m * n:
            C = C.reshape(m, n)
        C = _matrix(C, (m, n), "C")
        D = _matrix(self.D, (m, m), "D")
        if B.shape != (n, m):
            raise ValueError(f"B has shape {B.shape}, expected {(n, m)}")
        _check_size(n)
        for name, M in zip("ABCD", (A, B, C, D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def dtype(self):
        return np.result_type(self.A, self.B, self.C, self.D)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(np.empty(0, dtype=self.dtype))

    def lmi_matrix(self) -> np.ndarray:
        A, B, C, D = self.A, self.B, self.C, self.D
        return np.block([[A + A.conj().T, B - C.conj().T],
                         [B.conj().T - C, -(D + D.conj().T)]])

    def is_passive(self, tol: float = LMI_TOLERANCE) -> bool:
        return impedance_passivity_margin(self) <= tol

    def __repr__(self) -> str:
        return f"SystemNode(n={self.n}, m={self.m})"


@dataclass(frozen=True, eq=False)
class BoundaryNode:
    """Boundary node ``(G, L, K)`` with a right inverse ``Gr`` of ``G``.

    The state space is ``C^n`` with the Euclidean inner product; ``G`` and
    ``K`` map states to the boundary input and output spaces ``C^m``.
    """

    L: np.ndarray
    G: np.ndarray
    K: np.ndarray
    Gr: np.ndarray

    def __post_init__(self):
        L = _matrix(self.L, name="L")
        n = L.shape[0]
        if L.shape != (n, n):
            raise ValueError(f"L must be square, got {L.shape}")
        G = _matrix(self.G, name="G")
        m = G.shape[0]
        G = _matrix(G, (m, n), "G")
        K = _matrix(self.K, (m, n), "K")
        Gr = _matrix(self.Gr, (n, m), "Gr")
        if np.linalg.matrix_rank(G) != m:
            raise ValueError("G must have full row rank")
        _check_size(n)
        for name, M in zip(("L", "G", "K", "Gr"), (L, G, K, Gr)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[0]

    def right_inverse_defect(self) -> float:
        return float(np.max(np.abs(self.G @ self.Gr - np.eye(self.m))))

    def passivity_form(self) -> np.ndarray:
        """``(L + L*)/2 - (K*G + G*K)/2``; passive iff negative semidefinite."""
        KG = self.K.conj().T @ self.G
        return hermitian_part(self.L) - hermitian_part(KG)

    def __repr__(self) -> str:
        return f"BoundaryNode(n={self.n}, m={self.m})"


def impedance_passivity_margin(node: SystemNode) -> float:
    """Largest eigenvalue of the passivity LMI matrix (``<= tol`` means passive)."""
    return float(np.linalg.eigvalsh(node.lmi_matrix())[-1])


def boundary_passivity_margin(bnode: BoundaryNode) -> float:
    return float(np.linalg.eigvalsh(bnode.passivity_form())[-1])


def _shifted_solve(lam: complex, A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    M = lam * np.eye(n) - A
    with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            X = sla.solve(M, rhs)
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
            raise SpectrumError(f"lambda={lam} is (numerically) in the spectrum of A") from exc
    # scipy's diagonal shortcut returns inf instead of raising
    if not np.all(np.isfinite(X)):
        raise SpectrumError(f"lambda={lam} is (numerically) in the spectrum of A")
    return X


def transfer_function(node: SystemNode, lam: complex) -> np.ndarray:
    """``P(lambda) = C (lambda - A)^{-1} B + D``."""
    return node.C @ _shifted_solve(lam, node.A, node.B) + node.D


def coercivity_margin(node: SystemNode, lam: float) -> float:
    """Smallest eigenvalue of ``Re P(lambda)``; positive values certify coercivity."""
    if not lam > 0:
        raise ValueError("lambda must be a positive real")
    return float(np.linalg.eigvalsh(hermitian_part(transfer_function(node, lam)))[0])


def from_boundary_node(bnode: BoundaryNode, tol: float = 1e-12) -> SystemNode:
    """System node of ``S = (L; K)(I; G)^{-1}`` extended to all of ``C^n x C^m``.

    With ``Pi = I - Gr G`` the node is ``A = L Pi``, ``B = L Gr``,
    ``C = K Pi``, ``D = K Gr``; on ``u = Gx`` it reproduces ``(Lx, Kx)``.
    """
    defect = bnode.right_inverse_defect()
    if defect > tol:
        raise ValueError(f"G @ Gr differs from the identity by {defect:.3e}")
    Pi = np.eye(bnode.n) - bnode.Gr @ bnode.G
    return SystemNode(bnode.L @ Pi, bnode.L @ bnode.Gr, bnode.K @ Pi, bnode.K @ bnode.Gr)


def remove_inert_states(node: SystemNode, tol: float = 0.0) -> tuple[SystemNode, np.ndarray]:
    """Drop state coordinates that neither move nor influence anything.

    A coordinate ``i`` is inert when row ``i`` of ``[A, B]`` and column
    ``i`` of ``[A; C]`` vanish (up to ``tol``).  Returns the reduced node
    and the indices of the kept coordinates.
    """
    rows = np.max(np.abs(np.hstack([node.A, node.B])), axis=1) <= tol
    cols = np.max(np.abs(np.vstack([node.A, node.C])), axis=0) <= tol
    keep = np.flatnonzero(~(rows & cols))
    A = node.A[np.ix_(keep, keep)]
    return SystemNode(A, node.B[keep], node.C[:, keep], node.D), keep


def negative_feedback_closed_loop(node: SystemNode) -> np.ndarray:
    """Generator ``A_K = A - B (I + D)^{-1} C`` of the loop closed by ``u = -y + v``."""
    I = np.eye(node.m)
    with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            X = sla.solve(I + node.D, node.C)
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
            raise ValueError("I + D is singular; the node cannot be passive") from exc
    if not np.all(np.isfinite(X)):
        raise ValueError("I + D is singular; the node cannot be passive")
    return node.A - node.B @ X


def spectral_abscissa(M: np.ndarray) -> float:
    """``max Re(eig(M))``; Hermitian inputs use the symmetric eigensolver."""
    M = _matrix(M, name="M")
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    try:
        if np.allclose(M, M.conj().T, atol=1e-14 * scale, rtol=0):
            return float(np.linalg.eigvalsh(hermitian_part(M))[-1])
        return float(np.max(np.linalg.eigvals(M).real))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("eigensolver failed") from exc


# -- plain-text matrix files ---------------------------------------------------

def _format_entry(z: complex) -> str:
    z = complex(z)
    if z.imag == 0:
        return repr(float(z.real))
    return f"{float(z.real)!r}{'+' if z.imag >= 0 else '-'}{abs(float(z.imag))!r}i"


def format_matrix(M) -> str:
    """One row per line, entries separated by spaces, complex entries as ``a+bi``."""
    M = np.atleast_2d(np.asarray(M))
    return "\n".join(" ".join(_format_entry(z) for z in row) for row in M) + "\n"


def _parse_entry(token: str) -> complex:
    t = token.strip().replace("I", "i")
    if t.endswith("i"):
        t = t[:-1] + "j"
        if t in ("j", "+j", "-j"):
            t = t.replace("j", "1j")
    return complex(t)


def parse_matrix(text: str) -> np.ndarray:
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        rows.append([_parse_entry(tok) for tok in line.replace(",", " ").split()])
    if not rows:
        raise ValueError("empty matrix")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("ragged matrix rows")
    M = np.array(rows, dtype=complex)
    if np.all(M.imag == 0):
        return M.real.copy()
    return M


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def write_matrix(path, M) -> None:
    Path(path).write_text(format_matrix(M))
