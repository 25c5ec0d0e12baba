"""Heat equation on a rectangle with a collocated Neumann boundary port.

The PDE is ``x_t = Laplace x`` with ``dx/dn = b(zeta) u`` on the boundary and
output ``y = int b x dzeta``.  Cells are centred on an ``Nx x Ny`` grid; the
boundary faces are enumerated counter-clockwise starting at the lower-left
corner (bottom, right, top, left) and ``b`` is sampled at their midpoints.

Node coordinates are ``z = sqrt(dx dy) x`` so that ``|z|`` is the discrete
``L^2`` norm.  In these coordinates ``A`` is the (symmetric) finite-volume
Neumann Laplacian, ``B = C^T`` and ``D = 0``, and the identity

    Re<Az + Bu, z> = Re(u conj(Cz)) - |grad_h x|^2

holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .node import SystemNode, spectral_abscissa

__all__ = [
    "HeatSpec",
    "boundary_faces",
    "boundary_profile",
    "heat_spec",
    "discretize",
    "gradient_energy",
    "closed_loop_AK_report",
    "weak_residual",
    "constant_test_vector",
    "laplacian_eigenvector",
    "constant_state",
    "bump_state",
    "random_state",
]

EDGES = ("bottom", "right", "top", "left")


def boundary_faces(Lx: float, Ly: float, Nx: int, Ny: int) -> dict:
    """Boundary faces in counter-clockwise order.

    Returns arrays ``cell`` (flat cell index, row-major with ``x`` fastest),
    ``length``, ``midpoint`` (``(k, 2)``), ``arc`` (arc length of the
    midpoint from the lower-left corner) and ``edge`` names.
    """
    dx, dy = Lx / Nx, Ly / Ny
    cells, lengths, mids, arcs, edges = [], [], [], [], []
    for i in range(Nx):
        cells.append(i), lengths.append(dx), mids.append(((i + 0.5) * dx, 0.0))
        arcs.append((i + 0.5) * dx), edges.append("bottom")
    for j in range(Ny):
        cells.append(j * Nx + Nx - 1), lengths.append(dy), mids.append((Lx, (j + 0.5) * dy))
        arcs.append(Lx + (j + 0.5) * dy), edges.append("right")
    for i in reversed(range(Nx)):
        cells.append((Ny - 1) * Nx + i), lengths.append(dx), mids.append(((i + 0.5) * dx, Ly))
        arcs.append(Lx + Ly + (Nx - 1 - i + 0.5) * dx), edges.append("top")
    for j in reversed(range(Ny)):
        cells.append(j * Nx), lengths.append(dy), mids.append((0.0, (j + 0.5) * dy))
        arcs.append(2 * Lx + Ly + (Ny - 1 - j + 0.5) * dy), edges.append("left")
    return {"cell": np.array(cells), "length": np.array(lengths), "midpoint": np.array(mids),
            "arc": np.array(arcs), "edge": np.array(edges)}


def boundary_profile(kind: str, Lx: float, Ly: float, Nx: int, Ny: int, **params) -> np.ndarray:
    """Sample a named profile ``b`` at the boundary face midpoints.

    ``uniform-edge(edge, value)``: ``value`` on one edge (``"all"`` for the
    whole boundary), zero elsewhere.  ``gaussian-bump(center, width,
    amplitude)``: bump in perimeter arc length (periodic).  ``zero``.
    """
    faces = boundary_faces(Lx, Ly, Nx, Ny)
    if kind == "zero":
        return np.zeros(len(faces["cell"]))
    if kind == "uniform-edge":
        edge = params.get("edge", "left")
        value = float(params.get("value", 1.0))
        if edge == "all":
            return np.full(len(faces["cell"]), value)
        if edge not in EDGES:
            raise ValueError(f"unknown edge {edge!r}")
        return np.where(faces["edge"] == edge, value, 0.0)
    if kind == "gaussian-bump":
        perimeter = 2 * (Lx + Ly)
        center = float(params.get("center", 0.0)) % perimeter
        width = float(params.get("width", 0.1 * perimeter))
        if not width > 0:
            raise ValueError("gaussian-bump width must be positive")
        d = np.abs(faces["arc"] - center)
        d = np.minimum(d, perimeter - d)
        return float(params.get("amplitude", 1.0)) * np.exp(-0.5 * (d / width) ** 2)
    raise ValueError(f"unknown boundary profile {kind!r}")


@dataclass(frozen=True, eq=False)
class HeatSpec:
    """Rectangle ``[0, Lx] x [0, Ly]`` on an ``Nx x Ny`` cell grid with port profile ``b``."""

    Lx: float
    Ly: float
    Nx: int
    Ny: int
    b: np.ndarray
    int_b_nonzero: bool = field(init=False)

    def __post_init__(self):
        if min(self.Nx, self.Ny) < 4:
            raise ValueError("grid sizes must be at least 4")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("side lengths must be positive")
        b = np.asarray(self.b, dtype=float).ravel()
        if b.size != 2 * (self.Nx + self.Ny):
            raise ValueError(f"b has {b.size} samples, expected {2 * (self.Nx + self.Ny)}")
        if not np.all(np.isfinite(b)):
            raise ValueError("b has non-finite samples")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "int_b_nonzero", abs(self.integral_b) > 1e-12)

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dy(self) -> float:
        return self.Ly / self.Ny

    @property
    def n(self) -> int:
        return self.Nx * self.Ny

    @property
    def scale(self) -> float:
        """``sqrt(dx dy)``: node coordinates are ``scale`` times cell values."""
        return float(np.sqrt(self.dx * self.dy))

    @property
    def integral_b(self) -> float:
        return float(np.dot(self.b, boundary_faces(self.Lx, self.Ly, self.Nx, self.Ny)["length"]))

    def port_weights(self) -> np.ndarray:
        """``beta_i = sum over boundary faces of cell i of |f| b_f``."""
        faces = boundary_faces(self.Lx, self.Ly, self.Nx, self.Ny)
        beta = np.zeros(self.n)
        np.add.at(beta, faces["cell"], faces["length"] * self.b)
        return beta

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xc = (np.arange(self.Nx) + 0.5) * self.dx
        yc = (np.arange(self.Ny) + 0.5) * self.dy
        X, Y = np.meshgrid(xc, yc)
        return X.ravel(), Y.ravel()


def heat_spec(Lx: float = 1.0, Ly: float = 1.0, Nx: int = 8, Ny: int = 8,
              profile: str = "uniform-edge", **params) -> HeatSpec:
    """Convenience constructor from a named boundary profile."""
    return HeatSpec(Lx, Ly, Nx, Ny, boundary_profile(profile, Lx, Ly, Nx, Ny, **params))


def _face_difference(spec: HeatSpec) -> tuple[np.ndarray, np.ndarray]:
    """Interior face differences ``Dg`` and face weights ``|f| / d``."""
    Nx, Ny = spec.Nx, spec.Ny
    rows, weights = [], []
    idx = np.arange(spec.n).reshape(Ny, Nx)
    for j in range(Ny):
        for i in range(Nx - 1):
            rows.append((idx[j, i + 1], idx[j, i]))
            weights.append(spec.dy / spec.dx)
    for j in range(Ny - 1):
        for i in range(Nx):
            rows.append((idx[j + 1, i], idx[j, i]))
            weights.append(spec.dx / spec.dy)
    Dg = np.zeros((len(rows), spec.n))
    for k, (p, q) in enumerate(rows):
        Dg[k, p], Dg[k, q] = 1.0, -1.0
    return Dg, np.array(weights)


def discretize(spec: HeatSpec) -> SystemNode:
    """Finite-volume node in ``z = sqrt(dx dy) x`` coordinates (``m = 1``)."""
    Dg, wf = _face_difference(spec)
    A = -(Dg.T * wf) @ Dg / (spec.dx * spec.dy)
    col = (spec.port_weights() / spec.scale).reshape(-1, 1)
    return SystemNode(A, col, col.T.copy(), np.zeros((1, 1)))


def gradient_energy(spec: HeatSpec, z) -> float:
    """``|grad_h x|^2 = sum over interior faces (|f|/d) |x_p - x_q|^2`` for ``x = z / scale``."""
    Dg, wf = _face_difference(spec)
    g = Dg @ (np.asarray(z) / spec.scale)
    return float(np.sum(wf * np.abs(g) ** 2))


def closed_loop_AK_report(spec: HeatSpec, zero_tol: float = 1e-10) -> tuple[float, bool]:
    """Spectral abscissa of ``A_K = A - B C`` and whether ``0`` is (numerically) an eigenvalue."""
    node = discretize(spec)
    AK = node.A - node.B @ node.C
    eigs = np.linalg.eigvalsh(0.5 * (AK + AK.T))
    abscissa = spectral_abscissa(AK)
    return abscissa, bool(np.min(np.abs(eigs)) < zero_tol)


def weak_residual(traj, spec: HeatSpec, test_vectors) -> float:
    """Worst residual of the weak-solution identity over ``test_vectors``.

    For a test grid function ``v`` (cell values, length ``Nx Ny``) the
    residual at the horizon is

        <x_N - x_0, v> - sum_k h [phi_k conj(int b v) - <grad x_k^*, grad v>]

    with ``<.,.>`` the cell quadrature, the ``phi`` term held constant on each
    step and the gradient term integrated by the trapezoidal rule
    (``x_k^*`` is the mean of the two step endpoints).
    """
    if traj.states.shape[1] != spec.n:
        raise ValueError("trajectory state dimension does not match the heat grid")
    if traj.phis.shape[1] != 1:
        raise ValueError("heat trajectories carry a scalar port")
    Dg, wf = _face_difference(spec)
    x = traj.states / spec.scale
    beta = spec.port_weights()
    cell_area = spec.dx * spec.dy
    h = traj.h
    worst = 0.0
    for v in test_vectors:
        v = np.asarray(v).ravel()
        if v.size != spec.n:
            raise ValueError("test vector has the wrong length")
        gv = wf * (Dg @ v).conj()
        grad_terms = (Dg @ x.T).T @ gv
        grad_int = h * np.sum(0.5 * (grad_terms[:-1] + grad_terms[1:]))
        port_int = h * np.sum(traj.phis[:, 0]) * np.vdot(v, beta).conj()
        lhs = cell_area * np.dot(x[-1] - x[0], v.conj())
        worst = max(worst, float(abs(lhs - (port_int - grad_int))))
    return worst


# -- test functions and initial states (cell values or node coordinates) -------

def constant_test_vector(spec: HeatSpec) -> np.ndarray:
    return np.ones(spec.n)


def laplacian_eigenvector(spec: HeatSpec, kx: int = 1, ky: int = 0) -> np.ndarray:
    """Cell samples of ``cos(kx pi x / Lx) cos(ky pi y / Ly)`` (a discrete Neumann eigenvector)."""
    X, Y = spec.cell_centers()
    return np.cos(kx * np.pi * X / spec.Lx) * np.cos(ky * np.pi * Y / spec.Ly)


def constant_state(spec: HeatSpec, value: float = 1.0) -> np.ndarray:
    """Node coordinates of the constant temperature ``value``."""
    return spec.scale * np.full(spec.n, float(value))


def bump_state(spec: HeatSpec, amplitude: float = 1.0, center=None, width: float = 0.2) -> np.ndarray:
    X, Y = spec.cell_centers()
    cx, cy = center if center is not None else (0.5 * spec.Lx, 0.5 * spec.Ly)
    r2 = ((X - cx) ** 2 + (Y - cy) ** 2) / (width * max(spec.Lx, spec.Ly)) ** 2
    return spec.scale * amplitude * np.exp(-0.5 * r2)


def random_state(spec: HeatSpec, rng: np.random.Generator, amplitude: float = 1.0) -> np.ndarray:
    return spec.scale * amplitude * rng.standard_normal(spec.n)
