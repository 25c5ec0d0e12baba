"""Monotone feedback maps on C^m and sampling falsifiers for their sector constants.

Complex vectors are plain numpy complex arrays.  Where a real-linear
representation is needed (Jacobians for Newton's method) a vector
``u in C^m`` is stacked as ``[Re u; Im u] in R^{2m}``; for real-valued
problems the plain ``R^m`` representation is used instead.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .report import FAIL, PASS, VerificationReport

__all__ = [
    "UNBOUNDED",
    "MonotoneMap",
    "RadialMap",
    "Saturation",
    "LinearGain",
    "Componentwise",
    "CustomMap",
    "saturation",
    "radial_from_scalar",
    "linear_gain",
    "zero_map",
    "componentwise",
    "custom",
    "negated",
    "deadzone",
    "check_incremental_sector",
    "check_stability_sector",
    "sample_ball",
]

#: Incremental sector constant of a map whose increments vanish identically.
UNBOUNDED = math.inf

DEFAULT_SAMPLES = 10_000
DEFAULT_RADIUS = 10.0
_SAMPLE_TOL = 1e-10


def _as_vector(u, io_dim: int) -> np.ndarray:
    u = np.asarray(u)
    if u.ndim == 0:
        u = u.reshape(1)
    if u.shape[-1] != io_dim:
        raise ValueError(f"expected vectors of length {io_dim}, got shape {u.shape}")
    if not np.issubdtype(u.dtype, np.inexact):
        u = u.astype(float)
    return u


class MonotoneMap:
    """Base class of the feedback nonlinearities ``phi: C^m -> C^m``.

    Subclasses implement :meth:`_eval` on arrays whose last axis has
    length ``io_dim`` (so a batch of row vectors evaluates in one call) and
    may override :meth:`real_jacobian`.
    """

    kind = "abstract"
    #: real inputs are mapped to real outputs
    preserves_real = True

    def __init__(self, io_dim: int, kappa: float | None = None,
                 sector: tuple[float, float, float] | None = None):
        if int(io_dim) != io_dim or io_dim < 1:
            raise ValueError("io_dim must be a positive integer")
        if kappa is not None and kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if sector is not None:
            sector = tuple(float(s) for s in sector)
            if len(sector) != 3 or min(sector) <= 0:
                raise ValueError("sector must be a triple (alpha, gamma, delta) of positive reals")
        self.io_dim = int(io_dim)
        self.kappa = None if kappa is None else float(kappa)
        self.sector = sector

    def __call__(self, u) -> np.ndarray:
        return self._eval(_as_vector(u, self.io_dim))

    def eval(self, u) -> np.ndarray:
        return self(u)

    def _eval(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def lipschitz(self) -> float | None:
        """Lipschitz bound implied by the declared ``kappa`` (``1/kappa``)."""
        if self.kappa is None:
            return None
        if self.kappa == UNBOUNDED:
            return 0.0
        if self.kappa == 0:
            return None
        return 1.0 / self.kappa

    def real_jacobian(self, w: np.ndarray) -> np.ndarray:
        """Jacobian of the real representation at ``w``.

        ``w`` has length ``m`` (real problem) or ``2m`` (stacked complex
        problem).  The default is a central finite difference.
        """
        w = np.asarray(w, dtype=float)
        d = w.size
        stacked = d == 2 * self.io_dim
        f = (lambda v: _stack(self(_unstack(v)))) if stacked else (lambda v: np.real(self(v)))
        jac = np.empty((d, d))
        for j in range(d):
            step = 1e-7 * (1.0 + abs(w[j]))
            e = np.zeros(d)
            e[j] = step
            jac[:, j] = (f(w + e) - f(w - e)) / (2 * step)
        return jac

    def describe(self) -> str:
        return f"{self.kind}(m={self.io_dim})"

    def __repr__(self) -> str:
        return (f"{type(self).__name__}(io_dim={self.io_dim}, kappa={self.kappa}, "
                f"sector={self.sector})")


def _stack(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u)
    return np.concatenate([u.real, u.imag], axis=-1)


def _unstack(w: np.ndarray) -> np.ndarray:
    m = w.shape[-1] // 2
    return w[..., :m] + 1j * w[..., m:]


class RadialMap(MonotoneMap):
    """``phi(u) = psi(|u|) u/|u|`` with ``psi`` non-decreasing and ``psi(0) = 0``."""

    kind = "radial"

    def __init__(self, io_dim: int, psi: Callable, lipschitz: float,
                 dpsi: Callable | None = None, sector=None, name: str = "psi"):
        if not lipschitz > 0:
            raise ValueError("the Lipschitz constant of psi must be positive")
        super().__init__(io_dim, kappa=1.0 / lipschitz, sector=sector)
        self.psi = psi
        self.dpsi = dpsi
        self.psi_lipschitz = float(lipschitz)
        self.name = name

    def _psi(self, r: np.ndarray) -> np.ndarray:
        out = self.psi(r)
        if np.shape(out) != np.shape(r):
            out = np.vectorize(self.psi, otypes=[float])(r)
        return np.asarray(out, dtype=float)

    def _dpsi(self, r: float) -> float:
        if self.dpsi is not None:
            return float(self.dpsi(r))
        step = 1e-7 * (1.0 + r)
        if r < step:
            return float((self._psi(np.array(r + step)) - self._psi(np.array(r))) / step)
        return float((self._psi(np.array(r + step)) - self._psi(np.array(r - step))) / (2 * step))

    def _eval(self, u):
        r = np.linalg.norm(u, axis=-1, keepdims=True)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, u * (self._psi(r) / safe), 0.0 * u)

    def real_jacobian(self, w):
        w = np.asarray(w, dtype=float)
        d = w.size
        r = float(np.linalg.norm(w))
        if r == 0.0:
            return self._dpsi(0.0) * np.eye(d)
        v = w / r
        outer = np.outer(v, v)
        return self._dpsi(r) * outer + float(self._psi(np.array(r))) / r * (np.eye(d) - outer)

    def describe(self):
        return f"radial({self.name}, L={self.psi_lipschitz:g}, m={self.io_dim})"


class Saturation(RadialMap):
    """Norm saturation at level ``bound``: ``u`` inside the ball, ``bound*u/|u|`` outside."""

    kind = "saturation"

    def __init__(self, io_dim: int = 1, bound: float = 1.0):
        if not bound > 0:
            raise ValueError("saturation bound must be positive")
        self.bound = float(bound)
        super().__init__(io_dim, psi=lambda r: np.minimum(r, self.bound), lipschitz=1.0,
                         sector=(1.0, self.bound ** 2, self.bound), name="min(r, bound)")

    def _eval(self, u):
        r = np.linalg.norm(u, axis=-1, keepdims=True)
        scale = np.where(r < self.bound, 1.0, self.bound / np.where(r > 0, r, 1.0))
        return u * scale

    def real_jacobian(self, w):
        w = np.asarray(w, dtype=float)
        d = w.size
        r = float(np.linalg.norm(w))
        # on the sphere |u| = bound the derivative from inside the ball is used
        if r <= self.bound:
            return np.eye(d)
        v = w / r
        return self.bound / r * (np.eye(d) - np.outer(v, v))

    def describe(self):
        return f"saturation(bound={self.bound:g}, m={self.io_dim})"


class LinearGain(MonotoneMap):
    """``phi(u) = k u``; monotone for ``k >= 0`` with ``kappa = 1/k``."""

    kind = "linear_gain"

    def __init__(self, io_dim: int = 1, gain: float = 1.0):
        gain = float(gain)
        if gain > 0:
            kappa, sector = 1.0 / gain, (gain, gain, 1.0)
        elif gain == 0:
            kappa, sector = UNBOUNDED, None
        else:
            kappa, sector = None, None
        super().__init__(io_dim, kappa=kappa, sector=sector)
        self.gain = gain

    def _eval(self, u):
        return self.gain * u

    def real_jacobian(self, w):
        return self.gain * np.eye(np.asarray(w).size)

    def describe(self):
        if self.gain == 0:
            return f"zero(m={self.io_dim})"
        return f"linear_gain(k={self.gain:g}, m={self.io_dim})"


class Componentwise(MonotoneMap):
    """Block-diagonal map ``phi(u) = (phi_1(u_1), ..., phi_q(u_q))``."""

    kind = "componentwise"

    def __init__(self, parts: Sequence[MonotoneMap], sector=None):
        parts = tuple(parts)
        if not parts:
            raise ValueError("componentwise map needs at least one part")
        if any(p.kappa is None for p in parts):
            raise ValueError("every part of a componentwise map must declare kappa")
        super().__init__(sum(p.io_dim for p in parts),
                         kappa=min(p.kappa for p in parts), sector=sector)
        self.parts = parts
        self.offsets = np.cumsum([0] + [p.io_dim for p in parts])
        self.preserves_real = all(p.preserves_real for p in parts)

    def _eval(self, u):
        out = np.empty(np.broadcast_shapes(u.shape), dtype=np.result_type(u.dtype, float))
        for p, lo, hi in zip(self.parts, self.offsets[:-1], self.offsets[1:]):
            out[..., lo:hi] = p._eval(u[..., lo:hi])
        return out

    def real_jacobian(self, w):
        w = np.asarray(w, dtype=float)
        d = w.size
        stacked = d == 2 * self.io_dim
        jac = np.zeros((d, d))
        for p, lo, hi in zip(self.parts, self.offsets[:-1], self.offsets[1:]):
            idx = np.arange(lo, hi)
            if stacked:
                idx = np.concatenate([idx, idx + self.io_dim])
            jac[np.ix_(idx, idx)] = p.real_jacobian(w[idx])
        return jac

    def describe(self):
        return "componentwise[" + ", ".join(p.describe() for p in self.parts) + "]"


class CustomMap(MonotoneMap):
    """Map given by an arbitrary evaluation rule (code-only extension point)."""

    kind = "custom"

    def __init__(self, io_dim: int, func: Callable, kappa=None, sector=None,
                 jacobian: Callable | None = None, preserves_real: bool = True,
                 name: str = "custom"):
        super().__init__(io_dim, kappa=kappa, sector=sector)
        self.func = func
        self.jacobian = jacobian
        self.preserves_real = preserves_real
        self.name = name

    def _eval(self, u):
        if u.ndim == 1:
            return np.asarray(self.func(u), dtype=np.result_type(u.dtype, float)).reshape(u.shape)
        return np.stack([self._eval(row) for row in u])

    def real_jacobian(self, w):
        if self.jacobian is not None:
            return np.asarray(self.jacobian(np.asarray(w, dtype=float)), dtype=float)
        return super().real_jacobian(w)

    def describe(self):
        return f"{self.name}(m={self.io_dim})"


def saturation(io_dim: int = 1, bound: float = 1.0) -> Saturation:
    """Radial saturation on ``C^io_dim`` (``kappa = 1``)."""
    return Saturation(io_dim, bound)


def radial_from_scalar(psi: Callable, lipschitz: float, io_dim: int = 1,
                       dpsi: Callable | None = None) -> RadialMap:
    """Lift a scalar non-decreasing ``psi`` with ``psi(0) = 0`` to a radial map.

    The declared incremental sector constant is ``1/lipschitz``.
    """
    if not lipschitz > 0:
        raise ValueError("the Lipschitz constant of psi must be positive")
    if abs(float(np.asarray(psi(np.array(0.0))))) > 0:
        raise ValueError("psi(0) must vanish")
    return RadialMap(io_dim, psi, lipschitz, dpsi=dpsi)


def linear_gain(gain: float, io_dim: int = 1) -> LinearGain:
    return LinearGain(io_dim, gain)


def zero_map(io_dim: int = 1) -> LinearGain:
    """The zero map; its ``kappa`` is :data:`UNBOUNDED`."""
    return LinearGain(io_dim, 0.0)


def componentwise(parts: Sequence[MonotoneMap], sector=None) -> Componentwise:
    return Componentwise(parts, sector=sector)


def custom(func: Callable, io_dim: int = 1, kappa=None, sector=None,
           jacobian: Callable | None = None, preserves_real: bool = True,
           name: str = "custom") -> CustomMap:
    return CustomMap(io_dim, func, kappa=kappa, sector=sector, jacobian=jacobian,
                     preserves_real=preserves_real, name=name)


def negated(phi: MonotoneMap) -> CustomMap:
    """``-phi``: anti-monotone, used as a negative control."""
    inner_jac = phi.real_jacobian
    return CustomMap(phi.io_dim, lambda u: -phi(u), kappa=None,
                     jacobian=lambda w: -inner_jac(w), preserves_real=phi.preserves_real,
                     name=f"negated[{phi.describe()}]")


def deadzone(width: float = 1.0, io_dim: int = 1) -> RadialMap:
    """Radial dead zone ``psi(r) = max(r - width, 0)``.

    Monotone with ``kappa = 1`` but violates the stability sector near 0.
    """
    width = float(width)
    return RadialMap(io_dim, lambda r: np.maximum(r - width, 0.0), 1.0,
                     dpsi=lambda r: 1.0 if r > width else 0.0, name=f"deadzone({width:g})")


def sample_ball(rng: np.random.Generator, n: int, io_dim: int, radius: float,
                inner: float = 0.0, field: str = "complex") -> np.ndarray:
    """Uniform samples from ``{inner <= |u| <= radius}`` in C^m (or R^m)."""
    d = 2 * io_dim if field == "complex" else io_dim
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    # radial law of the uniform distribution on a d-dimensional shell
    s = rng.uniform(size=(n, 1))
    r = (inner ** d + s * (radius ** d - inner ** d)) ** (1.0 / d)
    w = g * r
    return _unstack(w) if field == "complex" else w


def check_incremental_sector(phi: MonotoneMap, kappa: float | None = None,
                             n_samples: int = DEFAULT_SAMPLES, radius: float = DEFAULT_RADIUS,
                             seed: int = 0, field: str = "complex") -> VerificationReport:
    """Falsify ``Re<phi(u2)-phi(u1), u2-u1> >= kappa |phi(u2)-phi(u1)|^2`` by sampling.

    Pairs are drawn uniformly from the ball of the given radius.  The
    margin of each pair is the left side minus the right side; the check
    fails if any margin is below ``-1e-10 (1 + |u2-u1|^2)``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if not radius > 0:
        raise ValueError("radius must be positive")
    if kappa is None:
        kappa = phi.kappa if phi.kappa is not None else 0.0
    rng = np.random.default_rng(seed)
    u1 = sample_ball(rng, n_samples, phi.io_dim, radius, field=field)
    u2 = sample_ball(rng, n_samples, phi.io_dim, radius, field=field)
    du = u2 - u1
    dphi = phi(u2) - phi(u1)
    inner = np.real(np.sum(dphi * np.conj(du), axis=1))
    sq = np.sum(np.abs(dphi) ** 2, axis=1)
    if kappa == UNBOUNDED:
        margins = np.where(sq == 0, 0.0, -np.inf)
    else:
        margins = inner - kappa * sq
    tol = _SAMPLE_TOL * (1.0 + np.sum(np.abs(du) ** 2, axis=1))
    worst = int(np.argmin(margins + tol))
    ok = bool(np.all(margins >= -tol))
    details = {"kappa": kappa, "n_samples": n_samples, "radius": radius, "seed": seed}
    if not ok:
        details["witness"] = (u1[worst], u2[worst])
    return VerificationReport("incremental_sector", PASS if ok else FAIL,
                              float(margins[worst]), worst, _SAMPLE_TOL, details=details)


def check_stability_sector(phi: MonotoneMap, alpha: float | None = None, gamma: float | None = None,
                           delta: float | None = None, n_samples: int = DEFAULT_SAMPLES,
                           radius: float = DEFAULT_RADIUS, seed: int = 0,
                           field: str = "complex") -> VerificationReport:
    """Falsify the two-regime stability sector condition by sampling.

    Inside the ball ``|u| < delta`` the margin is ``Re<phi(u),u> - alpha|u|^2``;
    on ``delta <= |u| <= max(radius, 2 delta)`` it is ``Re<phi(u),u> - gamma``.
    ``n_samples`` points are drawn in each regime.
    """
    if (alpha, gamma, delta) == (None, None, None) and phi.sector is not None:
        alpha, gamma, delta = phi.sector
    if alpha is None or gamma is None or delta is None or min(alpha, gamma, delta) <= 0:
        raise ValueError("alpha, gamma and delta must all be positive")
    rng = np.random.default_rng(seed)
    inside = sample_ball(rng, n_samples, phi.io_dim, delta, field=field)
    # keep the open ball open
    inside = inside[np.linalg.norm(inside, axis=1) < delta]
    outside = sample_ball(rng, n_samples, phi.io_dim, max(radius, 2 * delta), inner=delta,
                          field=field)
    tol_in = _SAMPLE_TOL * (1 + np.sum(np.abs(inside) ** 2, axis=1))
    tol_out = _SAMPLE_TOL * (1 + np.sum(np.abs(outside) ** 2, axis=1))
    m_in = np.real(np.sum(phi(inside) * np.conj(inside), axis=1)) - alpha * np.sum(np.abs(inside) ** 2, axis=1)
    m_out = np.real(np.sum(phi(outside) * np.conj(outside), axis=1)) - gamma
    i_in = int(np.argmin(m_in + tol_in))
    i_out = int(np.argmin(m_out + tol_out))
    ok_in = bool(np.all(m_in >= -tol_in))
    ok_out = bool(np.all(m_out >= -tol_out))
    details = {
        "alpha": alpha, "gamma": gamma, "delta": delta, "seed": seed,
        "inside_margin": float(m_in[i_in]), "inside_pass": ok_in,
        "outside_margin": float(m_out[i_out]), "outside_pass": ok_out,
    }
    if not ok_in:
        details["inside_witness"] = inside[i_in]
    if not ok_out:
        details["outside_witness"] = outside[i_out]
    if m_in[i_in] <= m_out[i_out]:
        worst, index = float(m_in[i_in]), i_in
    else:
        worst, index = float(m_out[i_out]), n_samples + i_out
    return VerificationReport("stability_sector", PASS if ok_in and ok_out else FAIL,
                              worst, index, _SAMPLE_TOL, details=details)
