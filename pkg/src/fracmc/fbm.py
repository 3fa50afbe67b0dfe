"""
Fractional Brownian motion on uniform grids.

Samplers
--------
``davies_harte``      exact, circulant embedding of fGn + FFT, O(n log n) per path
``cholesky_fbm``      exact, dense Cholesky of the covariance, O(n^2) per path (n <= 2048)
``hybrid_kernel_fbm`` Volterra discretisation against the Molchan-Golosov kernel,
                      ``B^H(t_k) = sum_{i<k} w_{k,i} dB_i`` with each weight the
                      RMS of the kernel over its cell; also returns the dB_i

Each sampler has a generator class holding its immutable tables (eigenvalues,
Cholesky factor, kernel weights) and a ``sample(source, n_paths)`` method
returning an ``(n_paths, n + 1)`` array. Normals are drawn path by path, so
``sample(src, 2)`` equals two consecutive ``sample(src, 1)`` calls.

Normal consumption per path:

* Davies-Harte: ``2n`` normals ``[V_0, V_n, Re V_1, Im V_1, ..., Re V_{n-1}, Im V_{n-1}]``
* Cholesky: ``n`` normals, one per grid point ``t_1..t_n``
* hybrid: ``n`` normals, ``dB_i = sqrt(dt) * z_i`` for ``i = 0..n-1``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import NegativeEigenvalue, NoConvergence, NotPositiveDefinite, SingularPoint

__all__ = [
    "TimeGrid",
    "FbmPath",
    "fbm_covariance",
    "fbm_covariance_matrix",
    "fgn_autocovariance",
    "circulant_eigenvalues",
    "DaviesHarte",
    "Cholesky",
    "HybridKernel",
    "davies_harte",
    "cholesky_fbm",
    "hybrid_kernel_fbm",
    "c_H",
    "gauss_2f1",
    "molchan_golosov_kernel",
    "sampler",
    "SCHEMES",
]

CHOLESKY_MAX_N = 2048
EIG_RTOL = 1e-10
SCHEMES = ("davies-harte", "cholesky", "hybrid")
_CHUNK = 4096


def _check_hurst(H):
    if not 0.0 < H < 1.0:
        raise ValueError(f"Hurst parameter must lie in (0, 1), got {H}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_k = k T / n`` of ``[0, T]``."""

    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n + 1) * self.T / self.n
        t[-1] = self.T
        return t


@dataclass
class FbmPath:
    grid: TimeGrid
    H: float
    values: np.ndarray
    driving_increments: np.ndarray | None = field(default=None)

    def __post_init__(self):
        _check_hurst(self.H)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n + 1,):
            raise ValueError("values must have length n + 1")
        if self.values[0] != 0.0:
            raise ValueError("fBM paths start at 0")
        if self.driving_increments is not None and len(self.driving_increments) != self.grid.n:
            raise ValueError("driving increments must have length n")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


# --------------------------------------------------------------------------
# covariances
# --------------------------------------------------------------------------


def fbm_covariance(s, t, H):
    """``E[W_s W_t] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * H
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fbm_covariance_matrix(times, H) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return fbm_covariance(times[:, None], times[None, :], H)


def fgn_autocovariance(k, H):
    """Autocovariance of unit-spacing fractional Gaussian noise at lag ``k``."""
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * H
    out = 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)
    return float(out) if out.ndim == 0 else out


def circulant_eigenvalues(n: int, H: float) -> np.ndarray:
    """Eigenvalues of the order-``2n`` circulant embedding of fGn lags ``0..n``.

    Values within ``EIG_RTOL * max`` below zero are clamped to zero;
    anything more negative raises :class:`NegativeEigenvalue`.
    """
    _check_hurst(H)
    r = fgn_autocovariance(np.arange(n + 1), H)
    row = np.concatenate([r, r[n - 1:0:-1]])
    lam = np.fft.fft(row).real
    tol = EIG_RTOL * lam.max()
    if lam.min() < -tol:
        raise NegativeEigenvalue(f"circulant eigenvalue {lam.min():.3e} < 0 (n={n}, H={H})")
    return np.maximum(lam, 0.0)


# --------------------------------------------------------------------------
# exact samplers
# --------------------------------------------------------------------------


class DaviesHarte:
    """Exact fBM sampler by circulant embedding."""

    def __init__(self, grid: TimeGrid, H: float):
        _check_hurst(H)
        self.grid, self.H = grid, float(H)
        n = grid.n
        lam = circulant_eigenvalues(n, H)
        self.eigenvalues = lam
        self._a0 = math.sqrt(lam[0] / (2 * n))
        self._an = math.sqrt(lam[n] / (2 * n))
        self._ak = np.sqrt(lam[1:n] / (4 * n))
        self._scale = grid.dt**H

    normals_per_path = property(lambda self: 2 * self.grid.n)

    def fgn(self, z: np.ndarray) -> np.ndarray:
        """Unit-spacing fGn from a ``(paths, 2n)`` block of normals."""
        n = self.grid.n
        m = z.shape[0]
        w = np.zeros((m, 2 * n), dtype=complex)
        w[:, 0] = self._a0 * z[:, 0]
        w[:, n] = self._an * z[:, 1]
        if n > 1:
            wk = self._ak * (z[:, 2::2] + 1j * z[:, 3::2])
            w[:, 1:n] = wk
            w[:, n + 1:] = np.conj(wk[:, ::-1])
        return np.fft.fft(w, axis=1).real[:, :n]

    def sample(self, source, n_paths: int = 1) -> np.ndarray:
        n = self.grid.n
        out = np.zeros((n_paths, n + 1))
        for lo in range(0, n_paths, _CHUNK):
            hi = min(lo + _CHUNK, n_paths)
            z = source.normals((hi - lo) * 2 * n).reshape(hi - lo, 2 * n)
            np.cumsum(self.fgn(z), axis=1, out=out[lo:hi, 1:])
        out[:, 1:] *= self._scale
        return out


class Cholesky:
    """Exact fBM sampler ``L z`` with ``L L^T = [gamma(t_i, t_j)]``, ``i, j >= 1``."""

    def __init__(self, grid: TimeGrid, H: float):
        _check_hurst(H)
        if grid.n > CHOLESKY_MAX_N:
            raise ValueError(f"cholesky_fbm is limited to n <= {CHOLESKY_MAX_N} (got {grid.n})")
        self.grid, self.H = grid, float(H)
        cov = fbm_covariance_matrix(grid.times[1:], H)
        try:
            self.factor = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from exc

    normals_per_path = property(lambda self: self.grid.n)

    def sample(self, source, n_paths: int = 1) -> np.ndarray:
        n = self.grid.n
        out = np.zeros((n_paths, n + 1))
        for lo in range(0, n_paths, _CHUNK):
            hi = min(lo + _CHUNK, n_paths)
            z = source.normals((hi - lo) * n).reshape(hi - lo, n)
            out[lo:hi, 1:] = z @ self.factor.T
        return out


# --------------------------------------------------------------------------
# Molchan-Golosov kernel
# --------------------------------------------------------------------------


def c_H(H: float) -> float:
    _check_hurst(H)
    num = 2.0 * H * math.gamma(1.5 - H)
    den = math.gamma(2.0 - 2.0 * H) * math.gamma(H + 0.5)
    return math.sqrt(num / den)


def _series_2f1(a, b, c, z, rtol, max_terms, alternating):
    # Defining series. Once every Pochhammer factor is positive the tail is
    # alternating (z < 0) or bounded geometrically by the term ratio (z >= 0).
    z = np.asarray(z, dtype=float).ravel()
    total = np.ones(z.size)
    idx = np.arange(z.size)
    zz = z.copy()
    term = np.ones(z.size)
    acc = np.ones(z.size)
    j0 = int(max(0.0, math.ceil(-a), math.ceil(-b), math.ceil(-c))) + 1
    for j in range(max_terms):
        if idx.size == 0:
            return total
        term = term * ((a + j) * (b + j) / ((c + j) * (j + 1))) * zz
        acc = acc + term
        done = term == 0
        if j + 1 >= j0:
            r = abs((a + j + 1) * (b + j + 1) / ((c + j + 1) * (j + 2))) * np.abs(zz)
            if alternating:
                bound = np.where(r < 1, np.abs(term), np.inf)
            else:
                r = np.maximum(r, zz)
                bound = np.where(r < 1, np.abs(term) * r / (1 - r), np.inf)
            done |= bound <= rtol * np.abs(acc)
        if done.any():
            total[idx[done]] = acc[done]
            keep = ~done
            idx, zz, term, acc = idx[keep], zz[keep], term[keep], acc[keep]
    if idx.size == 0:
        return total
    raise NoConvergence(f"2F1 series did not converge in {max_terms} terms")


_CONNECT_W = 0.9
# the Pfaff argument z/(z-1) is smaller than |z| for every z < 0; switching
# at -1/2 keeps the direct alternating series away from its slow |z| -> 1 end
_PFAFF_BELOW = -0.5


def _connection_near_one(a, b, c, v, rtol, max_terms):
    # F(a,b;c;1-v) through the w -> 1 - w connection formula (c - a - b not an
    # integer); both series then run in v <= 0.1.
    s = c - a - b
    g1 = math.gamma(c) * math.gamma(s) * special.rgamma(c - a) * special.rgamma(c - b)
    g2 = math.gamma(c) * math.gamma(-s) * special.rgamma(a) * special.rgamma(b)
    f1 = _series_2f1(a, b, 1.0 - s, v, rtol, max_terms, alternating=False)
    f2 = _series_2f1(c - a, c - b, 1.0 + s, v, rtol, max_terms, alternating=False)
    return g1 * f1 + g2 * v**s * f2


def gauss_2f1(a, b, c, z, rtol: float = 1e-12, max_terms: int = 1_000_000):
    """Gauss hypergeometric function ``2F1(a, b; c; z)`` for real ``z <= 0``.

    ``-1/2 <= z <= 0`` sums the defining series directly; ``z < -1/2`` goes
    through the Pfaff transformation
    ``F(a, b; c; z) = (1 - z)^(-a) F(a, c - b; c; z / (z - 1))``
    whose argument lies in ``(1/3, 1)``. Transformed arguments at or above
    0.9 are mapped once more through the ``w -> 1 - w`` connection formula
    (when ``c - a - b`` is not an integer), which keeps arguments with
    ``|z|`` in the thousands and beyond cheap.
    """
    if c <= 0 and float(c).is_integer():
        raise ValueError("c must not be a non-positive integer")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr > 0) or np.any(np.isnan(z_arr)):
        raise ValueError("gauss_2f1 is implemented for z <= 0 only")
    if a == 0 or b == 0:
        # every term past the constant vanishes
        return 1.0 if z_arr.ndim == 0 else np.ones(z_arr.shape)
    flat = z_arr.ravel()
    out = np.empty(flat.size)
    near = flat >= _PFAFF_BELOW
    if near.any():
        zn = flat[near]
        res = np.ones(zn.size)
        neg = zn < 0
        res[neg] = _series_2f1(a, b, c, zn[neg], rtol, max_terms, alternating=True)
        out[near] = res
    far = ~near
    if far.any():
        zf = flat[far]
        w = zf / (zf - 1.0)
        f = np.empty(zf.size)
        b2 = c - b
        s = c - a - b2
        close = w >= _CONNECT_W if not float(s).is_integer() else np.zeros(w.size, bool)
        f[~close] = _series_2f1(a, b2, c, w[~close], rtol, max_terms, alternating=False)
        if close.any():
            f[close] = _connection_near_one(a, b2, c, 1.0 / (1.0 - zf[close]), rtol, max_terms)
        out[far] = (1.0 - zf) ** (-a) * f
    if z_arr.ndim == 0:
        return float(out[0])
    return out.reshape(z_arr.shape)


def molchan_golosov_kernel(t, s, H):
    """``K(t, s) = c_H (t-s)^{H-1/2} F(H-1/2, 1/2-H; H+1/2; 1 - t/s)`` on ``0 < s < t``.

    Zero for ``s`` outside ``(0, t]``. At ``s = t`` the kernel is 1 for
    ``H = 1/2``, 0 for ``H > 1/2`` and singular for ``H < 1/2``.
    """
    _check_hurst(H)
    t_arr, s_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    out = np.zeros(t_arr.shape)
    inside = (s_arr > 0) & (s_arr < t_arr)
    diag = (s_arr > 0) & (s_arr == t_arr)
    if diag.any():
        if H < 0.5:
            raise SingularPoint("Molchan-Golosov kernel diverges at s = t for H < 1/2")
        out[diag] = 1.0 if H == 0.5 else 0.0
    if inside.any():
        ti, si = t_arr[inside], s_arr[inside]
        if H == 0.5:
            out[inside] = 1.0
        else:
            f = gauss_2f1(H - 0.5, 0.5 - H, H + 0.5, np.minimum(1.0 - ti / si, 0.0))
            out[inside] = c_H(H) * (ti - si) ** (H - 0.5) * f
    if out.ndim == 0:
        return float(out)
    return out


# --------------------------------------------------------------------------
# hybrid kernel scheme
# --------------------------------------------------------------------------

_JACOBI_NODES = 40
_LEGENDRE_NODES = 16


def _last_cell_moments(n: int, H: float) -> np.ndarray:
    """``int_{k-1}^k K(k, x)^2 dx`` for k = 1..n on the unit grid.

    Leading term ``c_H^2 / (2H)`` from ``(k - x)^{2H-1}`` in closed form plus a
    Gauss-Jacobi correction for ``c_H^2 (k - x)^{2H-1} (F^2 - 1)``.
    """
    out = np.empty(n)
    out[0] = 1.0  # int_0^1 K(1, x)^2 dx = 1^{2H}
    if n > 1:
        y, omega = special.roots_jacobi(_JACOBI_NODES, 2.0 * H - 1.0, 0.0)
        kd = np.arange(2, n + 1, dtype=float)[:, None]
        x = kd - 0.5 * (1.0 - y[None, :])
        f = gauss_2f1(H - 0.5, 0.5 - H, H + 0.5, 1.0 - kd / x)
        corr = 2.0 ** (-2.0 * H) * ((f**2 - 1.0) @ omega)
        out[1:] = c_H(H) ** 2 * (1.0 / (2.0 * H) + corr)
    return out


@lru_cache(maxsize=32)
def _unit_kernel_weights(n: int, H: float) -> np.ndarray:
    """Weights on the unit grid ``t_k = k`` (rows k = 1..n, columns i = 0..n-1).

    Every weight is the root mean square of the kernel over its cell,
    ``w[k, i] = (int_i^{i+1} K(k, x)^2 dx)^{1/2}`` (the kernel is positive), so
    each row reproduces ``Var B^H(k) = k^{2H}``. The last cell uses
    :func:`_last_cell_moments`, interior cells Gauss-Legendre, and the first
    cell, where the kernel blows up like ``x^{H-1/2}``, is closed from the
    identity ``sum_i int K^2 = k^{2H}``.
    """
    m = np.zeros((n, n))
    if H == 0.5:
        m[np.tril_indices(n)] = 1.0
        return m

    diag = _last_cell_moments(n, H)
    m[np.arange(n), np.arange(n)] = diag

    y, omega = special.roots_legendre(_LEGENDRE_NODES)
    mid = 0.5 * (y + 1.0)
    rows, cols = np.tril_indices(n, -1)
    inner = cols >= 1
    rows, cols = rows[inner], cols[inner]
    step = 1 << 16
    for lo in range(0, rows.size, step):
        r, c = rows[lo:lo + step], cols[lo:lo + step]
        t = (r + 1.0)[:, None]
        x = c[:, None] + mid[None, :]
        kern = molchan_golosov_kernel(t, x, H)
        m[r, c] = 0.5 * (kern**2 @ omega)

    k = np.arange(2, n + 1)
    first = k ** (2.0 * H) - m[1:, 1:].sum(axis=1)
    m[1:, 0] = first
    if np.any(first <= 0):
        raise NoConvergence("kernel cell moments inconsistent with the variance identity")
    return np.sqrt(m)


class HybridKernel:
    """fBM as ``B^H(t_k) = sum_{i<k} w_{k,i} dB_i`` with Molchan-Golosov weights."""

    def __init__(self, grid: TimeGrid, H: float):
        _check_hurst(H)
        self.grid, self.H = grid, float(H)
        self.unit_weights = _unit_kernel_weights(grid.n, float(H))
        self.unit_weights.setflags(write=False)

    normals_per_path = property(lambda self: self.grid.n)

    @property
    def weights(self) -> np.ndarray:
        """Weights applied to ``dB_i`` on the actual grid."""
        return self.grid.dt ** (self.H - 0.5) * self.unit_weights

    def from_normals(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dt = self.grid.dt
        dB = z * math.sqrt(dt)
        values = np.zeros((z.shape[0], self.grid.n + 1))
        if self.H == 0.5:
            # K = 1: the path is the running sum of its own increments, bit for bit
            np.cumsum(dB, axis=1, out=values[:, 1:])
        else:
            values[:, 1:] = (z @ self.unit_weights.T) * dt**self.H
        return values, dB

    def sample_with_increments(self, source, n_paths: int = 1) -> tuple[np.ndarray, np.ndarray]:
        n = self.grid.n
        values = np.zeros((n_paths, n + 1))
        dB = np.empty((n_paths, n))
        for lo in range(0, n_paths, _CHUNK):
            hi = min(lo + _CHUNK, n_paths)
            z = source.normals((hi - lo) * n).reshape(hi - lo, n)
            values[lo:hi], dB[lo:hi] = self.from_normals(z)
        return values, dB

    def sample(self, source, n_paths: int = 1) -> np.ndarray:
        return self.sample_with_increments(source, n_paths)[0]


@lru_cache(maxsize=16)
def _cached(scheme, n, T, H):
    cls = {"davies-harte": DaviesHarte, "cholesky": Cholesky, "hybrid": HybridKernel}[scheme]
    return cls(TimeGrid(T, n), H)


def sampler(scheme: str, grid: TimeGrid, H: float):
    """Shared (cached) generator object for ``scheme`` on ``grid``."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    _check_hurst(H)
    return _cached(scheme, grid.n, grid.T, float(H))


def davies_harte(grid: TimeGrid, H: float, source) -> FbmPath:
    return FbmPath(grid, H, sampler("davies-harte", grid, H).sample(source, 1)[0])


def cholesky_fbm(grid: TimeGrid, H: float, source) -> FbmPath:
    return FbmPath(grid, H, sampler("cholesky", grid, H).sample(source, 1)[0])


def hybrid_kernel_fbm(grid: TimeGrid, H: float, source) -> FbmPath:
    if grid.n < 2:
        raise ValueError("the hybrid scheme needs n >= 2")
    values, dB = sampler("hybrid", grid, H).sample_with_increments(source, 1)
    return FbmPath(grid, H, values[0], dB[0])
