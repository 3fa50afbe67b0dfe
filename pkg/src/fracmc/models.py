"""
RFSV log-volatility and lognormal fSABR dynamics.

RFSV: ``sigma_t = sigma0 exp(X_t)`` with the fractional OU log-volatility
``dX = nu dW^H - alpha (X - m) dt``, stepped by Euler on a given fBM path.

fSABR: ``Y_t = alpha0 exp(nu B^H_t)`` where ``B^H`` comes from the hybrid
kernel scheme driven by ``dB``, and the log-moneyness ``X = log(S/K)`` follows
``dX = Y (rho dB + rho_bar dW) - Y^2 dt / 2`` (Euler). Per path the source
supplies ``2n`` normals: the first ``n`` drive the kernel scheme (so they are
the ``dB``), the next ``n`` give ``dW``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import GridMismatch
from .fbm import FbmPath, TimeGrid, _check_hurst, davies_harte, sampler

__all__ = [
    "RfsvParams",
    "FsabrParams",
    "ModelPath",
    "FullCircleResult",
    "simulate_rfsv",
    "simulate_fsabr",
    "fsabr_from_normals",
    "fou_stationary_variance",
    "rfsv_full_circle",
]

# default mean-reversion speed per step: alpha * dt
DEFAULT_ALPHA_DT = 5e-4


@dataclass(frozen=True)
class RfsvParams:
    """RFSV parameters. ``alpha`` is in inverse time units of the grid."""

    H: float = 0.14
    sigma0: float = 1.0
    nu: float = 0.3
    alpha: float = 0.0
    m: float = 0.0
    x0: float = 0.0

    def __post_init__(self):
        _check_hurst(self.H)
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.nu >= 0:
            raise ValueError("nu must be nonnegative")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")

    @classmethod
    def default_for(cls, grid: TimeGrid, H: float = 0.14, **kw) -> "RfsvParams":
        """``nu = 0.3``, ``alpha dt = 5e-4`` and ``m = x0`` unless overridden."""
        kw.setdefault("alpha", DEFAULT_ALPHA_DT / grid.dt)
        x0 = kw.setdefault("x0", 0.0)
        kw.setdefault("m", x0)
        return cls(H=H, **kw)


@dataclass(frozen=True)
class FsabrParams:
    S0: float = 1.0
    alpha0: float = 0.3
    nu: float = 0.0
    rho: float = 0.0
    H: float = 0.5

    def __post_init__(self):
        _check_hurst(self.H)
        if not self.S0 > 0:
            raise ValueError("S0 must be positive")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not self.nu >= 0:
            raise ValueError("nu must be nonnegative")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")

    @property
    def rho_bar(self) -> float:
        return math.sqrt(1.0 - self.rho * self.rho)

    Y0 = property(lambda self: self.alpha0)


@dataclass
class ModelPath:
    """A simulated model path (or a batch: arrays of shape ``(N, n + 1)``).

    For RFSV ``X`` is the log-volatility and ``Y = sigma0 exp(X)``; for fSABR
    ``X`` is the log-moneyness and ``Y`` the volatility. ``fbm`` holds the
    driving fBM values, ``dB``/``dW`` the Brownian increments when known.
    """

    grid: TimeGrid
    X: np.ndarray
    Y: np.ndarray
    fbm: FbmPath | np.ndarray
    dB: np.ndarray | None = field(default=None, repr=False)
    dW: np.ndarray | None = field(default=None, repr=False)
    model: str = "rfsv"

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return 1 if self.X.ndim == 1 else self.X.shape[0]

    def path(self, i: int) -> "ModelPath":
        """The ``i``-th path of a batch as a single-path ModelPath."""
        if self.X.ndim == 1:
            if i != 0:
                raise IndexError(i)
            return self
        fb = self.fbm[i]
        return ModelPath(self.grid, self.X[i], self.Y[i], fb,
                         None if self.dB is None else self.dB[i],
                         None if self.dW is None else self.dW[i], self.model)


def fou_stationary_variance(nu: float, alpha: float, H: float) -> float:
    """Stationary variance ``nu^2 Gamma(1 + 2H) / (2 alpha^{2H})`` of the fOU process."""
    if not alpha > 0:
        raise ValueError("the stationary law needs alpha > 0")
    return nu * nu * math.gamma(1 + 2 * H) / (2 * alpha ** (2 * H))


def simulate_rfsv(params: RfsvParams, grid: TimeGrid, fbm_path, stationary_start: bool = False,
                  source=None) -> ModelPath:
    """Euler recursion ``X_{k+1} = X_k + nu dW^H_k - alpha (X_k - m) dt``.

    ``fbm_path`` is an :class:`FbmPath` or an ``(N, n + 1)`` array of fBM
    values on ``grid``. With ``alpha = 0`` the recursion telescopes and is
    evaluated as ``x0 + nu W^H`` directly. ``stationary_start`` draws ``X_0``
    from the stationary fOU law (one normal per path from ``source``).
    """
    if isinstance(fbm_path, FbmPath):
        if fbm_path.grid != grid:
            raise GridMismatch(f"fBM grid {fbm_path.grid} differs from model grid {grid}")
        if abs(fbm_path.H - params.H) > 1e-12:
            raise GridMismatch(f"fBM has H = {fbm_path.H}, model expects H = {params.H}")
        W = fbm_path.values
    else:
        W = np.asarray(fbm_path, dtype=float)
        if W.shape[-1] != grid.n + 1:
            raise GridMismatch(f"fBM values have {W.shape[-1]} points, grid has {grid.n + 1}")
    batch = W.ndim == 2
    W2 = np.atleast_2d(W)

    x0 = np.full(W2.shape[0], float(params.x0))
    if stationary_start:
        if source is None:
            raise ValueError("stationary_start needs a random source")
        sd = math.sqrt(fou_stationary_variance(params.nu, params.alpha, params.H))
        x0 = params.m + sd * source.normals(W2.shape[0])

    if params.alpha == 0:
        X = x0[:, None] + params.nu * W2
    else:
        dt = grid.dt
        a = 1.0 - params.alpha * dt
        u = params.nu * np.diff(W2, axis=1) + params.alpha * params.m * dt
        X = np.empty_like(W2)
        X[:, 0] = x0
        # X_{k+1} = a X_k + u_k as a first-order recursive filter
        X[:, 1:], _ = signal.lfilter([1.0], [1.0, -a], u, axis=1, zi=(a * x0)[:, None])
    Y = params.sigma0 * np.exp(X)
    if not batch:
        X, Y = X[0], Y[0]
    return ModelPath(grid, X, Y, fbm_path, model="rfsv")


def fsabr_from_normals(params: FsabrParams, grid: TimeGrid, z: np.ndarray, log_moneyness0=0.0):
    """fSABR paths from an ``(N, 2n)`` block of normals (see module docstring).

    Returns ``(X, Y, BH, dB, dW)``, each with a leading path axis.
    """
    n = grid.n
    z = np.atleast_2d(z)
    if z.shape[1] != 2 * n:
        raise ValueError(f"need 2n = {2 * n} normals per path, got {z.shape[1]}")
    BH, dB = sampler("hybrid", grid, params.H).from_normals(z[:, :n])
    dW = z[:, n:] * math.sqrt(grid.dt)
    Y = params.alpha0 * np.exp(params.nu * BH)
    Yk = Y[:, :-1]
    X = np.empty_like(Y)
    X[:, 0] = log_moneyness0
    step = Yk * (params.rho * dB + params.rho_bar * dW) - 0.5 * Yk * Yk * grid.dt
    X[:, 1:] = log_moneyness0 + np.cumsum(step, axis=1)
    return X, Y, BH, dB, dW


def simulate_fsabr(params: FsabrParams, grid: TimeGrid, source, K: float | None = None,
                   n_paths: int | None = None) -> ModelPath:
    """Simulate fSABR on ``grid``; ``X_0 = log(S0 / K)`` with ``K = S0`` by default.

    With ``n_paths=None`` a single path is returned, otherwise a batch.
    """
    if grid.n < 2:
        raise ValueError("the kernel scheme needs n >= 2")
    K = params.S0 if K is None else float(K)
    if not K > 0:
        raise ValueError("K must be positive")
    N = 1 if n_paths is None else int(n_paths)
    # words are checked up front so that an entropy source is left untouched on failure
    if source.normal_method == "box-muller":
        source._require(2 * grid.n * N)
    z = source.normals(2 * grid.n * N).reshape(N, 2 * grid.n)
    X, Y, BH, dB, dW = fsabr_from_normals(params, grid, z, math.log(params.S0 / K))
    if n_paths is None:
        fb = FbmPath(grid, params.H, BH[0], dB[0])
        return ModelPath(grid, X[0], Y[0], fb, fb.driving_increments, dW[0], model="fsabr")
    return ModelPath(grid, X, Y, BH, dB, dW, model="fsabr")


@dataclass
class FullCircleResult:
    scaling: object
    diff_variance: object
    peng: object
    surface: object
    path: ModelPath

    def estimates(self):
        return self.scaling, self.diff_variance, self.peng


def rfsv_full_circle(params: RfsvParams, grid: TimeGrid, source, q_list=None, lags=None,
                     dv_lags=None, peng_blocks=None) -> FullCircleResult:
    """Simulate one RFSV path and estimate H from ``log sigma`` three ways."""
    from . import hurst

    if grid.n < 2000:
        raise ValueError("the full circle needs at least 2000 samples")
    fb = davies_harte(grid, params.H, source)
    path = simulate_rfsv(params, grid, fb)
    logvol = np.log(path.Y)
    est, surface = hurst.hurst_scaling(logvol, q_list or hurst.DEFAULT_Q,
                                       lags or hurst.DEFAULT_LAGS)
    dv = hurst.hurst_difference_variance(logvol, dv_lags or hurst.DEFAULT_DV_LAGS)
    pg = hurst.hurst_peng(logvol, peng_blocks)
    return FullCircleResult(est, dv, pg, surface, path)
