"""
Monte Carlo pricing of target-volatility options (TVOs) under fSABR.

A TVO call pays ``K sigma_bar sqrt(T) / sqrt(int_0^T Y^2 dt) * (e^{X_T} - 1)^+``
and the put ``K sqrt(int_0^T Y^2 dt) / (sigma_bar sqrt(T)) * (1 - e^{X_T})^+``,
with ``X = log(S/K)``. The integral is the left-point sum ``sum_{k<n} Y_k^2 dt``.

Paths are simulated once as ``L = X_T - X_0`` (with ``X_0 = 0``) and the
integrated variance ``I``; any strike is then priced on the same paths since
``X_T = log(S0/K) + L`` (common random numbers).

Parallel runs split the ``N`` paths into a fixed sequence of batches, each fed
by its own :func:`~fracmc.rng.substream`; the batch layout depends only on
``N`` and ``batch_size``, so results are identical for any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .batching import DEFAULT_BATCH, run_batches
from .errors import GridMismatch, ZeroRealizedVariance
from .fbm import TimeGrid, sampler
from .models import FsabrParams, ModelPath, fsabr_from_normals

__all__ = [
    "TvoSpec",
    "PriceEstimate",
    "FsabrTerminals",
    "tvo_call_payoff",
    "tvo_put_payoff",
    "tvo_payoffs",
    "black_scholes_call",
    "black_scholes_put",
    "tvo_oracle",
    "simulate_terminals",
    "price_tvo_mc",
    "strike_sweep",
    "convergence_study",
    "price_rows",
    "PRICE_COLUMNS",
    "CONVERGENCE_COLUMNS",
    "DEFAULT_BATCH",
]

PRICE_COLUMNS = ("K", "T", "side", "price", "se", "ci_lo", "ci_hi", "N", "n", "H", "rho", "nu",
                 "sigma0", "sigma_bar", "source_label")
CONVERGENCE_COLUMNS = ("N", "price", "se", "ci_lo", "ci_hi")


@dataclass(frozen=True)
class TvoSpec:
    K: float
    T: float
    sigma_bar: float
    side: str = "call"

    def __post_init__(self):
        if not (self.K > 0 and self.T > 0 and self.sigma_bar > 0):
            raise ValueError("K, T and sigma_bar must be positive")
        if self.side not in ("call", "put"):
            raise ValueError("side must be 'call' or 'put'")

    def with_strike(self, K: float) -> "TvoSpec":
        return TvoSpec(float(K), self.T, self.sigma_bar, self.side)

    def with_side(self, side: str) -> "TvoSpec":
        return TvoSpec(self.K, self.T, self.sigma_bar, side)


@dataclass
class PriceEstimate:
    price: float
    std_error: float
    N: int
    spec: TvoSpec | None = None
    oracle: float | None = None

    @property
    def ci95(self) -> tuple[float, float]:
        h = 1.96 * self.std_error
        return self.price - h, self.price + h

    @property
    def z_score(self) -> float | None:
        """``(price - oracle) / std_error`` when a closed-form oracle exists."""
        if self.oracle is None or self.std_error == 0:
            return None
        return (self.price - self.oracle) / self.std_error

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        d = {"price": self.price, "se": self.std_error, "ci_lo": lo, "ci_hi": hi, "N": self.N}
        if self.oracle is not None:
            d["oracle"] = self.oracle
            d["z_score"] = self.z_score
        return d


# --------------------------------------------------------------------------
# payoffs
# --------------------------------------------------------------------------


def _integrated_variance(Y, dt):
    Y = np.asarray(Y, dtype=float)
    return np.sum(Y[..., :-1] ** 2, axis=-1) * dt


def _check_expiry(grid: TimeGrid, spec: TvoSpec):
    if abs(grid.T - spec.T) > 1e-12 * max(1.0, spec.T):
        raise GridMismatch(f"grid ends at {grid.T}, option expires at {spec.T}")


def tvo_payoffs(XT, I, spec: TvoSpec) -> np.ndarray:
    """Payoffs from terminal log-moneyness ``X_T`` and integrated variance ``I``.

    ``sigma_bar`` is applied last so that rescaling it scales call payoffs
    (and divides put payoffs) with no extra rounding for powers of two.
    """
    XT = np.asarray(XT, dtype=float)
    I = np.asarray(I, dtype=float)
    if np.any(~(I > 0)):
        raise ZeroRealizedVariance("integrated variance of the volatility path is zero")
    sqT = math.sqrt(spec.T)
    if spec.side == "call":
        return spec.K * sqT * np.maximum(np.expm1(XT), 0.0) / np.sqrt(I) * spec.sigma_bar
    return spec.K * np.sqrt(I) * np.maximum(-np.expm1(XT), 0.0) / sqT / spec.sigma_bar


def _path_payoff(path: ModelPath, spec: TvoSpec, side: str):
    if spec.side != side:
        raise ValueError(f"spec is a {spec.side}, expected a {side}")
    _check_expiry(path.grid, spec)
    out = tvo_payoffs(path.X[..., -1], _integrated_variance(path.Y, path.grid.dt), spec)
    return float(out) if out.ndim == 0 else out


def tvo_call_payoff(path: ModelPath, spec: TvoSpec):
    """TVO call payoff of one path (or an array for a batch)."""
    return _path_payoff(path, spec, "call")


def tvo_put_payoff(path: ModelPath, spec: TvoSpec):
    """TVO put payoff of one path (or an array for a batch)."""
    return _path_payoff(path, spec, "put")


def black_scholes_call(S0: float, K: float, sigma: float, T: float) -> float:
    """Zero-rate Black-Scholes call."""
    if not (S0 > 0 and K > 0 and sigma > 0 and T > 0):
        raise ValueError("all inputs must be positive")
    v = sigma * math.sqrt(T)
    d1 = (math.log(S0 / K) + 0.5 * v * v) / v
    return float(S0 * stats.norm.cdf(d1) - K * stats.norm.cdf(d1 - v))


def black_scholes_put(S0: float, K: float, sigma: float, T: float) -> float:
    if not (S0 > 0 and K > 0 and sigma > 0 and T > 0):
        raise ValueError("all inputs must be positive")
    v = sigma * math.sqrt(T)
    d1 = (math.log(S0 / K) + 0.5 * v * v) / v
    return float(K * stats.norm.cdf(v - d1) - S0 * stats.norm.cdf(-d1))


def tvo_oracle(params: FsabrParams, spec: TvoSpec) -> float | None:
    """Closed-form TVO price in the constant-volatility case ``nu = 0``, else None.

    The realized volatility is then exactly ``alpha0``, so the call is
    ``sigma_bar / alpha0`` Black-Scholes calls and the put ``alpha0 / sigma_bar``
    puts.
    """
    if params.nu != 0:
        return None
    a0 = params.alpha0
    if spec.side == "call":
        return spec.sigma_bar / a0 * black_scholes_call(params.S0, spec.K, a0, spec.T)
    return a0 / spec.sigma_bar * black_scholes_put(params.S0, spec.K, a0, spec.T)


# --------------------------------------------------------------------------
# Monte Carlo engine
# --------------------------------------------------------------------------


@dataclass
class FsabrTerminals:
    """Per-path ``L = X_T - X_0`` and ``I = sum_{k<n} Y_k^2 dt`` in path order."""

    params: FsabrParams
    grid: TimeGrid
    L: np.ndarray
    I: np.ndarray
    source_label: str = "pseudo"
    batches: list = field(default_factory=list, repr=False)

    @property
    def N(self) -> int:
        return self.L.size

    def payoffs(self, spec: TvoSpec, N: int | None = None) -> np.ndarray:
        _check_expiry(self.grid, spec)
        sl = slice(None) if N is None else slice(0, int(N))
        XT = math.log(self.params.S0 / spec.K) + self.L[sl]
        return tvo_payoffs(XT, self.I[sl], spec)

    def estimate(self, spec: TvoSpec, N: int | None = None) -> PriceEstimate:
        p = self.payoffs(spec, N)
        se = float(np.std(p, ddof=1) / math.sqrt(p.size))
        return PriceEstimate(float(np.mean(p)), se, int(p.size), spec, tvo_oracle(self.params, spec))


def simulate_terminals(params: FsabrParams, grid: TimeGrid, N: int, source,
                       threads: int | None = None, batch_size: int = DEFAULT_BATCH
                       ) -> FsabrTerminals:
    """Simulate ``N`` fSABR paths and keep what the TVO payoffs need."""
    N = int(N)
    if N < 2:
        raise ValueError("need at least 2 paths")
    if grid.n < 2:
        raise ValueError("the kernel scheme needs n >= 2")
    sampler("hybrid", grid, params.H)  # build the kernel weights once, before any thread starts

    def run(sub, count):
        z = sub.normals(2 * grid.n * count).reshape(count, 2 * grid.n)
        X, Y, _, _, _ = fsabr_from_normals(params, grid, z)
        return X[:, -1], _integrated_variance(Y, grid.dt)

    parts = run_batches(source, N, 2 * grid.n, run, threads, batch_size,
                        f"fSABR paths on n = {grid.n} steps")
    sizes = [p[0].size for p in parts]
    L = np.concatenate([p[0] for p in parts])
    I = np.concatenate([p[1] for p in parts])
    return FsabrTerminals(params, grid, L, I, source.label, sizes)


def price_tvo_mc(params: FsabrParams, spec: TvoSpec, grid: TimeGrid, N: int, source,
                 threads: int | None = None, batch_size: int = DEFAULT_BATCH) -> PriceEstimate:
    """Monte Carlo TVO price, zero rates, with the standard error of the mean."""
    if N < 100:
        raise ValueError("N must be at least 100")
    _check_expiry(grid, spec)
    return simulate_terminals(params, grid, N, source, threads, batch_size).estimate(spec)


def strike_sweep(params: FsabrParams, spec_template: TvoSpec, strikes, grid: TimeGrid, N: int,
                 source, threads: int | None = None, batch_size: int = DEFAULT_BATCH,
                 sides=None):
    """Prices across strikes (and sides) on one shared set of paths.

    Returns a list of :class:`PriceEstimate`, side-major then in strike order.
    """
    strikes = [float(k) for k in strikes]
    if not strikes or any(not k > 0 for k in strikes):
        raise ValueError("strikes must be a nonempty list of positive numbers")
    _check_expiry(grid, spec_template)
    sides = sides or (spec_template.side,)
    sim = simulate_terminals(params, grid, N, source, threads, batch_size)
    return [sim.estimate(spec_template.with_side(s).with_strike(k)) for s in sides for k in strikes]


def convergence_study(params: FsabrParams, spec: TvoSpec, grid: TimeGrid, N_list, source,
                      threads: int | None = None, batch_size: int = DEFAULT_BATCH):
    """Price on the first ``N`` paths of one run of ``max(N_list)`` paths."""
    N_list = [int(v) for v in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be increasing")
    _check_expiry(grid, spec)
    sim = simulate_terminals(params, grid, N_list[-1], source, threads, batch_size)
    return [sim.estimate(spec, N) for N in N_list]


def price_rows(estimates, params: FsabrParams, grid: TimeGrid, source_label: str = "pseudo"):
    """Rows for the price-table CSV (see ``PRICE_COLUMNS``), plus oracle columns when known."""
    rows = []
    for e in estimates:
        lo, hi = e.ci95
        s = e.spec
        row = {"K": s.K, "T": s.T, "side": s.side, "price": e.price, "se": e.std_error,
               "ci_lo": lo, "ci_hi": hi, "N": e.N, "n": grid.n, "H": params.H,
               "rho": params.rho, "nu": params.nu, "sigma0": params.alpha0,
               "sigma_bar": s.sigma_bar, "source_label": source_label}
        if e.oracle is not None:
            row["oracle"] = e.oracle
            row["z_score"] = e.z_score
        rows.append(row)
    return rows
