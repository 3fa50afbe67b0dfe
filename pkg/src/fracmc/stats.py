"""
Ensemble moments, RMSE error metrics, the fGn chi-square test and realized variance.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg, stats

from .errors import (
    EmptyFile,
    MissingColumn,
    NonPositivePrice,
    NotPositiveDefinite,
    TooFewPaths,
    UnparsableNumber,
    WindowTooLong,
)
from .batching import DEFAULT_BATCH, run_batches
from .fbm import TimeGrid, fbm_covariance_matrix, fgn_autocovariance, sampler

__all__ = [
    "PathEnsemble",
    "MomentEstimates",
    "MomentAccumulator",
    "ErrorReport",
    "PriceSeries",
    "ensemble_moments",
    "simulate_moments",
    "rmse_errors",
    "chi_square_fgn",
    "realized_variance_discrete",
    "rolling_realized_vol",
    "load_price_csv",
]


@dataclass
class PathEnsemble:
    grid: TimeGrid
    H: float
    paths: np.ndarray
    source_label: str = "pseudo"

    def __post_init__(self):
        self.paths = np.asarray(self.paths, dtype=float)
        if self.paths.ndim != 2 or self.paths.shape[1] != self.grid.n + 1:
            raise ValueError("paths must have shape (N, n + 1)")
        if self.paths.shape[0] < 2:
            raise TooFewPaths("an ensemble needs at least 2 paths")
        if np.any(self.paths[:, 0] != 0):
            raise ValueError("every path must start at 0")

    @property
    def N(self) -> int:
        return self.paths.shape[0]


@dataclass
class MomentEstimates:
    """Per-gridpoint mean, unbiased variance and the sample covariance matrix."""

    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray
    N: int

    def to_dict(self) -> dict:
        return {"N": self.N, "mean": self.mean.tolist(), "var": self.var.tolist(),
                "cov": self.cov.tolist()}


class MomentAccumulator:
    """Streaming version of :func:`ensemble_moments`.

    Batches are reduced with two-pass statistics and merged in the order they
    are added (pairwise update of count, mean and co-moment), so a fixed batch
    sequence always gives the same bits.
    """

    def __init__(self, size: int):
        self.N = 0
        self.mean = np.zeros(size)
        self.comoment = np.zeros((size, size))

    def add(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=float)
        nb = batch.shape[0]
        if nb == 0:
            return
        mb = batch.mean(axis=0)
        d = batch - mb
        cb = d.T @ d
        if self.N == 0:
            self.N, self.mean, self.comoment = nb, mb, cb
            return
        n = self.N + nb
        delta = mb - self.mean
        self.comoment = self.comoment + cb + np.outer(delta, delta) * (self.N * nb / n)
        self.mean = self.mean + delta * (nb / n)
        self.N = n

    def merge(self, other: "MomentAccumulator") -> None:
        """Fold another accumulator in (it counts as the later batch)."""
        if other.N == 0:
            return
        if self.N == 0:
            self.N, self.mean, self.comoment = other.N, other.mean.copy(), other.comoment.copy()
            return
        n = self.N + other.N
        delta = other.mean - self.mean
        self.comoment = self.comoment + other.comoment + np.outer(delta, delta) * (self.N * other.N / n)
        self.mean = self.mean + delta * (other.N / n)
        self.N = n

    def result(self) -> MomentEstimates:
        if self.N < 2:
            raise TooFewPaths(f"need at least 2 paths, have {self.N}")
        c = self.comoment / (self.N - 1)
        # exact symmetry regardless of how the BLAS product was blocked
        cov = np.triu(c) + np.triu(c, 1).T
        return MomentEstimates(self.mean.copy(), np.diag(cov).copy(), cov, self.N)


def ensemble_moments(ensemble) -> MomentEstimates:
    """Mean, unbiased variance and covariance at every grid point.

    Accepts a :class:`PathEnsemble` or a bare ``(N, n + 1)`` array.
    """
    paths = ensemble.paths if isinstance(ensemble, PathEnsemble) else np.asarray(ensemble, float)
    if paths.shape[0] < 2:
        raise TooFewPaths(f"need at least 2 paths, have {paths.shape[0]}")
    acc = MomentAccumulator(paths.shape[1])
    acc.add(paths)
    return acc.result()


def simulate_moments(scheme: str, grid: TimeGrid, H: float, N: int, source,
                     threads: int | None = None, batch_size: int = DEFAULT_BATCH,
                     keep_paths: bool = False):
    """Moments of ``N`` fBM paths from ``scheme``, generated in fixed batches.

    Each batch draws from its own substream and is reduced on its own; batch
    results are merged in batch order. Returns ``(MomentEstimates, paths)``
    with ``paths`` None unless ``keep_paths``.
    """
    if N < 2:
        raise TooFewPaths(f"need at least 2 paths, have {N}")
    gen = sampler(scheme, grid, H)

    def run(sub, count):
        paths = gen.sample(sub, count)
        acc = MomentAccumulator(grid.n + 1)
        acc.add(paths)
        return acc, (paths if keep_paths else None)

    parts = run_batches(source, N, gen.normals_per_path, run, threads, batch_size,
                        f"{scheme} paths on n = {grid.n} steps")
    total = MomentAccumulator(grid.n + 1)
    for acc, _ in parts:
        total.merge(acc)
    paths = np.concatenate([p for _, p in parts]) if keep_paths else None
    return total.result(), paths


@dataclass
class ErrorReport:
    eps1: float
    eps2: float
    eps3: float
    N: int
    H: float
    grid: TimeGrid
    source_label: str = "pseudo"

    def to_dict(self) -> dict:
        return {"N": self.N, "H": self.H, "T": self.grid.T, "n": self.grid.n,
                "eps1": self.eps1, "eps2": self.eps2, "eps3": self.eps3,
                "source": self.source_label}


def rmse_errors(moments: MomentEstimates, H: float, grid: TimeGrid, N: int | None = None,
                source_label: str = "pseudo") -> ErrorReport:
    """Root mean squared errors of the mean, variance and covariance against fBM."""
    t = grid.times
    if moments.mean.shape != t.shape:
        raise ValueError("moments and grid have different sizes")
    n1 = t.size
    eps1 = math.sqrt(float(np.sum(moments.mean**2)) / n1)
    eps2 = math.sqrt(float(np.sum((moments.var - t ** (2 * H)) ** 2)) / n1)
    exact = fbm_covariance_matrix(t, H)
    eps3 = math.sqrt(float(np.sum((moments.cov - exact) ** 2)) / n1**2)
    return ErrorReport(eps1, eps2, eps3, int(N if N is not None else moments.N), H, grid,
                       source_label)


# --------------------------------------------------------------------------
# chi-square test for fGn
# --------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _fgn_cholesky(n: int, H: float) -> np.ndarray:
    r = fgn_autocovariance(np.arange(n), H)
    try:
        return linalg.cholesky(linalg.toeplitz(r), lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def chi_square_fgn(path, H: float, grid: TimeGrid | None = None, alternative: str = "greater"):
    """Whitened chi-square statistic for the increments of a path.

    Increments ``x`` are whitened with the Cholesky factor of the fGn
    covariance ``dt^{2H} [rho(|i - j|)]``; under the null ``S = |L^{-1} x|^2``
    is chi-square with ``n`` degrees of freedom. The default p-value is the
    upper tail ``P(chi2_n >= S)``; ``alternative="two-sided"`` doubles the
    smaller tail, which is what detects a wrong H (a misspecified scale mostly
    pushes S far below n).

    ``path`` is an :class:`~fracmc.fbm.FbmPath`, or raw values with ``grid``;
    a 2-D array of values gives arrays of statistics and p-values.
    """
    if grid is None:
        grid = path.grid
        values = path.values
    else:
        values = np.asarray(path, dtype=float)
    n = grid.n
    if n < 2:
        raise ValueError("need at least 2 increments")
    x = np.diff(values, axis=-1)
    L = _fgn_cholesky(n, float(H))
    white = linalg.solve_triangular(L, x.T, lower=True, check_finite=False)
    S = np.sum(white**2, axis=0) / grid.dt ** (2 * H)
    if alternative == "greater":
        p = stats.chi2.sf(S, n)
    elif alternative == "two-sided":
        p = np.minimum(1.0, 2.0 * np.minimum(stats.chi2.sf(S, n), stats.chi2.cdf(S, n)))
    else:
        raise ValueError("alternative must be 'greater' or 'two-sided'")
    if np.ndim(S) == 0:
        return float(S), float(p)
    return S, p


# --------------------------------------------------------------------------
# realized variance
# --------------------------------------------------------------------------


@dataclass
class PriceSeries:
    dates: list
    closes: np.ndarray
    AF: float = 252.0
    source_lines: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.closes = np.asarray(self.closes, dtype=float)
        if len(self.dates) != self.closes.size:
            raise ValueError("dates and closes differ in length")
        if self.closes.size < 2:
            raise ValueError("a price series needs at least 2 closes")
        bad = np.flatnonzero(~(self.closes > 0))
        if bad.size:
            i = int(bad[0])
            where = f" (line {self.source_lines[i]})" if self.source_lines else ""
            raise NonPositivePrice(f"close {self.closes[i]} at row {i}{where} is not positive")

    def __len__(self):
        return self.closes.size


def realized_variance_discrete(series: PriceSeries, window: slice | tuple | None = None) -> float:
    """Annualised realized variance ``AF / (r - 1) * sum (ln S_{i+1}/S_i)^2``.

    ``r`` is the number of log returns in the window, so a window of
    ``r + 1`` prices is needed and ``r >= 2``.
    """
    if window is None:
        window = slice(None)
    elif isinstance(window, tuple):
        window = slice(*window)
    closes = series.closes[window]
    r = closes.size - 1
    if r < 2:
        raise ValueError("the window must hold at least 3 prices (2 returns)")
    if np.any(closes <= 0):
        raise NonPositivePrice("prices must be positive")
    ret = np.diff(np.log(closes))
    return float(series.AF / (r - 1) * np.sum(ret**2))


def rolling_realized_vol(series: PriceSeries, window_days: int):
    """Square-root realized variance over trailing windows of ``window_days`` returns.

    Returns ``(dates, vols)`` with each value aligned to the date of the last
    price in its window; there are ``len(series) - window_days`` of them.
    """
    w = int(window_days)
    if w < 2:
        raise ValueError("window_days must be at least 2")
    if w >= len(series):
        raise WindowTooLong(f"window of {w} returns needs {w + 1} prices, series has {len(series)}")
    ret2 = np.diff(np.log(series.closes)) ** 2
    csum = np.concatenate([[0.0], np.cumsum(ret2)])
    sums = csum[w:] - csum[:-w]
    # cumulative sums can leave a -1e-20 residue on flat stretches
    var = np.maximum(series.AF / (w - 1) * sums, 0.0)
    return list(series.dates[w:]), np.sqrt(var)


def _find_column(header, name):
    lowered = [h.strip().lower() for h in header]
    try:
        return lowered.index(name.lower())
    except ValueError:
        raise MissingColumn(f"column {name!r} not found in header {header}") from None


def load_price_csv(path, date_column: str = "date", close_column: str = "close",
                   AF: float = 252.0) -> PriceSeries:
    """Read a ``date, close`` CSV with a header row; other columns are ignored."""
    path = os.fspath(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path} is empty")
    header = rows[0][1]
    di, ci = _find_column(header, date_column), _find_column(header, close_column)
    if len(rows) < 2:
        raise EmptyFile(f"{path} has a header but no data rows")
    dates, closes, lines, bad = [], [], [], []
    for lineno, r in rows[1:]:
        try:
            closes.append(float(r[ci]))
            dates.append(r[di].strip())
            lines.append(lineno)
        except (ValueError, IndexError):
            bad.append(lineno)
    if bad:
        shown = ", ".join(map(str, bad[:10]))
        raise UnparsableNumber(f"{path}: malformed rows at lines {shown}"
                               + (" ..." if len(bad) > 10 else ""))
    return PriceSeries(dates, np.asarray(closes), AF, lines)
