"""
Uniform and normal variates from seeded generators or raw entropy files.

A :class:`RandomSource` hands out unsigned 32-bit words. Two kinds exist:

* :class:`PseudoSource` -- PCG64 seeded through :class:`numpy.random.SeedSequence`,
  fully reproducible from its seed.
* :class:`EntropySource` -- a raw dump of little-endian 32-bit words (no header),
  e.g. the output of a hardware generator. Words are never re-read and running
  out raises :class:`~fracmc.errors.Exhausted`.

Words become uniforms on the open interval through ``(w + 0.5) / 2**32`` and
normals through Box-Muller (one word per normal) or a 256-layer ziggurat
(variable consumption).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

from .errors import Exhausted, FileTooShort, TruncatedWord

__all__ = [
    "RandomSource",
    "PseudoSource",
    "EntropySource",
    "SanityReport",
    "open_entropy_file",
    "next_uniform",
    "words_to_uniforms",
    "box_muller",
    "ziggurat_normal",
    "substream",
    "rand_check",
    "export_words",
    "ZIGGURAT",
]

TWO32 = 4294967296.0
NORMAL_METHODS = ("box-muller", "ziggurat")


def words_to_uniforms(words: np.ndarray) -> np.ndarray:
    """Map 32-bit words to (0, 1) via ``(w + 0.5) / 2**32``."""
    return (np.asarray(words, dtype=np.float64) + 0.5) / TWO32


def box_muller(u1, u2):
    """Return the Box-Muller pair ``(z1, z2)`` for uniforms in (0, 1)."""
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z1, z2 = r * np.cos(theta), r * np.sin(theta)
    if z1.ndim == 0:
        return float(z1), float(z2)
    return z1, z2


# --------------------------------------------------------------------------
# ziggurat tables
# --------------------------------------------------------------------------


class _ZigguratTables:
    """Layer boundaries for a 256-layer ziggurat under exp(-x^2/2).

    ``x[0]`` is the pseudo-width v/f(r) of the base strip, ``x[1] = r``,
    decreasing to ``x[256] = 0``. Layer ``i`` spans widths up to ``x[i]`` and
    heights ``f(x[i])`` .. ``f(x[i + 1])``.
    """

    layers = 256

    def __init__(self):
        self.r = optimize.brentq(self._residual, 3.0, 4.5, xtol=1e-15, rtol=1e-15)
        self.v = self._area(self.r)
        x = self._boundaries(self.r)
        self.x = np.asarray(x)
        self.f = np.exp(-0.5 * self.x**2)
        self.f[-1] = 1.0

    @staticmethod
    def _area(r):
        return r * math.exp(-0.5 * r * r) + math.sqrt(math.pi / 2) * math.erfc(r / math.sqrt(2))

    def _boundaries(self, r):
        v = self._area(r)
        x = [v / math.exp(-0.5 * r * r), r]
        for _ in range(2, self.layers):
            arg = v / x[-1] + math.exp(-0.5 * x[-1] ** 2)
            if arg >= 1.0:
                return None
            x.append(math.sqrt(-2.0 * math.log(arg)))
        x.append(0.0)
        return x

    def _residual(self, r):
        # positive when r is too large (top layer closes below f(0) = 1)
        v = self._area(r)
        x = self._boundaries(r)
        if x is None:
            return -1.0
        return 1.0 - (v / x[-2] + math.exp(-0.5 * x[-2] ** 2))


ZIGGURAT = _ZigguratTables()


def _ziggurat_fill(source: "RandomSource", k: int) -> np.ndarray:
    # One word per candidate: bits 0-7 layer, bit 8 sign, bits 9-31 position.
    # Wedge tests take one extra word per candidate, tail draws two per attempt.
    # Candidates are resolved in index order, so consumption is deterministic.
    zt = ZIGGURAT
    out = np.empty(k)
    pending = np.arange(k)
    while pending.size:
        w = source.words(pending.size).astype(np.uint64)
        layer = (w & 0xFF).astype(np.intp)
        negative = ((w >> 8) & 1).astype(bool)
        u = ((w >> 9).astype(np.float64) + 0.5) * 2.0**-23
        x = u * zt.x[layer]
        ok = x < zt.x[layer + 1]

        wedge = np.flatnonzero(~ok & (layer > 0))
        if wedge.size:
            y = words_to_uniforms(source.words(wedge.size))
            lw = layer[wedge]
            fy = zt.f[lw] + y * (zt.f[lw + 1] - zt.f[lw])
            ok[wedge] = fy < np.exp(-0.5 * x[wedge] ** 2)

        for j in np.flatnonzero(~ok & (layer == 0)):
            x[j] = _ziggurat_tail(source, zt.r)
            ok[j] = True

        x = np.where(negative, -x, x)
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def _ziggurat_tail(source, r):
    while True:
        u1, u2 = words_to_uniforms(source.words(2))
        xt = -math.log(u1) / r
        yt = -math.log(u2)
        if 2.0 * yt > xt * xt:
            return r + xt


# --------------------------------------------------------------------------
# sources
# --------------------------------------------------------------------------


class RandomSource:
    """Supplier of unsigned 32-bit words.

    Subclasses implement :meth:`words`, :attr:`words_remaining` and
    :meth:`substream`. A source is single-consumer; hand each parallel worker
    its own :func:`substream`.
    """

    kind = "abstract"
    normal_method = "box-muller"

    @property
    def label(self) -> str:
        return "entropy" if self.kind == "entropy-file" else "pseudo"

    @property
    def words_remaining(self) -> int | None:
        return None

    def words(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def substream(self, worker_index: int, workers: int) -> "RandomSource":
        raise NotImplementedError

    def uniforms(self, k: int) -> np.ndarray:
        return words_to_uniforms(self.words(k))

    def normals(self, k: int, method: str | None = None) -> np.ndarray:
        """Return ``k`` standard normals.

        Box-Muller consumes ``2 * ceil(k / 2)`` words, pairing consecutive
        words as ``(u1, u2)`` and emitting ``z1, z2`` in that order. The
        ziggurat consumes a data-dependent number of words.
        """
        method = method or self.normal_method
        k = int(k)
        if k < 0:
            raise ValueError("k must be non-negative")
        if method == "box-muller":
            m = (k + 1) // 2
            self._require(2 * m)
            u = self.uniforms(2 * m)
            z1, z2 = box_muller(u[0::2], u[1::2])
            z = np.empty(2 * m)
            z[0::2] = z1
            z[1::2] = z2
            return z[:k]
        if method == "ziggurat":
            return _ziggurat_fill(self, k)
        raise ValueError(f"unknown normal method {method!r}; expected one of {NORMAL_METHODS}")

    def _require(self, k: int) -> None:
        remaining = self.words_remaining
        if remaining is not None and k > remaining:
            raise Exhausted(k, remaining)


class PseudoSource(RandomSource):
    """Seeded PCG64 stream, 32-bit words taken low half first from each 64-bit draw.

    ``spawn_key`` identifies a child stream; :func:`substream` extends it
    with the worker index.
    """

    kind = "pseudo"

    def __init__(self, seed: int = 0, spawn_key: tuple[int, ...] = (), normal_method="box-muller"):
        if normal_method not in NORMAL_METHODS:
            raise ValueError(f"unknown normal method {normal_method!r}")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.spawn_key = tuple(int(i) for i in spawn_key)
        self.normal_method = normal_method
        ss = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._bitgen = np.random.PCG64(ss)
        self._spare: np.ndarray = np.empty(0, dtype=np.uint32)

    def __repr__(self):
        return f"PseudoSource(seed={self.seed}, spawn_key={self.spawn_key})"

    def words(self, k: int) -> np.ndarray:
        k = int(k)
        have = self._spare.size
        if k <= have:
            out, self._spare = self._spare[:k], self._spare[k:]
            return out.copy()
        need = k - have
        raw = self._bitgen.random_raw((need + 1) // 2)
        fresh = np.asarray(raw, dtype="<u8").view("<u4").astype(np.uint32)
        out = np.concatenate([self._spare, fresh[:need]])
        self._spare = fresh[need:]
        return out

    def clone(self) -> "PseudoSource":
        twin = PseudoSource(self.seed, self.spawn_key, self.normal_method)
        twin._bitgen.state = self._bitgen.state
        twin._spare = self._spare.copy()
        return twin

    def substream(self, worker_index: int, workers: int) -> "PseudoSource":
        _check_partition(worker_index, workers)
        if workers == 1:
            return self.clone()
        return PseudoSource(self.seed, self.spawn_key + (worker_index,), self.normal_method)


class EntropySource(RandomSource):
    """Cursor over a block ``[start, stop)`` of 32-bit words."""

    kind = "entropy-file"

    def __init__(self, data: np.ndarray, start: int = 0, stop: int | None = None,
                 path: str | None = None, normal_method="box-muller"):
        if normal_method not in NORMAL_METHODS:
            raise ValueError(f"unknown normal method {normal_method!r}")
        self._data = data
        self.path = path
        self.start = int(start)
        self.stop = int(data.shape[0] if stop is None else stop)
        self.cursor = self.start
        self.normal_method = normal_method

    @classmethod
    def from_words(cls, words, normal_method="box-muller") -> "EntropySource":
        """In-memory source, mostly for tests and synthetic streams."""
        return cls(np.asarray(words, dtype="<u4"), normal_method=normal_method)

    def __repr__(self):
        return f"EntropySource(path={self.path!r}, cursor={self.cursor}, stop={self.stop})"

    @property
    def byte_offset(self) -> int:
        return 4 * self.cursor

    @property
    def words_remaining(self) -> int:
        return self.stop - self.cursor

    def words(self, k: int) -> np.ndarray:
        k = int(k)
        self._require(k)
        out = np.array(self._data[self.cursor:self.cursor + k], dtype=np.uint32)
        self.cursor += k
        return out

    def substream(self, worker_index: int, workers: int) -> "EntropySource":
        _check_partition(worker_index, workers)
        block = self.words_remaining // workers
        lo = self.cursor + worker_index * block
        if block == 0:
            raise Exhausted(1, 0, f"entropy block for worker {worker_index} of {workers} is empty")
        return EntropySource(self._data, lo, lo + block, self.path, self.normal_method)


def _check_partition(worker_index, workers):
    if workers < 1 or not 0 <= worker_index < workers:
        raise ValueError(f"need 0 <= worker_index < workers, got {worker_index}, {workers}")


def open_entropy_file(path, expected_min_words: int = 0, normal_method="box-muller") -> EntropySource:
    """Open a raw little-endian dump of 32-bit words (memory-mapped)."""
    path = os.fspath(path)
    size = os.path.getsize(path)
    if size % 4:
        raise TruncatedWord(f"{path}: {size} bytes is not a whole number of 32-bit words")
    count = size // 4
    if count < expected_min_words:
        raise FileTooShort(f"{path}: {count} words, expected at least {expected_min_words}")
    if count == 0:
        data = np.empty(0, dtype="<u4")
    else:
        data = np.memmap(path, dtype="<u4", mode="r", shape=(count,))
    return EntropySource(data, path=path, normal_method=normal_method)


def next_uniform(source: RandomSource) -> float:
    return float(words_to_uniforms(source.words(1))[0])


def ziggurat_normal(source: RandomSource) -> float:
    return float(_ziggurat_fill(source, 1)[0])


def substream(source: RandomSource, worker_index: int, workers: int) -> RandomSource:
    """Independent stream for one of ``workers`` parallel consumers.

    Pseudo sources derive a child seed from ``(seed, worker_index)``; entropy
    sources split their remaining words into equal contiguous blocks. With
    ``workers == 1`` the result replays the parent.
    """
    return source.substream(worker_index, workers)


def export_words(source: RandomSource, path, m: int) -> int:
    """Write the next ``m`` words in the raw entropy format. Returns bytes written."""
    data = source.words(m).astype("<u4").tobytes()
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


# --------------------------------------------------------------------------
# sanity battery
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SanityReport:
    words: int
    monobit_p: float
    runs_p: float
    byte_chi2_p: float
    alpha: float = 0.01

    @property
    def flags(self) -> dict[str, bool]:
        return {
            "monobit": self.monobit_p > self.alpha,
            "runs": self.runs_p > self.alpha,
            "byte_chi2": self.byte_chi2_p > self.alpha,
        }

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            "words": self.words,
            "alpha": self.alpha,
            "monobit_p": self.monobit_p,
            "runs_p": self.runs_p,
            "byte_chi2_p": self.byte_chi2_p,
            "pass": self.flags,
            "all_pass": self.passed,
        }


def rand_check(source: RandomSource, words: int, alpha: float = 0.01) -> SanityReport:
    """Monobit, runs and byte-frequency tests on the next ``words`` words.

    The first two follow the NIST SP 800-22 frequency and runs tests on the
    bit stream (least significant bit of each byte first).
    """
    if words < 10_000:
        raise ValueError("rand_check needs at least 10**4 words")
    w = source.words(words).astype("<u4")
    raw = w.view(np.uint8)
    bits = np.unpackbits(raw, bitorder="little")
    n = bits.size

    ones = int(np.count_nonzero(bits))
    s_obs = abs(2 * ones - n) / math.sqrt(n)
    monobit_p = float(special.erfc(s_obs / math.sqrt(2)))

    pi = ones / n
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        runs_p = 0.0
    else:
        runs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
        num = abs(runs - 2.0 * n * pi * (1 - pi))
        den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
        runs_p = float(special.erfc(num / den))

    counts = np.bincount(raw, minlength=256)
    expected = raw.size / 256.0
    chi2 = float(np.sum((counts - expected) ** 2) / expected)
    byte_p = float(stats.chi2.sf(chi2, 255))

    return SanityReport(int(words), monobit_p, runs_p, byte_p, alpha)
