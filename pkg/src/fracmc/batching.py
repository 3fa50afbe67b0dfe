"""
Fixed batch partition of Monte Carlo work over substreams.

``N`` items are cut into ``nb = ceil(N / batch_size)`` near-equal batches and
batch ``b`` draws from ``substream(source, b, nb)``. The layout depends only on
``N`` and ``batch_size``, never on the thread count, so any number of threads
gives the same numbers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import Exhausted
from .rng import substream

__all__ = ["batch_layout", "required_words", "run_batches", "DEFAULT_BATCH"]

DEFAULT_BATCH = 4096


def batch_layout(N: int, batch_size: int = DEFAULT_BATCH) -> list[int]:
    """Batch sizes: all equal to ``ceil(N / nb)`` except a smaller last one."""
    N, batch_size = int(N), int(batch_size)
    if N < 1 or batch_size < 1:
        raise ValueError("N and batch_size must be positive")
    nb = -(-N // batch_size)
    size = -(-N // nb)
    return [size] * (nb - 1) + [N - size * (nb - 1)]


def required_words(sizes, normals_per_item: int) -> int:
    """Box-Muller words an entropy source needs for this layout.

    Entropy substreams are equal blocks, so each must hold the largest batch.
    """
    per = max(sizes) * int(normals_per_item)
    return len(sizes) * (per + per % 2)


def run_batches(source, N: int, normals_per_item: int, fn, threads: int | None = None,
                batch_size: int = DEFAULT_BATCH, what: str = "items"):
    """Evaluate ``fn(sub_source, count)`` for every batch; results in batch order.

    Entropy sources are checked for enough words before anything is read, and
    afterwards their cursor moves past every word a batch has touched.
    """
    sizes = batch_layout(N, batch_size)
    nb = len(sizes)
    remaining = source.words_remaining
    if remaining is not None:
        need = required_words(sizes, normals_per_item)
        if remaining < need:
            split = f" in {nb} equal blocks" if nb > 1 else ""
            raise Exhausted(need, remaining,
                            f"entropy source too small: {N} {what} need {need} words "
                            f"({normals_per_item} normals each{split}), only {remaining} remain")
    subs = [substream(source, b, nb) for b in range(nb)]
    workers = max(1, min(threads or os.cpu_count() or 1, nb))
    if workers == 1:
        out = [fn(subs[b], sizes[b]) for b in range(nb)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(lambda b: fn(subs[b], sizes[b]), range(nb)))
    if hasattr(source, "cursor"):
        source.cursor = max(s.cursor for s in subs)
    return out
