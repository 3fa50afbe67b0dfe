# %% [markdown]
# # Swapping the random source
#
# Every sampler reads 32-bit words from a source. A seeded pseudo generator
# and a file of raw words are interchangeable; a file is consumed in order
# and never reused.

# %%
from __future__ import annotations

import numpy as np

from fracmc.fbm import TimeGrid
from fracmc.rng import EntropySource, PseudoSource, export_words, open_entropy_file, rand_check
from fracmc.stats import rmse_errors, simulate_moments

export_words(PseudoSource(7), "words.bin", 2 * 500 * 10**4)
print(rand_check(open_entropy_file("words.bin"), 10**6).to_dict())

# %% [markdown]
# The same pipeline on the file. The kernel scheme needs n words per path
# (one normal per step), so 10^4 paths on 500 steps need 5 * 10^6 words.
# Batches read equal contiguous blocks of what is left in the file, and the
# cursor ends past the last block touched, so the tails of earlier blocks
# are skipped rather than reused.

# %%
grid = TimeGrid(0.5, 500)
src = open_entropy_file("words.bin")
m, _ = simulate_moments("hybrid", grid, 0.1, 10**4, src)
print(rmse_errors(m, 0.1, grid, source_label=src.label).to_dict())
print("words left:", src.words_remaining)

# %% [markdown]
# Degenerate streams fail the battery.

# %%
for name, w in {"zeros": np.zeros(10**4, np.uint32),
                "alternating": np.tile(np.array([0x55555555, 0xAAAAAAAA], np.uint32), 5000)}.items():
    print(name, rand_check(EntropySource.from_words(w), 10**4).flags)
