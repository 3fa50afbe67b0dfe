"""
Monte Carlo toolkit for fractional Brownian motion.

Random sources (seeded or raw entropy files), exact and kernel-based fBM
samplers, moment diagnostics, Hurst estimators, RFSV / fSABR dynamics and
target-volatility option pricing.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .rng import (
    EntropySource,
    PseudoSource,
    RandomSource,
    SanityReport,
    box_muller,
    export_words,
    next_uniform,
    open_entropy_file,
    rand_check,
    substream,
    ziggurat_normal,
)
from .fbm import (
    FbmPath,
    TimeGrid,
    c_H,
    cholesky_fbm,
    davies_harte,
    fbm_covariance,
    fgn_autocovariance,
    gauss_2f1,
    hybrid_kernel_fbm,
    molchan_golosov_kernel,
)
from .stats import (
    ErrorReport,
    MomentEstimates,
    PathEnsemble,
    PriceSeries,
    chi_square_fgn,
    ensemble_moments,
    load_price_csv,
    realized_variance_discrete,
    rmse_errors,
    rolling_realized_vol,
    simulate_moments,
)
from .hurst import (
    HurstEstimate,
    ScalingSurface,
    gaussian_abs_moment,
    hurst_difference_variance,
    hurst_from_zeta,
    hurst_peng,
    hurst_scaling,
    m_q_delta,
    zeta_slopes,
)
from .models import (
    FsabrParams,
    ModelPath,
    RfsvParams,
    rfsv_full_circle,
    simulate_fsabr,
    simulate_rfsv,
)
from .pricing import (
    PriceEstimate,
    TvoSpec,
    black_scholes_call,
    convergence_study,
    price_tvo_mc,
    strike_sweep,
    tvo_call_payoff,
    tvo_put_payoff,
)
