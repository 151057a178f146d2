"""Selection-bias simulation lab for score-ranked second-price ad auctions."""

from .auction import (
    Ad,
    AuctionOutcome,
    ScoredAd,
    SelectionEvent,
    build_selection_event,
    gsp_price,
    rank_ads,
    run_auction,
)
from .engine import (
    AbConfig,
    AdSpec,
    BucketSpec,
    Context,
    CpcStudyConfig,
    ImpressionLog,
    ImpressionRecord,
    TrialResult,
    conditional_rank_samples,
    run_ab_experiment,
    run_cpc_study,
    sample_rank_stats,
)
from .estimators import (
    CountWindow,
    PoolHyperParams,
    SelectionPolicy,
    binomial_estimate,
    fit_pool,
    naive_contextual_estimate,
    pooled_estimate,
    select_ad,
)
from .metrics import (
    BiasReport,
    CalibrationReport,
    Histogram,
    bias_report,
    build_histogram,
    c_relative,
    cpc_summary,
    histogram_overlap,
    rtv_rtc,
    selection_bias,
)
from .oracle import (
    RankProbability,
    ScoreDistribution,
    SplitVerdict,
    check_splittable,
    conditional_mean_profile,
    conditional_score_mean,
    rank_marginal,
    rank_prob_given_score,
    rank_probability,
    top_rank_decomposition,
)

__version__ = "0.1.0"

__all__ = [
    "Ad", "AuctionOutcome", "ScoredAd", "SelectionEvent",
    "build_selection_event", "gsp_price", "rank_ads", "run_auction",
    "AbConfig", "AdSpec", "BucketSpec", "Context", "CpcStudyConfig",
    "ImpressionLog", "ImpressionRecord", "TrialResult",
    "conditional_rank_samples", "run_ab_experiment", "run_cpc_study",
    "sample_rank_stats",
    "CountWindow", "PoolHyperParams", "SelectionPolicy",
    "binomial_estimate", "fit_pool", "naive_contextual_estimate",
    "pooled_estimate", "select_ad",
    "BiasReport", "CalibrationReport", "Histogram",
    "bias_report", "build_histogram", "c_relative", "cpc_summary",
    "histogram_overlap", "rtv_rtc", "selection_bias",
    "RankProbability", "ScoreDistribution", "SplitVerdict", "check_splittable",
    "conditional_mean_profile", "conditional_score_mean", "rank_marginal",
    "rank_prob_given_score", "rank_probability", "top_rank_decomposition",
    "__version__",
]
