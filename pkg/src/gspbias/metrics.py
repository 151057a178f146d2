"""Bias factors, price summaries, calibration ratios, and histograms.

The bias factor at rank k is the mean ratio of the rank-k CTR estimate to
the true CTR of whichever ad realized that rank, so a factor above one says
the slot's estimates run hot.  Calibration ratios compare predicted to
realized clicks on greedy top-slot traffic versus uniformly explored
traffic; their quotient is one exactly when estimate quality does not
depend on how the ad earned its display.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sp_stats

from .engine import ImpressionLog, TrialResult, conditional_rank_samples
from .errors import GridMismatch, RankUnreachable, UndefinedCalibration, UndefinedRatio

MIN_BIAS_TRIALS = 100


def _true_ranking(true_ctrs, bids) -> list[int]:
    scores = [b * c for b, c in zip(bids, true_ctrs)]
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


@dataclass(frozen=True)
class BiasFactor:
    rank: int
    value: float
    se: float | None
    trials_used: int


def selection_bias(trials: list[TrialResult], true_ctrs: tuple[float, ...],
                   rank: int, per_trial_attribution: bool = True,
                   bids: tuple[float, ...] | None = None) -> BiasFactor:
    """Multiplicative bias of the rank-k CTR estimate against the true CTR.

    With per-trial attribution (default) each trial's rank-k estimate is
    divided by the true CTR of the ad holding rank k in that trial, then
    averaged.  The alternative divides the averaged rank-k estimate by the
    true CTR of the ad holding rank k under true-score ordering.
    """
    bids = bids if bids is not None else (1.0,) * len(true_ctrs)
    holders = np.array([t.ranking[rank - 1] for t in trials])
    estimates = np.array([t.estimates[t.ranking[rank - 1]] for t in trials])
    if len(trials) < MIN_BIAS_TRIALS:
        raise RankUnreachable(
            f"rank {rank} has {len(trials)} trials, need >= {MIN_BIAS_TRIALS}")
    ctrs = np.asarray(true_ctrs)
    if per_trial_attribution:
        ratios = estimates / ctrs[holders]
        value = float(ratios.mean())
        se = float(ratios.std(ddof=1) / np.sqrt(len(ratios))) if len(ratios) > 1 else None
    else:
        fixed_ad = _true_ranking(true_ctrs, bids)[rank - 1]
        value = float(estimates.mean() / ctrs[fixed_ad])
        se = (float(estimates.std(ddof=1) / np.sqrt(len(estimates)) / ctrs[fixed_ad])
              if len(estimates) > 1 else None)
    return BiasFactor(rank=rank, value=value, se=se, trials_used=len(trials))


@dataclass(frozen=True)
class CpcSummary:
    """Observed price against the price implied by the true CTRs."""

    expected_cpc: float
    mean_observed_cpc: float
    ratio: float
    observed_se: float | None
    ratio_of_means: float        # mean runner-up score / mean winner estimate
    ratio_of_means_se: float | None
    degenerate_trials: int
    trials_used: int


def cpc_summary(trials: list[TrialResult], true_ctrs: tuple[float, ...],
                bids: tuple[float, ...] | None = None) -> CpcSummary:
    """Average realized price over non-degenerate trials, and its true target."""
    bids = bids if bids is not None else (1.0,) * len(true_ctrs)
    order = _true_ranking(true_ctrs, bids)
    if len(true_ctrs) > 1:
        expected = (bids[order[1]] * true_ctrs[order[1]]) / true_ctrs[order[0]]
    else:
        expected = 0.0
    ok = [t for t in trials if not t.degenerate]
    degenerate = len(trials) - len(ok)
    if not ok:
        return CpcSummary(expected_cpc=expected, mean_observed_cpc=float("nan"),
                          ratio=float("nan"), observed_se=None,
                          ratio_of_means=float("nan"), ratio_of_means_se=None,
                          degenerate_trials=degenerate, trials_used=0)
    cpcs = np.array([t.cpc for t in ok])
    mean_cpc = float(cpcs.mean())
    se = float(cpcs.std(ddof=1) / np.sqrt(len(cpcs))) if len(ok) > 1 else None
    # numerator/denominator of the per-trial price, averaged separately
    top_est = np.array([t.estimates[t.ranking[0]] for t in ok])
    runner_score = np.array([t.estimates[t.ranking[1]] * bids[t.ranking[1]] for t in ok]) \
        if len(true_ctrs) > 1 else np.zeros(len(ok))
    if len(ok) and top_est.mean() > 0:
        rom = float(runner_score.mean() / top_est.mean())
        if len(ok) > 1:
            mx, my = runner_score.mean(), top_est.mean()
            vx = runner_score.var(ddof=1) / len(ok)
            vy = top_est.var(ddof=1) / len(ok)
            cxy = float(np.cov(runner_score, top_est, ddof=1)[0, 1]) / len(ok)
            rom_se = abs(rom) * float(
                np.sqrt(max(vx / mx ** 2 + vy / my ** 2 - 2 * cxy / (mx * my), 0.0)))
        else:
            rom_se = None
    else:
        rom, rom_se = float("nan"), None
    return CpcSummary(
        expected_cpc=expected, mean_observed_cpc=mean_cpc,
        ratio=mean_cpc / expected if expected > 0 else float("nan"),
        observed_se=se, ratio_of_means=rom, ratio_of_means_se=rom_se,
        degenerate_trials=degenerate, trials_used=len(ok),
    )


@dataclass(frozen=True)
class CalibrationReport:
    """Predicted-over-realized click ratios on greedy vs explored traffic."""

    calibration_greedy: float
    calibration_random: float
    c_relative: float
    bid_weighted_greedy: float
    bid_weighted_random: float
    bid_weighted_c_relative: float
    greedy_count: int
    random_count: int
    greedy_clicks: int
    random_clicks: int


def c_relative(log: ImpressionLog) -> CalibrationReport:
    """Calibration on greedy displays over calibration on random displays."""
    greedy = ~log.random_mode
    random = log.random_mode
    g_clicks = int(log.click[greedy].sum())
    r_clicks = int(log.click[random].sum())
    if g_clicks == 0 or r_clicks == 0:
        raise UndefinedCalibration(
            f"need clicks on both traffic kinds, got greedy={g_clicks}, random={r_clicks}")
    cal_g = float(log.pred_ctr[greedy].sum() / g_clicks)
    cal_r = float(log.pred_ctr[random].sum() / r_clicks)
    wg_den = float((log.bid[greedy] * log.click[greedy]).sum())
    wr_den = float((log.bid[random] * log.click[random]).sum())
    if wg_den == 0.0 or wr_den == 0.0:
        raise UndefinedCalibration("bid-weighted clicked value is zero on one traffic kind")
    wcal_g = float((log.bid[greedy] * log.pred_ctr[greedy]).sum() / wg_den)
    wcal_r = float((log.bid[random] * log.pred_ctr[random]).sum() / wr_den)
    return CalibrationReport(
        calibration_greedy=cal_g, calibration_random=cal_r,
        c_relative=cal_g / cal_r,
        bid_weighted_greedy=wcal_g, bid_weighted_random=wcal_r,
        bid_weighted_c_relative=wcal_g / wcal_r,
        greedy_count=int(greedy.sum()), random_count=int(random.sum()),
        greedy_clicks=g_clicks, random_clicks=r_clicks,
    )


def c_relative_log_se(log: ImpressionLog) -> float:
    """Delta-method standard error of log C_relative.

    Treats records as independent and propagates each record's influence on
    the two calibration ratios; greedy and random groups are disjoint so
    their contributions add.
    """
    se_sq = 0.0
    for mask in (~log.random_mode, log.random_mode):
        preds = log.pred_ctr[mask]
        clicks = log.click[mask]
        p_sum = float(preds.sum())
        c_sum = float(clicks.sum())
        if p_sum <= 0 or c_sum <= 0:
            raise UndefinedCalibration("cannot form a standard error without clicks")
        influence = preds / p_sum - clicks / c_sum
        se_sq += float((influence ** 2).sum())
    return float(np.sqrt(se_sq))


@dataclass(frozen=True)
class RelativeMetrics:
    """Bucket-B-over-bucket-A clicked value and clicked cost, greedy traffic only."""

    rtv: float
    rtc: float


def rtv_rtc(log_a: ImpressionLog, log_b: ImpressionLog) -> RelativeMetrics:
    ga, gb = ~log_a.random_mode, ~log_b.random_mode
    value_a = float((log_a.click[ga] * log_a.bid[ga]).sum())
    value_b = float((log_b.click[gb] * log_b.bid[gb]).sum())
    cost_a = float((log_a.click[ga] * log_a.cpc[ga]).sum())
    cost_b = float((log_b.click[gb] * log_b.cpc[gb]).sum())
    if value_a == 0.0:
        raise UndefinedRatio("bucket A has zero clicked bid value")
    if cost_a == 0.0:
        raise UndefinedRatio("bucket A has zero clicked cost")
    return RelativeMetrics(rtv=value_b / value_a, rtc=cost_b / cost_a)


@dataclass(frozen=True)
class Histogram:
    """Counts over half-open bins [edge_i, edge_{i+1}) on a width-aligned lattice."""

    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])


def build_histogram(samples, bin_width: float) -> Histogram:
    """Histogram whose edges are consecutive multiples of ``bin_width``.

    Anchoring edges to the width lattice means two histograms built with the
    same width are always alignable bin-for-bin.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("samples must be non-empty")
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    idx = np.floor(samples / bin_width).astype(np.int64)
    k_min, k_max = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - k_min, minlength=k_max - k_min + 1)
    edges = (k_min + np.arange(k_max - k_min + 2)) * bin_width
    return Histogram(edges=edges, counts=counts)


def align_histograms(h1: Histogram, h2: Histogram) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Common edges plus zero-padded counts for two same-width histograms."""
    if not np.isclose(h1.width, h2.width, rtol=1e-12, atol=0):
        raise GridMismatch(f"bin widths differ: {h1.width} vs {h2.width}")
    w = h1.width
    k1, k2 = round(h1.edges[0] / w), round(h2.edges[0] / w)
    lo = min(k1, k2)
    hi = max(k1 + len(h1.counts), k2 + len(h2.counts))
    c1 = np.zeros(hi - lo, dtype=np.int64)
    c2 = np.zeros(hi - lo, dtype=np.int64)
    c1[k1 - lo:k1 - lo + len(h1.counts)] = h1.counts
    c2[k2 - lo:k2 - lo + len(h2.counts)] = h2.counts
    return (lo + np.arange(hi - lo + 1)) * w, c1, c2


def histogram_overlap(h1: Histogram, h2: Histogram) -> float:
    """Shared mass: sum over bins of min(fraction_1, fraction_2)."""
    _edges, c1, c2 = align_histograms(h1, h2)
    return float(np.minimum(c1 / c1.sum(), c2 / c2.sum()).sum())


def mass_split(samples, threshold: float) -> tuple[float, float]:
    """Fractions of samples strictly below / at-or-above ``threshold``."""
    samples = np.asarray(samples, dtype=float)
    below = float((samples < threshold).mean())
    return below, 1.0 - below


def symmetry_z(samples) -> float:
    """Skewness z-statistic; |z| > 3 rejects symmetry at the 3-sigma level."""
    stat, _pvalue = sp_stats.skewtest(np.asarray(samples, dtype=float))
    return float(stat)


@dataclass(frozen=True)
class RankBiasSummary:
    rank: int
    bias_factor: float
    bias_se: float | None
    conditional_score_mean: float
    conditional_score_se: float | None
    samples: int


@dataclass(frozen=True)
class BiasReport:
    """Per-rank bias diagnostics for one study setting."""

    per_rank: tuple[RankBiasSummary, ...]
    adjacent_splittable: tuple[bool, ...]   # rank k vs k+1 ordered-score histograms
    degenerate_trials: int


def bias_report(trials: list[TrialResult], true_ctrs: tuple[float, ...],
                bids: tuple[float, ...] | None = None,
                hist_width: float = 0.0005) -> BiasReport:
    """Assemble bias factors, ordered-score moments, and splittability verdicts."""
    from .oracle import split_histogram_densities  # local import to avoid a cycle

    bids = bids if bids is not None else (1.0,) * len(true_ctrs)
    m = len(true_ctrs)
    per_rank = []
    rank_scores = []
    for rank in range(1, m + 1):
        factor = selection_bias(trials, true_ctrs, rank, bids=bids)
        scores = np.concatenate([
            conditional_rank_samples(trials, i, rank, bid=bids[i])
            if any(t.ranks[i] == rank for t in trials) else np.empty(0)
            for i in range(m)
        ])
        rank_scores.append(scores)
        per_rank.append(RankBiasSummary(
            rank=rank, bias_factor=factor.value, bias_se=factor.se,
            conditional_score_mean=float(scores.mean()),
            conditional_score_se=(float(scores.std(ddof=1) / np.sqrt(len(scores)))
                                  if len(scores) > 1 else None),
            samples=len(scores),
        ))
    splittable = []
    for k in range(m - 1):
        h_better = build_histogram(rank_scores[k], hist_width)
        h_worse = build_histogram(rank_scores[k + 1], hist_width)
        edges, c_better, c_worse = align_histograms(h_better, h_worse)
        # the better rank's scores should sit below the worse rank's density
        # at low scores and above it at high scores, crossing once
        verdict = split_histogram_densities(edges, c_better, edges, c_worse)
        splittable.append(verdict.splittable)
    return BiasReport(
        per_rank=tuple(per_rank),
        adjacent_splittable=tuple(splittable),
        degenerate_trials=sum(1 for t in trials if t.degenerate),
    )
