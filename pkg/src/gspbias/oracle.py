"""Closed-form oracle for rank probabilities under independent ranking scores.

When the m scores are drawn independently, the chance that candidate i holds
rank k given its own score s is a finite sum over which k-1 rivals beat s:

    P(rank = k | s) = sum over (k-1)-subsets E of rivals of
                      prod_{l in E} (1 - F_l(s)) * prod_{j not in E} F_j(s)

with F_j the rival score CDFs.  Conditional score moments follow by fixed
composite-Simpson quadrature against the candidate's own density.  This
module is the reference the Monte Carlo engine is checked against, so it
favors exact enumeration and deterministic grids over speed.

Quadrature accuracy is ~1e-12 relative for smooth densities; a density
jump interior to the shared grid (e.g. a uniform whose endpoints are not
grid nodes) degrades it to O(1/intervals), about 1e-5 relative.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats

from .errors import CombinatorialLimit, GridMismatch, RankUnreachable

MAX_EXACT_ADS = 12
SIMPSON_INTERVALS = 2 ** 17
MASS_FLOOR = 1e-12


class ScoreDistribution:
    """A non-negative score distribution with PDF, CDF, and inverse-CDF access.

    Three kinds are supported: uniform on [a, b] with a >= 0, a beta
    distribution stretched to [0, scale], and an empirical density sampled
    on a point grid (CDF accumulated by the trapezoid rule and normalized).
    """

    def __init__(self, kind: str, upper: float, pdf, cdf, ppf, label: str):
        self.kind = kind
        self.upper = upper
        self._pdf = pdf
        self._cdf = cdf
        self._ppf = ppf
        self.label = label

    def __repr__(self):
        return f"ScoreDistribution({self.label})"

    def pdf(self, s):
        return self._pdf(np.asarray(s, dtype=float))

    def cdf(self, s):
        return self._cdf(np.asarray(s, dtype=float))

    def ppf(self, u):
        """Inverse CDF; maps uniforms on [0, 1) to score draws."""
        return self._ppf(np.asarray(u, dtype=float))

    @classmethod
    def uniform(cls, low: float, high: float) -> "ScoreDistribution":
        if not 0.0 <= low < high:
            raise ValueError(f"uniform support must satisfy 0 <= low < high, got [{low}, {high}]")
        width = high - low

        def pdf(s):
            return np.where((s >= low) & (s <= high), 1.0 / width, 0.0)

        def cdf(s):
            return np.clip((s - low) / width, 0.0, 1.0)

        def ppf(u):
            return low + u * width

        return cls("uniform", high, pdf, cdf, ppf, f"uniform({low}, {high})")

    @classmethod
    def scaled_beta(cls, a: float, b: float, scale: float = 1.0) -> "ScoreDistribution":
        if a <= 0 or b <= 0 or scale <= 0:
            raise ValueError(f"scaled_beta needs positive parameters, got ({a}, {b}, {scale})")

        def pdf(s):
            return stats.beta.pdf(s / scale, a, b) / scale

        def cdf(s):
            return stats.beta.cdf(s / scale, a, b)

        def ppf(u):
            return stats.beta.ppf(u, a, b) * scale

        return cls("scaled-beta", scale, pdf, cdf, ppf, f"beta({a}, {b}, scale={scale})")

    @classmethod
    def from_grid(cls, points, densities) -> "ScoreDistribution":
        points = np.asarray(points, dtype=float)
        densities = np.asarray(densities, dtype=float)
        if points.ndim != 1 or points.shape != densities.shape or len(points) < 2:
            raise ValueError("grid needs matching 1-d points and densities, length >= 2")
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if points[0] < 0:
            raise ValueError("scores are non-negative; grid starts below 0")
        if np.any(densities < 0):
            raise ValueError("densities must be non-negative")
        steps = np.diff(points)
        cum = np.concatenate([[0.0], np.cumsum(steps * (densities[1:] + densities[:-1]) / 2.0)])
        total = cum[-1]
        if total <= 0:
            raise ValueError("grid density integrates to zero")
        densities = densities / total
        cum = cum / total

        def pdf(s):
            return np.interp(s, points, densities, left=0.0, right=0.0)

        def cdf(s):
            return np.interp(s, points, cum, left=0.0, right=1.0)

        def ppf(u):
            return np.interp(u, cum, points)

        return cls("empirical-grid", float(points[-1]), pdf, cdf, ppf,
                   f"grid({len(points)} pts on [{points[0]}, {points[-1]}])")

    @classmethod
    def from_histogram(cls, bin_left, bin_right, count) -> "ScoreDistribution":
        """Adapt a (bin_left, bin_right, count) histogram to a density grid."""
        bin_left = np.asarray(bin_left, dtype=float)
        bin_right = np.asarray(bin_right, dtype=float)
        count = np.asarray(count, dtype=float)
        if not (len(bin_left) == len(bin_right) == len(count)) or len(count) == 0:
            raise ValueError("histogram columns must be equal-length and non-empty")
        widths = bin_right - bin_left
        if np.any(widths <= 0):
            raise ValueError("histogram bins must have positive width")
        total = count.sum()
        if total <= 0:
            raise ValueError("histogram holds no mass")
        mids = (bin_left + bin_right) / 2.0
        dens = count / (total * widths)
        return cls.from_grid(mids, dens)


def _cdf_matrix(dists: list[ScoreDistribution], s: np.ndarray) -> np.ndarray:
    return np.vstack([d.cdf(s) for d in dists])


def _rank_prob_from_cdfs(F: np.ndarray, candidate: int, rank: int) -> np.ndarray:
    """P(candidate holds ``rank`` | score s) from rival CDF rows F at s."""
    m = F.shape[0]
    rivals = [j for j in range(m) if j != candidate]
    out = np.zeros(F.shape[1])
    for beat_set in combinations(rivals, rank - 1):
        term = np.ones(F.shape[1])
        for l in beat_set:
            term = term * (1.0 - F[l])
        for j in rivals:
            if j not in beat_set:
                term = term * F[j]
        out += term
    return out


def _validate(dists: list[ScoreDistribution], candidate: int, rank: int) -> None:
    m = len(dists)
    if m == 0:
        raise ValueError("need at least one distribution")
    if m > MAX_EXACT_ADS:
        raise CombinatorialLimit(f"exact enumeration capped at {MAX_EXACT_ADS} ads, got {m}")
    if not 0 <= candidate < m:
        raise ValueError(f"candidate index {candidate} outside 0..{m - 1}")
    if not 1 <= rank <= m:
        raise ValueError(f"rank {rank} outside 1..{m}")


def rank_prob_given_score(dists: list[ScoreDistribution], candidate: int,
                          rank: int, s) -> np.ndarray | float:
    """P(candidate attains ``rank`` | its score equals s), s scalar or array."""
    _validate(dists, candidate, rank)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    F = _cdf_matrix(dists, s_arr)
    out = _rank_prob_from_cdfs(F, candidate, rank)
    return float(out[0]) if np.isscalar(s) or np.asarray(s).ndim == 0 else out


@dataclass(frozen=True)
class RankProbability:
    """One candidate/rank pair: the score-conditional probability and its marginal."""

    candidate: int
    rank: int
    conditional: object  # callable s -> P(rank | score = s)
    marginal: float

    def __call__(self, s):
        return self.conditional(s)


def rank_probability(dists: list[ScoreDistribution], candidate: int,
                     rank: int) -> RankProbability:
    """Bundle P(rank | score) as a reusable handle together with P(rank)."""
    _validate(dists, candidate, rank)

    def conditional(s):
        return rank_prob_given_score(dists, candidate, rank, s)

    return RankProbability(candidate=candidate, rank=rank, conditional=conditional,
                           marginal=rank_marginal(dists, candidate, rank))


def _simpson_grid(dists: list[ScoreDistribution]) -> tuple[np.ndarray, np.ndarray]:
    upper = max(d.upper for d in dists)
    s = np.linspace(0.0, upper, SIMPSON_INTERVALS + 1)
    w = np.ones_like(s)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (upper / SIMPSON_INTERVALS) / 3.0
    return s, w


@dataclass(frozen=True)
class RankProfile:
    """Quadrature results for one candidate: per-rank mass and conditional mean."""

    candidate: int
    marginals: np.ndarray      # P(rank = k), index k-1
    conditional_means: np.ndarray  # E[score | rank = k], NaN where unreachable


def conditional_mean_profile(dists: list[ScoreDistribution], candidate: int) -> RankProfile:
    """All ranks at once, sharing one CDF evaluation over the Simpson grid."""
    _validate(dists, candidate, 1)
    m = len(dists)
    s, w = _simpson_grid(dists)
    F = _cdf_matrix(dists, s)
    density = dists[candidate].pdf(s)
    marginals = np.empty(m)
    means = np.full(m, np.nan)
    for rank in range(1, m + 1):
        pk = _rank_prob_from_cdfs(F, candidate, rank)
        mass = float(np.sum(w * density * pk))
        marginals[rank - 1] = mass
        if mass >= MASS_FLOOR:
            means[rank - 1] = float(np.sum(w * s * density * pk)) / mass
    return RankProfile(candidate=candidate, marginals=marginals, conditional_means=means)


def conditional_density_profile(dists: list[ScoreDistribution], candidate: int
                                ) -> tuple[np.ndarray, np.ndarray]:
    """Conditional score densities given each rank, on the Simpson grid.

    Returns (grid, matrix) where row k-1 is the density of the candidate's
    score conditional on attaining rank k; rows for ranks with negligible
    mass are NaN.
    """
    _validate(dists, candidate, 1)
    m = len(dists)
    s, w = _simpson_grid(dists)
    F = _cdf_matrix(dists, s)
    density = dists[candidate].pdf(s)
    out = np.full((m, len(s)), np.nan)
    for rank in range(1, m + 1):
        pk = _rank_prob_from_cdfs(F, candidate, rank)
        mass = float(np.sum(w * density * pk))
        if mass >= MASS_FLOOR:
            out[rank - 1] = density * pk / mass
    return s, out


def rank_marginal(dists: list[ScoreDistribution], candidate: int, rank: int) -> float:
    """P(candidate attains ``rank``), integrating the conditional over its density."""
    _validate(dists, candidate, rank)
    s, w = _simpson_grid(dists)
    pk = _rank_prob_from_cdfs(_cdf_matrix(dists, s), candidate, rank)
    return float(np.sum(w * dists[candidate].pdf(s) * pk))


def conditional_score_mean(dists: list[ScoreDistribution], candidate: int, rank: int) -> float:
    """E[score | candidate attains ``rank``] by fixed-grid Simpson quadrature."""
    _validate(dists, candidate, rank)
    s, w = _simpson_grid(dists)
    pk = _rank_prob_from_cdfs(_cdf_matrix(dists, s), candidate, rank)
    density = dists[candidate].pdf(s)
    mass = float(np.sum(w * density * pk))
    if mass < MASS_FLOOR:
        raise RankUnreachable(
            f"candidate {candidate} reaches rank {rank} with mass {mass:.3e}")
    return float(np.sum(w * s * density * pk)) / mass


@dataclass(frozen=True)
class SplitVerdict:
    """Outcome of the single-crossing test between two density grids."""

    splittable: bool
    split_index: int | None
    tolerance: float


def check_splittable(f, g, tolerance: float = 0.0) -> SplitVerdict:
    """Test whether f crosses g exactly once, from below to above.

    Returns the smallest index v with f <= g + tol strictly below v and
    f >= g - tol at and above v, or a negative verdict if no such v exists.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise GridMismatch(f"grids differ in shape: {f.shape} vs {g.shape}")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    below_ok = f <= g + tolerance   # admissible as a pre-split bin
    above_ok = f >= g - tolerance   # admissible as a post-split bin
    # prefix_ok[v]: every bin strictly below v is admissible pre-split
    prefix_ok = np.concatenate(([True], np.logical_and.accumulate(below_ok)[:-1]))
    suffix_ok = np.logical_and.accumulate(above_ok[::-1])[::-1]
    valid = prefix_ok & suffix_ok
    if not valid.any():
        return SplitVerdict(False, None, tolerance)
    return SplitVerdict(True, int(np.argmax(valid)), tolerance)


def split_histogram_densities(edges_f, counts_f, edges_g, counts_g) -> SplitVerdict:
    """Splittability of two histograms sharing bin edges, at 3x the pooled
    per-bin sampling standard error of the density estimates."""
    edges_f = np.asarray(edges_f, dtype=float)
    edges_g = np.asarray(edges_g, dtype=float)
    if edges_f.shape != edges_g.shape or not np.allclose(edges_f, edges_g, atol=0, rtol=0):
        raise GridMismatch("histograms do not share bin edges")
    counts_f = np.asarray(counts_f, dtype=float)
    counts_g = np.asarray(counts_g, dtype=float)
    widths = np.diff(edges_f)
    n_f, n_g = counts_f.sum(), counts_g.sum()
    dens_f = counts_f / (n_f * widths)
    dens_g = counts_g / (n_g * widths)
    var_f = dens_f / (n_f * widths)
    var_g = dens_g / (n_g * widths)
    tolerance = 3.0 * float(np.sqrt(np.mean(var_f + var_g)))
    return check_splittable(dens_f, dens_g, tolerance)


@dataclass(frozen=True)
class RankDecomposition:
    """Top-two-rank contrast split into two monotone parts of equal weight.

    P(rank 1 | s) - alpha * P(rank 2 | s) with alpha = P(rank 1)/P(rank 2)
    equals plus_part(s) - minus_part(s) where both parts are non-decreasing
    in s and integrate to the same value against the candidate's density.
    ``residual`` is that integral difference (ideally zero) and the
    monotonicity flags report grid-level checks of the two parts.
    """

    residual: float
    plus_monotone: bool
    minus_monotone: bool


def top_rank_decomposition(dists: list[ScoreDistribution], candidate: int,
                           monotone_slack: float = 1e-12) -> RankDecomposition:
    """Build the two monotone parts and verify their zero-integral property."""
    _validate(dists, candidate, 2 if len(dists) >= 2 else 1)
    if len(dists) < 2:
        raise RankUnreachable("rank 2 does not exist with a single ad")
    s, w = _simpson_grid(dists)
    F = _cdf_matrix(dists, s)
    density = dists[candidate].pdf(s)
    p1 = _rank_prob_from_cdfs(F, candidate, 1)
    p2 = _rank_prob_from_cdfs(F, candidate, 2)
    mass1 = float(np.sum(w * density * p1))
    mass2 = float(np.sum(w * density * p2))
    if mass2 < MASS_FLOOR:
        raise RankUnreachable(f"rank 2 mass {mass2:.3e} too small for the contrast")
    alpha = mass1 / mass2
    rivals = [j for j in range(len(dists)) if j != candidate]
    prod_all = np.ones_like(s)
    for j in rivals:
        prod_all = prod_all * F[j]
    # leave-one-out products prod_{j != candidate, l} F_j
    loo = []
    for l in rivals:
        term = np.ones_like(s)
        for j in rivals:
            if j != l:
                term = term * F[j]
        loo.append(term)
    sum_loo = np.sum(loo, axis=0)
    sum_weighted = np.zeros_like(s)
    for l, term in zip(rivals, loo):
        sum_weighted += F[l] * term
    plus_part = prod_all + alpha * sum_weighted
    minus_part = alpha * sum_loo
    residual = float(np.sum(w * density * (plus_part - minus_part)))
    plus_monotone = bool(np.all(np.diff(plus_part) >= -monotone_slack))
    minus_monotone = bool(np.all(np.diff(minus_part) >= -monotone_slack))
    return RankDecomposition(residual=residual,
                             plus_monotone=plus_monotone,
                             minus_monotone=minus_monotone)
