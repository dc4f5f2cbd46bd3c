import logging
import math
from dataclasses import dataclass
from typing import (
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    NamedTuple,
    Sequence,
    SupportsInt,
    Tuple,
)

import numpy as np

from ._errors import ConfigurationError, ContractViolation, UndefinedCorrelation
from ._types import Ratio

__all__ = ("RatioSet", "Thresholds", "ScoreHistogram", "RatioDistribution",
           "CalibrationCandidate", "MetricThresholds", "classify_ratio", "classify_metric",
           "distribution_for", "average_compression", "calibrate_thresholds", "closest_pair",
           "match_distribution_thresholds", "max_acceptable_ratio", "tolerance_profile",
           "pearson_r", "exact_agreement", "token_count", "avg_tokens", "token_reduction",
           "relative_flops",)

logger = logging.getLogger(__name__)

MIN_SCORE = 1
MAX_SCORE = 9


def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def _parse_ints(text: str, count: int, what: str) -> List[int]:
    parts = [part.strip() for part in text.split(",")]
    try:
        values = [int(part) for part in parts]
    except ValueError:
        raise ConfigurationError("{} must be {} comma-separated integers, got {!r}".format(
            what, count, text)) from None
    if len(values) != count:
        raise ConfigurationError("{} must be {} comma-separated integers, got {!r}".format(
            what, count, text))
    return values


@dataclass(frozen=True)
class RatioSet:
    f1: int
    f2: int
    f3: int

    def __post_init__(self) -> None:
        for ratio in self:
            if not _is_power_of_two(ratio) or ratio < 2:
                raise ConfigurationError("ratio {} is not a power of two >= 2".format(ratio))
        if self.f2 != 2 * self.f1 or self.f3 != 2 * self.f2:
            raise ConfigurationError("ratios must double: got ({}, {}, {})".format(*self))

    @classmethod
    def parse(cls, text: str) -> "RatioSet":
        return cls(*_parse_ints(text, 3, "ratios"))

    def __iter__(self) -> Iterator[int]:
        return iter((self.f1, self.f2, self.f3))

    def __contains__(self, ratio: object) -> bool:
        return ratio in (self.f1, self.f2, self.f3)

    def index(self, ratio: Ratio) -> int:
        if ratio not in self:
            raise ConfigurationError("ratio {} is not one of {}".format(ratio, tuple(self)))
        return (self.f1, self.f2, self.f3).index(ratio)

    def to_list(self) -> List[int]:
        return list(self)


@dataclass(frozen=True)
class Thresholds:
    a: int
    b: int

    def __post_init__(self) -> None:
        if not MIN_SCORE <= self.a < self.b <= MAX_SCORE:
            raise ConfigurationError("thresholds need 1 <= a < b <= 9, got ({}, {})".format(
                self.a, self.b))

    @classmethod
    def parse(cls, text: str) -> "Thresholds":
        return cls(*_parse_ints(text, 2, "thresholds"))


@dataclass(frozen=True)
class ScoreHistogram:
    counts: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.counts) != MAX_SCORE:
            raise ContractViolation("histogram needs 9 counts, got {}".format(len(self.counts)))
        if any(count < 0 for count in self.counts):
            raise ContractViolation("histogram counts must be non-negative")

    @classmethod
    def from_scores(cls, scores: Iterable[SupportsInt]) -> "ScoreHistogram":
        counts = [0] * MAX_SCORE
        for score in scores:
            value = int(score)
            if not MIN_SCORE <= value <= MAX_SCORE:
                raise ContractViolation("score {} outside 1..9".format(value))
            counts[value - 1] += 1
        return cls(tuple(counts))

    @property
    def total(self) -> int:
        return sum(self.counts)

    def mass(self, low: int, high: int) -> int:
        """Count of scores in ``[low, high]``."""
        return sum(self.counts[low - 1:high])


@dataclass(frozen=True)
class RatioDistribution:
    p1: float
    p2: float
    p3: float

    def __post_init__(self) -> None:
        if min(self.p1, self.p2, self.p3) < 0:
            raise ContractViolation("probabilities must be non-negative")
        if abs(self.p1 + self.p2 + self.p3 - 1.0) > 1e-9:
            raise ContractViolation("probabilities must sum to 1, got {}".format(
                self.p1 + self.p2 + self.p3))

    @classmethod
    def from_labels(cls, labels: Sequence[Ratio], ratios: RatioSet) -> "RatioDistribution":
        if not labels:
            raise ContractViolation("cannot build a distribution from no labels")
        counts = [0, 0, 0]
        for label in labels:
            counts[ratios.index(label)] += 1
        total = len(labels)
        return cls(counts[0] / total, counts[1] / total, counts[2] / total)

    def __iter__(self) -> Iterator[float]:
        return iter((self.p1, self.p2, self.p3))

    def entropy(self) -> float:
        return -sum(p * math.log2(p) for p in self if p > 0)


class CalibrationCandidate(NamedTuple):
    thresholds: Thresholds
    achieved: float
    entropy: float
    distribution: RatioDistribution


@dataclass(frozen=True)
class MetricThresholds:
    low: float
    high: float
    larger_is_complex: bool = True

    def __post_init__(self) -> None:
        if self.low > self.high:
            raise ConfigurationError("metric thresholds need low <= high, got ({}, {})".format(
                self.low, self.high))


def classify_ratio(score: SupportsInt, t: Thresholds, ratios: RatioSet) -> Ratio:
    value = int(score)
    if value <= t.a:
        return ratios.f3
    if value <= t.b:
        return ratios.f2
    return ratios.f1


def classify_metric(value: float, t: MetricThresholds, ratios: RatioSet) -> Ratio:
    """Interval rule of :func:`classify_ratio` applied to a pixel-level metric."""
    low_band, high_band = (ratios.f3, ratios.f1) if t.larger_is_complex else (ratios.f1,
                                                                              ratios.f3)
    if value <= t.low:
        return low_band
    if value <= t.high:
        return ratios.f2
    return high_band


def distribution_for(hist: ScoreHistogram, t: Thresholds) -> RatioDistribution:
    total = hist.total
    if total <= 0:
        raise ContractViolation("histogram is empty")
    p3 = hist.mass(MIN_SCORE, t.a) / total
    p2 = hist.mass(t.a + 1, t.b) / total
    p1 = hist.mass(t.b + 1, MAX_SCORE) / total
    return RatioDistribution(p1, p2, p3)


def average_compression(dist: RatioDistribution, ratios: RatioSet) -> float:
    """Ratio whose token count equals the expected token count of ``dist``."""
    expected = sum(p / (f * f) for p, f in zip(dist, ratios))
    return 1.0 / math.sqrt(expected)


def _candidates(hist: ScoreHistogram, ratios: RatioSet) -> Iterator[CalibrationCandidate]:
    for a in range(MIN_SCORE, MAX_SCORE):
        for b in range(a + 1, MAX_SCORE + 1):
            t = Thresholds(a, b)
            dist = distribution_for(hist, t)
            yield CalibrationCandidate(t, average_compression(dist, ratios), dist.entropy(), dist)


def closest_pair(hist: ScoreHistogram, ratios: RatioSet,
                 target: float) -> CalibrationCandidate:
    return min(_candidates(hist, ratios),
               key=lambda c: (abs(c.achieved - target), c.thresholds.a, c.thresholds.b))


def calibrate_thresholds(hist: ScoreHistogram, ratios: RatioSet, target: float, *,
                         tolerance: float = 0.05) -> List[CalibrationCandidate]:
    """Threshold pairs whose average compression is within ``tolerance`` of ``target``.

    Ranked by descending entropy of the induced ratio distribution, then by distance to
    the target, then lexicographically.
    """
    if target <= 0:
        raise ConfigurationError("target ratio must be positive, got {}".format(target))
    if hist.total <= 0:
        raise ContractViolation("histogram is empty")

    accepted = [c for c in _candidates(hist, ratios)
                if abs(c.achieved - target) / target <= tolerance]
    if not accepted:
        best = closest_pair(hist, ratios, target)
        logger.warning("no threshold pair within %.1f%% of target %.3f; closest is (%d, %d) "
                       "at %.3f", tolerance * 100, target, best.thresholds.a,
                       best.thresholds.b, best.achieved)
        return []
    accepted.sort(key=lambda c: (-c.entropy, abs(c.achieved - target),
                                 c.thresholds.a, c.thresholds.b))
    return accepted


def match_distribution_thresholds(values: Sequence[float], dist: RatioDistribution, *,
                                  larger_is_complex: bool = True) -> MetricThresholds:
    """Metric cut points that reproduce ``dist`` on ``values`` (up to ties)."""
    if not values:
        raise ContractViolation("cannot match a distribution on no values")
    ordered = sorted(float(v) for v in values)
    n = len(ordered)
    low_share, high_share = (dist.p3, dist.p1) if larger_is_complex else (dist.p1, dist.p3)
    low_count = int(round(low_share * n))
    high_count = min(int(round(high_share * n)), n - low_count)
    low = ordered[low_count - 1] if low_count > 0 else -math.inf
    high = ordered[n - high_count - 1] if n - high_count > 0 else -math.inf
    return MetricThresholds(low, max(low, high), larger_is_complex)


def max_acceptable_ratio(mse_by_ratio: Mapping[Ratio, float], tau: float) -> Ratio:
    """Largest ratio whose MSE exceeds the best ratio's MSE by less than ``tau``."""
    if tau <= 0:
        raise ContractViolation("tau must be positive, got {}".format(tau))
    if not mse_by_ratio:
        raise ContractViolation("no MSE values given")
    for ratio, mse in mse_by_ratio.items():
        if not math.isfinite(mse):
            raise ContractViolation("MSE at ratio {} is not finite: {}".format(ratio, mse))
    best = min(mse_by_ratio.values())
    return max(ratio for ratio, mse in mse_by_ratio.items() if mse - best < tau)


def tolerance_profile(rows: Sequence[Mapping[Ratio, float]], ratios: RatioSet,
                      tau: float) -> Dict[Ratio, float]:
    """Fraction of images whose max acceptable ratio is at least each ratio."""
    if not rows:
        raise ContractViolation("no MSE rows given")
    chosen = [max_acceptable_ratio(row, tau) for row in rows]
    return {f: sum(1 for c in chosen if c >= f) / len(chosen) for f in ratios}


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise ContractViolation("sequences differ in length: {} vs {}".format(len(x), len(y)))
    if len(x) < 2:
        raise ContractViolation("correlation needs at least 2 points, got {}".format(len(x)))
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("correlation is undefined for zero variance")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def exact_agreement(pred: Sequence[Ratio], oracle: Sequence[Ratio]) -> float:
    if len(pred) != len(oracle):
        raise ContractViolation("sequences differ in length: {} vs {}".format(
            len(pred), len(oracle)))
    if not pred:
        raise ContractViolation("agreement needs at least one position")
    matches = sum(1 for p, o in zip(pred, oracle) if p == o)
    return 100.0 * matches / len(pred)


def token_count(r: int, f: Ratio, patch: int = 1) -> int:
    side = f * patch
    if r % side != 0:
        raise ConfigurationError("resolution {} is not divisible by ratio*patch = {}".format(
            r, side))
    return (r // side) ** 2


def avg_tokens(dist: RatioDistribution, r: int, ratios: RatioSet, patch: int = 1) -> float:
    return sum(p * token_count(r, f, patch) for p, f in zip(dist, ratios))


def token_reduction(average: float, baseline: float) -> float:
    """Percent fewer tokens than ``baseline``."""
    if baseline <= 0:
        raise ContractViolation("baseline token count must be positive")
    return 100.0 * (1.0 - average / baseline)


def relative_flops(average: float, baseline: float) -> float:
    """Relative evaluation cost, linear in the token count."""
    if baseline <= 0:
        raise ContractViolation("baseline token count must be positive")
    return average / baseline
