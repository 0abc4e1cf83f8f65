"""
Cohort analytics over per-position metrics.

Positions are classified by pool type, bucketed by duration, size and range
size, and split into the four duration/range strategies by percentile
thresholds. Every cohort is summarised by mean, median, sample standard
deviation and a 95% confidence interval of the mean.
"""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from amm_lab.errors import DomainError
from amm_lab.ledger import PositionMetrics

DEFAULT_STABLES = frozenset({"USDC", "USDT", "DAI"})

# 30th/70th percentile cutoffs observed on the full on-chain dataset.
REFERENCE_DURATION_THRESHOLDS = (1.12, 26.90)
REFERENCE_RANGE_THRESHOLDS = (0.0467, 0.2756)

DEFAULT_SIZE_EDGES = (1_000.0, 10_000.0, 100_000.0)
DEFAULT_RANGE_EDGES = (0.02, 0.1, 0.5)
Z95 = 1.96

HOUR_DAYS = 1.0 / 24.0


class PoolType(str, enum.Enum):
    STABLE_STABLE = "stable-stable"
    STABLE_RISKY = "stable-risky"
    RISKY_RISKY = "risky-risky"


class StrategyClass(str, enum.Enum):
    SHORT_NARROW = "short-narrow"
    LONG_NARROW = "long-narrow"
    SHORT_WIDE = "short-wide"
    LONG_WIDE = "long-wide"
    UNCLASSIFIED = "unclassified"


class CIMethod(str, enum.Enum):
    NORMAL = "normal"
    STUDENT_T = "t"


@dataclass(frozen=True)
class DurationBucket:
    key: str
    label: str
    lo_days: float
    hi_days: float

    def contains(self, days: float) -> bool:
        return self.lo_days <= days < self.hi_days


DURATION_BUCKETS = (
    DurationBucket("<1h", "<1 hour", 0.0, HOUR_DAYS),
    DurationBucket("1h-1d", "1 hour to 1 day", HOUR_DAYS, 1.0),
    DurationBucket("1d-28d", "1–28 days", 1.0, 28.0),
    DurationBucket("28d-90d", "28–90 days", 28.0, 90.0),
    DurationBucket("90d-360d", "90–360 days", 90.0, 360.0),
    DurationBucket("360d+", "360+ days", 360.0, math.inf),
)

METRICS = ("realized_il", "rewards", "lp_return")
DAILY_METRICS = tuple(f"daily_{m}" for m in METRICS)
GROUPINGS = ("pool", "pool_type", "duration", "size", "range", "strategy")


@dataclass(frozen=True)
class CohortStats:
    n: int
    mean: float
    median: float
    std: float
    ci95_lo: float
    ci95_hi: float

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "median": self.median,
            "std": self.std,
            "ci95_lo": self.ci95_lo,
            "ci95_hi": self.ci95_hi,
        }


# -- classification ----------------------------------------------------------


def classify_pool_type(token0: str, token1: str, stable_set: Iterable[str] = DEFAULT_STABLES) -> PoolType:
    if not token0 or not token1:
        raise DomainError("token symbols must be non-empty")
    stables = frozenset(stable_set)
    n = (token0 in stables) + (token1 in stables)
    return (PoolType.RISKY_RISKY, PoolType.STABLE_RISKY, PoolType.STABLE_STABLE)[n]


def duration_bucket(duration_days: float) -> DurationBucket:
    if not duration_days > 0:
        raise DomainError(f"duration must be positive, got {duration_days}")
    for bucket in DURATION_BUCKETS:
        if bucket.contains(duration_days):
            return bucket
    raise DomainError(f"duration {duration_days} is not finite")


def _fmt_edge(x: float) -> str:
    for scale, suffix in ((1e9, "b"), (1e6, "m"), (1e3, "k")):
        if abs(x) >= scale and (x / scale) == int(x / scale):
            return f"{int(x / scale)}{suffix}"
    return f"{x:g}"


def edge_bucket(value: float, edges: Sequence[float]) -> str:
    """Half-open ``[lo, hi)`` bucket label for ``value`` among sorted ``edges``."""
    if not edges:
        return "all"
    if value < edges[0]:
        return f"<{_fmt_edge(edges[0])}"
    for lo, hi in zip(edges, edges[1:]):
        if lo <= value < hi:
            return f"{_fmt_edge(lo)}-{_fmt_edge(hi)}"
    return f"{_fmt_edge(edges[-1])}+"


def size_bucket(size_usd: float, edges: Sequence[float] = DEFAULT_SIZE_EDGES) -> str:
    return edge_bucket(size_usd, edges)


def range_bucket(range_size: float, edges: Sequence[float] = DEFAULT_RANGE_EDGES) -> str:
    return edge_bucket(range_size, edges)


def percentile_thresholds(values: Sequence[float], lo_q: float = 0.30, hi_q: float = 0.70) -> tuple[float, float]:
    """Nearest-rank percentiles: the ceil(q*n)-th smallest value."""
    if not values:
        raise DomainError("percentile of an empty sample")
    if not 0 < lo_q <= hi_q <= 1:
        raise DomainError(f"need 0 < lo_q <= hi_q <= 1, got {lo_q}, {hi_q}")
    ordered = sorted(values)
    n = len(ordered)

    def rank(q: float) -> float:
        # round first so that 0.3*10 is not lifted to rank 4 by float error
        return ordered[max(1, math.ceil(round(q * n, 9))) - 1]

    return rank(lo_q), rank(hi_q)


def classify_strategy(
    m: PositionMetrics,
    duration_thresholds: tuple[float, float] = REFERENCE_DURATION_THRESHOLDS,
    range_thresholds: tuple[float, float] = REFERENCE_RANGE_THRESHOLDS,
) -> StrategyClass:
    d_lo, d_hi = duration_thresholds
    r_lo, r_hi = range_thresholds
    if d_lo > d_hi or r_lo > r_hi:
        raise DomainError("thresholds must satisfy lo <= hi")
    short, long_ = m.duration_days < d_lo, m.duration_days > d_hi
    narrow, wide = m.range_size < r_lo, m.range_size > r_hi
    if short and narrow:
        return StrategyClass.SHORT_NARROW
    if long_ and narrow:
        return StrategyClass.LONG_NARROW
    if short and wide:
        return StrategyClass.SHORT_WIDE
    if long_ and wide:
        return StrategyClass.LONG_WIDE
    return StrategyClass.UNCLASSIFIED


# -- statistics --------------------------------------------------------------


def cohort_stats(values: Sequence[float], ci_method: CIMethod | str = CIMethod.NORMAL) -> CohortStats:
    if not values:
        raise DomainError("statistics of an empty cohort")
    n = len(values)
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if n > 1 else 0.0
    if CIMethod(ci_method) is CIMethod.STUDENT_T and n > 1:
        from scipy.stats import t

        crit = float(t.ppf(0.975, n - 1))
    else:
        crit = Z95
    half = crit * std / math.sqrt(n)
    return CohortStats(n, mean, statistics.median(values), std, mean - half, mean + half)


def daily_normalize(metric: float, duration_days: float) -> float:
    if not duration_days > 0:
        raise DomainError(f"duration must be positive, got {duration_days}")
    return metric / duration_days


def metric_values(m: PositionMetrics) -> dict[str, float]:
    base = {name: getattr(m, name) for name in METRICS}
    daily = {f"daily_{name}": daily_normalize(v, m.duration_days) for name, v in base.items()}
    return {**base, **daily}


# -- aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticsConfig:
    stable_tokens: frozenset[str] = DEFAULT_STABLES
    size_edges: tuple[float, ...] = DEFAULT_SIZE_EDGES
    range_edges: tuple[float, ...] = DEFAULT_RANGE_EDGES
    percentiles: tuple[float, float] = (0.30, 0.70)
    # None derives the cutoffs from the analysed positions
    duration_thresholds: tuple[float, float] | None = None
    range_thresholds: tuple[float, float] | None = None
    ci_method: CIMethod = CIMethod.NORMAL

    def __post_init__(self):
        for name in ("size_edges", "range_edges"):
            edges = tuple(float(e) for e in getattr(self, name))
            if list(edges) != sorted(set(edges)):
                raise DomainError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, edges)
        object.__setattr__(self, "stable_tokens", frozenset(self.stable_tokens))
        object.__setattr__(self, "ci_method", CIMethod(self.ci_method))


@dataclass(frozen=True)
class StrategyThresholds:
    duration: tuple[float, float]
    range: tuple[float, float]
    derived: bool


def strategy_thresholds(positions: Sequence[PositionMetrics], cfg: AnalyticsConfig) -> StrategyThresholds | None:
    """Fixed cutoffs from the config, else percentiles over non stable-stable positions."""
    if cfg.duration_thresholds is not None and cfg.range_thresholds is not None:
        return StrategyThresholds(tuple(cfg.duration_thresholds), tuple(cfg.range_thresholds), False)
    pool = [m for m in positions if m.pool_type != PoolType.STABLE_STABLE.value]
    if not pool:
        return None
    lo_q, hi_q = cfg.percentiles
    dur = cfg.duration_thresholds or percentile_thresholds([m.duration_days for m in pool], lo_q, hi_q)
    rng = cfg.range_thresholds or percentile_thresholds([m.range_size for m in pool], lo_q, hi_q)
    return StrategyThresholds(tuple(dur), tuple(rng), True)


def group_labels(
    m: PositionMetrics,
    cfg: AnalyticsConfig,
    thresholds: StrategyThresholds | None,
    pool_names: Mapping[str, str],
) -> dict[str, str | None]:
    """Group label of ``m`` under every grouping; ``None`` means excluded."""
    strategy = None
    if thresholds is not None and m.pool_type != PoolType.STABLE_STABLE.value:
        cls = classify_strategy(m, thresholds.duration, thresholds.range)
        if cls is not StrategyClass.UNCLASSIFIED:
            strategy = f"strategy:{cls.value}/{m.pool_type}"
    return {
        "pool": f"pool:{pool_names.get(m.pool_id, m.pool_id)}",
        "pool_type": f"pool_type:{m.pool_type}",
        "duration": f"duration:{duration_bucket(m.duration_days).key}",
        "size": f"size:{size_bucket(m.size_usd, cfg.size_edges)}",
        "range": f"range:{range_bucket(m.range_size, cfg.range_edges)}",
        "strategy": strategy,
    }


@dataclass
class CohortReport:
    """``tables[grouping][label][metric]`` -> CohortStats, labels sorted."""

    tables: dict[str, dict[str, dict[str, CohortStats]]] = field(default_factory=dict)
    thresholds: StrategyThresholds | None = None

    def as_dict(self) -> dict:
        return {
            g: {label: {k: s.as_dict() for k, s in row.items()} for label, row in rows.items()}
            for g, rows in self.tables.items()
        }


def aggregate_report(
    positions: Sequence[PositionMetrics],
    groupings: Iterable[str] = GROUPINGS,
    cfg: AnalyticsConfig | None = None,
    pool_names: Mapping[str, str] | None = None,
) -> CohortReport:
    """Cohort statistics per group for every metric and its per-day variant.

    Daily variants divide each position's metric by its own duration before
    aggregating, so their medians are medians of per-position daily values.
    """
    if not positions:
        raise DomainError("no positions to aggregate")
    cfg = cfg or AnalyticsConfig()
    groupings = list(groupings)
    unknown = set(groupings) - set(GROUPINGS)
    if unknown:
        raise DomainError(f"unknown groupings {sorted(unknown)}")
    if any(m.pool_type is None for m in positions) and {"pool_type", "strategy"} & set(groupings):
        raise DomainError("pool_type grouping needs positions tagged with a pool type")
    thresholds = strategy_thresholds(positions, cfg) if "strategy" in groupings else None
    names = pool_names or {}

    members: dict[str, dict[str, list[dict[str, float]]]] = {g: {} for g in groupings}
    for m in positions:
        labels = group_labels(m, cfg, thresholds, names)
        values = metric_values(m)
        for g in groupings:
            if labels[g] is not None:
                members[g].setdefault(labels[g], []).append(values)

    report = CohortReport(thresholds=thresholds)
    for g in groupings:
        report.tables[g] = {
            label: {
                metric: cohort_stats([v[metric] for v in rows], cfg.ci_method)
                for metric in METRICS + DAILY_METRICS
            }
            for label, rows in sorted(members[g].items())
        }
    return report
