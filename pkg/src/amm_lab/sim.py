"""
Strategy backtests on price paths.

A position is opened at the first sample of a path, earns a pro-rata share
of each step's fee volume while the step-end price lies inside its range,
and is closed at the last sample within its duration. ``simulate_position``
values the close through the closed-form concentrated-liquidity IL;
``oracle_replay`` instead replays fee-free swaps against the position's
virtual reserves and values the tokens it actually ends up holding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from amm_lab.amm_math import (
    FEE_DENOMINATOR,
    PoolState,
    PriceRange,
    Side,
    amounts_in_range,
    execute_swap,
    liquidity_from_amounts,
)
from amm_lab.analytics import CohortStats, cohort_stats
from amm_lab.errors import DomainError
from amm_lab.il_metrics import Branch, ILQuery, il_v3, il_v3_branch

SECONDS_PER_DAY = 86400
SECONDS_PER_YEAR = 365 * SECONDS_PER_DAY


@dataclass(frozen=True, eq=False)
class PricePath:
    """Samples of pool price ``p`` (token1 per token0), step volume and token1 USD price.

    ``volume_usd[i]`` is the volume traded during the step ending at sample
    ``i``; ``volume_usd[0]`` is ignored.
    """

    t: np.ndarray
    p: np.ndarray
    volume_usd: np.ndarray
    p_y: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=np.int64)
        arrays = [np.array(a, dtype=float) for a in (self.p, self.volume_usd, self.p_y)]
        if any(a.ndim != 1 or len(a) != len(t) for a in arrays) or t.ndim != 1:
            raise DomainError("path arrays must be one-dimensional and of equal length")
        if len(t) < 1:
            raise DomainError("empty path")
        if np.any(np.diff(t) <= 0):
            raise DomainError("timestamps must be strictly increasing")
        p, vol, p_y = arrays
        if not (np.all(np.isfinite(p)) and np.all(p > 0)):
            raise DomainError("prices must be positive and finite")
        if not (np.all(np.isfinite(p_y)) and np.all(p_y > 0)):
            raise DomainError("token1 USD prices must be positive and finite")
        if not (np.all(np.isfinite(vol)) and np.all(vol >= 0)):
            raise DomainError("volumes must be non-negative")
        for name, value in zip(("t", "p", "volume_usd", "p_y"), (t, p, vol, p_y)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PricePath):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in ("t", "p", "volume_usd", "p_y"))

    @property
    def span_days(self) -> float:
        return float(self.t[-1] - self.t[0]) / SECONDS_PER_DAY

    @classmethod
    def from_prices(cls, prices: Sequence[float], *, dt_seconds: int = 3600, volume_usd: float = 0.0, p_y: float = 1.0, t0: int = 0) -> PricePath:
        """Evenly spaced path with a constant per-step volume."""
        n = len(prices)
        vol = np.full(n, float(volume_usd))
        if n:
            vol[0] = 0.0
        return cls(t0 + dt_seconds * np.arange(n), np.asarray(prices, float), vol, np.full(n, float(p_y)))


@dataclass(frozen=True)
class ConstantVolume:
    """Fixed USD volume per day, spread evenly over steps."""

    usd_per_day: float = 0.0

    def __call__(self, log_returns: np.ndarray, dt_seconds: int) -> np.ndarray:
        return np.full(len(log_returns), self.usd_per_day * dt_seconds / SECONDS_PER_DAY)


def gbm_path(
    seed: int,
    p0: float,
    mu: float,
    sigma: float,
    dt_seconds: int,
    n_steps: int,
    volume_model: Callable[[np.ndarray, int], np.ndarray] = ConstantVolume(),
    *,
    p_y: float = 1.0,
    t0: int = 0,
) -> PricePath:
    """Geometric Brownian motion sampled every ``dt_seconds``; ``mu`` and ``sigma`` are annual."""
    if not p0 > 0 or sigma < 0 or n_steps < 1 or dt_seconds <= 0:
        raise DomainError("need p0 > 0, sigma >= 0, n_steps >= 1 and dt_seconds > 0")
    dt = dt_seconds / SECONDS_PER_YEAR
    z = np.random.default_rng(seed).standard_normal(n_steps)
    steps = (mu - 0.5 * sigma * sigma) * dt + sigma * math.sqrt(dt) * z
    log_p = np.concatenate(([0.0], np.cumsum(steps)))
    volume = np.concatenate(([0.0], np.asarray(volume_model(steps, dt_seconds), dtype=float)))
    return PricePath(t0 + dt_seconds * np.arange(n_steps + 1), p0 * np.exp(log_p), volume, np.full(n_steps + 1, float(p_y)))


@dataclass(frozen=True)
class SimConfig:
    range: PriceRange
    duration_days: float
    deposit_usd: float = 10_000.0
    fee_ppm: int = 500
    pool_liquidity_other: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.deposit_usd > 0:
            raise DomainError("deposit_usd must be positive")
        if not self.duration_days > 0:
            raise DomainError("duration_days must be positive")
        if not 0 <= self.fee_ppm < FEE_DENOMINATOR:
            raise DomainError(f"fee_ppm out of range: {self.fee_ppm}")
        if self.pool_liquidity_other < 0:
            raise DomainError("pool_liquidity_other must be non-negative")


@dataclass(frozen=True)
class SimResult:
    realized_il: float
    rewards: float
    lp_return: float
    time_in_range: float
    fees_usd: float
    duration_days: float
    d: float
    branch: Branch
    in_range_at_open: bool

    def as_dict(self) -> dict:
        return {
            "realized_il": self.realized_il,
            "rewards": self.rewards,
            "lp_return": self.lp_return,
            "time_in_range": self.time_in_range,
            "fees_usd": self.fees_usd,
            "duration_days": self.duration_days,
            "d": self.d,
            "branch": self.branch.name.lower(),
            "in_range_at_open": self.in_range_at_open,
        }


@dataclass(frozen=True)
class _Opened:
    close: int
    liquidity: float
    x0: float
    y0: float


def _open(path: PricePath, cfg: SimConfig) -> _Opened:
    if len(path) < 2:
        raise DomainError("path needs at least two samples")
    horizon = path.t[0] + cfg.duration_days * SECONDS_PER_DAY
    if horizon > path.t[-1] + 1e-6:
        raise DomainError(f"duration {cfg.duration_days} days exceeds the path span of {path.span_days} days")
    close = int(np.searchsorted(path.t, horizon, side="right")) - 1
    if close < 1:
        raise DomainError("duration shorter than one path step")
    p0, p_y0 = float(path.p[0]), float(path.p_y[0])
    ux, uy = amounts_in_range(1.0, p0, cfg.range)
    scale = cfg.deposit_usd / (ux * p0 * p_y0 + uy * p_y0)
    x0, y0 = ux * scale, uy * scale
    return _Opened(close, liquidity_from_amounts(x0, y0, p0, cfg.range), x0, y0)


def _accrue(path: PricePath, cfg: SimConfig, op: _Opened) -> tuple[float, float]:
    """Fees earned and fraction of steps whose end price lies in range."""
    share = op.liquidity / (op.liquidity + cfg.pool_liquidity_other)
    rate = cfg.fee_ppm / FEE_DENOMINATOR
    fees, hits = 0.0, 0
    for i in range(1, op.close + 1):
        if cfg.range.contains(float(path.p[i])):
            hits += 1
            fees += float(path.volume_usd[i]) * rate * share
    return fees, hits / op.close


def _result(path: PricePath, cfg: SimConfig, op: _Opened, il: float, fees: float, tir: float) -> SimResult:
    p0, p1, p_y1 = float(path.p[0]), float(path.p[op.close]), float(path.p_y[op.close])
    v_hodl = (op.x0 * p1 + op.y0) * p_y1
    rewards = fees / v_hodl
    d = p1 / p0
    return SimResult(
        realized_il=il,
        rewards=rewards,
        lp_return=il + rewards,
        time_in_range=tir,
        fees_usd=fees,
        duration_days=float(path.t[op.close] - path.t[0]) / SECONDS_PER_DAY,
        d=d,
        branch=il_v3_branch(ILQuery(d, p0, cfg.range)),
        in_range_at_open=cfg.range.contains(p0),
    )


def simulate_position(path: PricePath, cfg: SimConfig) -> SimResult:
    """Closed-form valuation of a position held over ``path``.

    Positions opened outside their range are valued from the amounts they
    hold at close, since the closed form assumes an in-range open; the
    result carries ``in_range_at_open=False``.
    """
    op = _open(path, cfg)
    fees, tir = _accrue(path, cfg, op)
    p0, p1 = float(path.p[0]), float(path.p[op.close])
    if cfg.range.contains(p0):
        il = il_v3(ILQuery(p1 / p0, p0, cfg.range))
    else:
        x1, y1 = amounts_in_range(op.liquidity, p1, cfg.range)
        il = (x1 * p1 + y1) / (op.x0 * p1 + op.y0) - 1.0
    return _result(path, cfg, op, il, fees, tir)


def oracle_replay(path: PricePath, cfg: SimConfig) -> SimResult:
    """Brute-force valuation by replaying every price move as a swap.

    Inside ``[p_a, p_b]`` the position behaves as a constant-product pool on
    virtual reserves ``(x + L/sqrt(p_b), y + L*sqrt(p_a))`` with invariant
    ``L**2``. Each step swaps the position to the step-end price clipped to
    the range; the final real reserves are then valued directly.
    """
    op = _open(path, cfg)
    rng, L = cfg.range, op.liquidity
    off_x, off_y = L / math.sqrt(rng.p_b), L * math.sqrt(rng.p_a)

    def clip(p: float) -> float:
        return min(max(p, rng.p_a), rng.p_b)

    state = PoolState(op.x0 + off_x, op.y0 + off_y, L * L)
    x, y = op.x0, op.y0
    sqrt_p = math.sqrt(clip(float(path.p[0])))
    fees = 0.0
    hits = 0
    share = L / (L + cfg.pool_liquidity_other)
    for i in range(1, op.close + 1):
        p = float(path.p[i])
        target = math.sqrt(clip(p))
        if target > sqrt_p:
            dy = L * (target - sqrt_p)
            dx, state, _ = execute_swap(state, dy, Side.TOKEN1_IN)
            x, y = x - dx, y + dy
        elif target < sqrt_p:
            dx = L * (1.0 / target - 1.0 / sqrt_p)
            dy, state, _ = execute_swap(state, dx, Side.TOKEN0_IN)
            x, y = x + dx, y - dy
        sqrt_p = target
        if rng.p_a <= p <= rng.p_b:
            hits += 1
            fees += float(path.volume_usd[i]) * cfg.fee_ppm / FEE_DENOMINATOR * share
    x1, y1 = max(x, 0.0), max(y, 0.0)
    p1 = float(path.p[op.close])
    il = (x1 * p1 + y1) / (op.x0 * p1 + op.y0) - 1.0
    return _result(path, cfg, op, il, fees, hits / op.close)


# -- strategy grid -----------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    name: str
    duration_days: float
    range_size: float

    def __post_init__(self):
        if not self.duration_days > 0 or not self.range_size > 0:
            raise DomainError(f"strategy {self.name!r} needs positive duration and range size")


DEFAULT_STRATEGIES = (
    Strategy("short-narrow", 0.33, 0.03),
    Strategy("long-narrow", 30.0, 0.03),
    Strategy("short-wide", 0.33, 0.40),
    Strategy("long-wide", 30.0, 0.40),
)


@dataclass(frozen=True)
class GridParams:
    deposit_usd: float = 10_000.0
    fee_ppm: int = 500
    pool_liquidity_other: float = 1.0e7
    compound: bool = False


@dataclass
class GridRow:
    strategy: str
    pool_type: str
    results: list[SimResult]
    stats: dict[str, CohortStats]
    oracle_max_dev: float | None = None
    compounded: CohortStats | None = None


def _config(path: PricePath, s: Strategy, params: GridParams, seed: int, start: int = 0) -> SimConfig:
    return SimConfig(
        range=PriceRange.around(float(path.p[start]), s.range_size),
        duration_days=s.duration_days,
        deposit_usd=params.deposit_usd,
        fee_ppm=params.fee_ppm,
        pool_liquidity_other=params.pool_liquidity_other,
        seed=seed,
    )


def _slice(path: PricePath, start: int, stop: int) -> PricePath:
    return PricePath(path.t[start:stop], path.p[start:stop], path.volume_usd[start:stop], path.p_y[start:stop])


def _compounded_return(path: PricePath, s: Strategy, params: GridParams, seed: int) -> float:
    """Re-open the strategy back to back over the whole path and compound its returns."""
    growth, start = 1.0, 0
    while True:
        horizon = path.t[start] + s.duration_days * SECONDS_PER_DAY
        if horizon > path.t[-1]:
            break
        stop = int(np.searchsorted(path.t, horizon, side="right"))
        if stop - start < 2:
            break
        sub = _slice(path, start, stop)
        cfg = replace(_config(sub, s, params, seed), duration_days=sub.span_days)
        growth *= 1.0 + simulate_position(sub, cfg).lp_return
        start = stop - 1
    return growth - 1.0


def run_strategy_grid(
    paths: Sequence[PricePath],
    strategies: Sequence[Strategy] = DEFAULT_STRATEGIES,
    pool_type: str = "stable-risky",
    params: GridParams = GridParams(),
    *,
    base_seed: int = 0,
    with_oracle: bool = True,
) -> list[GridRow]:
    """Simulate every strategy on every path; one cohort row per strategy.

    Positions open at each path's first sample with a range centred (in the
    geometric sense) on that price. Per-position returns are reported; with
    ``params.compound`` each row also carries the compounded return of
    re-opening the strategy back to back until the path ends.
    """
    if not paths:
        raise DomainError("no price paths")
    if not strategies:
        raise DomainError("no strategies")
    rows = []
    for s in strategies:
        results, devs, compounded = [], [], []
        for i, path in enumerate(paths):
            cfg = _config(path, s, params, base_seed + i)
            res = simulate_position(path, cfg)
            results.append(res)
            if with_oracle:
                devs.append(abs(res.realized_il - oracle_replay(path, cfg).realized_il))
            if params.compound:
                compounded.append(_compounded_return(path, s, params, base_seed + i))
        stats = {
            metric: cohort_stats([getattr(r, metric) for r in results])
            for metric in ("realized_il", "rewards", "lp_return", "time_in_range")
        }
        rows.append(
            GridRow(
                strategy=s.name,
                pool_type=pool_type,
                results=results,
                stats=stats,
                oracle_max_dev=max(devs) if devs else None,
                compounded=cohort_stats(compounded) if compounded else None,
            )
        )
    return rows


@dataclass(frozen=True)
class PathSpec:
    """GBM parameters shared by a batch of seeded paths."""

    p0: float = 2000.0
    mu: float = 0.0
    sigma: float = 0.8
    dt_seconds: int = 3600
    n_steps: int = 30 * 24
    volume_usd_per_day: float = 2.0e7
    p_y: float = 1.0

    def path(self, seed: int) -> PricePath:
        return gbm_path(
            seed, self.p0, self.mu, self.sigma, self.dt_seconds, self.n_steps,
            ConstantVolume(self.volume_usd_per_day), p_y=self.p_y,
        )


def seeded_paths(spec: PathSpec, n_paths: int, base_seed: int = 0) -> list[PricePath]:
    """Path ``i`` is drawn with seed ``base_seed + i``, so batches are order independent."""
    return [spec.path(base_seed + i) for i in range(n_paths)]
