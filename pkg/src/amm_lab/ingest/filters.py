from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from amm_lab.errors import AmmLabError
from amm_lab.ingest.schema import Dataset, PoolDescriptor
from amm_lab.ledger import EventKind, LiquidityEvent, build_ledger, match_fifo, open_liquidity

# Analysis window: May 1, 2022 to April 1, 2024.
DEFAULT_BLOCK_LO = 14_691_320
DEFAULT_BLOCK_HI = 19_560_244
DEFAULT_MIN_TVL_USD = 10_000.0


@dataclass(frozen=True)
class DatasetFilter:
    """Selection rules for the analysed dataset. Block bounds are inclusive."""

    min_tvl_usd: float = DEFAULT_MIN_TVL_USD
    block_lo: int = DEFAULT_BLOCK_LO
    block_hi: int = DEFAULT_BLOCK_HI
    closed_only: bool = True
    pool_allowlist: frozenset[str] | None = None

    def __post_init__(self):
        if not self.block_lo < self.block_hi:
            raise ValueError(f"block_lo {self.block_lo} must be below block_hi {self.block_hi}")
        if self.min_tvl_usd < 0:
            raise ValueError("min_tvl_usd must be non-negative")
        if self.pool_allowlist is not None and not isinstance(self.pool_allowlist, frozenset):
            object.__setattr__(self, "pool_allowlist", frozenset(self.pool_allowlist))

    def as_dict(self) -> dict:
        return {
            "min_tvl_usd": self.min_tvl_usd,
            "block_lo": self.block_lo,
            "block_hi": self.block_hi,
            "closed_only": self.closed_only,
            "pool_allowlist": None if self.pool_allowlist is None else sorted(self.pool_allowlist),
        }


def _pool_kept(pool: PoolDescriptor, f: DatasetFilter) -> bool:
    if pool.tvl_usd < f.min_tvl_usd:
        return False
    if f.pool_allowlist is not None:
        return pool.name in f.pool_allowlist or pool.pool_id in f.pool_allowlist
    return True


def closed_position_ids(events: Iterable[LiquidityEvent]) -> set[str]:
    """Positions whose deposits are all withdrawn within the given events.

    Positions that cannot be matched (withdrawing liquidity deposited before
    the window, duplicate keys, or opened and closed at the same timestamp)
    are not considered closed.
    """
    by_pos: dict[str, list[LiquidityEvent]] = {}
    for ev in events:
        by_pos.setdefault(ev.position_id, []).append(ev)
    closed = set()
    for pid, evs in by_pos.items():
        if not any(ev.kind is EventKind.DEPOSIT for ev in evs):
            continue
        try:
            group = build_ledger(evs)[pid]
            match_fifo(group)
            if open_liquidity(group) == 0:
                closed.add(pid)
        except AmmLabError:
            continue
    return closed


def apply_filters(
    pools: list[PoolDescriptor], events: list[LiquidityEvent], f: DatasetFilter
) -> Dataset:
    """Select pools and events; surviving records are returned unchanged and in order."""
    kept_pools = [p for p in pools if _pool_kept(p, f)]
    pool_ids = {p.pool_id for p in kept_pools}
    kept = [ev for ev in events if ev.pool_id in pool_ids and f.block_lo <= ev.block <= f.block_hi]
    if f.closed_only:
        closed = closed_position_ids(kept)
        kept = [ev for ev in kept if ev.position_id in closed]
    return Dataset(kept_pools, kept)
