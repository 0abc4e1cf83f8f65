"""
Position lifecycle reconstruction.

Liquidity events are grouped per position and matched first-in-first-out:
every withdrawal consumes the oldest open deposit tranche first, and each
(tranche, withdrawal) pairing becomes one ``ClosedPosition`` slice with its
amounts pro-rated by the liquidity it consumed. Liquidity is kept as an
integer (on-chain uint128), so matching is exact.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from amm_lab.amm_math import PriceRange
from amm_lab.errors import DomainError, DuplicateEventError, ImbalanceError, OrderingError
from amm_lab.il_metrics import (
    Normalization,
    PositionSnapshot,
    PriceQuote,
    realized_il,
    value_hodl,
)

SECONDS_PER_DAY = 86400


class EventKind(str, enum.Enum):
    DEPOSIT = "deposit"
    WITHDRAW = "withdraw"
    COLLECT = "collect"


class FeeAttribution(str, enum.Enum):
    PRO_RATA = "pro-rata"  # liquidity-time share among open slices
    CLOSING = "closing"  # whole collect goes to the latest withdrawal


@dataclass(frozen=True)
class LiquidityEvent:
    """One deposit, withdrawal or fee collection of a position.

    ``liquidity`` is the magnitude of the liquidity change (zero for collects).
    Collect events carry only the USD value of fees in ``usd_value``.
    """

    kind: EventKind
    position_id: str
    pool_id: str
    block: int
    log_index: int
    t: int
    amount0: float
    amount1: float
    usd_value: float
    quote: PriceQuote
    liquidity: int = 0
    tick_lower: int | None = None
    tick_upper: int | None = None
    decimals_shift: int = 0

    def __post_init__(self):
        if not isinstance(self.kind, EventKind):
            object.__setattr__(self, "kind", EventKind(self.kind))
        if self.block < 0 or self.log_index < 0:
            raise DomainError("block and log_index must be non-negative")
        if self.amount0 < 0 or self.amount1 < 0 or self.usd_value < 0:
            raise DomainError("amounts and usd_value must be non-negative")
        if self.kind is EventKind.COLLECT:
            if self.liquidity != 0:
                raise DomainError("collect events carry no liquidity change")
        else:
            if self.liquidity <= 0:
                raise DomainError(f"{self.kind.value} event needs positive liquidity")
            if self.tick_lower is None or self.tick_upper is None:
                raise DomainError(f"{self.kind.value} event needs a tick range")

    @property
    def key(self) -> tuple[int, int]:
        return (self.block, self.log_index)

    @property
    def price_range(self) -> PriceRange:
        return PriceRange.from_ticks(self.tick_lower, self.tick_upper, self.decimals_shift)

    def snapshot(self, amount0: float | None = None, amount1: float | None = None) -> PositionSnapshot:
        return PositionSnapshot(
            self.amount0 if amount0 is None else amount0,
            self.amount1 if amount1 is None else amount1,
            self.quote,
        )


@dataclass(frozen=True)
class ClosedPosition:
    """A deposit tranche slice matched against one withdrawal."""

    position_id: str
    pool_id: str
    tranche: int
    liquidity: int
    open_block: int
    open_log_index: int
    close_block: int
    close_log_index: int
    deposit: PositionSnapshot
    withdrawal: PositionSnapshot
    deposit_usd: float
    fees_usd: float
    range: PriceRange

    def __post_init__(self):
        if not self.open_t < self.close_t:
            raise OrderingError(
                f"position {self.position_id!r}: close at t={self.close_t} "
                f"does not follow open at t={self.open_t}"
            )

    @property
    def open_t(self) -> int:
        return self.deposit.t

    @property
    def close_t(self) -> int:
        return self.withdrawal.t


@dataclass(frozen=True)
class PositionMetrics:
    position_id: str
    pool_id: str
    tranche: int
    open_t: int
    close_t: int
    duration_days: float
    size_usd: float
    range_size: float
    realized_il: float
    rewards: float
    lp_return: float
    in_range_at_open: bool = True
    pool_type: str | None = None


def build_ledger(events: Iterable[LiquidityEvent]) -> dict[str, list[LiquidityEvent]]:
    """Group events by position, each group sorted by (block, log_index).

    Groups are returned in sorted position-id order, so the result depends only
    on the multiset of events.
    """
    groups: dict[str, dict[tuple[int, int], LiquidityEvent]] = {}
    for ev in events:
        seen = groups.setdefault(ev.position_id, {})
        if ev.key in seen:
            raise DuplicateEventError(
                f"position {ev.position_id!r}: duplicate event at block {ev.block}, log {ev.log_index}"
            )
        seen[ev.key] = ev
    return {pid: [seen[k] for k in sorted(seen)] for pid, seen in sorted(groups.items())}


@dataclass
class _Slice:
    tranche: int
    liquidity: int
    deposit: LiquidityEvent
    withdrawal: LiquidityEvent | None  # None for the still-open remainder
    fees: float = 0.0

    @property
    def start(self) -> float:
        return self.deposit.t

    @property
    def end(self) -> float:
        return math.inf if self.withdrawal is None else self.withdrawal.t


@dataclass
class _Tranche:
    index: int
    deposit: LiquidityEvent
    remaining: int


@dataclass
class _Matching:
    closed: list[_Slice] = field(default_factory=list)
    open: list[_Slice] = field(default_factory=list)
    collects: list[LiquidityEvent] = field(default_factory=list)


def _check_group(group: list[LiquidityEvent]) -> None:
    ids = {ev.position_id for ev in group}
    if len(ids) > 1:
        raise ValueError(f"group mixes positions {sorted(ids)}")
    for a, b in zip(group, group[1:]):
        if not a.key < b.key:
            raise OrderingError(f"position {a.position_id!r}: events out of order at block {b.block}")


def _match(group: list[LiquidityEvent]) -> _Matching:
    _check_group(group)
    out = _Matching()
    queue: deque[_Tranche] = deque()
    n_deposits = 0
    for ev in group:
        if ev.kind is EventKind.DEPOSIT:
            queue.append(_Tranche(n_deposits, ev, ev.liquidity))
            n_deposits += 1
        elif ev.kind is EventKind.WITHDRAW:
            available = sum(tr.remaining for tr in queue)
            if ev.liquidity > available:
                raise ImbalanceError(ev.position_id, ev.block, ev.liquidity, available)
            need = ev.liquidity
            while need:
                tr = queue[0]
                take = min(tr.remaining, need)
                out.closed.append(_Slice(tr.index, take, tr.deposit, ev))
                tr.remaining -= take
                need -= take
                if tr.remaining == 0:
                    queue.popleft()
        else:
            out.collects.append(ev)
    out.open = [_Slice(tr.index, tr.remaining, tr.deposit, None) for tr in queue]
    return out


def _share(amount: float, part: int, whole: int) -> float:
    return amount if part == whole else amount * part / whole


def _split(fee: float, slices: list[_Slice], weights: list[float]) -> None:
    total = sum(weights)
    for s, w in zip(slices, weights):
        if w:
            s.fees += fee * (w / total)


def _attribute_pro_rata(m: _Matching) -> None:
    units = m.closed + m.open
    prev_t = -math.inf
    for c in m.collects:
        weights = [u.liquidity * max(0.0, min(u.end, c.t) - max(u.start, prev_t)) for u in units]
        if sum(weights) > 0:
            _split(c.usd_value, units, weights)
        else:
            # no liquidity-time in the accrual window: fees accrued before the
            # latest withdrawal, so they belong to that withdrawal's slices
            done = [s for s in m.closed if s.withdrawal.key < c.key]
            if done:
                last = max(s.withdrawal.key for s in done)
                target = [s for s in done if s.withdrawal.key == last]
            else:
                target = [u for u in units if u.start <= c.t < u.end]
            if target:
                _split(c.usd_value, target, [float(s.liquidity) for s in target])
        prev_t = c.t


def _attribute_closing(m: _Matching) -> None:
    by_withdrawal: dict[tuple[int, int], list[_Slice]] = {}
    for s in m.closed:
        by_withdrawal.setdefault(s.withdrawal.key, []).append(s)
    keys = sorted(by_withdrawal)
    pending = 0.0
    for c in m.collects:
        before = [k for k in keys if k < c.key]
        if not before:
            pending += c.usd_value
            continue
        target = by_withdrawal[before[-1]]
        _split(c.usd_value, target, [float(s.liquidity) for s in target])
    # collects seen before any withdrawal are carried to the first one
    if pending and keys:
        target = by_withdrawal[keys[0]]
        _split(pending, target, [float(s.liquidity) for s in target])


def match_fifo(
    group: list[LiquidityEvent],
    fee_attribution: FeeAttribution | str = FeeAttribution.PRO_RATA,
) -> list[ClosedPosition]:
    """Match one position's withdrawals against its deposits, oldest first.

    Collected fees go to slices pro-rata by liquidity-time over the window
    since the previous collect (or since deposit). With
    ``fee_attribution="closing"`` each collect is instead credited wholly to
    the latest withdrawal preceding it.
    """
    m = _match(group)
    if FeeAttribution(fee_attribution) is FeeAttribution.PRO_RATA:
        _attribute_pro_rata(m)
    else:
        _attribute_closing(m)
    closed = []
    for s in m.closed:
        dep, wd = s.deposit, s.withdrawal
        closed.append(
            ClosedPosition(
                position_id=dep.position_id,
                pool_id=dep.pool_id,
                tranche=s.tranche,
                liquidity=s.liquidity,
                open_block=dep.block,
                open_log_index=dep.log_index,
                close_block=wd.block,
                close_log_index=wd.log_index,
                deposit=dep.snapshot(
                    _share(dep.amount0, s.liquidity, dep.liquidity),
                    _share(dep.amount1, s.liquidity, dep.liquidity),
                ),
                withdrawal=wd.snapshot(
                    _share(wd.amount0, s.liquidity, wd.liquidity),
                    _share(wd.amount1, s.liquidity, wd.liquidity),
                ),
                deposit_usd=_share(dep.usd_value, s.liquidity, dep.liquidity),
                fees_usd=s.fees,
                range=dep.price_range,
            )
        )
    return closed


def open_liquidity(group: list[LiquidityEvent]) -> int:
    """Liquidity still deposited after the last event of the group."""
    return sum(s.liquidity for s in _match(group).open)


def reconstruct(
    events: Iterable[LiquidityEvent],
    fee_attribution: FeeAttribution | str = FeeAttribution.PRO_RATA,
) -> list[ClosedPosition]:
    """Closed slices of every position, in position-id then match order."""
    out = []
    for group in build_ledger(events).values():
        out.extend(match_fifo(group, fee_attribution))
    return out


def compute_metrics(
    cp: ClosedPosition,
    normalization: Normalization | str = Normalization.HODL,
    pool_type: str | None = None,
) -> PositionMetrics:
    il = realized_il(cp.deposit, cp.withdrawal, normalization)
    if Normalization(normalization) is Normalization.DEPOSIT:
        base = cp.deposit.value()
    else:
        base = value_hodl(cp.deposit.amount0, cp.deposit.amount1, cp.withdrawal.quote)
    if not base > 0:
        raise DomainError(f"position {cp.position_id!r} has no value to normalize by")
    rewards = cp.fees_usd / base
    return PositionMetrics(
        position_id=cp.position_id,
        pool_id=cp.pool_id,
        tranche=cp.tranche,
        open_t=cp.open_t,
        close_t=cp.close_t,
        duration_days=(cp.close_t - cp.open_t) / SECONDS_PER_DAY,
        size_usd=cp.deposit_usd,
        range_size=cp.range.range_size,
        realized_il=il,
        rewards=rewards,
        lp_return=il + rewards,
        in_range_at_open=cp.range.contains(cp.deposit.pool_price),
        pool_type=pool_type,
    )


def closed_position_to_dict(cp: ClosedPosition) -> dict:
    """Canonical JSON-ready form, used for golden files."""

    def snap(s: PositionSnapshot) -> dict:
        return {
            "amount0": s.amount0,
            "amount1": s.amount1,
            "price0_usd": s.quote.p_x,
            "price1_usd": s.quote.p_y,
            "timestamp": s.t,
        }

    rng = cp.range
    return {
        "position_id": cp.position_id,
        "pool_id": cp.pool_id,
        "tranche": cp.tranche,
        "liquidity": str(cp.liquidity),
        "open_block": cp.open_block,
        "open_log_index": cp.open_log_index,
        "close_block": cp.close_block,
        "close_log_index": cp.close_log_index,
        "deposit": snap(cp.deposit),
        "withdrawal": snap(cp.withdrawal),
        "deposit_usd": cp.deposit_usd,
        "fees_usd": cp.fees_usd,
        "tick_lower": rng.tick_lower,
        "tick_upper": rng.tick_upper,
    }
