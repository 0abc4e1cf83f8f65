"""
Impermanent-loss measurement model.

Loss-versus-holding (LVH) compares the USD value of a pool position with the
value the same initial tokens would have if simply held. ``lvh_v2`` is the
full-range constant-product closed form in terms of the relative price change
``d``; ``il_v3`` is its piecewise generalisation to a bounded price range.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from amm_lab.amm_math import PriceRange
from amm_lab.errors import DomainError, OrderingError


class Normalization(str, enum.Enum):
    """Denominator used when turning a USD shortfall into a fraction."""

    HODL = "hodl"  # HODL value at withdrawal
    DEPOSIT = "deposit"  # USD value of the deposit at open


class Branch(enum.Enum):
    ABOVE = "above"
    IN_RANGE = "in-range"
    BELOW = "below"


@dataclass(frozen=True)
class PriceQuote:
    """USD prices of token0 (``p_x``) and token1 (``p_y``) at time ``t``."""

    p_x: float
    p_y: float
    t: int = 0

    def __post_init__(self):
        if not (self.p_x > 0 and self.p_y > 0):
            raise DomainError(f"USD prices must be positive, got ({self.p_x}, {self.p_y})")

    @property
    def pool_price(self) -> float:
        """Implied token1-per-token0 price."""
        return self.p_x / self.p_y


@dataclass(frozen=True)
class ILQuery:
    d: float
    p: float
    range: PriceRange

    def __post_init__(self):
        if not self.d > 0:
            raise DomainError(f"relative price change must be positive, got {self.d}")
        if not self.p > 0:
            raise DomainError(f"price must be positive, got {self.p}")


@dataclass(frozen=True)
class ValueSnapshot:
    v_pool: float
    v_hodl: float


@dataclass(frozen=True)
class PositionSnapshot:
    """Token amounts of a position together with the quote they are valued at."""

    amount0: float
    amount1: float
    quote: PriceQuote
    price: float | None = None  # pool price; defaults to the quote's implied price

    @property
    def t(self) -> int:
        return self.quote.t

    @property
    def pool_price(self) -> float:
        return self.price if self.price is not None else self.quote.pool_price

    def value(self, quote: PriceQuote | None = None) -> float:
        q = quote or self.quote
        return self.amount0 * q.p_x + self.amount1 * q.p_y


def value_pool(k: float, quote: PriceQuote) -> float:
    if not k > 0:
        raise DomainError(f"invariant must be positive, got {k}")
    return 2.0 * math.sqrt(k * quote.p_y * quote.p_x)


def value_hodl(x0: float, y0: float, quote: PriceQuote) -> float:
    if x0 < 0 or y0 < 0:
        raise DomainError(f"amounts must be non-negative, got ({x0}, {y0})")
    if x0 == 0 and y0 == 0:
        raise DomainError("empty portfolio has no HODL value")
    return x0 * quote.p_x + y0 * quote.p_y


def lvh(snapshot: ValueSnapshot) -> float:
    if not snapshot.v_hodl > 0:
        raise DomainError(f"HODL value must be positive, got {snapshot.v_hodl}")
    return snapshot.v_pool / snapshot.v_hodl - 1.0


def lvh_v2(d: float) -> float:
    """Full-range LVH ``2*sqrt(d)/(1+d) - 1`` for a relative price change ``d``."""
    if not d > 0:
        raise DomainError(f"relative price change must be positive, got {d}")
    # algebraically identical form that cannot round above zero
    s = math.sqrt(d)
    return -((s - 1.0) ** 2) / (1.0 + d)


# Each branch is written in a factored form of the textbook expression so
# that nothing cancels near the range edges: with u = sqrt(p_a/p) and
# v = sqrt(p/p_b) the shared denominator is (1 - u) + d*(1 - v).


def _edges(d: float, p: float, p_a: float, p_b: float) -> tuple[float, float, float]:
    u, v = math.sqrt(p_a / p), math.sqrt(p / p_b)
    return u, v, (1.0 - u) + d * (1.0 - v)


def il_v3_above(d: float, p: float, p_a: float, p_b: float) -> float:
    """Branch for a price that ended above the range (``d > p_b/p``)."""
    _, v, den = _edges(d, p, p_a, p_b)
    return (1.0 - v) * (1.0 - d * v) / v / den


def il_v3_in_range(d: float, p: float, p_a: float, p_b: float) -> float:
    """Branch for a price that ended inside the range."""
    *_, den = _edges(d, p, p_a, p_b)
    return -((math.sqrt(d) - 1.0) ** 2) / den


def il_v3_below(d: float, p: float, p_a: float, p_b: float) -> float:
    """Branch for a price that ended below the range (``d < p_a/p``)."""
    u, _, den = _edges(d, p, p_a, p_b)
    return (1.0 - u) * (d - u) / u / den


def il_v3_branch(q: ILQuery) -> Branch:
    # boundary ties belong to the inclusive middle branch
    if q.range.p_b / q.p < q.d:
        return Branch.ABOVE
    if q.d < q.range.p_a / q.p:
        return Branch.BELOW
    return Branch.IN_RANGE


_BRANCH_FN = {
    Branch.ABOVE: il_v3_above,
    Branch.IN_RANGE: il_v3_in_range,
    Branch.BELOW: il_v3_below,
}


def il_v3(q: ILQuery) -> float:
    """Concentrated-liquidity LVH of a position opened at ``q.p`` after a move by ``q.d``."""
    fn = _BRANCH_FN[il_v3_branch(q)]
    return fn(q.d, q.p, q.range.p_a, q.range.p_b)


def realized_il(
    deposit: PositionSnapshot,
    withdrawal: PositionSnapshot,
    normalization: Normalization | str = Normalization.HODL,
) -> float:
    """LVH realised by withdrawing ``withdrawal`` after depositing ``deposit``.

    Both legs are valued at the withdrawal quote. Collected fees are not part
    of the pool value; they are accounted as rewards elsewhere.
    """
    if withdrawal.t < deposit.t:
        raise OrderingError(f"withdrawal at t={withdrawal.t} precedes deposit at t={deposit.t}")
    close = withdrawal.quote
    v_hodl = value_hodl(deposit.amount0, deposit.amount1, close)
    v_pool = withdrawal.value(close)
    if Normalization(normalization) is Normalization.DEPOSIT:
        return (v_pool - v_hodl) / deposit.value()
    return lvh(ValueSnapshot(v_pool, v_hodl))
