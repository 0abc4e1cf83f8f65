"""
Constant-product and concentrated-liquidity pool mathematics.

Prices are always quoted as token1 per token0. Everything is plain binary
floating point; ticks map to prices through the real-valued ``1.0001**tick``
rather than the on-chain Q64.96 sqrt-price encoding.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from amm_lab.errors import DomainError

MIN_TICK = -887272
MAX_TICK = 887272
TICK_BASE = 1.0001
FEE_DENOMINATOR = 1_000_000

# Uniswap fee tiers in parts per million; the tier label is the ppm value itself.
FEE_TIERS_PPM = {100: 0.0001, 500: 0.0005, 3000: 0.003, 10000: 0.01}

_K_REL_TOL = 1e-12
_TICK_REL_TOL = 1e-9


class Side(enum.Enum):
    TOKEN0_IN = "token0-in"
    TOKEN1_IN = "token1-in"


@dataclass(frozen=True)
class PoolState:
    """Reserves of a constant-product pool and their invariant ``k = x*y``."""

    x: float
    y: float
    k: float

    def __post_init__(self):
        if not (self.x > 0 and self.y > 0):
            raise DomainError(f"reserves must be positive, got x={self.x}, y={self.y}")
        if not math.isclose(self.k, self.x * self.y, rel_tol=_K_REL_TOL):
            raise DomainError(f"k={self.k} does not match x*y={self.x * self.y}")

    @classmethod
    def from_reserves(cls, x: float, y: float) -> PoolState:
        return cls(x, y, invariant_k(x, y))


@dataclass(frozen=True)
class PriceRange:
    """
    A position's price interval ``[p_a, p_b]`` in token1 per token0.

    When built from ticks, ``decimals_shift`` (token0 decimals minus token1
    decimals) converts raw tick prices into human-unit prices. With a zero
    shift the bounds are exactly the tick prices.
    """

    p_a: float
    p_b: float
    tick_lower: int | None = None
    tick_upper: int | None = None
    decimals_shift: int = 0

    def __post_init__(self):
        if not (0 < self.p_a < self.p_b):
            raise DomainError(f"need 0 < p_a < p_b, got [{self.p_a}, {self.p_b}]")
        if (self.tick_lower is None) != (self.tick_upper is None):
            raise DomainError("tick_lower and tick_upper must be given together")
        if self.tick_lower is not None:
            scale = 10.0**self.decimals_shift
            for tick, price in ((self.tick_lower, self.p_a), (self.tick_upper, self.p_b)):
                if not math.isclose(price, tick_to_price(tick) * scale, rel_tol=_TICK_REL_TOL):
                    raise DomainError(f"price {price} does not match tick {tick}")

    @classmethod
    def from_ticks(cls, tick_lower: int, tick_upper: int, decimals_shift: int = 0) -> PriceRange:
        scale = 10.0**decimals_shift
        return cls(
            tick_to_price(tick_lower) * scale,
            tick_to_price(tick_upper) * scale,
            tick_lower,
            tick_upper,
            decimals_shift,
        )

    @classmethod
    def around(cls, price: float, range_size: float) -> PriceRange:
        """Range of relative width ``range_size`` whose geometric mean is ``price``.

        With ``p_a = price/s`` and ``p_b = price*s`` the width is ``s - 1/s``.
        """
        if price <= 0 or range_size <= 0:
            raise DomainError("price and range_size must be positive")
        s = (range_size + math.sqrt(range_size * range_size + 4.0)) / 2.0
        return cls(price / s, price * s)

    def contains(self, p: float) -> bool:
        return self.p_a <= p <= self.p_b

    @property
    def range_size(self) -> float:
        return range_size(self)


def invariant_k(x: float, y: float) -> float:
    if not (x > 0 and y > 0):
        raise DomainError(f"reserves must be positive, got x={x}, y={y}")
    return x * y


def spot_price(state: PoolState) -> float:
    return state.y / state.x


def tick_to_price(tick: int) -> float:
    if not MIN_TICK <= tick <= MAX_TICK:
        raise DomainError(f"tick {tick} outside [{MIN_TICK}, {MAX_TICK}]")
    return TICK_BASE**tick


def price_to_tick(price: float) -> int:
    """Greatest tick whose price does not exceed ``price``."""
    if price <= 0:
        raise DomainError(f"price must be positive, got {price}")
    tick = math.floor(math.log(price) / math.log(TICK_BASE))
    # log rounding can land one tick off near exact tick prices
    if TICK_BASE ** (tick + 1) <= price:
        tick += 1
    elif TICK_BASE**tick > price:
        tick -= 1
    return tick


def range_size(rng: PriceRange) -> float:
    """Relative width ``(p_b - p_a) / sqrt(p_a * p_b)``; invariant to price scale."""
    return (rng.p_b - rng.p_a) / math.sqrt(rng.p_a * rng.p_b)


def amounts_in_range(L: float, p: float, rng: PriceRange) -> tuple[float, float]:
    """Token amounts ``(x, y)`` backing liquidity ``L`` at price ``p``."""
    if L < 0:
        raise DomainError(f"liquidity must be non-negative, got {L}")
    if p <= 0:
        raise DomainError(f"price must be positive, got {p}")
    sa, sb = math.sqrt(rng.p_a), math.sqrt(rng.p_b)
    if p <= rng.p_a:
        return L * (1.0 / sa - 1.0 / sb), 0.0
    if p >= rng.p_b:
        return 0.0, L * (sb - sa)
    sp = math.sqrt(p)
    return L * (1.0 / sp - 1.0 / sb), L * (sp - sa)


def liquidity_from_amounts(x: float, y: float, p: float, rng: PriceRange) -> float:
    """Largest liquidity whose backing amounts at ``p`` fit inside ``(x, y)``.

    Raises DomainError when the amounts hold a token the position cannot
    contain at ``p`` (token1 below the range, token0 above it).
    """
    if x < 0 or y < 0:
        raise DomainError(f"amounts must be non-negative, got ({x}, {y})")
    if p <= 0:
        raise DomainError(f"price must be positive, got {p}")
    if x == 0 and y == 0:
        return 0.0
    sa, sb = math.sqrt(rng.p_a), math.sqrt(rng.p_b)
    if p <= rng.p_a:
        if y > 0:
            raise DomainError(f"token1 amount {y} inconsistent with price {p} <= p_a")
        return x / (1.0 / sa - 1.0 / sb)
    if p >= rng.p_b:
        if x > 0:
            raise DomainError(f"token0 amount {x} inconsistent with price {p} >= p_b")
        return y / (sb - sa)
    sp = math.sqrt(p)
    return min(x / (1.0 / sp - 1.0 / sb), y / (sp - sa))


def execute_swap(
    state: PoolState, amount_in: float, side: Side, fee_ppm: int = 0
) -> tuple[float, PoolState, float]:
    """Swap against a constant-product pool.

    The fee is skimmed from the input and kept outside the reserves, so the
    invariant holds on the net amounts. Returns ``(amount_out, new_state, fee_paid)``.
    """
    if not amount_in > 0:
        raise DomainError(f"amount_in must be positive, got {amount_in}")
    if not 0 <= fee_ppm < FEE_DENOMINATOR:
        raise DomainError(f"fee_ppm must lie in [0, {FEE_DENOMINATOR}), got {fee_ppm}")
    fee_paid = amount_in * fee_ppm / FEE_DENOMINATOR
    net = amount_in - fee_paid
    if side is Side.TOKEN0_IN:
        new_x = state.x + net
        new_y = state.k / new_x
        amount_out = state.y - new_y
    else:
        new_y = state.y + net
        new_x = state.k / new_y
        amount_out = state.x - new_x
    if not (new_x > 0 and new_y > 0):
        raise DomainError("swap drains a reserve")
    return amount_out, PoolState(new_x, new_y, state.k), fee_paid
