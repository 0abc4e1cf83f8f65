"""Dataset record types and their wire encoding.

Token amounts travel in raw base units (e.g. wei) as decimal strings and are
scaled by the token's declared decimals on decode. USD values, prices and
TVL are decimal strings as well; block numbers, ticks and counts are plain
integers. Encoding is exact: decode(encode(x)) reproduces every float bit.
"""

from __future__ import annotations

import decimal
import math
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Mapping, NamedTuple

from amm_lab.amm_math import FEE_DENOMINATOR
from amm_lab.errors import ParseError, ReferentialError
from amm_lab.il_metrics import PriceQuote
from amm_lab.ledger import EventKind, LiquidityEvent

SCHEMA_VERSION = 1

POOL_FIELDS = (
    "pool_id",
    "name",
    "token0_symbol",
    "token0_decimals",
    "token1_symbol",
    "token1_decimals",
    "fee_ppm",
    "tvl_usd",
    "volume_usd",
    "tx_count",
)

EVENT_FIELDS = (
    "kind",
    "position_id",
    "pool_id",
    "block",
    "log_index",
    "timestamp",
    "amount0",
    "amount1",
    "usd_value",
    "price0_usd",
    "price1_usd",
    "liquidity",
    "tick_lower",
    "tick_upper",
)

_EXACT = decimal.Context(prec=1200)
_INT_RE = re.compile(r"-?\d+\Z")


@dataclass(frozen=True)
class TokenId:
    symbol: str
    decimals: int


@dataclass(frozen=True)
class PoolDescriptor:
    """Pool metadata. ``name`` follows TOKEN0-TOKEN1-FEE, the fee in ppm (e.g. DAI-USDC-500)."""

    pool_id: str
    name: str
    token0: TokenId
    token1: TokenId
    fee_ppm: int
    tvl_usd: float
    volume_usd: float = 0.0
    tx_count: int = 0

    def __post_init__(self):
        expected = pool_name(self.token0.symbol, self.token1.symbol, self.fee_ppm)
        if self.name != expected:
            raise ValueError(f"pool name {self.name!r} should be {expected!r}")
        if not 0 < self.fee_ppm < FEE_DENOMINATOR:
            raise ValueError(f"fee_ppm {self.fee_ppm} out of range")
        if self.tvl_usd < 0 or self.volume_usd < 0 or self.tx_count < 0:
            raise ValueError("tvl, volume and tx_count must be non-negative")

    @property
    def decimals_shift(self) -> int:
        return self.token0.decimals - self.token1.decimals


class Dataset(NamedTuple):
    pools: list[PoolDescriptor]
    events: list[LiquidityEvent]


def pool_name(symbol0: str, symbol1: str, fee_ppm: int) -> str:
    return f"{symbol0}-{symbol1}-{fee_ppm}"


# -- scalar codecs -----------------------------------------------------------


def from_raw(raw: str, decimals: int) -> float:
    """Raw base-unit decimal string to a token amount."""
    return float(_EXACT.scaleb(Decimal(raw), -decimals))


def to_raw(amount: float, decimals: int) -> str:
    # shortest round-tripping decimal, so 1.5 USDC encodes as "1500000"
    d = _EXACT.scaleb(Decimal(repr(float(amount))), decimals)
    if d == d.to_integral_value():
        return str(int(d))
    return format(d.normalize(_EXACT), "f")


def fmt_float(x: float) -> str:
    return repr(float(x))


def _decimal_str(value: Any, name: str) -> str:
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise ParseError(f"{name} must be a decimal string, got {value!r}")
    s = str(value).strip()
    try:
        d = Decimal(s)
    except decimal.InvalidOperation:
        raise ParseError(f"{name} is not a decimal number: {value!r}") from None
    if not d.is_finite():
        raise ParseError(f"{name} must be finite, got {value!r}")
    return s


def _nonneg_float(value: Any, name: str) -> float:
    x = float(_decimal_str(value, name))
    if x < 0 or math.isinf(x):
        raise ParseError(f"{name} must be non-negative and finite, got {value!r}")
    return x


def _int(value: Any, name: str, *, optional: bool = False) -> int | None:
    if value is None or value == "":
        if optional:
            return None
        raise ParseError(f"missing {name}")
    if isinstance(value, bool):
        raise ParseError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and _INT_RE.match(value.strip()):
        return int(value.strip())
    raise ParseError(f"{name} must be an integer, got {value!r}")


def _str(value: Any, name: str) -> str:
    if not isinstance(value, str) or not value:
        raise ParseError(f"{name} must be a non-empty string, got {value!r}")
    return value


def _get(rec: Mapping, name: str, optional: bool = False) -> Any:
    if name not in rec:
        if optional:
            return None
        raise ParseError(f"missing field {name!r}")
    return rec[name]


# -- record codecs -----------------------------------------------------------


def flat_pool(rec: Mapping) -> dict:
    """Accept either nested token objects or flat token0_symbol style columns."""
    if "token0" in rec and isinstance(rec["token0"], Mapping):
        flat = {k: v for k, v in rec.items() if k not in ("token0", "token1")}
        for side in ("token0", "token1"):
            tok = rec.get(side)
            if not isinstance(tok, Mapping):
                raise ParseError(f"{side} must be an object")
            flat[f"{side}_symbol"] = tok.get("symbol")
            flat[f"{side}_decimals"] = tok.get("decimals")
        return flat
    return dict(rec)


def decode_pool(rec: Mapping) -> PoolDescriptor:
    if not isinstance(rec, Mapping):
        raise ParseError("pool record must be an object")
    rec = flat_pool(rec)
    token0 = TokenId(_str(_get(rec, "token0_symbol"), "token0.symbol"), _int(_get(rec, "token0_decimals"), "token0.decimals"))
    token1 = TokenId(_str(_get(rec, "token1_symbol"), "token1.symbol"), _int(_get(rec, "token1_decimals"), "token1.decimals"))
    for tok in (token0, token1):
        if not 0 <= tok.decimals <= 77:
            raise ParseError(f"decimals of {tok.symbol} out of range: {tok.decimals}")
    fee = _int(_get(rec, "fee_ppm"), "fee_ppm")
    name = rec.get("name") or pool_name(token0.symbol, token1.symbol, fee)
    try:
        return PoolDescriptor(
            pool_id=_str(_get(rec, "pool_id"), "pool_id"),
            name=_str(name, "name"),
            token0=token0,
            token1=token1,
            fee_ppm=fee,
            tvl_usd=_nonneg_float(_get(rec, "tvl_usd"), "tvl_usd"),
            volume_usd=_nonneg_float(rec.get("volume_usd", "0"), "volume_usd"),
            tx_count=_int(rec.get("tx_count", 0), "tx_count"),
        )
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc)) from None


def encode_pool(pool: PoolDescriptor) -> dict:
    return {
        "pool_id": pool.pool_id,
        "name": pool.name,
        "token0": {"symbol": pool.token0.symbol, "decimals": pool.token0.decimals},
        "token1": {"symbol": pool.token1.symbol, "decimals": pool.token1.decimals},
        "fee_ppm": pool.fee_ppm,
        "tvl_usd": fmt_float(pool.tvl_usd),
        "volume_usd": fmt_float(pool.volume_usd),
        "tx_count": pool.tx_count,
    }


def encode_pool_row(pool: PoolDescriptor) -> dict:
    rec = encode_pool(pool)
    for side in ("token0", "token1"):
        tok = rec.pop(side)
        rec[f"{side}_symbol"] = tok["symbol"]
        rec[f"{side}_decimals"] = tok["decimals"]
    return {k: rec[k] for k in POOL_FIELDS}


def decode_event(rec: Mapping, pools: Mapping[str, PoolDescriptor]) -> LiquidityEvent:
    if not isinstance(rec, Mapping):
        raise ParseError("event record must be an object")
    kind_raw = _get(rec, "kind")
    try:
        kind = EventKind(kind_raw)
    except ValueError:
        raise ParseError(f"unknown event kind {kind_raw!r}") from None
    pool_id = _str(_get(rec, "pool_id"), "pool_id")
    pool = pools.get(pool_id)
    if pool is None:
        raise ReferentialError(f"event references unknown pool {pool_id!r}")
    liq_raw = rec.get("liquidity", "0")
    liquidity = _int(liq_raw if liq_raw not in (None, "") else "0", "liquidity")
    if liquidity < 0:
        raise ParseError(f"liquidity must be non-negative, got {liq_raw!r}")
    amount0 = _decimal_str(_get(rec, "amount0"), "amount0")
    amount1 = _decimal_str(_get(rec, "amount1"), "amount1")
    for name, raw in (("amount0", amount0), ("amount1", amount1)):
        if Decimal(raw) < 0:
            raise ParseError(f"{name} must be non-negative, got {raw!r}")
    try:
        quote = PriceQuote(
            _nonneg_float(_get(rec, "price0_usd"), "price0_usd"),
            _nonneg_float(_get(rec, "price1_usd"), "price1_usd"),
            _int(_get(rec, "timestamp"), "timestamp"),
        )
        return LiquidityEvent(
            kind=kind,
            position_id=_str(_get(rec, "position_id"), "position_id"),
            pool_id=pool_id,
            block=_int(_get(rec, "block"), "block"),
            log_index=_int(_get(rec, "log_index"), "log_index"),
            t=quote.t,
            amount0=from_raw(amount0, pool.token0.decimals),
            amount1=from_raw(amount1, pool.token1.decimals),
            usd_value=_nonneg_float(_get(rec, "usd_value"), "usd_value"),
            quote=quote,
            liquidity=liquidity,
            tick_lower=_int(rec.get("tick_lower"), "tick_lower", optional=True),
            tick_upper=_int(rec.get("tick_upper"), "tick_upper", optional=True),
            decimals_shift=pool.decimals_shift,
        )
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc)) from None


def encode_event(ev: LiquidityEvent, pools: Mapping[str, PoolDescriptor]) -> dict:
    pool = pools[ev.pool_id]
    rec = {
        "kind": ev.kind.value,
        "position_id": ev.position_id,
        "pool_id": ev.pool_id,
        "block": ev.block,
        "log_index": ev.log_index,
        "timestamp": ev.t,
        "amount0": to_raw(ev.amount0, pool.token0.decimals),
        "amount1": to_raw(ev.amount1, pool.token1.decimals),
        "usd_value": fmt_float(ev.usd_value),
        "price0_usd": fmt_float(ev.quote.p_x),
        "price1_usd": fmt_float(ev.quote.p_y),
        "liquidity": str(ev.liquidity),
        "tick_lower": ev.tick_lower,
        "tick_upper": ev.tick_upper,
    }
    return rec


def pool_index(pools: list[PoolDescriptor]) -> dict[str, PoolDescriptor]:
    index: dict[str, PoolDescriptor] = {}
    for p in pools:
        if p.pool_id in index:
            raise ParseError(f"duplicate pool id {p.pool_id!r}")
        index[p.pool_id] = p
    return index
