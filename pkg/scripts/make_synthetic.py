"""Generate the bundled synthetic dataset of simple liquidity positions.

Every position has one deposit, one full withdrawal and zero to two fee
collects. A handful of extra records exercise the dataset filters: a dust
pool under the TVL threshold, positions left open, positions straddling the
block window and a partial withdrawal.

Usage: python scripts/make_synthetic.py [OUTPUT]
"""

from __future__ import annotations

import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from amm_lab.amm_math import TICK_BASE, PriceRange, amounts_in_range
from amm_lab.ingest import Dataset, PoolDescriptor, TokenId, write_fixture
from amm_lab.il_metrics import PriceQuote
from amm_lab.ingest.filters import DEFAULT_BLOCK_HI, DEFAULT_BLOCK_LO
from amm_lab.ledger import EventKind, LiquidityEvent

SEED = 20240401
N_CLOSED = 200
T_LO = 1_651_363_200  # timestamp of DEFAULT_BLOCK_LO
BLOCK_SECONDS = 12

DECIMALS = {"DAI": 18, "USDC": 6, "WETH": 18, "WBTC": 8, "MKR": 18, "LINK": 18}
USD0 = {"DAI": 1.0, "USDC": 1.0, "WETH": 2000.0, "WBTC": 30000.0, "MKR": 1500.0, "LINK": 7.0}
VOL = {"DAI": 0.002, "USDC": 0.002, "WETH": 0.8, "WBTC": 0.6, "MKR": 1.0, "LINK": 0.9}

POOLS = [
    ("DAI", "USDC", 500, 41_000_000.0, 3),
    ("DAI", "USDC", 100, 120_000_000.0, 3),
    ("USDC", "WETH", 10000, 4_000_000.0, 1),
    ("USDC", "WETH", 3000, 95_000_000.0, 3),
    ("USDC", "WETH", 500, 270_000_000.0, 4),
    ("USDC", "WETH", 100, 18_000_000.0, 2),
    ("MKR", "WETH", 10000, 2_500_000.0, 1),
    ("WBTC", "WETH", 3000, 170_000_000.0, 2),
    ("WBTC", "WETH", 500, 110_000_000.0, 2),
]
DUST = ("LINK", "WETH", 10000, 9_999.0, 0)


def pool_of(spec) -> PoolDescriptor:
    s0, s1, fee, tvl, _ = spec
    name = f"{s0}-{s1}-{fee}"
    pid = "0x" + hashlib.sha256(name.encode()).hexdigest()[:40]
    return PoolDescriptor(pid, name, TokenId(s0, DECIMALS[s0]), TokenId(s1, DECIMALS[s1]), fee, tvl, tvl * 40, int(tvl // 900))


def t_of(block: int) -> int:
    return T_LO + (block - DEFAULT_BLOCK_LO) * BLOCK_SECONDS


def raw(amount: float, decimals: int) -> float:
    """Round to whole base units, as on chain."""
    return math.floor(amount * 10**decimals) / 10**decimals


class Builder:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.events: list[LiquidityEvent] = []
        self.next_id = 410_000

    def usd(self, symbol: str, days: float) -> float:
        sigma = VOL[symbol] * math.sqrt(max(days, 0.0) / 365.0)
        return USD0[symbol] * math.exp(sigma * self.rng.standard_normal())

    def event(self, kind, pool, pid, block, log, a0, a1, usd, q, liq=0, ticks=(None, None)):
        self.events.append(
            LiquidityEvent(
                kind=EventKind(kind), position_id=pid, pool_id=pool.pool_id, block=block, log_index=log,
                t=t_of(block), amount0=a0, amount1=a1, usd_value=usd, quote=q, liquidity=liq,
                tick_lower=ticks[0], tick_upper=ticks[1], decimals_shift=pool.decimals_shift,
            )
        )

    def position(self, pool: PoolDescriptor, open_block: int, close_block: int | None, partial: bool = False):
        rng = self.rng
        s0, s1 = pool.token0.symbol, pool.token1.symbol
        pid = str(self.next_id)
        self.next_id += int(rng.integers(1, 40))
        stable_pair = VOL[s0] < 0.01 and VOL[s1] < 0.01
        days_open = (open_block - DEFAULT_BLOCK_LO) * BLOCK_SECONDS / 86400
        u0, u1 = self.usd(s0, days_open), self.usd(s1, days_open)
        p = u0 / u1
        r = math.exp(rng.uniform(math.log(5e-4), math.log(0.05))) if stable_pair else math.exp(
            rng.uniform(math.log(4e-3), math.log(4.0))
        )
        s = (r + math.sqrt(r * r + 4)) / 2
        scale = 10.0**pool.decimals_shift
        tl = math.floor(math.log(p / s / scale) / math.log(TICK_BASE))
        tu = max(tl + 1, math.ceil(math.log(p * s / scale) / math.log(TICK_BASE)))
        prange = PriceRange.from_ticks(tl, tu, pool.decimals_shift)
        size = math.exp(rng.uniform(math.log(50.0), math.log(2e6)))
        ux, uy = amounts_in_range(1.0, p, prange)
        k = size / (ux * u0 + uy * u1)
        x0, y0 = raw(ux * k, pool.token0.decimals), raw(uy * k, pool.token1.decimals)
        liq = max(1, round(k * 10 ** ((pool.token0.decimals + pool.token1.decimals) / 2)))
        q0 = PriceQuote(u0, u1, t_of(open_block))
        self.event("deposit", pool, pid, open_block, int(rng.integers(0, 300)), x0, y0, x0 * u0 + y0 * u1, q0, liq, (tl, tu))
        if close_block is None:
            return
        days = (close_block - open_block) * BLOCK_SECONDS / 86400
        w0, w1 = u0 * self.usd(s0, days) / USD0[s0], u1 * self.usd(s1, days) / USD0[s1]
        q1 = PriceQuote(w0, w1, t_of(close_block))
        out_liq = liq // 2 if partial else liq
        x1, y1 = amounts_in_range(k * out_liq / liq, w0 / w1, prange)
        x1, y1 = raw(x1, pool.token0.decimals), raw(y1, pool.token1.decimals)
        log = int(rng.integers(0, 300))
        self.event("withdraw", pool, pid, close_block, log, x1, y1, x1 * w0 + y1 * w1, q1, out_liq, (tl, tu))

        n_collects = int(rng.integers(0, 3))
        if n_collects == 0:
            return
        turnover = rng.uniform(0.2, 4.0)
        concentration = min(40.0, 0.3 / r + 1.0)
        fees = size * pool.fee_ppm / 1e6 * turnover * max(days, 1e-3) * concentration
        fees = min(fees, 0.4 * size)
        parts = [fees] if n_collects == 1 else [0.4 * fees, 0.6 * fees]
        blocks = [close_block] if n_collects == 1 else [(open_block + close_block) // 2, close_block]
        if blocks[0] <= open_block:
            parts, blocks = [fees], [close_block]
        for amount, block in zip(parts, blocks):
            q = q1 if block == close_block else PriceQuote(u0, u1, t_of(block))
            log_c = log + 1 if block == close_block else int(rng.integers(0, 300))
            f0 = raw(amount / 2 / q.p_x, pool.token0.decimals)
            f1 = raw(amount / 2 / q.p_y, pool.token1.decimals)
            self.event("collect", pool, pid, block, log_c, f0, f1, round(amount, 6), q)


def build(seed: int = SEED) -> Dataset:
    b = Builder(seed)
    pools = [pool_of(spec) for spec in POOLS]
    dust = pool_of(DUST)
    weights = np.array([spec[4] for spec in POOLS], dtype=float)
    weights /= weights.sum()
    rng = b.rng

    def window_position(pool):
        dur_s = math.exp(rng.uniform(math.log(600.0), math.log(450 * 86400.0)))
        open_block = int(rng.integers(DEFAULT_BLOCK_LO, DEFAULT_BLOCK_HI - 100))
        close_block = min(open_block + max(1, math.ceil(dur_s / BLOCK_SECONDS)), DEFAULT_BLOCK_HI)
        return open_block, close_block

    for _ in range(N_CLOSED):
        pool = pools[int(rng.choice(len(pools), p=weights))]
        b.position(pool, *window_position(pool))
    # records the default filter must drop
    for _ in range(6):
        b.position(dust, *window_position(dust))
    for _ in range(5):
        b.position(pools[4], window_position(pools[4])[0], None)
    b.position(pools[3], DEFAULT_BLOCK_LO - 1, DEFAULT_BLOCK_LO + 5000)
    b.position(pools[3], DEFAULT_BLOCK_LO - 40_000, DEFAULT_BLOCK_LO + 90_000)
    b.position(pools[7], DEFAULT_BLOCK_HI - 3000, DEFAULT_BLOCK_HI + 1)
    b.position(pools[4], DEFAULT_BLOCK_HI - 900_000, DEFAULT_BLOCK_HI + 50_000)
    b.position(pools[2], DEFAULT_BLOCK_LO + 2_000_000, DEFAULT_BLOCK_LO + 2_100_000, partial=True)
    # boundary positions the filter keeps
    b.position(pools[5], DEFAULT_BLOCK_LO, DEFAULT_BLOCK_LO + 300)
    b.position(pools[6], DEFAULT_BLOCK_HI - 7000, DEFAULT_BLOCK_HI)

    events = sorted(b.events, key=lambda e: (e.block, e.log_index, e.position_id))
    return Dataset(pools + [dust], events)


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parents[1] / "src/amm_lab/data/synthetic_positions.json"
    write_fixture(build(), out)
    print(f"wrote {out}")
