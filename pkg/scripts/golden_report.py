"""Brute-force reference report for a simple-position dataset.

Deliberately shares no code with the package: it reads the fixture with
``json`` and ``Decimal``, assumes every position is a single deposit followed
by one full withdrawal, and computes every statistic by hand (sorting for
medians, plain sums for means). The output is the golden file the analysis
tests compare against.

Usage: python scripts/golden_report.py DATASET OUTPUT
"""

from __future__ import annotations

import json
import math
import sys
from decimal import Context, Decimal
from fractions import Fraction

MIN_TVL = 10_000
BLOCK_LO, BLOCK_HI = 14_691_320, 19_560_244
STABLES = {"DAI", "USDC", "USDT"}
SIZE_EDGES = (1e3, 1e4, 1e5)
SIZE_LABELS = ("<1k", "1k-10k", "10k-100k", "100k+")
RANGE_EDGES = (0.02, 0.1, 0.5)
RANGE_LABELS = ("<0.02", "0.02-0.1", "0.1-0.5", "0.5+")
DURATION_EDGES = (1 / 24, 1, 28, 90, 360)
DURATION_LABELS = ("<1h", "1h-1d", "1d-28d", "28d-90d", "90d-360d", "360d+")
METRICS = ("realized_il", "rewards", "lp_return")
CTX = Context(prec=1200)


def amount(raw: str, decimals: int) -> float:
    return float(CTX.scaleb(Decimal(raw), -decimals))


def bucket(x: float, edges, labels) -> str:
    for edge, label in zip(edges, labels):
        if x < edge:
            return label
    return labels[-1]


def nearest_rank(values, q: Fraction) -> float:
    s = sorted(values)
    return s[max(1, math.ceil(q * len(s))) - 1]


def stats(values) -> dict:
    n = len(values)
    s = sorted(values)
    median = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    half = 1.96 * std / math.sqrt(n)
    return {"n": n, "mean": mean, "median": median, "std": std, "ci95_lo": mean - half, "ci95_hi": mean + half}


def positions(doc: dict) -> list[dict]:
    pools = {p["pool_id"]: p for p in doc["pools"] if float(p["tvl_usd"]) >= MIN_TVL}
    by_pos: dict[str, list[dict]] = {}
    for ev in doc["events"]:
        if ev["pool_id"] in pools and BLOCK_LO <= ev["block"] <= BLOCK_HI:
            by_pos.setdefault(ev["position_id"], []).append(ev)
    out = []
    for pid, evs in by_pos.items():
        evs.sort(key=lambda e: (e["block"], e["log_index"]))
        deps = [e for e in evs if e["kind"] == "deposit"]
        wds = [e for e in evs if e["kind"] == "withdraw"]
        if len(deps) != 1 or len(wds) != 1 or deps[0]["liquidity"] != wds[0]["liquidity"]:
            continue
        dep, wd = deps[0], wds[0]
        pool = pools[dep["pool_id"]]
        d0, d1 = pool["token0"]["decimals"], pool["token1"]["decimals"]
        px, py = float(wd["price0_usd"]), float(wd["price1_usd"])
        x0, y0 = amount(dep["amount0"], d0), amount(dep["amount1"], d1)
        x1, y1 = amount(wd["amount0"], d0), amount(wd["amount1"], d1)
        v_hodl = x0 * px + y0 * py
        il = (x1 * px + y1 * py) / v_hodl - 1.0
        fees = 0.0
        for e in evs:
            if e["kind"] == "collect":
                fees += float(e["usd_value"])
        rewards = fees / v_hodl
        scale = 10.0 ** (d0 - d1)
        p_a, p_b = 1.0001 ** dep["tick_lower"] * scale, 1.0001 ** dep["tick_upper"] * scale
        syms = {pool["token0"]["symbol"], pool["token1"]["symbol"]}
        n_stable = len(syms & STABLES)
        out.append({
            "pool": pool["name"],
            "pool_type": ("risky-risky", "stable-risky", "stable-stable")[n_stable],
            "duration": (wd["timestamp"] - dep["timestamp"]) / 86400,
            "size": float(dep["usd_value"]),
            "range": (p_b - p_a) / math.sqrt(p_a * p_b),
            "realized_il": il,
            "rewards": rewards,
            "lp_return": il + rewards,
        })
    return out


def report(doc: dict) -> dict:
    ps = positions(doc)
    risky = [p for p in ps if p["pool_type"] != "stable-stable"]
    d_lo, d_hi = (nearest_rank([p["duration"] for p in risky], Fraction(q, 10)) for q in (3, 7))
    r_lo, r_hi = (nearest_rank([p["range"] for p in risky], Fraction(q, 10)) for q in (3, 7))
    groups: dict[str, dict[str, list[dict]]] = {g: {} for g in ("pool", "pool_type", "duration", "size", "range", "strategy")}
    for p in ps:
        labels = {
            "pool": "pool:" + p["pool"],
            "pool_type": "pool_type:" + p["pool_type"],
            "duration": "duration:" + bucket(p["duration"], DURATION_EDGES, DURATION_LABELS),
            "size": "size:" + bucket(p["size"], SIZE_EDGES, SIZE_LABELS),
            "range": "range:" + bucket(p["range"], RANGE_EDGES, RANGE_LABELS),
            "strategy": None,
        }
        if p["pool_type"] != "stable-stable":
            length = "short" if p["duration"] < d_lo else "long" if p["duration"] > d_hi else None
            width = "narrow" if p["range"] < r_lo else "wide" if p["range"] > r_hi else None
            if length and width:
                labels["strategy"] = f"strategy:{length}-{width}/{p['pool_type']}"
        for g, label in labels.items():
            if label is not None:
                groups[g].setdefault(label, []).append(p)
    tables = {}
    for g, members in groups.items():
        tables[g] = {}
        for label in sorted(members):
            rows = members[label]
            cell = {m: stats([r[m] for r in rows]) for m in METRICS}
            cell.update({f"daily_{m}": stats([r[m] / r["duration"] for r in rows]) for m in METRICS})
            tables[g][label] = cell
    return {
        "positions": len(ps),
        "strategy_thresholds": {"duration_days": [d_lo, d_hi], "range_size": [r_lo, r_hi]},
        "tables": tables,
    }


if __name__ == "__main__":
    src, dst = sys.argv[1], sys.argv[2]
    with open(src) as fh:
        doc = json.load(fh)
    with open(dst, "w") as fh:
        fh.write(json.dumps(report(doc), indent=2) + "\n")
    print(f"wrote {dst}")
