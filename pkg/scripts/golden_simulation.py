"""Reference strategy-grid results produced by swap replay.

Runs the default grid (seed 7, 100 GBM paths) through ``oracle_replay``,
which moves each position step by step with constant-product swaps instead
of the closed-form valuation. The simulate tests compare against this file.

Usage: python scripts/golden_simulation.py OUTPUT
"""

from __future__ import annotations

import json
import sys

from amm_lab.sim import DEFAULT_STRATEGIES, GridParams, PathSpec, SimConfig, oracle_replay, seeded_paths
from amm_lab.amm_math import PriceRange

SEED = 7
N_PATHS = 100


def main(out: str) -> None:
    params = GridParams()
    paths = seeded_paths(PathSpec(), N_PATHS, SEED)
    rows = []
    for s in DEFAULT_STRATEGIES:
        for i, path in enumerate(paths):
            cfg = SimConfig(
                range=PriceRange.around(float(path.p[0]), s.range_size),
                duration_days=s.duration_days,
                deposit_usd=params.deposit_usd,
                fee_ppm=params.fee_ppm,
                pool_liquidity_other=params.pool_liquidity_other,
                seed=SEED + i,
            )
            res = oracle_replay(path, cfg)
            rows.append({
                "strategy": s.name, "path": i, "seed": SEED + i,
                "realized_il": res.realized_il, "rewards": res.rewards, "time_in_range": res.time_in_range,
            })
    doc = {"seed": SEED, "n_paths": N_PATHS, "results": rows}
    with open(out, "w") as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main(sys.argv[1])
