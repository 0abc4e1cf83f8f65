import itertools

from amm_lab.amm_math import PriceRange
from amm_lab.il_metrics import Branch, ILQuery, il_v3_branch
from amm_lab.sim import ConstantVolume, PricePath, SimConfig, gbm_path

BRANCH_RANGE = PriceRange.around(1.0, 0.1)


def branch_covering_paths(per_branch: int, base_seed: int = 0) -> list[tuple[PricePath, SimConfig]]:
    """Seeded two-day GBM paths, taken in seed order until each IL branch has ``per_branch`` closes."""
    cfg = SimConfig(BRANCH_RANGE, duration_days=2.0, pool_liquidity_other=50.0)
    picked = {b: [] for b in Branch}
    for seed in itertools.count(base_seed):
        path = gbm_path(seed, 1.0, 0.0, 1.5, 3600, 48, ConstantVolume(1e6))
        branch = il_v3_branch(ILQuery(float(path.p[-1] / path.p[0]), float(path.p[0]), BRANCH_RANGE))
        if len(picked[branch]) < per_branch:
            picked[branch].append((path, cfg))
        if all(len(v) == per_branch for v in picked.values()):
            return [item for b in Branch for item in picked[b]]
