"""Acceptance checks: one test per criterion, at the stated tolerances and time budgets."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from amm_lab.amm_math import PriceRange
from amm_lab.analytics import AnalyticsConfig, StrategyClass, aggregate_report, classify_pool_type, classify_strategy
from amm_lab.cli import main
from amm_lab.il_metrics import ILQuery, il_v3, il_v3_above, il_v3_below, il_v3_in_range, lvh_v2
from amm_lab.ingest import parse_fixture
from amm_lab.ledger import PositionMetrics, closed_position_to_dict, reconstruct
from amm_lab.sim import oracle_replay, simulate_position

from conftest import branch_covering_paths

DATA = Path(__file__).parent / "data"
SYNTHETIC = Path(__file__).parents[1] / "src" / "amm_lab" / "data" / "synthetic_positions.json"


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.2f}s, budget {self.seconds}s"


def cli(*args):
    result = CliRunner().invoke(main, ["--no-timestamp", *map(str, args)])
    assert result.exit_code == 0, result.output
    return result


def test_full_range_lvh_sign_zero_and_symmetry():
    rng = np.random.default_rng(1)
    ds = np.exp(rng.uniform(math.log(1e-4), math.log(1e4), 10_000))
    with Budget(1.0):
        assert lvh_v2(1.0) == 0.0
        for d in map(float, ds):
            v = lvh_v2(d)
            assert v <= 1e-12
            assert abs(v - lvh_v2(1.0 / d)) <= 1e-12
            if abs(d - 1.0) > 1e-6:
                assert v < 0.0


def test_concentrated_il_branch_continuity_and_spot_values():
    rng = np.random.default_rng(2)
    with Budget(1.0):
        for _ in range(1_000):
            p_a, p_b = sorted(np.exp(rng.uniform(-5, 5, 2)))
            if p_b / p_a < 1.0 + 1e-6:
                continue
            p = float(np.exp(rng.uniform(math.log(p_a), math.log(p_b))))
            lo, hi = p_a / p, p_b / p
            for d, fn in ((lo, il_v3_below), (hi, il_v3_above)):
                mid, edge = il_v3_in_range(d, p, p_a, p_b), fn(d, p, p_a, p_b)
                assert abs(mid - edge) <= 1e-9 * max(abs(mid), abs(edge), 1e-300)
        assert il_v3(ILQuery(4.0, 1.0, PriceRange(0.25, 4.0))) == pytest.approx(-0.4, abs=1e-12)
        assert il_v3(ILQuery(4.0, 1.0, PriceRange(0.5, 2.0))) == pytest.approx(-0.517157, abs=1e-6)


def test_wide_range_limit_matches_full_range():
    eps = 1e-9
    p = 1.0
    with Budget(1.0):
        devs = {d: abs(il_v3(ILQuery(d, p, PriceRange(eps * p, p / eps))) - lvh_v2(d)) for d in (0.1, 0.5, 1.0, 2.0, 10.0)}
    assert all(dev <= 1e-6 for dev in devs.values()), devs


def oracle_report(cases) -> str:
    rows = []
    for path, cfg in cases:
        closed, oracle = simulate_position(path, cfg), oracle_replay(path, cfg)
        rows.append({"closed_form": closed.as_dict(), "swap_replay": oracle.as_dict()})
    return json.dumps(rows, indent=2) + "\n"


def test_closed_form_matches_swap_replay_across_branches():
    with Budget(30.0):
        cases = branch_covering_paths(100)
        branches = [simulate_position(path, cfg).branch for path, cfg in cases]
        devs = [abs(simulate_position(path, cfg).realized_il - oracle_replay(path, cfg).realized_il) for path, cfg in cases]
    assert len(cases) == 300
    assert all(branches.count(b) >= 50 for b in set(branches)) and len(set(branches)) == 3
    assert max(devs) <= 1e-6


def test_fifo_fixture_reproduces_hand_traced_positions():
    with Budget(1.0):
        ds = parse_fixture(DATA / "fifo_12_events.json")
        got = json.dumps([closed_position_to_dict(cp) for cp in reconstruct(ds.events)], indent=2) + "\n"
    assert got == (DATA / "fifo_12_events.golden.json").read_text()
    splits = [(cp["position_id"], cp["liquidity"]) for cp in json.loads(got) if cp["position_id"] == "101"]
    assert [int(liq) for _, liq in splits] == [100, 20, 30]


def test_pipeline_matches_brute_force_golden(tmp_path):
    golden = json.loads((DATA / "synthetic_report.golden.json").read_text())
    with Budget(10.0):
        cli("ingest", SYNTHETIC, "-o", tmp_path / "ds.json")
        cli("analyze", tmp_path / "ds.json", "-o", tmp_path / "report.json")
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["metadata"]["positions"] == golden["positions"]
    assert report["tables"].keys() == golden["tables"].keys()
    for grouping, rows in golden["tables"].items():
        assert report["tables"][grouping].keys() == rows.keys()
        for label, cell in rows.items():
            for metric, want in cell.items():
                have = report["tables"][grouping][label][metric]
                assert have["n"] == want["n"]
                assert have["median"] == want["median"]
                for key in ("mean", "std", "ci95_lo", "ci95_hi"):
                    assert abs(have[key] - want[key]) <= 1e-9


def _pm(pid, duration, r, ptype="stable-risky"):
    return PositionMetrics(
        position_id=pid, pool_id="pool", tranche=0, open_t=0, close_t=round(duration * 86400),
        duration_days=duration, size_usd=1e4, range_size=r, realized_il=-0.01, rewards=0.01,
        lp_return=0.0, pool_type=ptype,
    )


def test_reference_thresholds_and_pool_types_classify_as_assigned():
    durations, ranges = (1.12, 26.90), (0.0467, 0.2756)
    hand_assigned = {
        "a": (0.5, 0.01, StrategyClass.SHORT_NARROW),
        "b": (1.11, 0.0466, StrategyClass.SHORT_NARROW),
        "c": (27.0, 0.02, StrategyClass.LONG_NARROW),
        "d": (400.0, 0.04, StrategyClass.LONG_NARROW),
        "e": (0.01, 0.30, StrategyClass.SHORT_WIDE),
        "f": (1.0, 5.0, StrategyClass.SHORT_WIDE),
        "g": (30.0, 0.2757, StrategyClass.LONG_WIDE),
        "h": (90.0, 1.0, StrategyClass.LONG_WIDE),
        "i": (1.12, 0.01, StrategyClass.UNCLASSIFIED),
        "j": (26.90, 0.5, StrategyClass.UNCLASSIFIED),
        "k": (0.5, 0.0467, StrategyClass.UNCLASSIFIED),
        "l": (30.0, 0.2756, StrategyClass.UNCLASSIFIED),
        "m": (10.0, 0.1, StrategyClass.UNCLASSIFIED),
    }
    for pid, (duration, r, want) in hand_assigned.items():
        assert classify_strategy(_pm(pid, duration, r), durations, ranges) is want, pid
    cfg = AnalyticsConfig(duration_thresholds=durations, range_thresholds=ranges)
    positions = [_pm(pid, d, r) for pid, (d, r, _) in hand_assigned.items()]
    table = aggregate_report(positions, ["strategy"], cfg).tables["strategy"]
    assert {label: row["lp_return"].n for label, row in table.items()} == {
        "strategy:short-narrow/stable-risky": 2,
        "strategy:long-narrow/stable-risky": 2,
        "strategy:short-wide/stable-risky": 2,
        "strategy:long-wide/stable-risky": 2,
    }
    assert classify_pool_type("DAI", "USDC").value == "stable-stable"
    assert classify_pool_type("USDC", "ETH").value == "stable-risky"
    assert classify_pool_type("BTC", "ETH").value == "risky-risky"
    assert classify_pool_type("MKR", "ETH").value == "risky-risky"


HIGH_VOL = ("--seed", 0, "simulate", "--paths", 100, "--sigma", 1.5)


def test_narrow_ranges_lose_more_and_long_positions_earn_more(tmp_path):
    with Budget(60.0):
        cli(*HIGH_VOL, "-o", tmp_path / "sim.json")
    tables = json.loads((tmp_path / "sim.json").read_text())["tables"]

    def mean(strategy, metric):
        return tables[f"strategy:{strategy}/stable-risky"][metric]["mean"]

    for length in ("short", "long"):
        assert mean(f"{length}-narrow", "realized_il") < mean(f"{length}-wide", "realized_il")
    for width in ("narrow", "wide"):
        assert mean(f"long-{width}", "rewards") > mean(f"short-{width}", "rewards")


def test_reruns_with_identical_seeds_are_byte_identical(tmp_path):
    assert oracle_report(branch_covering_paths(100)) == oracle_report(branch_covering_paths(100))
    for run in ("a", "b"):
        cli("ingest", SYNTHETIC, "-o", tmp_path / f"ds-{run}.json")
        cli("analyze", tmp_path / f"ds-{run}.json", "-o", tmp_path / f"report-{run}.json")
        cli(*HIGH_VOL, "-o", tmp_path / f"sim-{run}.json")
    for name in ("ds", "report", "sim"):
        assert (tmp_path / f"{name}-a.json").read_bytes() == (tmp_path / f"{name}-b.json").read_bytes()
