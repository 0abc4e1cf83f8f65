import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from amm_lab import __version__
from amm_lab.cli import EXIT_CONFIG, EXIT_EMPTY, EXIT_INPUT, main
from amm_lab.ingest import Dataset, parse_fixture, write_fixture
from amm_lab.ingest.prices import write_price_path
from amm_lab.ingest.replay import ReplayServer
from amm_lab.report import read_bundle
from amm_lab.sim import PricePath

DATA = Path(__file__).parent / "data"
SYNTHETIC = Path(__file__).parents[1] / "src" / "amm_lab" / "data" / "synthetic_positions.json"
FIFO = DATA / "fifo_12_events.json"


def run(*args, ok=True):
    result = CliRunner().invoke(main, ["--no-timestamp", *map(str, args)])
    if ok:
        assert result.exit_code == 0, result.output
    return result


@pytest.fixture(scope="module")
def synthetic_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("analyze") / "report.json"
    run("analyze", SYNTHETIC, "-o", out)
    return json.loads(out.read_text())


# -- analyze ---------------------------------------------------------------------


def test_analyze_matches_brute_force_golden(synthetic_report):
    golden = json.loads((DATA / "synthetic_report.golden.json").read_text())
    got = synthetic_report
    assert got["metadata"]["positions"] == golden["positions"] == 202
    th = got["metadata"]["strategy_thresholds"]
    assert th["duration_days"] == golden["strategy_thresholds"]["duration_days"]
    assert th["range_size"] == golden["strategy_thresholds"]["range_size"]
    assert got["tables"].keys() == golden["tables"].keys()
    for grouping, rows in golden["tables"].items():
        assert got["tables"][grouping].keys() == rows.keys(), grouping
        for label, cell in rows.items():
            for metric, want in cell.items():
                have = got["tables"][grouping][label][metric]
                assert have["n"] == want["n"] and have["median"] == want["median"], (label, metric)
                for key in ("mean", "std", "ci95_lo", "ci95_hi"):
                    assert have[key] == pytest.approx(want[key], abs=1e-9), (label, metric, key)


def test_analyze_drops_filtered_records(synthetic_report):
    pools = {row["pool"] for row in synthetic_report["positions"]}
    assert "LINK-WETH-10000" not in pools and len(pools) == 9
    assert all(row["duration_days"] > 0 for row in synthetic_report["positions"])


def test_histogram_counts_sum_to_n(synthetic_report):
    hist = synthetic_report["histograms"]
    assert hist["bin_width"] == 0.005
    for label, series in hist["series"].items():
        for metric in ("realized_il", "rewards"):
            bins = series[metric]
            assert sum(b["count"] for b in bins) == series["n"], (label, metric)
            assert all(b["hi"] == pytest.approx(b["lo"] + 0.005) for b in bins)
    assert hist["series"]["all"]["n"] == 202


def test_analyze_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("analyze", SYNTHETIC, "-o", a)
    run("analyze", SYNTHETIC, "-o", b)
    assert a.read_bytes() == b.read_bytes()


def test_csv_and_json_reports_agree(tmp_path, synthetic_report):
    run("--format", "csv", "analyze", SYNTHETIC, "-o", tmp_path / "csv")
    assert {p.name for p in (tmp_path / "csv").iterdir()} == {
        "metadata.json", "tables.csv", "histograms.csv", "positions.csv",
    }
    from_csv = read_bundle(tmp_path / "csv")
    assert from_csv["tables"] == synthetic_report["tables"]
    assert from_csv["positions"] == synthetic_report["positions"]
    assert from_csv["histograms"] == synthetic_report["histograms"]


def test_single_position_dataset(tmp_path):
    ds = parse_fixture(SYNTHETIC)
    first = next(e for e in ds.events if e.kind.value == "withdraw")
    events = [e for e in ds.events if e.position_id == first.position_id]
    write_fixture(Dataset(ds.pools, events), tmp_path / "one.json")
    run("analyze", tmp_path / "one.json", "-o", tmp_path / "r.json")
    report = json.loads((tmp_path / "r.json").read_text())
    for grouping, rows in report["tables"].items():
        if grouping == "strategy":
            # a lone position sits exactly on both percentile thresholds
            assert rows == {}
            continue
        (cell,) = rows.values()
        assert all(stats["n"] == 1 and stats["std"] == 0.0 for stats in cell.values())


def test_group_option_limits_tables(tmp_path):
    run("analyze", SYNTHETIC, "--group", "pool_type", "--group", "size", "-o", tmp_path / "r.json")
    report = json.loads((tmp_path / "r.json").read_text())
    assert list(report["tables"]) == ["pool_type", "size"]


def test_timestamp_recorded_by_default(tmp_path):
    result = CliRunner().invoke(main, ["analyze", str(FIFO), "-o", str(tmp_path / "r.json")])
    assert result.exit_code == 0
    assert "generated_at" in json.loads((tmp_path / "r.json").read_text())["metadata"]


# -- exit codes ------------------------------------------------------------------


def test_missing_input_exits_2_and_names_path(tmp_path):
    missing = tmp_path / "nope.json"
    result = run("analyze", missing, "-o", tmp_path / "r.json", ok=False)
    assert result.exit_code == EXIT_INPUT
    assert str(missing) in result.stderr


def test_malformed_input_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(FIFO.read_text().replace('"amount0": "1000000000000000000000"', '"amount0": "-1"', 1))
    result = run("analyze", bad, "-o", tmp_path / "r.json", ok=False)
    assert result.exit_code == EXIT_INPUT
    assert "line" in result.stderr


def test_empty_after_filtering_exits_3(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"filter": {"min_tvl_usd": 1e12}}))
    result = run("--config", cfg, "analyze", FIFO, "-o", tmp_path / "r.json", ok=False)
    assert result.exit_code == EXIT_EMPTY


@pytest.mark.parametrize(
    "override",
    [
        {"analysis": {"no_such_key": 1}},
        {"filter": {"block_lo": 10, "block_hi": 5}},
        {"analysis": {"ci_method": "bootstrap"}},
        {"simulate": {"strategies": [{"name": "x", "duration_days": 90.0, "range_size": 0.1}]}},
    ],
)
def test_bad_config_exits_4(tmp_path, override):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(override))
    result = run("--config", cfg, "simulate", "--paths", 1, "-o", tmp_path / "s.json", ok=False)
    assert result.exit_code == EXIT_CONFIG


def test_negative_sigma_exits_4(tmp_path):
    result = run("simulate", "--sigma", -0.1, "--paths", 1, "-o", tmp_path / "s.json", ok=False)
    assert result.exit_code == EXIT_CONFIG


# -- ingest ----------------------------------------------------------------------


def test_ingest_fifo_matches_golden(tmp_path):
    out = tmp_path / "n.json"
    result = run("ingest", FIFO, "-o", out)
    assert "pools: kept 2, dropped 0; events: kept 11, dropped 1" in result.output
    assert out.read_bytes() == (DATA / "fifo_12_events.normalized.json").read_bytes()


def test_ingest_min_tvl_zero_keeps_dust_pool(tmp_path):
    default = run("ingest", SYNTHETIC, "-o", tmp_path / "a.json").output
    assert "pools: kept 9, dropped 1" in default
    relaxed = run("ingest", SYNTHETIC, "--min-tvl", 0, "-o", tmp_path / "b.json").output
    assert "pools: kept 10, dropped 0" in relaxed
    names = {p.name for p in parse_fixture(tmp_path / "b.json").pools}
    assert "LINK-WETH-10000" in names


def test_ingest_keep_open_retains_open_positions(tmp_path):
    run("ingest", FIFO, "--keep-open", "-o", tmp_path / "n.json")
    assert any(e.position_id == "303" for e in parse_fixture(tmp_path / "n.json").events)


def test_ingest_output_is_idempotent(tmp_path):
    run("ingest", SYNTHETIC, "-o", tmp_path / "a.json")
    run("ingest", tmp_path / "a.json", "-o", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_ingest_csv_round_trip(tmp_path):
    run("--format", "csv", "ingest", FIFO, "-o", tmp_path / "csv")
    run("ingest", tmp_path / "csv", "-o", tmp_path / "n.json")
    assert (tmp_path / "n.json").read_bytes() == (DATA / "fifo_12_events.normalized.json").read_bytes()


def test_ingest_from_endpoint_equals_file(tmp_path):
    with ReplayServer(parse_fixture(SYNTHETIC)) as server:
        run("ingest", "--endpoint", server.url, "--page-size", 100, "-o", tmp_path / "remote.json")
    run("ingest", SYNTHETIC, "-o", tmp_path / "local.json")
    assert (tmp_path / "remote.json").read_bytes() == (tmp_path / "local.json").read_bytes()


def test_ingest_endpoint_from_environment(tmp_path, monkeypatch):
    with ReplayServer(parse_fixture(FIFO)) as server:
        monkeypatch.setenv("AMM_LAB_SUBGRAPH_URL", server.url)
        run("ingest", "-o", tmp_path / "n.json")
    assert (tmp_path / "n.json").read_bytes() == (DATA / "fifo_12_events.normalized.json").read_bytes()


# -- simulate ----------------------------------------------------------------------


def test_simulate_matches_swap_replay_golden(tmp_path):
    golden = json.loads((DATA / "simulate_seed7.golden.json").read_text())
    run("--seed", 7, "simulate", "--paths", 100, "--no-oracle", "-o", tmp_path / "s.json")
    got = json.loads((tmp_path / "s.json").read_text())["results"]
    assert len(got) == len(golden["results"]) == 400
    for have, want in zip(got, golden["results"]):
        assert (have["strategy"], have["path"], have["seed"]) == (want["strategy"], want["path"], want["seed"])
        assert have["realized_il"] == pytest.approx(want["realized_il"], abs=1e-6)
        assert have["rewards"] == pytest.approx(want["rewards"], abs=1e-9)
        assert have["time_in_range"] == want["time_in_range"]


def test_simulate_is_byte_deterministic(tmp_path):
    for name in ("a.json", "b.json"):
        run("--seed", 3, "simulate", "--paths", 4, "-o", tmp_path / name)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_simulate_flat_prices_lose_nothing(tmp_path):
    run("simulate", "--sigma", 0, "--paths", 3, "-o", tmp_path / "s.json")
    bundle = json.loads((tmp_path / "s.json").read_text())
    assert all(r["realized_il"] == 0.0 and r["time_in_range"] == 1.0 for r in bundle["results"])
    assert all(r["rewards"] > 0 for r in bundle["results"])
    assert bundle["oracle_max_deviation"]["overall"] == 0.0


def test_simulate_csv_output(tmp_path):
    run("--format", "csv", "simulate", "--paths", 2, "-o", tmp_path / "csv")
    run("simulate", "--paths", 2, "-o", tmp_path / "s.json")
    assert {p.name for p in (tmp_path / "csv").iterdir()} == {"metadata.json", "tables.csv", "results.csv"}
    bundle = read_bundle(tmp_path / "csv")
    assert bundle["tables"] == json.loads((tmp_path / "s.json").read_text())["tables"]
    assert bundle["results"] == json.loads((tmp_path / "s.json").read_text())["results"]


def test_simulate_from_price_file(tmp_path):
    prices = [2000.0 * (1 + 0.001 * (i % 7 - 3)) for i in range(24 * 31)]
    write_price_path(PricePath.from_prices(prices, volume_usd=1e6), tmp_path / "p.csv")
    run("simulate", "--price-file", tmp_path / "p.csv", "-o", tmp_path / "s.json")
    bundle = json.loads((tmp_path / "s.json").read_text())
    assert bundle["metadata"]["source"]["kind"] == "files"
    assert len(bundle["results"]) == 4


def test_simulate_missing_price_file_exits_2(tmp_path):
    result = run("simulate", "--price-file", tmp_path / "missing.csv", "-o", tmp_path / "s.json", ok=False)
    assert result.exit_code == EXIT_INPUT
    assert "missing.csv" in result.stderr


# -- report-merge ------------------------------------------------------------------


def test_report_merge_equals_single_run(tmp_path, synthetic_report):
    ds = parse_fixture(SYNTHETIC)
    weth = {p.pool_id for p in ds.pools if "WETH" in p.name}
    parts = {
        "weth.json": [e for e in ds.events if e.pool_id in weth],
        "rest.json": [e for e in ds.events if e.pool_id not in weth],
    }
    reports = []
    for name, events in parts.items():
        write_fixture(Dataset(ds.pools, events), tmp_path / name)
        reports.append(tmp_path / f"r-{name}")
        run("analyze", tmp_path / name, "-o", reports[-1])
    run("report-merge", *reports, "-o", tmp_path / "merged.json")
    merged = json.loads((tmp_path / "merged.json").read_text())
    assert merged["tables"] == synthetic_report["tables"]
    assert merged["positions"] == synthetic_report["positions"]
    assert len(merged["metadata"]["merged_from"]) == 2


def test_report_merge_rejects_overlap(tmp_path):
    run("analyze", FIFO, "-o", tmp_path / "r.json")
    result = run("report-merge", tmp_path / "r.json", tmp_path / "r.json", "-o", tmp_path / "m.json", ok=False)
    assert result.exit_code == EXIT_INPUT


def test_version():
    result = CliRunner().invoke(main, ["--version"])
    assert result.exit_code == 0 and __version__ in result.output
