"""Command-line entry point: ``amm-lab ingest | analyze | simulate | report-merge``."""

from __future__ import annotations

import functools
import hashlib
import logging
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import click

from amm_lab.analytics import GROUPINGS
from amm_lab.config import Config, load_config
from amm_lab.errors import AmmLabError, ConfigError, DomainError
from amm_lab.ingest import DatasetFilter, apply_filters, fetch_remote, load_field_map, parse_fixture, write_fixture
from amm_lab.ingest.prices import read_price_path
from amm_lab.report import (
    analysis_bundle,
    base_metadata,
    dataset_digest,
    merge_positions,
    position_metrics,
    read_bundle,
    simulation_bundle,
    write_bundle,
)
from amm_lab.sim import run_strategy_grid, seeded_paths

EXIT_INPUT = 2
EXIT_EMPTY = 3
EXIT_CONFIG = 4


class EmptyDataset(AmmLabError):
    pass


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except EmptyDataset as exc:
            _fail(EXIT_EMPTY, str(exc))
        except (AmmLabError, FileNotFoundError) as exc:
            _fail(EXIT_INPUT, str(exc))

    return wrapper


class State:
    def __init__(self, config: Config, seed: int, fmt: str, timestamp: bool):
        self.config = config
        self.seed = seed
        self.fmt = fmt
        self.timestamp = timestamp

    def now(self) -> str | None:
        if not self.timestamp:
            return None
        return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON file merged over the packaged defaults.")
@click.option("--seed", type=int, default=0, show_default=True, help="Base seed; path i uses seed + i.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--no-timestamp", is_flag=True, help="Omit the generation time so outputs are byte-reproducible.")
@click.option("-v", "--verbose", is_flag=True)
@click.version_option(package_name="artifact")
@click.pass_context
def main(ctx, config_path, seed, fmt, no_timestamp, verbose):
    """Liquidity-provider returns toolkit for concentrated-liquidity AMMs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    ctx.obj = State(config, seed, fmt, not no_timestamp)


def _dataset_filter(base: DatasetFilter, block_lo, block_hi, min_tvl, closed_only, pools) -> DatasetFilter:
    try:
        return DatasetFilter(
            min_tvl_usd=base.min_tvl_usd if min_tvl is None else min_tvl,
            block_lo=base.block_lo if block_lo is None else block_lo,
            block_hi=base.block_hi if block_hi is None else block_hi,
            closed_only=base.closed_only if closed_only is None else closed_only,
            pool_allowlist=frozenset(pools) if pools else base.pool_allowlist,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@main.command()
@click.argument("source", required=False, type=click.Path())
@click.option("--endpoint", help="Subgraph URL; defaults to $AMM_LAB_SUBGRAPH_URL when SOURCE is omitted.")
@click.option("--field-map", type=click.Path(exists=True, dir_okay=False), help="Remote field-name overrides.")
@click.option("--page-size", type=click.IntRange(1, 1000), default=1000, show_default=True)
@click.option("--block-lo", type=int)
@click.option("--block-hi", type=int)
@click.option("--min-tvl", type=float, help="Minimum pool TVL in USD.")
@click.option("--closed-only/--keep-open", default=None, help="Drop positions not fully withdrawn in the window.")
@click.option("--pool", "pools", multiple=True, help="Keep only these pools (name or id); repeatable.")
@click.option("-o", "--output", required=True, type=click.Path(), help="Normalized dataset (file, or directory for csv).")
@click.pass_obj
@handle_errors
def ingest(state: State, source, endpoint, field_map, page_size, block_lo, block_hi, min_tvl, closed_only, pools, output):
    """Load, validate and filter a dataset, then write it in canonical form."""
    f = _dataset_filter(state.config.filter, block_lo, block_hi, min_tvl, closed_only, pools)
    if source:
        ds = parse_fixture(source)
    else:
        fmap = load_field_map(field_map) if field_map else None
        # the remote window is half-open, the filter window inclusive
        ds = fetch_remote(endpoint, f.block_lo, f.block_hi + 1, page_size, field_map=fmap)
    out = apply_filters(ds.pools, ds.events, f)
    write_fixture(out, output, state.fmt)
    click.echo(
        f"pools: kept {len(out.pools)}, dropped {len(ds.pools) - len(out.pools)}; "
        f"events: kept {len(out.events)}, dropped {len(ds.events) - len(out.events)}"
    )


@main.command()
@click.argument("dataset", type=click.Path())
@click.option(
    "--group", "groups", multiple=True, type=click.Choice(GROUPINGS),
    help="Groupings to tabulate; repeatable. Default: all.",
)
@click.option("-o", "--output", required=True, type=click.Path(), help="Report file (directory for csv).")
@click.pass_obj
@handle_errors
def analyze(state: State, dataset, groups, output):
    """Per-position metrics and cohort tables for a dataset."""
    cfg = state.config
    ds = parse_fixture(dataset)
    filtered = apply_filters(ds.pools, ds.events, cfg.filter)
    positions, names = position_metrics(filtered, cfg.analytics.stable_tokens, cfg.normalization, cfg.fee_attribution)
    if not positions:
        raise EmptyDataset(f"{dataset}: no closed positions after filtering")
    meta = base_metadata("analysis", cfg.digest, state.now())
    meta.update(
        dataset_sha256=dataset_digest(ds),
        filter=cfg.filter.as_dict(),
        normalization=cfg.normalization.value,
        fee_attribution=cfg.fee_attribution.value,
        ci_method=cfg.analytics.ci_method.value,
    )
    bundle = analysis_bundle(positions, names, cfg.analytics, cfg.bin_width, meta, groups or GROUPINGS)
    write_bundle(bundle, output, state.fmt)
    click.echo(f"{len(positions)} positions from {len(filtered.pools)} pools -> {output}")


@main.command()
@click.option("--paths", "n_paths", type=click.IntRange(min=1), help="Number of GBM paths (default from config).")
@click.option("--sigma", type=float, help="Override the annual volatility of generated paths.")
@click.option("--price-file", "price_files", multiple=True, type=click.Path(), help="Replay price CSVs instead of GBM paths.")
@click.option("--no-oracle", is_flag=True, help="Skip the swap-replay cross-check.")
@click.option("-o", "--output", required=True, type=click.Path(), help="Result file (directory for csv).")
@click.pass_obj
@handle_errors
def simulate(state: State, n_paths, sigma, price_files, no_oracle, output):
    """Backtest the strategy grid on seeded GBM paths or price files."""
    cfg = state.config
    meta = base_metadata("simulation", cfg.digest, state.now())
    if price_files:
        paths = [read_price_path(p) for p in price_files]
        seeds = [state.seed + i for i in range(len(paths))]
        meta["source"] = {
            "kind": "files",
            "sha256": [hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in price_files],
        }
    else:
        spec = cfg.sim_path if sigma is None else replace(cfg.sim_path, sigma=sigma)
        if spec.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        n = n_paths or cfg.n_paths
        paths = seeded_paths(spec, n, state.seed)
        seeds = [state.seed + i for i in range(n)]
        meta["source"] = {"kind": "gbm", **asdict(spec)}
    meta.update(seed=state.seed, n_paths=len(paths), pool_type=cfg.pool_type, params=asdict(cfg.sim_params))
    try:
        rows = run_strategy_grid(
            paths, cfg.strategies, cfg.pool_type, cfg.sim_params, base_seed=state.seed, with_oracle=not no_oracle
        )
    except DomainError as exc:
        raise ConfigError(f"strategy grid does not fit the paths: {exc}") from None
    bundle = simulation_bundle(rows, cfg.strategies, meta, seeds)
    write_bundle(bundle, output, state.fmt)
    dev = bundle["oracle_max_deviation"]["overall"]
    click.echo(f"{len(cfg.strategies)} strategies x {len(paths)} paths -> {output}")
    if dev is not None:
        click.echo(f"oracle max |IL deviation|: {dev:.3e}")


@main.command("report-merge")
@click.argument("reports", nargs=-1, required=True, type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path())
@click.pass_obj
@handle_errors
def report_merge(state: State, reports, output):
    """Combine analysis reports and recompute tables over the union of positions."""
    cfg = state.config
    bundles = [read_bundle(r) for r in reports]
    positions, names, sources = merge_positions(bundles)
    if not positions:
        raise EmptyDataset("the reports contain no positions")
    meta = base_metadata("analysis", cfg.digest, state.now())
    meta.update(
        merged_from=sorted(sources),
        normalization=cfg.normalization.value,
        fee_attribution=cfg.fee_attribution.value,
        ci_method=cfg.analytics.ci_method.value,
    )
    bundle = analysis_bundle(positions, names, cfg.analytics, cfg.bin_width, meta)
    write_bundle(bundle, output, state.fmt)
    click.echo(f"merged {len(reports)} reports, {len(positions)} positions -> {output}")


if __name__ == "__main__":
    main()
