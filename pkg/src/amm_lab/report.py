"""
Report bundles: the data-only output of ``analyze``, ``simulate`` and ``report-merge``.

A bundle is a JSON document (or a directory of CSV files plus
``metadata.json``) holding cohort tables, histogram series and the
per-position rows they were computed from. Floats are written with ``repr``
precision so JSON and CSV carry identical values.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from amm_lab import __version__
from amm_lab.analytics import (
    GROUPINGS,
    AnalyticsConfig,
    classify_pool_type,
    classify_strategy,
    StrategyClass,
    aggregate_report,
)
from amm_lab.errors import DomainError, ParseError
from amm_lab.ingest.fixture import dumps_json
from amm_lab.ingest.schema import Dataset
from amm_lab.ledger import FeeAttribution, PositionMetrics, compute_metrics, reconstruct
from amm_lab.il_metrics import Normalization
from amm_lab.sim import GridRow, Strategy

SCHEMA_VERSION = 1
STAT_FIELDS = ("n", "mean", "median", "std", "ci95_lo", "ci95_hi")
HISTOGRAM_METRICS = ("realized_il", "rewards")
POSITION_FIELDS = (
    "position_id",
    "pool_id",
    "pool",
    "pool_type",
    "tranche",
    "open_t",
    "close_t",
    "duration_days",
    "size_usd",
    "range_size",
    "realized_il",
    "rewards",
    "lp_return",
    "in_range_at_open",
    "strategy",
)


def dataset_digest(ds: Dataset) -> str:
    """SHA-256 of the canonical serialisation, independent of the input file format."""
    return hashlib.sha256(dumps_json(ds).encode()).hexdigest()


def base_metadata(kind: str, config_digest: str, timestamp: str | None) -> dict:
    meta = {"tool": "amm-lab", "version": __version__, "kind": kind, "config_sha256": config_digest}
    if timestamp is not None:
        meta["generated_at"] = timestamp
    return meta


# -- analysis ------------------------------------------------------------------


def position_metrics(
    ds: Dataset,
    stable_tokens: Iterable[str],
    normalization: Normalization | str = Normalization.HODL,
    fee_attribution: FeeAttribution | str = FeeAttribution.PRO_RATA,
) -> tuple[list[PositionMetrics], dict[str, str]]:
    """Metrics of every closed slice in ``ds`` and the pool-id to name map."""
    pools = {p.pool_id: p for p in ds.pools}
    stables = frozenset(stable_tokens)
    types = {pid: classify_pool_type(p.token0.symbol, p.token1.symbol, stables).value for pid, p in pools.items()}
    metrics = [
        compute_metrics(cp, normalization, types[cp.pool_id])
        for cp in reconstruct(ds.events, fee_attribution)
    ]
    return metrics, {pid: p.name for pid, p in pools.items()}


def histogram(values: Sequence[float], bin_width: float) -> list[dict]:
    """Contiguous bins ``[k*w, (k+1)*w)`` covering every value."""
    if not bin_width > 0:
        raise DomainError("bin width must be positive")
    if not values:
        return []
    idx = [math.floor(v / bin_width) for v in values]
    counts: dict[int, int] = {}
    for k in idx:
        counts[k] = counts.get(k, 0) + 1
    return [
        {"lo": k * bin_width, "hi": (k + 1) * bin_width, "count": counts.get(k, 0)}
        for k in range(min(idx), max(idx) + 1)
    ]


def _position_row(m: PositionMetrics, names: Mapping[str, str], strategy: str | None) -> dict:
    return {
        "position_id": m.position_id,
        "pool_id": m.pool_id,
        "pool": names.get(m.pool_id, m.pool_id),
        "pool_type": m.pool_type,
        "tranche": m.tranche,
        "open_t": m.open_t,
        "close_t": m.close_t,
        "duration_days": m.duration_days,
        "size_usd": m.size_usd,
        "range_size": m.range_size,
        "realized_il": m.realized_il,
        "rewards": m.rewards,
        "lp_return": m.lp_return,
        "in_range_at_open": m.in_range_at_open,
        "strategy": strategy,
    }


def metrics_from_row(row: Mapping) -> PositionMetrics:
    return PositionMetrics(
        position_id=str(row["position_id"]),
        pool_id=str(row["pool_id"]),
        tranche=int(row["tranche"]),
        open_t=int(row["open_t"]),
        close_t=int(row["close_t"]),
        duration_days=float(row["duration_days"]),
        size_usd=float(row["size_usd"]),
        range_size=float(row["range_size"]),
        realized_il=float(row["realized_il"]),
        rewards=float(row["rewards"]),
        lp_return=float(row["lp_return"]),
        in_range_at_open=bool(row["in_range_at_open"]),
        pool_type=row["pool_type"],
    )


def analysis_bundle(
    positions: Sequence[PositionMetrics],
    names: Mapping[str, str],
    cfg: AnalyticsConfig,
    bin_width: float,
    metadata: dict,
    groupings: Sequence[str] = GROUPINGS,
) -> dict:
    report = aggregate_report(positions, groupings, cfg, names)
    th = report.thresholds
    rows = []
    for m in positions:
        strategy = None
        if th is not None and m.pool_type != "stable-stable":
            cls = classify_strategy(m, th.duration, th.range)
            strategy = None if cls is StrategyClass.UNCLASSIFIED else cls.value
        rows.append(_position_row(m, names, strategy))
    rows.sort(key=lambda r: (r["pool_id"], r["position_id"], r["open_t"], r["close_t"], r["tranche"]))

    series: dict[str, dict] = {}
    by_pool: dict[str, list[dict]] = {"all": rows}
    for r in rows:
        by_pool.setdefault(f"pool:{r['pool']}", []).append(r)
    for label in sorted(by_pool):
        members = by_pool[label]
        series[label] = {
            "n": len(members),
            **{m: histogram([r[m] for r in members], bin_width) for m in HISTOGRAM_METRICS},
        }
    meta = dict(metadata)
    meta["positions"] = len(rows)
    meta["strategy_thresholds"] = None if th is None else {
        "duration_days": list(th.duration),
        "range_size": list(th.range),
        "derived_from_percentiles": th.derived,
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "metadata": meta,
        "tables": report.as_dict(),
        "histograms": {"bin_width": bin_width, "series": series},
        "positions": rows,
    }


# -- simulation ----------------------------------------------------------------


def simulation_bundle(rows: Sequence[GridRow], strategies: Sequence[Strategy], metadata: dict, seeds: Sequence[int]) -> dict:
    tables, devs, results = {}, {}, []
    for row in rows:
        label = f"strategy:{row.strategy}/{row.pool_type}"
        table = {k: s.as_dict() for k, s in row.stats.items()}
        if row.compounded is not None:
            table["compounded_return"] = row.compounded.as_dict()
        tables[label] = table
        devs[label] = row.oracle_max_dev
        for i, res in enumerate(row.results):
            results.append({"strategy": row.strategy, "path": i, "seed": seeds[i], **res.as_dict()})
    known = [d for d in devs.values() if d is not None]
    return {
        "schema_version": SCHEMA_VERSION,
        "metadata": metadata,
        "strategies": [{"name": s.name, "duration_days": s.duration_days, "range_size": s.range_size} for s in strategies],
        "tables": tables,
        "oracle_max_deviation": {"by_strategy": devs, "overall": max(known) if known else None},
        "results": results,
    }


# -- serialisation -------------------------------------------------------------


def dumps_bundle(bundle: dict) -> str:
    return json.dumps(bundle, indent=2, allow_nan=False) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _table_rows(tables: Mapping) -> list[list]:
    out = []
    for group, rows in tables.items():
        for label, metrics in rows.items():
            for metric, s in metrics.items():
                out.append([group, label, metric, *(s[f] for f in STAT_FIELDS)])
    return out


def bundle_csv_files(bundle: dict) -> dict[str, str]:
    files = {}
    meta = {k: v for k, v in bundle.items() if k not in ("tables", "histograms", "positions", "results")}
    if "histograms" in bundle:
        meta["histograms"] = {"bin_width": bundle["histograms"]["bin_width"]}
    files["metadata.json"] = dumps_bundle(meta)
    if "positions" in bundle:
        files["tables.csv"] = _csv(("grouping", "label", "metric", *STAT_FIELDS), _table_rows(bundle["tables"]))
        hist = []
        for label, s in bundle["histograms"]["series"].items():
            for metric in HISTOGRAM_METRICS:
                hist.extend([label, metric, b["lo"], b["hi"], b["count"]] for b in s[metric])
        files["histograms.csv"] = _csv(("series", "metric", "lo", "hi", "count"), hist)
        files["positions.csv"] = _csv(POSITION_FIELDS, ([r[f] for f in POSITION_FIELDS] for r in bundle["positions"]))
    else:
        rows = [[label, metric, *(s[f] for f in STAT_FIELDS)] for label, t in bundle["tables"].items() for metric, s in t.items()]
        files["tables.csv"] = _csv(("label", "metric", *STAT_FIELDS), rows)
        fields = list(bundle["results"][0]) if bundle["results"] else ["strategy"]
        files["results.csv"] = _csv(fields, ([r[f] for f in fields] for r in bundle["results"]))
    return files


def write_bundle(bundle: dict, path: str | Path, fmt: str = "json") -> None:
    path = Path(path)
    if fmt == "json":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_bundle(bundle))
    elif fmt == "csv":
        path.mkdir(parents=True, exist_ok=True)
        for name, text in bundle_csv_files(bundle).items():
            (path / name).write_text(text)
    else:
        raise ValueError(f"unknown format {fmt!r}")


_TEXT_FIELDS = frozenset(
    ("position_id", "pool_id", "pool", "pool_type", "strategy", "grouping", "label", "metric", "series", "branch")
)


def _parse_cell(field: str, text: str):
    if text == "":
        return None
    if field in _TEXT_FIELDS:
        return text
    if text in ("true", "false"):
        return text == "true"
    if field in ("n", "count", "tranche", "open_t", "close_t", "path", "seed"):
        return int(text)
    return float(text)


def _read_csv(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return [{k: _parse_cell(k, v) for k, v in row.items()} for row in csv.DictReader(fh)]


def read_bundle(path: str | Path) -> dict:
    """Load a report bundle written in either format."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such report: {path}")
    try:
        if path.is_dir():
            bundle = json.loads((path / "metadata.json").read_text())
            tables: dict = {}
            if (path / "positions.csv").exists():
                bundle["positions"] = _read_csv(path / "positions.csv")
                for r in _read_csv(path / "tables.csv"):
                    tables.setdefault(r["grouping"], {}).setdefault(r["label"], {})[r["metric"]] = {
                        f: r[f] for f in STAT_FIELDS
                    }
                series: dict = {}
                for r in _read_csv(path / "histograms.csv"):
                    s = series.setdefault(r["series"], {"n": 0, **{m: [] for m in HISTOGRAM_METRICS}})
                    s[r["metric"]].append({"lo": r["lo"], "hi": r["hi"], "count": r["count"]})
                for s in series.values():
                    s["n"] = sum(b["count"] for b in s[HISTOGRAM_METRICS[0]])
                bundle.setdefault("histograms", {})["series"] = series
            else:
                for r in _read_csv(path / "tables.csv"):
                    tables.setdefault(r["label"], {})[r["metric"]] = {f: r[f] for f in STAT_FIELDS}
                bundle["results"] = _read_csv(path / "results.csv")
            bundle["tables"] = tables
        else:
            bundle = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ParseError(f"unreadable report: {exc}", location=str(path)) from None
    if not isinstance(bundle, dict) or bundle.get("schema_version") != SCHEMA_VERSION:
        raise ParseError("not a report bundle of a supported schema_version", location=str(path))
    return bundle


def merge_positions(bundles: Sequence[dict]) -> tuple[list[PositionMetrics], dict[str, str], list[str]]:
    """Union of the position rows of analysis bundles; the same slice twice is an error."""
    seen: set[tuple] = set()
    metrics, names, sources = [], {}, []
    for b in bundles:
        if b.get("metadata", {}).get("kind") != "analysis" or "positions" not in b:
            raise ParseError("only analysis reports can be merged")
        sources.append(b["metadata"].get("dataset_sha256", ""))
        for row in b["positions"]:
            key = (row["pool_id"], row["position_id"], row["tranche"], row["open_t"], row["close_t"])
            if key in seen:
                raise ParseError(f"position slice {key} appears in more than one report")
            seen.add(key)
            names[row["pool_id"]] = row["pool"]
            metrics.append(metrics_from_row(row))
    return metrics, names, sources

