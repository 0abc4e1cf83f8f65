"""Offline dataset files: one JSON document or a pools.csv/events.csv pair."""

from __future__ import annotations

import csv
import io
import json
import re
from pathlib import Path

from amm_lab.errors import ParseError
from amm_lab.ingest.schema import (
    EVENT_FIELDS,
    POOL_FIELDS,
    SCHEMA_VERSION,
    Dataset,
    decode_event,
    decode_pool,
    encode_event,
    encode_pool,
    encode_pool_row,
    pool_index,
)


def _element_lines(text: str, key: str) -> list[int]:
    """1-based line of every element of the top-level array ``key``."""
    m = re.search(r'"%s"\s*:\s*\[' % re.escape(key), text)
    if not m:
        return []
    decoder = json.JSONDecoder()
    lines, idx = [], m.end()
    while True:
        while idx < len(text) and text[idx] in " \t\r\n,":
            idx += 1
        if idx >= len(text) or text[idx] == "]":
            return lines
        try:
            _, end = decoder.raw_decode(text, idx)
        except json.JSONDecodeError:
            return lines
        lines.append(text.count("\n", 0, idx) + 1)
        idx = end


def _relocate(exc: ParseError, location: str, line: int | None) -> ParseError:
    return type(exc)(str(exc), location=location, line=line)


def _decode_records(pool_recs, event_recs, pool_lines, event_lines, label) -> Dataset:
    pools = []
    for i, rec in enumerate(pool_recs):
        try:
            pools.append(decode_pool(rec))
        except ParseError as exc:
            raise _relocate(exc, f"{label}pools[{i}]", pool_lines[i] if i < len(pool_lines) else None)
    index = pool_index(pools)
    events = []
    for i, rec in enumerate(event_recs):
        try:
            events.append(decode_event(rec, index))
        except ParseError as exc:
            raise _relocate(exc, f"{label}events[{i}]", event_lines[i] if i < len(event_lines) else None)
    return Dataset(pools, events)


def loads_json(text: str, source: str = "") -> Dataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", location=source or None, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", location=source or None)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}", location=source or None)
    pools, events = doc.get("pools"), doc.get("events")
    if not isinstance(pools, list) or not isinstance(events, list):
        raise ParseError("'pools' and 'events' must be arrays", location=source or None)
    label = f"{source}:" if source else ""
    return _decode_records(pools, events, _element_lines(text, "pools"), _element_lines(text, "events"), label)


def _read_csv(path: Path, fields: tuple[str, ...]) -> tuple[list[dict], list[int]]:
    rows, lines = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", location=str(path))
        if tuple(header) != fields:
            raise ParseError(f"header must be {','.join(fields)}", location=str(path), line=1)
        for row in reader:
            if not row:
                continue
            if len(row) != len(fields):
                raise ParseError(
                    f"expected {len(fields)} columns, got {len(row)}", location=str(path), line=reader.line_num
                )
            rows.append(dict(zip(fields, row)))
            lines.append(reader.line_num)
    return rows, lines


def load_csv_pair(directory: Path) -> Dataset:
    pool_rows, pool_lines = _read_csv(directory / "pools.csv", POOL_FIELDS)
    event_rows, event_lines = _read_csv(directory / "events.csv", EVENT_FIELDS)
    pools = []
    for rec, line in zip(pool_rows, pool_lines):
        try:
            pools.append(decode_pool(rec))
        except ParseError as exc:
            raise _relocate(exc, str(directory / "pools.csv"), line)
    index = pool_index(pools)
    events = []
    for rec, line in zip(event_rows, event_lines):
        try:
            events.append(decode_event(rec, index))
        except ParseError as exc:
            raise _relocate(exc, str(directory / "events.csv"), line)
    return Dataset(pools, events)


def parse_fixture(path: str | Path) -> Dataset:
    """Load and validate a dataset file.

    ``path`` is a ``.json`` document, a directory holding ``pools.csv`` and
    ``events.csv``, or either of those two CSV files.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such dataset: {path}")
    if path.is_dir():
        return load_csv_pair(path)
    if path.suffix == ".csv":
        return load_csv_pair(path.parent)
    return loads_json(path.read_text(), str(path))


def dumps_json(ds: Dataset) -> str:
    """Canonical JSON text: fixed key order, one record per line."""
    index = pool_index(ds.pools)

    def block(recs):
        if not recs:
            return "[]"
        return "[\n" + ",\n".join("    " + json.dumps(r) for r in recs) + "\n  ]"

    pools = block([encode_pool(p) for p in ds.pools])
    events = block([encode_event(e, index) for e in ds.events])
    return (
        "{\n"
        f'  "schema_version": {SCHEMA_VERSION},\n'
        f'  "pools": {pools},\n'
        f'  "events": {events}\n'
        "}\n"
    )


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow(["" if row[f] is None else row[f] for f in fields])
    return buf.getvalue()


def write_fixture(ds: Dataset, path: str | Path, fmt: str = "json") -> None:
    path = Path(path)
    if fmt == "json":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_json(ds))
    elif fmt == "csv":
        path.mkdir(parents=True, exist_ok=True)
        index = pool_index(ds.pools)
        (path / "pools.csv").write_text(_csv_text(POOL_FIELDS, [encode_pool_row(p) for p in ds.pools]))
        (path / "events.csv").write_text(_csv_text(EVENT_FIELDS, [encode_event(e, index) for e in ds.events]))
    else:
        raise ValueError(f"unknown format {fmt!r}")
