"""Price path files: CSV with columns timestamp, price, volume_usd, price1_usd."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from amm_lab.errors import DomainError, ParseError
from amm_lab.ingest.schema import fmt_float
from amm_lab.sim import PricePath

PRICE_FIELDS = ("timestamp", "price", "volume_usd", "price1_usd")


def read_price_path(path: str | Path) -> PricePath:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such price file: {path}")
    t, p, vol, p_y = [], [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PRICE_FIELDS:
            raise ParseError(f"header must be {','.join(PRICE_FIELDS)}", location=str(path), line=1)
        for row in reader:
            if not row:
                continue
            try:
                if len(row) != len(PRICE_FIELDS):
                    raise ValueError(f"expected {len(PRICE_FIELDS)} columns, got {len(row)}")
                t.append(int(row[0]))
                p.append(float(row[1]))
                vol.append(float(row[2]))
                p_y.append(float(row[3]))
            except ValueError as exc:
                raise ParseError(str(exc), location=str(path), line=reader.line_num) from None
    try:
        return PricePath(t, p, vol, p_y)
    except DomainError as exc:
        raise ParseError(str(exc), location=str(path)) from None


def dumps_price_path(pp: PricePath) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PRICE_FIELDS)
    for t, p, v, py in zip(pp.t, pp.p, pp.volume_usd, pp.p_y):
        writer.writerow([int(t), fmt_float(p), fmt_float(v), fmt_float(py)])
    return buf.getvalue()


def write_price_path(pp: PricePath, path: str | Path) -> None:
    Path(path).write_text(dumps_price_path(pp))
