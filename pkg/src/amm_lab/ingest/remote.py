"""
Subgraph-style GraphQL client.

Events are fetched in pages ordered by ``(block, log_index)``; each request
asks for records strictly after the last key seen, so pagination is
deterministic and resumable. Pool metadata rides on the first request via
``@include``. The block window is half-open, ``[block_lo, block_hi)``.

Public subgraph schemas drift, so every remote field is addressed through a
field map (canonical name -> dotted remote path) that can be overridden from
a JSON mapping file.
"""

from __future__ import annotations

import json
import logging
import os
import time
from pathlib import Path
from typing import Any, Callable, Mapping

import httpx

from amm_lab.errors import DecodeError, DomainError, ParseError, TransportError
from amm_lab.ingest.schema import Dataset, decode_event, decode_pool, pool_index

log = logging.getLogger(__name__)

ENDPOINT_ENV = "AMM_LAB_SUBGRAPH_URL"
MAX_PAGE_SIZE = 1000

DEFAULT_POOL_FIELDS = {
    "pool_id": "id",
    "name": "name",
    "token0_symbol": "token0.symbol",
    "token0_decimals": "token0.decimals",
    "token1_symbol": "token1.symbol",
    "token1_decimals": "token1.decimals",
    "fee_ppm": "feeTier",
    "tvl_usd": "totalValueLockedUSD",
    "volume_usd": "volumeUSD",
    "tx_count": "txCount",
}

DEFAULT_EVENT_FIELDS = {
    "kind": "kind",
    "position_id": "position.id",
    "owner": "position.owner",
    "pool_id": "pool.id",
    "tick_lower": "position.tickLower",
    "tick_upper": "position.tickUpper",
    "block": "transaction.blockNumber",
    "log_index": "transaction.logIndex",
    "timestamp": "transaction.timestamp",
    "amount0": "amount0",
    "amount1": "amount1",
    "usd_value": "amountUSD",
    "price0_usd": "token0PriceUSD",
    "price1_usd": "token1PriceUSD",
    "liquidity": "liquidity",
}

_TRANSIENT_STATUS = {429, 500, 502, 503, 504}


def load_field_map(path: str | Path) -> dict[str, dict[str, str]]:
    """Read ``{"pools": {...}, "events": {...}}`` overrides on top of the defaults."""
    data = json.loads(Path(path).read_text())
    return {
        "pools": {**DEFAULT_POOL_FIELDS, **data.get("pools", {})},
        "events": {**DEFAULT_EVENT_FIELDS, **data.get("events", {})},
    }


def default_field_map() -> dict[str, dict[str, str]]:
    return {"pools": dict(DEFAULT_POOL_FIELDS), "events": dict(DEFAULT_EVENT_FIELDS)}


def _selection(paths) -> str:
    tree: dict = {}
    for path in paths:
        node = tree
        for part in path.split("."):
            node = node.setdefault(part, {})

    def render(node):
        return " ".join(k if not v else f"{k} {{ {render(v)} }}" for k, v in node.items())

    return render(tree)


def build_query(field_map: Mapping[str, Mapping[str, str]]) -> str:
    pools = _selection(field_map["pools"].values())
    events = _selection(field_map["events"].values())
    return (
        "query LiquidityEvents($blockLo: Int!, $blockHi: Int!, $afterBlock: Int!, "
        "$afterLogIndex: Int!, $first: Int!, $withPools: Boolean!) {\n"
        f"  pools @include(if: $withPools) {{ {pools} }}\n"
        "  liquidityEvents(first: $first, blockLo: $blockLo, blockHi: $blockHi, "
        "afterBlock: $afterBlock, afterLogIndex: $afterLogIndex) "
        f"{{ {events} }}\n"
        "}\n"
    )


def _lookup(rec: Mapping, path: str) -> Any:
    node: Any = rec
    for part in path.split("."):
        if not isinstance(node, Mapping) or part not in node:
            return None
        node = node[part]
    return node


def _flatten(rec: Mapping, fields: Mapping[str, str]) -> dict:
    out = {}
    for canon, path in fields.items():
        value = _lookup(rec, path)
        if value is not None:
            out[canon] = value
    return out


def nest(flat: Mapping, fields: Mapping[str, str]) -> dict:
    """Inverse of the field map: place canonical values at their remote paths."""
    out: dict = {}
    for canon, path in fields.items():
        if canon not in flat:
            continue
        node = out
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = flat[canon]
    return out


class SubgraphClient:
    """Thin POST-with-retries wrapper around an ``httpx.Client``."""

    def __init__(
        self,
        endpoint: str,
        *,
        client: httpx.Client | None = None,
        max_retries: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 8.0,
        sleep: Callable[[float], None] = time.sleep,
        timeout: float = 30.0,
    ):
        self.endpoint = endpoint
        self.client = client or httpx.Client(timeout=timeout)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.sleep = sleep
        self.requests = 0

    def post(self, payload: dict) -> bytes:
        attempt = 0
        while True:
            self.requests += 1
            try:
                resp = self.client.post(self.endpoint, json=payload)
            except httpx.TransportError as exc:
                reason = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    return resp.content
                if resp.status_code not in _TRANSIENT_STATUS:
                    raise TransportError(f"{self.endpoint} answered HTTP {resp.status_code}")
                reason = f"HTTP {resp.status_code}"
            if attempt >= self.max_retries:
                raise TransportError(f"{self.endpoint} failed after {attempt + 1} attempts ({reason})")
            delay = min(self.backoff_cap, self.backoff_base * 2**attempt)
            log.warning("transient failure (%s), retrying in %.2fs", reason, delay)
            self.sleep(delay)
            attempt += 1


def fetch_remote(
    endpoint: str | None,
    block_lo: int,
    block_hi: int,
    page_size: int = MAX_PAGE_SIZE,
    *,
    field_map: Mapping[str, Mapping[str, str]] | None = None,
    client: SubgraphClient | None = None,
) -> Dataset:
    """Fetch pools and all events with ``block_lo <= block < block_hi``.

    Falls back to the ``AMM_LAB_SUBGRAPH_URL`` environment variable when no
    endpoint is given.
    """
    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise DomainError(f"no endpoint given and {ENDPOINT_ENV} is unset")
    if not 1 <= page_size <= MAX_PAGE_SIZE:
        raise DomainError(f"page_size must lie in [1, {MAX_PAGE_SIZE}], got {page_size}")
    if block_hi < block_lo:
        raise DomainError(f"empty window: block_hi {block_hi} < block_lo {block_lo}")
    fmap = field_map or default_field_map()
    client = client or SubgraphClient(endpoint)
    query = build_query(fmap)

    pools = None
    index: dict = {}
    events = []
    cursor = (-1, -1)
    while True:
        variables = {
            "blockLo": block_lo,
            "blockHi": block_hi,
            "afterBlock": cursor[0],
            "afterLogIndex": cursor[1],
            "first": page_size,
            "withPools": pools is None,
        }
        body = client.post({"query": query, "variables": variables})
        data = _decode_page(body, cursor, expect_pools=pools is None)
        if pools is None:
            pools = []
            for i, rec in enumerate(data["pools"]):
                try:
                    pools.append(decode_pool(_flatten(rec, fmap["pools"])))
                except ParseError as exc:
                    raise DecodeError(f"pool record {i} at cursor {cursor}: {exc}") from None
            index = pool_index(pools)
        page = data["liquidityEvents"]
        for i, rec in enumerate(page):
            try:
                ev = decode_event(_flatten(rec, fmap["events"]), index)
            except ParseError as exc:
                raise DecodeError(f"event {i} of page after cursor {cursor}: {exc}") from None
            if not cursor < ev.key or not block_lo <= ev.block < block_hi:
                raise DecodeError(f"server returned event {ev.key} outside the page after cursor {cursor}")
            events.append(ev)
            cursor = ev.key
        if len(page) < page_size:
            return Dataset(pools, events)


def _decode_page(body: bytes, cursor: tuple[int, int], expect_pools: bool) -> dict:
    try:
        doc = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DecodeError(f"undecodable page after cursor {cursor}: {exc}") from None
    if not isinstance(doc, dict):
        raise DecodeError(f"page after cursor {cursor} is not an object")
    if doc.get("errors"):
        raise DecodeError(f"server reported errors after cursor {cursor}: {doc['errors']}")
    data = doc.get("data")
    if not isinstance(data, dict) or not isinstance(data.get("liquidityEvents"), list):
        raise DecodeError(f"page after cursor {cursor} lacks data.liquidityEvents")
    if expect_pools and not isinstance(data.get("pools"), list):
        raise DecodeError(f"page after cursor {cursor} lacks data.pools")
    return data
