import json
from pathlib import Path

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amm_lab.errors import DecodeError, ParseError, ReferentialError, TransportError
from amm_lab.il_metrics import PriceQuote
from amm_lab.ingest import (
    ENDPOINT_ENV,
    Dataset,
    DatasetFilter,
    PoolDescriptor,
    TokenId,
    apply_filters,
    dumps_json,
    fetch_remote,
    parse_fixture,
    write_fixture,
)
from amm_lab.ingest.fixture import loads_json
from amm_lab.ingest.remote import SubgraphClient, build_query, default_field_map, load_field_map
from amm_lab.ingest.replay import ReplayServer
from amm_lab.ingest.schema import from_raw, to_raw
from amm_lab.ledger import EventKind, LiquidityEvent

DATA = Path(__file__).parent / "data"
FIFO = DATA / "fifo_12_events.json"

POOL = PoolDescriptor("0xp", "USDC-WETH-500", TokenId("USDC", 6), TokenId("WETH", 18), 500, 5e7, 1e9, 100)
DUST = PoolDescriptor("0xd", "DAI-USDC-100", TokenId("DAI", 18), TokenId("USDC", 6), 100, 9_999.0)


def event(kind, pid, block, liq=0, *, log=0, pool=POOL, a0=1000.0, a1=0.5, t=None):
    t = 1_650_000_000 + block * 12 if t is None else t
    ticks = (None, None) if kind == "collect" else (198000, 202000)
    return LiquidityEvent(
        kind=EventKind(kind), position_id=pid, pool_id=pool.pool_id, block=block, log_index=log,
        t=t, amount0=a0, amount1=a1, usd_value=2000.0, quote=PriceQuote(1.0, 2000.0, t),
        liquidity=liq, tick_lower=ticks[0], tick_upper=ticks[1], decimals_shift=pool.decimals_shift,
    )


def many_events(n_positions: int, start: int = 15_000_000) -> Dataset:
    evs = []
    for i in range(n_positions):
        evs.append(event("deposit", str(i), start + i, 10**18 + i, log=3))
        evs.append(event("withdraw", str(i), start + n_positions + i, 10**18 + i, log=7))
    return Dataset([POOL], evs)


# -- fixtures ---------------------------------------------------------------


def test_fifo_fixture_counts():
    ds = parse_fixture(FIFO)
    assert (len(ds.pools), len(ds.events)) == (2, 12)
    assert ds.pools[0].name == "DAI-USDC-100" and ds.pools[0].decimals_shift == 12


def test_amounts_scaled_by_decimals():
    ds = parse_fixture(FIFO)
    weth = ds.events[1]
    assert (weth.amount0, weth.amount1) == (2000.0, 1.0)


def test_empty_events_array():
    ds = loads_json('{"schema_version": 1, "pools": [], "events": []}')
    assert ds == Dataset([], [])


def test_negative_amount_reports_row_and_line(tmp_path):
    doc = json.loads(FIFO.read_text())
    doc["events"][3]["amount0"] = "-5"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc, indent=1))
    with pytest.raises(ParseError, match=r"events\[3\]") as info:
        parse_fixture(path)
    # the reported line opens the offending record
    rest = "\n".join(path.read_text().splitlines()[info.value.line - 1 :]).lstrip()
    assert json.JSONDecoder().raw_decode(rest)[0]["amount0"] == "-5"


def test_unknown_pool_is_referential_error():
    doc = json.loads(FIFO.read_text())
    doc["events"][0]["pool_id"] = "0xnowhere"
    with pytest.raises(ReferentialError):
        loads_json(json.dumps(doc))


@pytest.mark.parametrize(
    "field, value",
    [("amount1", 1.5), ("kind", "mint"), ("block", "12.5"), ("usd_value", "NaN"), ("liquidity", "-1")],
)
def test_schema_violations_rejected(field, value):
    doc = json.loads(FIFO.read_text())
    doc["events"][0][field] = value
    with pytest.raises(ParseError):
        loads_json(json.dumps(doc))


def test_bad_pool_name_rejected():
    doc = json.loads(FIFO.read_text())
    doc["pools"][0]["name"] = "USDC-DAI-100"
    with pytest.raises(ParseError, match="pools\\[0\\]"):
        loads_json(json.dumps(doc))


def test_missing_file():
    with pytest.raises(FileNotFoundError, match="nope.json"):
        parse_fixture("nope.json")


def test_csv_bad_row_reports_line(tmp_path):
    write_fixture(parse_fixture(FIFO), tmp_path, "csv")
    lines = (tmp_path / "events.csv").read_text().splitlines()
    lines[4] = "mint," + lines[4].split(",", 1)[1]
    (tmp_path / "events.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as info:
        parse_fixture(tmp_path)
    assert info.value.line == 5


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_fixture_round_trip(tmp_path, fmt):
    ds = parse_fixture(FIFO)
    target = tmp_path / ("out.json" if fmt == "json" else "out")
    write_fixture(ds, target, fmt)
    assert parse_fixture(target) == ds


def test_serialization_is_canonical():
    ds = parse_fixture(FIFO)
    text = dumps_json(ds)
    assert dumps_json(loads_json(text)) == text


amounts = st.floats(min_value=0, max_value=1e30, allow_nan=False, allow_infinity=False)
prices = st.floats(min_value=1e-12, max_value=1e12, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(amounts, st.integers(0, 36))
def test_raw_codec_exact(x, decimals):
    assert from_raw(to_raw(x, decimals), decimals) == x


@settings(max_examples=100, deadline=None)
@given(amounts, amounts, amounts, prices, prices, st.integers(1, 2**128 - 1), st.integers(0, 2**32))
def test_dataset_round_trip_bit_exact(a0, a1, usd, px, py, liq, t):
    e = LiquidityEvent(
        kind=EventKind.DEPOSIT, position_id="7", pool_id=POOL.pool_id, block=15_000_000, log_index=2,
        t=t, amount0=a0, amount1=a1, usd_value=usd, quote=PriceQuote(px, py, t), liquidity=liq,
        tick_lower=198000, tick_upper=202000, decimals_shift=POOL.decimals_shift,
    )
    ds = Dataset([POOL], [e])
    assert loads_json(dumps_json(ds)) == ds


# -- filters ----------------------------------------------------------------


def test_tvl_threshold_excludes_pool():
    evs = [event("deposit", "a", 15_000_000, 5, pool=DUST, a0=1.0, a1=1.0)]
    out = apply_filters([POOL, DUST], evs, DatasetFilter(closed_only=False))
    assert out.pools == [POOL] and out.events == []
    assert apply_filters([DUST], [], DatasetFilter(min_tvl_usd=0)).pools == [DUST]


def test_block_window_lower_bound_inclusive():
    evs = [event("collect", "a", 14_691_319), event("collect", "a", 14_691_320)]
    out = apply_filters([POOL], evs, DatasetFilter(closed_only=False))
    assert [e.block for e in out.events] == [14_691_320]


def test_block_window_upper_bound_inclusive():
    evs = [event("collect", "a", 19_560_244), event("collect", "a", 19_560_245)]
    out = apply_filters([POOL], evs, DatasetFilter(closed_only=False))
    assert [e.block for e in out.events] == [19_560_244]


def test_unclosed_position_excluded():
    evs = [
        event("deposit", "open", 15_000_000, 10),
        event("deposit", "closed", 15_000_001, 10),
        event("withdraw", "closed", 15_000_002, 10),
        event("deposit", "half", 15_000_003, 10),
        event("withdraw", "half", 15_000_004, 4),
    ]
    out = apply_filters([POOL], evs, DatasetFilter())
    assert {e.position_id for e in out.events} == {"closed"}


def test_position_opened_before_window_excluded():
    evs = [event("deposit", "a", 14_000_000, 10), event("withdraw", "a", 15_000_000, 10)]
    assert apply_filters([POOL], evs, DatasetFilter()).events == []


def test_allowlist_by_name():
    f = DatasetFilter(min_tvl_usd=0, pool_allowlist={"DAI-USDC-100"})
    assert apply_filters([POOL, DUST], [], f).pools == [DUST]


def test_filters_idempotent_and_pure_selection():
    ds = parse_fixture(FIFO)
    f = DatasetFilter()
    once = apply_filters(ds.pools, ds.events, f)
    twice = apply_filters(once.pools, once.events, f)
    assert once == twice
    assert all(e in ds.events for e in once.events)
    assert {e.position_id for e in once.events} == {"101", "202"}


def test_filter_invariants():
    with pytest.raises(ValueError):
        DatasetFilter(block_lo=10, block_hi=10)
    with pytest.raises(ValueError):
        DatasetFilter(min_tvl_usd=-1)


# -- remote -----------------------------------------------------------------


def no_sleep(_):
    pass


def client_for(server, **kw):
    return SubgraphClient(server.url, sleep=no_sleep, **kw)


def test_replay_equals_fixture():
    ds = parse_fixture(FIFO)
    with ReplayServer(ds) as server:
        got = fetch_remote(server.url, 0, 10**9, page_size=5, client=client_for(server))
    assert got == Dataset(ds.pools, sorted(ds.events, key=lambda e: e.key))
    assert server.requests == 3


def test_pagination_2500_records_three_requests():
    ds = many_events(1250)
    with ReplayServer(ds) as server:
        got = fetch_remote(server.url, 0, 10**9, page_size=1000, client=client_for(server))
    assert server.requests == 3
    assert len(got.events) == 2500
    assert got.events == sorted(ds.events, key=lambda e: e.key)


def test_empty_window_single_request():
    with ReplayServer(many_events(10)) as server:
        got = fetch_remote(server.url, 15_000_005, 15_000_005, client=client_for(server))
    assert got.events == [] and got.pools == [POOL]
    assert server.requests == 1


def test_window_is_half_open():
    with ReplayServer(many_events(10)) as server:
        got = fetch_remote(server.url, 15_000_000, 15_000_010, client=client_for(server))
    assert [e.block for e in got.events] == list(range(15_000_000, 15_000_010))


def test_transient_failures_are_retried():
    delays = []
    with ReplayServer(many_events(3), fail_first=3) as server:
        client = SubgraphClient(server.url, sleep=delays.append, backoff_base=0.5, backoff_cap=1.0)
        got = fetch_remote(server.url, 0, 10**9, client=client)
    assert len(got.events) == 6
    assert delays == [0.5, 1.0, 1.0]
    assert client.requests == server.requests == 4


def test_retries_exhausted_raise_transport_error():
    with ReplayServer(many_events(3), fail_first=100) as server:
        with pytest.raises(TransportError, match="3 attempts"):
            fetch_remote(server.url, 0, 10**9, client=client_for(server, max_retries=2))


def test_connection_refused_is_transport_error():
    with pytest.raises(TransportError):
        fetch_remote("http://127.0.0.1:9/", 0, 1, client=SubgraphClient("http://127.0.0.1:9/", sleep=no_sleep, max_retries=1))


def test_truncated_page_names_cursor():
    ds = many_events(10)
    with ReplayServer(ds, truncate_page=1) as server:
        with pytest.raises(DecodeError, match=r"cursor \(15000006, 3\)"):
            fetch_remote(server.url, 0, 10**9, page_size=7, client=client_for(server))


def test_client_error_is_not_retried():
    transport = httpx.MockTransport(lambda req: httpx.Response(400, json={}))
    client = SubgraphClient("http://x/", client=httpx.Client(transport=transport), sleep=no_sleep)
    with pytest.raises(TransportError, match="HTTP 400"):
        fetch_remote("http://x/", 0, 1, client=client)
    assert client.requests == 1


def test_schema_mismatch_is_decode_error():
    transport = httpx.MockTransport(lambda req: httpx.Response(200, json={"data": {"swaps": []}}))
    client = SubgraphClient("http://x/", client=httpx.Client(transport=transport), sleep=no_sleep)
    with pytest.raises(DecodeError, match="liquidityEvents"):
        fetch_remote("http://x/", 0, 1, client=client)


def test_endpoint_from_environment(monkeypatch):
    ds = parse_fixture(FIFO)
    with ReplayServer(ds) as server:
        monkeypatch.setenv(ENDPOINT_ENV, server.url)
        got = fetch_remote(None, 0, 10**9)
    assert len(got.events) == 12


def test_missing_endpoint(monkeypatch):
    monkeypatch.delenv(ENDPOINT_ENV, raising=False)
    with pytest.raises(ValueError, match=ENDPOINT_ENV):
        fetch_remote(None, 0, 1)


@pytest.mark.parametrize("size", [0, 1001])
def test_page_size_bounds(size):
    with pytest.raises(ValueError):
        fetch_remote("http://x/", 0, 1, page_size=size)


def test_custom_field_map(tmp_path):
    override = {"events": {"usd_value": "valueUSD", "block": "tx.number"}, "pools": {"tvl_usd": "tvl"}}
    path = tmp_path / "map.json"
    path.write_text(json.dumps(override))
    fmap = load_field_map(path)
    assert "valueUSD" in build_query(fmap) and "amountUSD" not in build_query(fmap)
    ds = parse_fixture(FIFO)
    with ReplayServer(ds, field_map=fmap) as server:
        got = fetch_remote(server.url, 0, 10**9, field_map=fmap, client=client_for(server))
    assert got.pools == ds.pools and len(got.events) == 12


def test_query_selects_nested_paths():
    q = build_query(default_field_map())
    assert "transaction { blockNumber logIndex timestamp }" in q
    assert "@include(if: $withPools)" in q
