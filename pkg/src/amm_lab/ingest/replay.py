"""Local HTTP server replaying a dataset through the subgraph wire protocol.

Used by the test-suite and for offline demos of ``ingest --endpoint``. The
server reads only the GraphQL variables, not the query text.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping

from amm_lab.ingest.remote import default_field_map, nest
from amm_lab.ingest.schema import Dataset, encode_event, encode_pool_row, pool_index


class ReplayServer:
    """Serve ``dataset`` on ``http://127.0.0.1:<port>/``.

    ``fail_first`` answers that many requests with HTTP 503 before serving;
    ``truncate_page`` cuts the body of that (0-based) successful page in half.
    """

    def __init__(
        self,
        dataset: Dataset,
        *,
        field_map: Mapping[str, Mapping[str, str]] | None = None,
        fail_first: int = 0,
        truncate_page: int | None = None,
    ):
        fmap = field_map or default_field_map()
        index = pool_index(dataset.pools)
        self.pools = [nest(encode_pool_row(p), fmap["pools"]) for p in dataset.pools]
        records = sorted(dataset.events, key=lambda e: e.key)
        self.events = [(ev.key, nest(encode_event(ev, index), fmap["events"])) for ev in records]
        self.fail_first = fail_first
        self.truncate_page = truncate_page
        self.requests = 0
        self.pages_served = 0
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/"

    def page(self, variables: Mapping) -> dict:
        after = (variables["afterBlock"], variables["afterLogIndex"])
        lo, hi, first = variables["blockLo"], variables["blockHi"], variables["first"]
        rows = [rec for key, rec in self.events if key > after and lo <= key[0] < hi][:first]
        data: dict = {"liquidityEvents": rows}
        if variables.get("withPools"):
            data["pools"] = self.pools
        return {"data": data}

    def _respond(self, payload: dict) -> tuple[int, bytes]:
        with self._lock:
            self.requests += 1
            if self.requests <= self.fail_first:
                return 503, b'{"errors": ["unavailable"]}'
            body = json.dumps(self.page(payload["variables"])).encode()
            n = self.pages_served
            self.pages_served += 1
        if self.truncate_page is not None and n == self.truncate_page:
            body = body[: len(body) // 2]
        return 200, body

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                status, body = server._respond(payload)
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        return Handler

    def start(self) -> ReplayServer:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> ReplayServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
