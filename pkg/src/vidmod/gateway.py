"""HTTP API for the review queue, stats, health, and a push event stream.

The stream is newline-delimited JSON over a plain HTTP response: any HTTP
client can consume it line by line. Events fan out through bounded
per-subscriber queues; a subscriber that falls behind is sent a terminal
"dropped" event and disconnected rather than ever blocking the pipeline.
"""

from __future__ import annotations

import json
import mimetypes
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .labels import LabelClass
from .store import (
    AlreadyResolved,
    BadCursor,
    NotFound,
    NotReviewable,
    Store,
)

DEFAULT_WINDOW_S = 3600.0
DEFAULT_HEARTBEAT_S = 15.0
SUBSCRIBER_QUEUE_SIZE = 256


class _Subscriber:
    def __init__(self):
        self.queue: queue.Queue = queue.Queue(maxsize=SUBSCRIBER_QUEUE_SIZE)
        self.dropped = False


class EventBus:
    def __init__(self):
        self._lock = threading.Lock()
        self._subs: list[_Subscriber] = []

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber()
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, event: dict) -> None:
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            try:
                sub.queue.put_nowait(event)
            except queue.Full:
                sub.dropped = True


class Gateway:
    def __init__(
        self,
        store: Store,
        broker=None,
        static_dir=None,
        runs_dir=None,
        window_s: float = DEFAULT_WINDOW_S,
        heartbeat_s: float = DEFAULT_HEARTBEAT_S,
        clock=time.time,
    ):
        self.store = store
        self.broker = broker
        self.static_dir = Path(static_dir) if static_dir else None
        self.runs_dir = Path(runs_dir) if runs_dir else None
        self.window_s = window_s
        self.heartbeat_s = heartbeat_s
        self.clock = clock
        self.events = EventBus()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        store.add_listener(self._on_store_event)

    def _on_store_event(self, event_type: str, video_id: str) -> None:
        self.events.publish({"type": event_type, "id": video_id})

    # -- lifecycle -----------------------------------------------------------

    def start(self, host: str = "127.0.0.1", port: int = 8787) -> tuple[str, int]:
        gateway = self

        class Handler(_GatewayHandler):
            gw = gateway

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self._server.server_address[:2]

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    # -- endpoint logic (transport-independent, also exercised in tests) ------

    def review_page(self, limit: int, cursor: str | None) -> dict:
        records, next_cursor = self.store.query(
            decision="REVIEW", resolved=False, limit=limit, cursor=cursor
        )
        return {
            "items": [r.to_json_dict() for r in records],
            "cursor": next_cursor,
        }

    def resolve_item(self, video_id: str, body: dict) -> dict:
        verdict = body.get("verdict")
        moderator = body.get("moderator")
        relabel_raw = body.get("relabel")
        if verdict not in ("allow", "block"):
            raise ApiError(422, "bad_verdict", f"verdict must be allow|block, got {verdict!r}")
        if not isinstance(moderator, str) or not moderator.strip():
            raise ApiError(422, "bad_moderator", "moderator must be a non-empty string")
        relabel = None
        if relabel_raw is not None:
            try:
                relabel = LabelClass.from_string(relabel_raw)
            except ValueError as e:
                raise ApiError(422, "bad_relabel", str(e)) from None
        try:
            rec = self.store.resolve(video_id, verdict, moderator.strip(), relabel)
        except NotFound:
            raise ApiError(404, "not_found", f"no record for {video_id!r}") from None
        except AlreadyResolved:
            raise ApiError(409, "already_resolved", f"{video_id} was already resolved") from None
        except NotReviewable as e:
            raise ApiError(422, "not_reviewable", str(e)) from None
        return rec.to_json_dict()

    def stats(self) -> dict:
        now = self.clock()
        report = self.store.report(now - self.window_s, now)
        doc = report.to_json_dict()
        doc["review_queue_depth_total"] = self.store.review_queue_depth()
        return doc

    def health(self) -> dict:
        doc: dict = {"status": "ok", "last_run": None, "broker_lag": None}
        if self.runs_dir and self.runs_dir.exists():
            runs = sorted(self.runs_dir.glob("*.json"), key=lambda p: p.stat().st_mtime)
            if runs:
                data = json.loads(runs[-1].read_text())
                doc["last_run"] = {
                    "run_id": data.get("run_id"),
                    "dag_id": data.get("dag_id"),
                    "status": data.get("status"),
                    "ended": data.get("ended"),
                }
        if self.broker is not None:
            lags = {}
            for topic in self.broker.topics():
                for group in self.broker.known_groups(topic):
                    lag = self.broker.lag(group, topic)
                    lags[f"{topic}/{group}"] = sum(lag.values())
            doc["broker_lag"] = lags
        return doc


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def body(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


class _GatewayHandler(BaseHTTPRequestHandler):
    gw: Gateway
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- helpers -------------------------------------------------------------

    def _send_json(self, status: int, doc: dict) -> None:
        blob = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _send_api_error(self, err: ApiError) -> None:
        self._send_json(err.status, err.body())

    # -- routing --------------------------------------------------------------

    def do_GET(self):
        url = urlparse(self.path)
        try:
            if url.path == "/api/v1/review":
                q = parse_qs(url.query)
                limit = int(q.get("limit", ["50"])[0])
                cursor = q.get("cursor", [None])[0]
                try:
                    self._send_json(200, self.gw.review_page(limit, cursor))
                except BadCursor:
                    raise ApiError(400, "bad_cursor", "cursor must be a sequence number") from None
                except ValueError as e:
                    raise ApiError(400, "bad_request", str(e)) from None
            elif url.path == "/api/v1/stats":
                self._send_json(200, self.gw.stats())
            elif url.path == "/api/v1/health":
                self._send_json(200, self.gw.health())
            elif url.path == "/api/v1/events":
                self._stream_events()
            elif self.gw.static_dir is not None:
                self._serve_static(url.path)
            else:
                raise ApiError(404, "not_found", f"no route for {url.path}")
        except ApiError as err:
            self._send_api_error(err)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self):
        url = urlparse(self.path)
        try:
            if url.path.startswith("/api/v1/review/"):
                video_id = url.path[len("/api/v1/review/") :]
                if not video_id:
                    raise ApiError(404, "not_found", "missing item id")
                length = int(self.headers.get("Content-Length", "0") or "0")
                raw = self.rfile.read(length) if length else b""
                try:
                    body = json.loads(raw.decode("utf-8")) if raw else {}
                except (ValueError, UnicodeDecodeError):
                    raise ApiError(422, "bad_body", "body must be valid JSON") from None
                if not isinstance(body, dict):
                    raise ApiError(422, "bad_body", "body must be a JSON object")
                self._send_json(200, self.gw.resolve_item(video_id, body))
            else:
                raise ApiError(404, "not_found", f"no route for {url.path}")
        except ApiError as err:
            self._send_api_error(err)
        except (BrokenPipeError, ConnectionResetError):
            pass

    # -- event stream -----------------------------------------------------------

    def _stream_events(self):
        self.send_response(200)
        self.send_header("Content-Type", "application/x-ndjson")
        self.send_header("Cache-Control", "no-store")
        self.send_header("Connection", "close")
        self.end_headers()
        sub = self.gw.events.subscribe()
        last_write = self.gw.clock()
        try:
            self._write_event({"type": "hello"})
            while True:
                if sub.dropped:
                    self._write_event({"type": "dropped"})
                    return
                try:
                    event = sub.queue.get(timeout=0.1)
                except queue.Empty:
                    event = None
                now = self.gw.clock()
                if event is not None:
                    self._write_event(event)
                    last_write = now
                elif now - last_write >= self.gw.heartbeat_s:
                    self._write_event({"type": "heartbeat"})
                    last_write = now
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.gw.events.unsubscribe(sub)

    def _write_event(self, event: dict) -> None:
        self.wfile.write((json.dumps(event) + "\n").encode("utf-8"))
        self.wfile.flush()

    # -- static assets ----------------------------------------------------------

    def _serve_static(self, path: str):
        root = self.gw.static_dir.resolve()
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            if (root / "index.html").is_file() and "." not in rel:
                target = root / "index.html"  # SPA fallback for client routes
            else:
                raise ApiError(404, "not_found", f"no asset {path}")
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        blob = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)
