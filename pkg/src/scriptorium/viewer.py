"""Local HTTP service for the browser console.

Serves page images, viewer state, approvals, job progress, and a
server-sent event stream, plus the static files of the companion UI.
Binds to loopback by default; binding elsewhere requires a token that
clients must present in the X-Viewer-Token header. Nothing here ever
writes to the filesystem, and no path outside the workspace (or the
static UI directory) is ever served.
"""
from __future__ import annotations

import errno
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote, urlparse

from . import rangefinder
from .errors import AlreadyDecided, PortInUse, UnknownApproval
from .workspace import PageRef, SOURCE_NAME_RE

_IMAGE_RE = re.compile(r"^/api/sources/([^/]+)/pages/(\d+)/image$")
_DECIDE_RE = re.compile(r"^/api/approvals/([A-Za-z0-9]+)/decision$")
_JOB_RE = re.compile(r"^/api/jobs/([A-Za-z0-9]+)$")
_RANGE_RE = re.compile(r"^/api/sources/([^/]+)/range$")
_CONFIRM_RE = re.compile(r"^/api/sources/([^/]+)/range/confirm$")

_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".svg": "image/svg+xml",
}


class ViewerServer:
    """Handle for a running viewer service; shut down with close()."""

    def __init__(self, ctx, port: int, bind: str = "127.0.0.1",
                 static_dir: str | Path | None = None, token: str | None = None):
        if bind not in ("127.0.0.1", "localhost", "::1") and not token:
            raise ValueError("non-loopback bind requires a token")
        handler = _make_handler(ctx, static_dir and Path(static_dir).resolve(), token)
        try:
            self._httpd = ThreadingHTTPServer((bind, port), handler)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(f"port {port} is already in use") from exc
            raise
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(ctx, port: int = 0, bind: str = "127.0.0.1",
          static_dir: str | Path | None = None, token: str | None = None) -> ViewerServer:
    return ViewerServer(ctx, port, bind=bind, static_dir=static_dir, token=token)


def decide_approval(ctx, approval_id: str, decision: str, note: str = ""):
    """Record a decision; listeners unblock or fail the waiting job."""
    return ctx.approvals.decide(approval_id, decision, note=note)


def _make_handler(ctx, static_dir: Path | None, token: str | None):

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- plumbing ---------------------------------------------------------

        def _check_token(self) -> bool:
            if token is None:
                return True
            if self.headers.get("X-Viewer-Token") == token:
                return True
            self._send_json({"error": "missing or bad token"}, status=403)
            return False

        def _send_json(self, payload, status: int = 200) -> None:
            body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_bytes(self, body: bytes, content_type: str) -> None:
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _not_found(self, message: str = "not found") -> None:
            self._send_json({"error": message}, status=404)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if not length:
                return {}
            try:
                return json.loads(self.rfile.read(length).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                return {}

        # -- GET --------------------------------------------------------------

        def do_GET(self):
            if not self._check_token():
                return
            path = unquote(urlparse(self.path).path)
            if path == "/api/sources":
                self._send_json([
                    {"name": s.name, "page_count": s.page_count}
                    for s in ctx.ws.sources()
                ])
                return
            m = _IMAGE_RE.match(path)
            if m:
                self._serve_image(m.group(1), int(m.group(2)))
                return
            if path == "/api/state":
                self._send_json(ctx.hub.state.to_dict())
                return
            if path == "/api/approvals":
                self._send_json([r.to_dict() for r in ctx.approvals.all()])
                return
            m = _JOB_RE.match(path)
            if m:
                job = ctx.hub.job(m.group(1))
                if job is None:
                    self._not_found(f"no job {m.group(1)}")
                    return
                self._send_json(job.progress())
                return
            m = _RANGE_RE.match(path)
            if m:
                self._serve_range(m.group(1))
                return
            if path == "/api/events":
                self._serve_events()
                return
            self._serve_static(path)

        def _serve_image(self, source: str, page_id: int) -> None:
            if not SOURCE_NAME_RE.match(source):
                self._not_found("bad source name")
                return
            page = PageRef(source, page_id)
            if not ctx.ws.has_page(page):
                self._not_found(f"no page {page_id} in {source}")
                return
            self._send_bytes(ctx.ws.page_path(page).read_bytes(), "image/png")

        def _serve_range(self, source: str) -> None:
            if not SOURCE_NAME_RE.match(source):
                self._not_found("bad source name")
                return
            path = rangefinder.ranges_path(ctx.ws, source)
            if not path.is_file():
                self._not_found("no range on record")
                return
            self._send_json(json.loads(path.read_text(encoding="utf-8")))

        def _serve_events(self) -> None:
            q = ctx.hub.subscribe()
            try:
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.end_headers()
                while True:
                    try:
                        event = q.get(timeout=1.0)
                    except Exception:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    data = json.dumps(event, ensure_ascii=False)
                    self.wfile.write(f"data: {data}\n\n".encode("utf-8"))
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                pass
            finally:
                ctx.hub.unsubscribe(q)

        def _serve_static(self, path: str) -> None:
            if static_dir is None:
                self._not_found()
                return
            rel = path.lstrip("/") or "index.html"
            target = (static_dir / rel).resolve()
            try:
                target.relative_to(static_dir)
            except ValueError:
                self._not_found()
                return
            if not target.is_file():
                self._not_found()
                return
            ctype = _STATIC_TYPES.get(target.suffix, "application/octet-stream")
            self._send_bytes(target.read_bytes(), ctype)

        # -- POST -------------------------------------------------------------

        def do_POST(self):
            if not self._check_token():
                return
            path = unquote(urlparse(self.path).path)
            m = _DECIDE_RE.match(path)
            if m:
                body = self._read_body()
                decision = body.get("decision", "")
                if decision not in ("granted", "denied"):
                    self._send_json({"error": f"bad decision {decision!r}"}, status=400)
                    return
                try:
                    req = decide_approval(ctx, m.group(1), decision,
                                          note=body.get("note", ""))
                except UnknownApproval as exc:
                    self._not_found(str(exc))
                    return
                except AlreadyDecided as exc:
                    self._send_json({"error": str(exc)}, status=409)
                    return
                self._send_json(req.to_dict())
                return
            m = _CONFIRM_RE.match(path)
            if m:
                source = m.group(1)
                if not SOURCE_NAME_RE.match(source) or \
                        not rangefinder.ranges_path(ctx.ws, source).is_file():
                    self._not_found("no range on record")
                    return
                result = rangefinder.confirm_range(ctx.ws, source)
                ctx.hub.emit("state", {"range_confirmed": source})
                self._send_json(result.to_dict())
                return
            self._not_found()

    return Handler
