from __future__ import annotations

import json
import socket
import threading
import urllib.error
import urllib.request

import pytest

from scriptorium import batch, fixtures, rangefinder, viewer
from scriptorium.agent import EngineContext
from scriptorium.batch import estimate_cost, make_job
from scriptorium.errors import PortInUse


@pytest.fixture()
def server(small_ctx):
    ctx, oracle = small_ctx
    with viewer.serve(ctx, port=0) as srv:
        yield ctx, srv


def _get(srv, path, token=None):
    req = urllib.request.Request(f"http://127.0.0.1:{srv.port}{path}")
    if token:
        req.add_header("X-Viewer-Token", token)
    with urllib.request.urlopen(req, timeout=5) as resp:
        return resp.status, resp.read()


def _post(srv, path, payload):
    body = json.dumps(payload).encode()
    req = urllib.request.Request(
        f"http://127.0.0.1:{srv.port}{path}", data=body, method="POST",
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req, timeout=5) as resp:
        return resp.status, json.loads(resp.read())


def test_sources_endpoint(server):
    ctx, srv = server
    status, body = _get(srv, "/api/sources")
    assert status == 200
    assert json.loads(body) == [{"name": "book1", "page_count": 60}]


def test_image_passthrough(server):
    ctx, srv = server
    status, body = _get(srv, "/api/sources/book1/pages/5/image")
    assert status == 200
    original = (ctx.ws.root / "sources/book1/png/page_0005.png").read_bytes()
    assert body == original


def test_image_unknown_page_404(server):
    ctx, srv = server
    with pytest.raises(urllib.error.HTTPError) as exc:
        _get(srv, "/api/sources/book1/pages/999/image")
    assert exc.value.code == 404


def test_image_traversal_rejected(server):
    ctx, srv = server
    for bad in ("/api/sources/../pages/1/image",
                "/api/sources/..%2f..%2fetc/pages/1/image"):
        with pytest.raises(urllib.error.HTTPError) as exc:
            _get(srv, bad)
        assert exc.value.code == 404


def test_state_reflects_push(server):
    ctx, srv = server
    ctx.hub.push_state("book1", 17)
    status, body = _get(srv, "/api/state")
    state = json.loads(body)
    assert state["source"] == "book1" and state["page_id"] == 17


def test_approval_decision_flow(server):
    ctx, srv = server
    job = make_job(ctx, "book1", [12, 13], "tab-separated", fixtures.COLUMNS)
    estimate_cost(ctx, job, 400)
    req = batch.propose(ctx, job)
    status, listed = _get(srv, "/api/approvals")
    assert json.loads(listed)[0]["id"] == req.id
    status, decided = _post(srv, f"/api/approvals/{req.id}/decision",
                            {"decision": "granted", "note": "looks right"})
    assert status == 200 and decided["decision"] == "granted"
    assert job.status == "approved"
    # double decision is a conflict
    with pytest.raises(urllib.error.HTTPError) as exc:
        _post(srv, f"/api/approvals/{req.id}/decision", {"decision": "denied"})
    assert exc.value.code == 409


def test_approval_bad_decision_and_unknown_id(server):
    ctx, srv = server
    with pytest.raises(urllib.error.HTTPError) as exc:
        _post(srv, "/api/approvals/abc/decision", {"decision": "maybe"})
    assert exc.value.code == 400
    with pytest.raises(urllib.error.HTTPError) as exc:
        _post(srv, "/api/approvals/nope/decision", {"decision": "granted"})
    assert exc.value.code == 404


def test_job_progress_endpoint(server):
    ctx, srv = server
    job = make_job(ctx, "book1", [12, 13], "tab-separated", fixtures.COLUMNS)
    estimate_cost(ctx, job, 400)
    req = batch.propose(ctx, job)
    ctx.approvals.decide(req.id, "granted")
    batch.execute(ctx, job)
    status, body = _get(srv, f"/api/jobs/{job.job_id}")
    progress = json.loads(body)
    assert progress["done_pages"] == 2 and progress["total_pages"] == 2
    with pytest.raises(urllib.error.HTTPError):
        _get(srv, "/api/jobs/unknown1")


def test_range_and_confirm_endpoints(server):
    ctx, srv = server
    with pytest.raises(urllib.error.HTTPError) as exc:
        _get(srv, "/api/sources/book1/range")
    assert exc.value.code == 404
    rangefinder.find_range(ctx, "book1", "Namensliste")
    status, body = _get(srv, "/api/sources/book1/range")
    data = json.loads(body)
    assert data["start_page_id"] == 12 and not data["verified_by_user"]
    status, confirmed = _post(srv, "/api/sources/book1/range/confirm", {})
    assert confirmed["verified_by_user"]


def test_sse_stream_delivers_events(server):
    ctx, srv = server
    got = []
    ready = threading.Event()

    def listen():
        req = urllib.request.Request(f"http://127.0.0.1:{srv.port}/api/events")
        with urllib.request.urlopen(req, timeout=10) as resp:
            ready.set()
            for raw in resp:
                line = raw.decode("utf-8").strip()
                if line.startswith("data: "):
                    got.append(json.loads(line[6:]))
                    return

    t = threading.Thread(target=listen, daemon=True)
    t.start()
    assert ready.wait(5)
    # subscription registration races the first event; push until delivered
    for _ in range(50):
        ctx.hub.push_state("book1", 9)
        t.join(timeout=0.1)
        if got:
            break
    assert got and got[0]["kind"] == "state"
    assert got[0]["payload"]["page_id"] == 9


def test_token_required_when_configured(small_ctx):
    ctx, _ = small_ctx
    with viewer.serve(ctx, port=0, token="s3cret") as srv:
        with pytest.raises(urllib.error.HTTPError) as exc:
            _get(srv, "/api/sources")
        assert exc.value.code == 403
        status, _body = _get(srv, "/api/sources", token="s3cret")
        assert status == 200


def test_non_loopback_bind_requires_token(small_ctx):
    ctx, _ = small_ctx
    with pytest.raises(ValueError):
        viewer.serve(ctx, port=0, bind="0.0.0.0")


def test_port_in_use(small_ctx):
    ctx, _ = small_ctx
    with viewer.serve(ctx, port=0) as srv:
        with pytest.raises(PortInUse):
            viewer.serve(ctx, port=srv.port)


def test_static_serving_and_containment(small_ctx, tmp_path):
    ctx, _ = small_ctx
    static = tmp_path / "dist"
    static.mkdir()
    (static / "index.html").write_text("<h1>console</h1>")
    secret = tmp_path / "secret.txt"
    secret.write_text("not served")
    with viewer.serve(ctx, port=0, static_dir=static) as srv:
        status, body = _get(srv, "/")
        assert b"console" in body
        for bad in ("/../secret.txt", "/..%2fsecret.txt"):
            with pytest.raises(urllib.error.HTTPError) as exc:
                _get(srv, bad)
            assert exc.value.code == 404
