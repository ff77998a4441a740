from __future__ import annotations

import threading

import pytest

from scriptorium.errors import (
    AlreadyDecided,
    DuplicateTool,
    SchemaViolation,
    UnknownApproval,
    UnknownTool,
)
from scriptorium.tools import (
    ApprovalLedger,
    Param,
    ToolRegistry,
    ToolSpec,
    call_digest,
    validate_args,
)

SPEC = ToolSpec(
    name="demo",
    description="example tool",
    params=(
        Param("path", "string", required=True, description="file path"),
        Param("count", "integer", required=False, description="how many"),
        Param("force", "boolean", required=False, description="overwrite"),
        Param("tags", "string-list", required=False, description="labels"),
    ),
)


def test_validate_args_accepts_well_formed():
    validate_args(SPEC, {"path": "a.txt", "count": 3, "force": True, "tags": ["x"]})
    validate_args(SPEC, {"path": "a.txt"})


@pytest.mark.parametrize("args", [
    {},  # missing required
    {"path": "a", "extra": 1},  # unknown key
    {"path": 7},  # wrong type
    {"path": "a", "count": "three"},
    {"path": "a", "count": True},  # bool is not an integer here
    {"path": "a", "tags": ["x", 3]},
])
def test_validate_args_rejects(args):
    with pytest.raises(SchemaViolation):
        validate_args(SPEC, args)


def test_call_digest_is_order_insensitive_and_value_sensitive():
    a = call_digest("demo", {"path": "a", "count": 1})
    b = call_digest("demo", {"count": 1, "path": "a"})
    c = call_digest("demo", {"path": "a", "count": 2})
    assert a == b
    assert a != c
    assert a != call_digest("other", {"path": "a", "count": 1})


def test_registry_rejects_duplicates_and_unknowns():
    reg = ToolRegistry()
    reg.register(SPEC, lambda ctx, **kw: None)
    with pytest.raises(DuplicateTool):
        reg.register(SPEC, lambda ctx, **kw: None)
    with pytest.raises(UnknownTool):
        reg.spec("ghost")
    assert "demo" in reg.names()


def test_approval_lifecycle():
    ledger = ApprovalLedger()
    req = ledger.request(job_id="job1", summary={"pages": 3}, digest="abc")
    assert req.decision == "pending"
    assert not ledger.granted_for("abc")
    ledger.decide(req.id, "granted", note="ok")
    assert ledger.get(req.id).decision == "granted"
    assert ledger.granted_for("abc")


def test_denied_approval_does_not_grant():
    ledger = ApprovalLedger()
    req = ledger.request(job_id="job1", summary={}, digest="abc")
    ledger.decide(req.id, "denied")
    assert not ledger.granted_for("abc")


def test_double_decision_rejected():
    ledger = ApprovalLedger()
    req = ledger.request(job_id="job1", summary={}, digest="abc")
    ledger.decide(req.id, "granted")
    with pytest.raises(AlreadyDecided):
        ledger.decide(req.id, "denied")


def test_unknown_approval():
    ledger = ApprovalLedger()
    with pytest.raises(UnknownApproval):
        ledger.decide("nope", "granted")


def test_digest_match_is_exact():
    ledger = ApprovalLedger()
    req = ledger.request(job_id="job1", summary={}, digest="abc")
    ledger.decide(req.id, "granted")
    assert not ledger.granted_for("abd")


def test_wait_for_decision_blocks_until_decided():
    ledger = ApprovalLedger()
    req = ledger.request(job_id="job1", summary={}, digest="abc")

    def decide_later():
        ledger.decide(req.id, "granted")

    t = threading.Timer(0.05, decide_later)
    t.start()
    decided = ledger.wait_for_decision(req.id, timeout=5)
    t.join()
    assert decided.decision == "granted"


def test_decision_listeners_fire():
    ledger = ApprovalLedger()
    seen = []
    ledger.on_decision(seen.append)
    req = ledger.request(job_id="job1", summary={}, digest="abc")
    ledger.decide(req.id, "denied")
    assert [r.id for r in seen] == [req.id]
    assert seen[0].decision == "denied"
