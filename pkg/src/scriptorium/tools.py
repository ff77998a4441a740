"""Tool registry, schema validation, approval ledger, dispatch.

Tools are registered with a typed parameter schema (string, integer,
boolean, string-list) and dispatched by name. A tool marked
confirmation_required only executes when the approval ledger holds a
granted request whose digest matches the call's canonicalized arguments,
so a stale approval can never authorize a modified batch.
"""
from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable

from .errors import AlreadyDecided, DuplicateTool, SchemaViolation, UnknownApproval, UnknownTool

PARAM_TYPES = {
    "string": str,
    "integer": int,
    "boolean": bool,
    "string-list": list,
}


@dataclass(frozen=True)
class Param:
    name: str
    type: str  # one of PARAM_TYPES
    required: bool = True
    description: str = ""


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[Param, ...] = ()
    confirmation_required: bool = False


@dataclass(frozen=True)
class ToolCall:
    tool: str
    arguments: dict[str, Any]
    call_id: str = ""


@dataclass(frozen=True)
class ToolResult:
    status: str  # ok | error | pending_approval
    output: Any = None
    error: str = ""


def call_digest(tool: str, arguments: dict[str, Any]) -> str:
    canonical = json.dumps({"tool": tool, "arguments": arguments},
                           sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def validate_args(spec: ToolSpec, arguments: dict[str, Any]) -> None:
    known = {p.name: p for p in spec.params}
    for name in arguments:
        if name not in known:
            raise SchemaViolation(f"{spec.name}: unexpected argument {name!r}")
    for param in spec.params:
        if param.name not in arguments:
            if param.required:
                raise SchemaViolation(f"{spec.name}: missing argument {param.name!r}")
            continue
        value = arguments[param.name]
        expected = PARAM_TYPES[param.type]
        if expected is int and isinstance(value, bool):
            raise SchemaViolation(f"{spec.name}: {param.name} must be an integer")
        if not isinstance(value, expected):
            raise SchemaViolation(
                f"{spec.name}: {param.name} must be {param.type}, got {type(value).__name__}"
            )
        if param.type == "string-list" and not all(isinstance(v, str) for v in value):
            raise SchemaViolation(f"{spec.name}: {param.name} must contain only strings")


class ToolRegistry:
    """Name-indexed tool specs and handlers."""

    def __init__(self):
        self._tools: dict[str, tuple[ToolSpec, Callable[..., Any]]] = {}

    def register(self, spec: ToolSpec, handler: Callable[..., Any]) -> None:
        if spec.name in self._tools:
            raise DuplicateTool(f"tool {spec.name!r} already registered")
        self._tools[spec.name] = (spec, handler)

    def names(self) -> list[str]:
        return sorted(self._tools)

    def spec(self, name: str) -> ToolSpec:
        if name not in self._tools:
            raise UnknownTool(f"no tool named {name!r}")
        return self._tools[name][0]

    def handler(self, name: str) -> Callable[..., Any]:
        if name not in self._tools:
            raise UnknownTool(f"no tool named {name!r}")
        return self._tools[name][1]


# -- approvals -----------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class ApprovalRequest:
    id: str
    job_id: str
    summary: dict[str, Any]
    digest: str
    decision: str = "pending"  # pending | granted | denied
    note: str = ""
    requested_at: str = field(default_factory=_now)
    decided_at: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id, "job_id": self.job_id, "summary": self.summary,
            "digest": self.digest, "decision": self.decision, "note": self.note,
            "requested_at": self.requested_at, "decided_at": self.decided_at,
        }


class ApprovalLedger:
    """Thread-safe record of confirmation requests and their decisions."""

    def __init__(self):
        self._requests: dict[str, ApprovalRequest] = {}
        self._cond = threading.Condition()
        self._listeners: list[Callable[[ApprovalRequest], None]] = []

    def on_decision(self, listener: Callable[[ApprovalRequest], None]) -> None:
        self._listeners.append(listener)

    def request(self, job_id: str, summary: dict[str, Any], digest: str) -> ApprovalRequest:
        req = ApprovalRequest(id=uuid.uuid4().hex[:12], job_id=job_id,
                              summary=summary, digest=digest)
        with self._cond:
            self._requests[req.id] = req
        return req

    def get(self, approval_id: str) -> ApprovalRequest:
        with self._cond:
            if approval_id not in self._requests:
                raise UnknownApproval(f"no approval {approval_id!r}")
            return self._requests[approval_id]

    def all(self) -> list[ApprovalRequest]:
        with self._cond:
            return list(self._requests.values())

    def decide(self, approval_id: str, decision: str, note: str = "") -> ApprovalRequest:
        if decision not in ("granted", "denied"):
            raise ValueError(f"bad decision {decision!r}")
        with self._cond:
            req = self._requests.get(approval_id)
            if req is None:
                raise UnknownApproval(f"no approval {approval_id!r}")
            if req.decision != "pending":
                raise AlreadyDecided(f"approval {approval_id} already {req.decision}")
            req.decision = decision
            req.note = note
            req.decided_at = _now()
            self._cond.notify_all()
        for listener in list(self._listeners):
            listener(req)
        return req

    def granted_for(self, digest: str) -> ApprovalRequest | None:
        """Latest granted request matching a call digest, if any."""
        with self._cond:
            for req in reversed(list(self._requests.values())):
                if req.digest == digest and req.decision == "granted":
                    return req
        return None

    def wait_for_decision(self, approval_id: str, timeout: float | None = None) -> ApprovalRequest:
        deadline = None
        with self._cond:
            while True:
                req = self._requests.get(approval_id)
                if req is None:
                    raise UnknownApproval(f"no approval {approval_id!r}")
                if req.decision != "pending":
                    return req
                if not self._cond.wait(timeout=timeout):
                    return req
