"""Agent core: engine context, built-in tool handlers, and the turn loop.

The EngineContext bundles everything a running agent needs: the
workspace, gateway config, tool registry, approval ledger, viewer hub,
the active session tree, and the per-source provider cache. Tool
dispatch validates arguments against the tool schema, enforces the
confirmation gate, funnels every write through the workspace guard, and
records an audit entry in the session for each call and result.
"""
from __future__ import annotations

import json
import shlex
import subprocess
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import fixtures, sessions, workspace as ws_mod
from .config import GatewayConfig, ModelRoute
from .errors import (
    DeniedWrite,
    EngineError,
    ProviderError,
    SchemaViolation,
    ToolLoopLimit,
    UnknownConversation,
    UnknownPage,
)
from .hub import ViewerHub
from .providers import Completion, MockVlmProvider, Provider, make_provider
from .sessions import SessionTree
from .tools import (
    ApprovalLedger,
    Param,
    ToolCall,
    ToolRegistry,
    ToolResult,
    ToolSpec,
    call_digest,
    validate_args,
)
from .workspace import PageRef, Workspace, guard_write


@dataclass
class AnalysisConversation:
    conversation_id: str
    page: PageRef
    turns: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class EngineContext:
    ws: Workspace
    config: GatewayConfig
    session: SessionTree
    registry: ToolRegistry = field(default_factory=ToolRegistry)
    approvals: ApprovalLedger = field(default_factory=ApprovalLedger)
    hub: ViewerHub = field(default_factory=ViewerHub)
    head: str | None = None
    current_source: str | None = None
    conversations: dict[str, AnalysisConversation] = field(default_factory=dict)
    providers: dict[Any, Provider] = field(default_factory=dict)
    _log_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def create(cls, ws: Workspace, source: str | None = None) -> "EngineContext":
        ctx = cls(
            ws=ws,
            config=ws.config,
            session=sessions.new_session(ws.root / "sessions"),
            current_source=source,
        )
        register_builtin_tools(ctx)
        return ctx

    # -- session audit trail --------------------------------------------------

    def log(self, role: str, content: Any) -> str:
        with self._log_lock:
            self.head = self.session.append(self.head, role, content)
            return self.head

    # -- providers ------------------------------------------------------------

    def set_provider(self, name: str, provider: Provider) -> None:
        self.providers[name] = provider

    def provider_for(self, route: ModelRoute) -> Provider:
        if route.provider in self.providers:
            return self.providers[route.provider]
        if route.provider == "mock":
            key = ("mock", self.current_source)
            if key not in self.providers:
                path = fixtures.oracle_path(self.ws, self.current_source or "")
                if not path.is_file():
                    raise ProviderError(
                        f"no mock oracle for source {self.current_source!r} at {path}"
                    )
                self.providers[key] = MockVlmProvider.from_file(path)
            return self.providers[key]
        provider = make_provider(route.provider, self.config)
        self.providers[route.provider] = provider
        return provider

    def route(self, task_kind: str) -> ModelRoute:
        return self.config.route(task_kind)

    # -- page analysis --------------------------------------------------------

    def _require_page(self, source: str, page_id: int) -> PageRef:
        page = PageRef(source, page_id)
        if not self.ws.has_page(page):
            raise UnknownPage(f"no page {page_id} in source {source!r}")
        return page

    def analyze_page(self, page: PageRef, prompt: str,
                     route: ModelRoute | None = None) -> AnalysisConversation:
        """Send one page image plus a prompt to the extraction model."""
        self._require_page(page.source, page.page_id)
        route = route or self.route("extraction")
        provider = self.provider_for(route)
        completion = provider.complete(
            [{"role": "user", "content": prompt}],
            images=[self.ws.page_path(page)], model=route.model,
        )
        conv = AnalysisConversation(uuid.uuid4().hex[:12], page)
        conv.turns.append((prompt, completion.text))
        self.conversations[conv.conversation_id] = conv
        self.hub.push_state(page.source, page.page_id)
        return conv

    def follow_up_question(self, conversation_id: str, question: str) -> AnalysisConversation:
        conv = self.conversations.get(conversation_id)
        if conv is None:
            raise UnknownConversation(f"no conversation {conversation_id!r}")
        route = self.route("extraction")
        provider = self.provider_for(route)
        messages = []
        for q, a in conv.turns:
            messages.append({"role": "user", "content": q})
            messages.append({"role": "assistant", "content": a})
        messages.append({"role": "user", "content": question})
        completion = provider.complete(
            messages, images=[self.ws.page_path(conv.page)], model=route.model,
        )
        conv.turns.append((question, completion.text))
        return conv

    def show_page(self, page: PageRef) -> None:
        """Display a page in the viewer; no model call involved."""
        self._require_page(page.source, page.page_id)
        self.hub.push_state(page.source, page.page_id)

    def change_source(self, name: str) -> None:
        self.ws.source(name)  # raises UnknownSource
        self.current_source = name
        self.conversations.clear()  # page conversations are per-source
        self.hub.clear_state()


# -- dispatch ------------------------------------------------------------------

def dispatch(ctx: EngineContext, call: ToolCall) -> ToolResult:
    """Validate, gate, execute, and audit one tool call."""
    spec = ctx.registry.spec(call.tool)
    validate_args(spec, call.arguments)
    ctx.log("tool", {"event": "tool_call", "tool": call.tool,
                     "arguments": call.arguments, "call_id": call.call_id})
    if spec.confirmation_required:
        digest = call_digest(call.tool, call.arguments)
        granted = ctx.approvals.granted_for(digest)
        if granted is None:
            pending = next(
                (r for r in ctx.approvals.all()
                 if r.digest == digest and r.decision == "pending"), None)
            if pending is None:
                pending = ctx.approvals.request(
                    job_id=call.call_id or digest[:12],
                    summary={"tool": call.tool, "arguments": call.arguments},
                    digest=digest,
                )
                ctx.hub.emit("approval", pending.to_dict())
            result = ToolResult(status="pending_approval",
                                output={"approval_id": pending.id})
            ctx.log("tool", {"event": "tool_result", "tool": call.tool,
                             "call_id": call.call_id, "status": result.status,
                             "approval_id": pending.id})
            return result
    handler = ctx.registry.handler(call.tool)
    try:
        output = handler(ctx, **call.arguments)
        result = ToolResult(status="ok", output=output)
    except EngineError as exc:
        result = ToolResult(status="error", error=f"{type(exc).__name__}: {exc}")
    ctx.log("tool", {"event": "tool_result", "tool": call.tool,
                     "call_id": call.call_id, "status": result.status,
                     "output": _compact(result.output), "error": result.error})
    return result


def _compact(value: Any, limit: int = 2000) -> Any:
    if isinstance(value, str) and len(value) > limit:
        return value[:limit] + f"... [{len(value)} chars]"
    return value


# -- built-in tool handlers ----------------------------------------------------

def _resolve_read(ctx: EngineContext, path: str) -> Path:
    p = Path(path)
    if not p.is_absolute():
        p = ctx.ws.root / p
    resolved = p.resolve()
    try:
        resolved.relative_to(ctx.ws.root)
    except ValueError:
        raise DeniedWrite(f"{path}: outside the workspace")
    return resolved


def _resolve_write(ctx: EngineContext, path: str) -> Path:
    decision = guard_write(ctx.ws, path)
    if not decision:
        raise DeniedWrite(f"{path}: {decision.reason}")
    p = Path(path)
    return p if p.is_absolute() else ctx.ws.root / p


def _tool_read(ctx, path: str) -> str:
    return _resolve_read(ctx, path).read_text(encoding="utf-8")


def _tool_write(ctx, path: str, content: str) -> str:
    target = _resolve_write(ctx, path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(content, encoding="utf-8")
    return f"wrote {len(content)} chars to {path}"


def _tool_edit(ctx, path: str, old: str, new: str) -> str:
    target = _resolve_write(ctx, path)
    text = target.read_text(encoding="utf-8")
    if old not in text:
        raise SchemaViolation(f"edit: text to replace not found in {path}")
    target.write_text(text.replace(old, new, 1), encoding="utf-8")
    return f"edited {path}"


def _tool_bash(ctx, command: str) -> str:
    allowed = {c.strip() for c in str(ctx.config.get("bash.allow", "-")).split(",") if c.strip() != "-"}
    argv = shlex.split(command)
    if not argv or argv[0] not in allowed:
        raise DeniedWrite(f"bash: command {argv[0] if argv else ''!r} not on the allow-list")
    proc = subprocess.run(argv, cwd=ctx.ws.root, capture_output=True, text=True, timeout=60)
    return proc.stdout + (proc.stderr and f"\n[stderr]\n{proc.stderr}" or "")


def _iter_text_files(root: Path):
    for p in sorted(root.rglob("*")):
        if p.is_file() and "sources" not in p.relative_to(root).parts[:1] \
                and p.suffix not in (".png", ".jpg"):
            yield p


def _tool_grep(ctx, pattern: str, path: str = "") -> str:
    import re as _re
    base = _resolve_read(ctx, path) if path else ctx.ws.root
    rx = _re.compile(pattern)
    hits = []
    for p in _iter_text_files(base) if base.is_dir() else [base]:
        try:
            for i, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
                if rx.search(line):
                    hits.append(f"{p.relative_to(ctx.ws.root)}:{i}:{line}")
        except (UnicodeDecodeError, OSError):
            continue
    return "\n".join(hits[:200])


def _tool_find(ctx, name: str) -> str:
    hits = [str(p.relative_to(ctx.ws.root))
            for p in sorted(ctx.ws.root.rglob(name)) if p.is_file()]
    return "\n".join(hits[:500])


def _tool_ls(ctx, path: str = "") -> str:
    base = _resolve_read(ctx, path) if path else ctx.ws.root
    if base.is_file():
        return base.name
    entries = sorted(base.iterdir(), key=lambda p: p.name)
    return "\n".join(p.name + ("/" if p.is_dir() else "") for p in entries)


def _need_source(ctx, source: str = "") -> str:
    name = source or ctx.current_source
    if not name:
        raise UnknownPage("no source selected; pass source or use change_source")
    return name


def _tool_analyze_page(ctx, page_id: int, prompt: str, source: str = "") -> dict:
    name = _need_source(ctx, source)
    conv = ctx.analyze_page(PageRef(name, page_id), prompt)
    return {"conversation_id": conv.conversation_id, "answer": conv.turns[-1][1]}


def _tool_follow_up(ctx, conversation_id: str, question: str) -> dict:
    conv = ctx.follow_up_question(conversation_id, question)
    return {"conversation_id": conv.conversation_id, "answer": conv.turns[-1][1]}


def _tool_show_page(ctx, page_id: int, source: str = "") -> str:
    name = _need_source(ctx, source)
    ctx.show_page(PageRef(name, page_id))
    return f"viewer showing {name} page {page_id}"


def _tool_list_pages(ctx, source: str = "") -> list[int]:
    name = _need_source(ctx, source)
    return [p.page_id for p in ws_mod.list_pages(ctx.ws, name)]


def _tool_ask_pages_batch(ctx, start: int, end: int, prompt: str, source: str = "") -> dict:
    from . import batch  # deferred: batch builds on this module's context

    name = _need_source(ctx, source)
    job = batch.quick_job(ctx, name, start, end, prompt)
    # the approval was granted against the exact tool-call arguments
    arguments = {"start": start, "end": end, "prompt": prompt}
    if source:
        arguments["source"] = source
    job.digest_override = call_digest("ask_pages_batch", arguments)
    result = batch.execute(ctx, job)
    return {"job_id": job.job_id, "status": job.status, "pages": result.done_pages}


def _tool_change_source(ctx, source: str) -> str:
    ctx.change_source(source)
    return f"current source is now {source}"


BUILTIN_TOOLS: list[tuple[ToolSpec, Any]] = [
    (ToolSpec("read", "Read a file from the workspace",
              (Param("path", "string"),)), _tool_read),
    (ToolSpec("write", "Write a file (sources/ is read-only)",
              (Param("path", "string"), Param("content", "string"))), _tool_write),
    (ToolSpec("edit", "Replace text in a file once",
              (Param("path", "string"), Param("old", "string"),
               Param("new", "string"))), _tool_edit),
    (ToolSpec("bash", "Run an allow-listed shell command",
              (Param("command", "string"),)), _tool_bash),
    (ToolSpec("grep", "Search text files for a pattern",
              (Param("pattern", "string"), Param("path", "string", required=False))),
     _tool_grep),
    (ToolSpec("find", "Find files by name glob",
              (Param("name", "string"),)), _tool_find),
    (ToolSpec("ls", "List a directory",
              (Param("path", "string", required=False),)), _tool_ls),
    (ToolSpec("analyze_page", "Send a page image to the extraction model",
              (Param("page_id", "integer"), Param("prompt", "string"),
               Param("source", "string", required=False))), _tool_analyze_page),
    (ToolSpec("follow_up_question", "Continue a page analysis conversation",
              (Param("conversation_id", "string"), Param("question", "string"))),
     _tool_follow_up),
    (ToolSpec("show_page", "Display a page in the viewer without analysis",
              (Param("page_id", "integer"), Param("source", "string", required=False))),
     _tool_show_page),
    (ToolSpec("list_pages", "Enumerate pages in the current source",
              (Param("source", "string", required=False),)), _tool_list_pages),
    (ToolSpec("ask_pages_batch", "Process many pages in parallel",
              (Param("start", "integer"), Param("end", "integer"),
               Param("prompt", "string"), Param("source", "string", required=False)),
              confirmation_required=True), _tool_ask_pages_batch),
    (ToolSpec("change_source", "Switch between sources in the workspace",
              (Param("source", "string"),)), _tool_change_source),
]


def register_builtin_tools(ctx: EngineContext) -> None:
    for spec, handler in BUILTIN_TOOLS:
        ctx.registry.register(spec, handler)


# -- turn loop -----------------------------------------------------------------

@dataclass(frozen=True)
class TurnResult:
    head: str
    status: str  # complete | pending_approval
    text: str = ""
    pending_approval_id: str | None = None


def _messages_from_lineage(ctx: EngineContext) -> list[dict]:
    messages = []
    if ctx.head is None:
        return messages
    for entry in ctx.session.lineage(ctx.head):
        role = entry.role
        content = entry.content
        if not isinstance(content, str):
            content = json.dumps(content, ensure_ascii=False)
        if role in ("system", "summary"):
            messages.append({"role": "system", "content": content})
        elif role == "tool":
            messages.append({"role": "user", "content": f"[tool] {content}"})
        else:
            messages.append({"role": role, "content": content})
    return messages


def run_turn(ctx: EngineContext, instruction: str,
             max_rounds: int | None = None) -> TurnResult:
    """Drive the orchestration model until it answers or hits the round cap.

    Each round the model either emits tool calls (dispatched in order,
    results fed back) or final text. A PendingApproval result pauses the
    turn; calling run_turn again after the grant resumes from the session.
    """
    if max_rounds is None:
        max_rounds = ctx.config.get_int("agent.max_tool_rounds")
    route = ctx.route("orchestration")
    provider = ctx.provider_for(route)
    ctx.log("user", instruction)
    for _ in range(max_rounds):
        completion = provider.complete(_messages_from_lineage(ctx), model=route.model)
        if not completion.tool_calls:
            ctx.log("assistant", completion.text)
            return TurnResult(head=ctx.head, status="complete", text=completion.text)
        for raw in completion.tool_calls:
            call = ToolCall(tool=raw["tool"], arguments=raw.get("arguments", {}),
                            call_id=raw.get("call_id", uuid.uuid4().hex[:8]))
            result = dispatch(ctx, call)
            if result.status == "pending_approval":
                return TurnResult(
                    head=ctx.head, status="pending_approval",
                    pending_approval_id=result.output["approval_id"],
                )
    raise ToolLoopLimit(f"turn exceeded {max_rounds} tool rounds")
