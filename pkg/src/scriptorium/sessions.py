"""Branching JSONL session trees: append, fork, resume, compact.

Each session is one append-only JSONL file. A line is a JSON object with
keys `id`, `parent` (null for a root), `role`, `content`, `ts`. Forks
share their prefix by reference (parent pointers), never by copying, and
compaction branches rather than rewriting, so every historical line stays
byte-immutable.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from .errors import CorruptLine, DanglingParent, NothingToCompact, PathNotWritable, UnknownParent

ROLES = ("user", "assistant", "tool", "system", "summary")


def _new_id() -> str:
    return uuid.uuid4().hex


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass(frozen=True)
class SessionEntry:
    id: str
    parent: str | None
    role: str
    content: Any
    ts: str

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "parent": self.parent, "role": self.role,
             "content": self.content, "ts": self.ts},
            ensure_ascii=False,
        )


@dataclass
class SessionTree:
    path: Path
    entries: dict[str, SessionEntry] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def heads(self) -> set[str]:
        parents = {e.parent for e in self.entries.values() if e.parent}
        return {eid for eid in self.entries if eid not in parents}

    @property
    def root(self) -> str | None:
        for eid in self.order:
            if self.entries[eid].parent is None:
                return eid
        return None

    def lineage(self, entry_id: str) -> list[SessionEntry]:
        """Walk parents back to a root; returned oldest-first."""
        chain = []
        cursor: str | None = entry_id
        while cursor is not None:
            entry = self.entries.get(cursor)
            if entry is None:
                raise UnknownParent(f"no entry {cursor!r}")
            chain.append(entry)
            cursor = entry.parent
        chain.reverse()
        return chain

    # -- mutation -------------------------------------------------------------

    def append(self, parent: str | None, role: str, content: Any) -> str:
        if parent is not None and parent not in self.entries:
            raise UnknownParent(f"no entry {parent!r}")
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        entry = SessionEntry(_new_id(), parent, role, content, _now())
        self._write(entry)
        return entry.id

    def fork(self, at: str) -> str:
        """Start a sibling branch at an existing entry; nothing is copied."""
        if at not in self.entries:
            raise UnknownParent(f"no entry {at!r}")
        return at

    def compact(self, head: str, keep_last: int, summarizer: Callable[[str], str]) -> str:
        """Branch off a summary of the old prefix plus the last keep_last entries.

        The original branch is untouched; the new branch starts at a fresh
        summary root, so a compacted file can hold more than one root line.
        """
        chain = self.lineage(head)
        if len(chain) <= keep_last + 1:
            raise NothingToCompact(
                f"lineage of {len(chain)} entries with keep_last={keep_last}"
            )
        dropped, kept = chain[:-keep_last], chain[-keep_last:]
        serialized = "\n".join(e.to_json() for e in dropped)
        summary = SessionEntry(_new_id(), None, "summary", summarizer(serialized), _now())
        self._write(summary)
        cursor = summary.id
        for entry in kept:
            copy = SessionEntry(_new_id(), cursor, entry.role, entry.content, entry.ts)
            self._write(copy)
            cursor = copy.id
        return cursor

    def _write(self, entry: SessionEntry) -> None:
        with self._lock:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(entry.to_json() + "\n")
            except OSError as exc:
                raise PathNotWritable(f"cannot append to {self.path}: {exc}") from exc
            self.entries[entry.id] = entry
            self.order.append(entry.id)


def new_session(sessions_dir: str | Path) -> SessionTree:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    name = f"{stamp}-{uuid.uuid4().hex[:8]}.jsonl"
    return SessionTree(path=Path(sessions_dir) / name)


def resume(path: str | Path) -> SessionTree:
    """Rebuild the in-memory tree from a JSONL file."""
    path = Path(path)
    tree = SessionTree(path=path)
    if not path.is_file():
        return tree
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorruptLine(lineno, str(exc)) from exc
            if not isinstance(obj, dict) or "id" not in obj or "role" not in obj:
                raise CorruptLine(lineno, "missing id/role")
            entry = SessionEntry(
                id=obj["id"], parent=obj.get("parent"), role=obj["role"],
                content=obj.get("content"), ts=obj.get("ts", ""),
            )
            if entry.id in tree.entries:
                raise CorruptLine(lineno, f"duplicate id {entry.id!r}")
            if entry.parent is not None and entry.parent not in tree.entries:
                raise DanglingParent(entry.parent)
            tree.entries[entry.id] = entry
            tree.order.append(entry.id)
    return tree


def truncation_summarizer(limit: int = 400) -> Callable[[str], str]:
    """Deterministic stand-in summarizer used in tests and mock runs."""
    def summarize(serialized: str) -> str:
        lines = serialized.splitlines()
        head = serialized[:limit]
        return f"[compacted {len(lines)} entries] {head}"
    return summarize
