"""Shared viewer state and event fan-out.

The hub is the in-process meeting point between the engine (which pushes
the current page, approval requests, and batch progress) and the HTTP
viewer service (which serves that state and streams events to the
browser). State updates are atomic; every subscriber gets every event in
order via its own queue.
"""
from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any


@dataclass(frozen=True)
class ViewerState:
    source: str | None = None
    page_id: int | None = None
    attachment: list[list[str]] | None = None
    updated_at: str = ""

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"source": self.source, "page_id": self.page_id,
                               "updated_at": self.updated_at}
        if self.attachment is not None:
            out["attachment"] = self.attachment
        return out


class ViewerHub:
    def __init__(self):
        self._lock = threading.Lock()
        self._state = ViewerState()
        self._subscribers: list[queue.Queue] = []
        self.jobs: dict[str, Any] = {}  # job_id -> BatchJob

    # -- state ----------------------------------------------------------------

    @property
    def state(self) -> ViewerState:
        with self._lock:
            return self._state

    def push_state(self, source: str, page_id: int,
                   attachment: list[list[str]] | None = None) -> None:
        state = ViewerState(
            source=source, page_id=page_id, attachment=attachment,
            updated_at=datetime.now(timezone.utc).isoformat(timespec="milliseconds"),
        )
        with self._lock:
            self._state = state
        self.emit("state", state.to_dict())

    def clear_state(self) -> None:
        with self._lock:
            self._state = ViewerState()
        self.emit("state", self._state.to_dict())

    # -- events ---------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def emit(self, kind: str, payload: dict) -> None:
        event = {"kind": kind, "payload": payload}
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(event)

    # -- jobs -----------------------------------------------------------------

    def register_job(self, job) -> None:
        with self._lock:
            self.jobs[job.job_id] = job

    def job(self, job_id: str):
        with self._lock:
            return self.jobs.get(job_id)
