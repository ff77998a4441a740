"""Batch extraction: cost estimate, approval gate, worker pool, validation.

A batch job walks draft -> pending_approval -> approved -> running ->
complete|failed. Nothing touches the provider until the approval ledger
holds a grant whose digest matches the job content, and that ordering is
auditable from the session log. Each page is processed by an independent
worker that writes only its own entries_NNNN.tsv, so results are
identical at any parallelism.
"""
from __future__ import annotations

import hashlib
import json
import math
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyRange, NoEstimate, NotApproved, NoTestRun, ProviderError
from .tools import ApprovalRequest
from .workspace import PageRef, Workspace

MANIFEST_FILE = "batch_manifest.json"


def entries_filename(page_id: int) -> str:
    return f"entries_{page_id:04d}.tsv"


# -- artifact stripping and TSV parsing ---------------------------------------

def strip_artifacts(text: str) -> tuple[str, list[str]]:
    """Remove code-fence wrappers and surrounding blank lines.

    Total function: returns the cleaned text plus the list of artifact
    kinds removed.
    """
    kinds: list[str] = []
    lines = text.split("\n")
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    if lines and lines[0].lstrip().startswith("```"):
        lines.pop(0)
        if lines and lines[-1].strip().startswith("```"):
            lines.pop()
        kinds.append("code_fence")
        while lines and not lines[0].strip():
            lines.pop(0)
        while lines and not lines[-1].strip():
            lines.pop()
    cleaned = "\n".join(lines)
    if cleaned:
        cleaned += "\n"
    return cleaned, kinds


def parse_tsv_text(text: str, expected_columns: int | None = None
                   ) -> tuple[list[list[str]], list[str]]:
    """Split TSV text into rows; mismatched widths are flagged, not dropped."""
    rows: list[list[str]] = []
    issues: list[str] = []
    for i, line in enumerate(text.split("\n")):
        if line == "" and i == len(text.split("\n")) - 1:
            continue
        if not line.strip():
            continue
        fields = line.split("\t")
        rows.append(fields)
        if expected_columns is not None and len(fields) != expected_columns:
            issues.append(f"row {len(rows) - 1}: {len(fields)} fields, "
                          f"expected {expected_columns}")
    return rows, issues


def sanitize_field(value: str) -> tuple[str, bool]:
    """Replace tabs/newlines inside a field value; TSV shape wins."""
    if "\t" in value or "\n" in value or "\r" in value:
        return " ".join(value.replace("\t", " ").replace("\r", " ").split("\n")), True
    return value, False


# -- job model -----------------------------------------------------------------

@dataclass
class CostEstimate:
    n_pages: int
    tokens_in_per_page: int
    tokens_out_per_page: int
    price_in: float
    price_out: float

    @property
    def total_cost(self) -> float:
        return self.n_pages * (
            self.tokens_in_per_page * self.price_in
            + self.tokens_out_per_page * self.price_out
        ) / 1000

    def to_dict(self) -> dict:
        return {
            "n_pages": self.n_pages,
            "tokens_in_per_page": self.tokens_in_per_page,
            "tokens_out_per_page": self.tokens_out_per_page,
            "total_cost": self.total_cost,
        }


STATUS_ORDER = ("draft", "pending_approval", "approved", "running", "complete", "failed")


@dataclass
class BatchJob:
    job_id: str
    source: str
    pages: list[int]
    prompt: str
    prompt_digest: str
    columns: list[str]
    route_provider: str = ""
    route_model: str = ""
    estimate: CostEstimate | None = None
    status: str = "draft"
    failure_reason: str = ""
    done_pages: int = 0
    failures: dict[int, str] = field(default_factory=dict)
    retries: dict[int, int] = field(default_factory=dict)
    artifacts: list[tuple[int, str]] = field(default_factory=list)
    sanitized: list[int] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def total_pages(self) -> int:
        return len(self.pages)

    digest_override: str | None = None

    @property
    def digest(self) -> str:
        if self.digest_override:
            return self.digest_override
        canonical = json.dumps({
            "source": self.source, "pages": self.pages,
            "prompt_digest": self.prompt_digest,
            "route": [self.route_provider, self.route_model],
        }, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def set_status(self, status: str) -> None:
        with self._lock:
            if STATUS_ORDER.index(status) < STATUS_ORDER.index(self.status) \
                    and not (status == "failed"):
                raise ValueError(f"illegal transition {self.status} -> {status}")
            self.status = status

    def progress(self) -> dict:
        with self._lock:
            return {
                "job_id": self.job_id, "status": self.status,
                "done_pages": self.done_pages, "total_pages": self.total_pages,
                "failures": {str(k): v for k, v in self.failures.items()},
            }


@dataclass
class ValidationReport:
    missing_pages: list[int] = field(default_factory=list)
    column_mismatches: list[tuple[int, int, int, int]] = field(default_factory=list)
    artifacts: list[tuple[int, str]] = field(default_factory=list)
    empty_pages: list[int] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.missing_pages or self.column_mismatches
                    or self.artifacts or self.empty_pages)

    def to_dict(self) -> dict:
        return {
            "missing_pages": self.missing_pages,
            "column_mismatches": [list(t) for t in self.column_mismatches],
            "artifacts": [list(t) for t in self.artifacts],
            "empty_pages": self.empty_pages,
        }


# -- operations ----------------------------------------------------------------

def make_job(ctx, source: str, pages: list[int], prompt: str,
             columns: list[str]) -> BatchJob:
    route = ctx.route("extraction")
    return BatchJob(
        job_id=uuid.uuid4().hex[:12], source=source, pages=sorted(pages),
        prompt=prompt,
        prompt_digest=hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
        columns=columns, route_provider=route.provider, route_model=route.model,
    )


def estimate_cost(ctx, job: BatchJob, test_output_tokens: int | None) -> CostEstimate:
    """Attach a cost estimate derived from the prompt size and a test run."""
    if test_output_tokens is None:
        raise NoTestRun("no test extraction available for this prompt")
    route = ctx.route("extraction")
    chars_per_token = ctx.config.get_int("batch.chars_per_token")
    safety = ctx.config.get_float("batch.output_safety_factor")
    estimate = CostEstimate(
        n_pages=len(job.pages),
        tokens_in_per_page=route.image_token_constant
        + math.ceil(len(job.prompt) / chars_per_token),
        tokens_out_per_page=math.ceil(test_output_tokens * safety),
        price_in=route.price_in, price_out=route.price_out,
    )
    job.estimate = estimate
    return estimate


def propose(ctx, job: BatchJob, justification: str = "") -> ApprovalRequest:
    """Move a draft job to pending_approval and record the request."""
    if not job.pages:
        raise EmptyRange("cannot propose a batch over zero pages")
    if job.estimate is None:
        raise NoEstimate("job has no cost estimate attached")
    job.set_status("pending_approval")
    summary = {
        "source": job.source,
        "pages": f"{job.pages[0]}-{job.pages[-1]} ({len(job.pages)} pages)",
        "prompt_digest": job.prompt_digest,
        "route": f"{job.route_provider}/{job.route_model}",
        "justification": justification,
        "estimate": job.estimate.to_dict(),
    }
    request = ctx.approvals.request(job_id=job.job_id, summary=summary,
                                    digest=job.digest)
    ctx.hub.register_job(job)
    ctx.log("tool", {"event": "approval_request", "approval_id": request.id,
                     "job_id": job.job_id, "digest": job.digest,
                     "summary": summary})
    ctx.hub.emit("approval", request.to_dict())

    def on_decision(req: ApprovalRequest) -> None:
        if req.id != request.id:
            return
        ctx.log("tool", {"event": "approval_decision", "approval_id": req.id,
                         "job_id": job.job_id, "decision": req.decision,
                         "digest": req.digest, "note": req.note})
        if req.decision == "granted":
            with job._lock:
                # a caller polling granted_for may already be running the job
                if job.status == "pending_approval":
                    job.status = "approved"
        else:
            with job._lock:
                job.status = "failed"
                job.failure_reason = "denied" + (f": {req.note}" if req.note else "")
        ctx.hub.emit("approval", req.to_dict())

    ctx.approvals.on_decision(on_decision)
    return request


def _valid_existing(path: Path, columns: list[str]) -> bool:
    if not path.is_file():
        return False
    try:
        rows, issues = parse_tsv_text(path.read_text(encoding="utf-8"),
                                      expected_columns=len(columns))
    except (OSError, UnicodeDecodeError):
        return False
    return bool(rows) and rows[0] == columns and not issues


@dataclass
class BatchResult:
    done_pages: int
    failed_pages: list[int]
    artifacts: list[tuple[int, str]]


def execute(ctx, job: BatchJob, parallelism: int | None = None) -> BatchResult:
    """Run the approved job across a bounded worker pool.

    Pages whose valid output file already exists are skipped; per-page
    failures are retried then recorded without aborting sibling pages.
    """
    granted = ctx.approvals.granted_for(job.digest)
    if granted is None:
        raise NotApproved(f"job {job.job_id} has no granted approval")
    if parallelism is None:
        parallelism = ctx.config.get_int("batch.parallelism")
    retries = ctx.config.get_int("batch.retries")
    backoff = ctx.config.get_float("batch.backoff_seconds") \
        if ctx.config.get("batch.backoff_seconds") else 0.0
    route = ctx.route("extraction")
    provider = ctx.provider_for(route)
    data_dir = ctx.ws.data_dir(job.source)
    data_dir.mkdir(parents=True, exist_ok=True)
    job.set_status("running")
    ctx.log("tool", {"event": "batch_start", "job_id": job.job_id,
                     "digest": job.digest, "approval_id": granted.id,
                     "pages": len(job.pages)})
    def worker(page_id: int) -> None:
        out = data_dir / entries_filename(page_id)
        if _valid_existing(out, job.columns):
            _bump(page_id)
            return
        last_error = ""
        for attempt in range(retries + 1):
            ctx.log("tool", {"event": "provider_call", "job_id": job.job_id,
                             "page_id": page_id, "attempt": attempt})
            try:
                completion = provider.complete(
                    [{"role": "user", "content": job.prompt}],
                    images=[ctx.ws.page_path(PageRef(job.source, page_id))],
                    model=route.model,
                )
            except ProviderError as exc:
                last_error = str(exc)
                if attempt < retries:
                    with job._lock:
                        job.retries[page_id] = job.retries.get(page_id, 0) + 1
                    if backoff:
                        time.sleep(backoff * (2 ** attempt))
                continue
            text, kinds = strip_artifacts(completion.text)
            rows, _ = parse_tsv_text(text)
            sanitized = False
            out_rows = []
            for row in rows:
                clean_row = []
                for value in row:
                    value, changed = sanitize_field(value)
                    sanitized = sanitized or changed
                    clean_row.append(value)
                out_rows.append(clean_row)
            body = "".join("\t".join(r) + "\n" for r in out_rows)
            out.write_text(body, encoding="utf-8")
            with job._lock:
                for kind in kinds:
                    job.artifacts.append((page_id, kind))
                if sanitized:
                    job.sanitized.append(page_id)
            _bump(page_id)
            return
        with job._lock:
            job.failures[page_id] = last_error
        ctx.hub.emit("progress", job.progress())

    def _bump(page_id: int) -> None:
        with job._lock:
            job.done_pages += 1
        ctx.hub.emit("progress", job.progress())

    if parallelism <= 1:
        for page in job.pages:
            worker(page)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(worker, job.pages))

    with job._lock:
        failed = sorted(job.failures)
        job.status = "failed" if failed else "complete"
    ctx.log("tool", {"event": "batch_done", "job_id": job.job_id,
                     "status": job.status, "failed_pages": failed})
    ctx.hub.emit("progress", job.progress())
    write_manifest(ctx.ws, job)
    return BatchResult(done_pages=job.done_pages, failed_pages=failed,
                       artifacts=list(job.artifacts))


def write_manifest(ws: Workspace, job: BatchJob) -> Path:
    path = ws.data_dir(job.source) / MANIFEST_FILE
    path.write_text(json.dumps({
        "job_id": job.job_id, "source": job.source, "pages": job.pages,
        "prompt_digest": job.prompt_digest, "columns": job.columns,
        "status": job.status, "failures": {str(k): v for k, v in job.failures.items()},
        "retries": {str(k): v for k, v in job.retries.items()},
        "artifacts": [list(a) for a in job.artifacts],
        "sanitized_pages": job.sanitized,
    }, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    return path


def validate(ctx, job: BatchJob) -> ValidationReport:
    """Check the finished batch for the known defect classes."""
    report = ValidationReport(artifacts=list(job.artifacts))
    data_dir = ctx.ws.data_dir(job.source)
    expected = len(job.columns)
    for page_id in job.pages:
        path = data_dir / entries_filename(page_id)
        if not path.is_file():
            report.missing_pages.append(page_id)
            continue
        text = path.read_text(encoding="utf-8")
        if "```" in text:
            report.artifacts.append((page_id, "residual_code_fence"))
        rows, _ = parse_tsv_text(text)
        data_rows = rows[1:] if rows and rows[0] == job.columns else rows
        if not data_rows:
            report.empty_pages.append(page_id)
        for i, row in enumerate(data_rows):
            if len(row) != expected:
                report.column_mismatches.append((page_id, i, expected, len(row)))
    return report


def quick_job(ctx, source: str, start: int, end: int, prompt: str) -> BatchJob:
    """Job for the ask_pages_batch tool; digest matches the tool call.

    Dispatch has already enforced the confirmation gate on the tool-call
    digest, so the job is granted under that same digest here.
    """
    from .tools import call_digest

    columns = [c.strip() for c in str(ctx.config.get("prompt.columns", "")).split(",")
               if c.strip()]
    job = make_job(ctx, source, list(range(start, end + 1)), prompt,
                   columns or ["text"])
    arguments = {"source": source, "start": start, "end": end, "prompt": prompt}
    job.digest_override = call_digest("ask_pages_batch", arguments)
    default_tokens = int(ctx.config.get("batch.default_output_tokens", 800))
    estimate_cost(ctx, job, default_tokens)
    job.set_status("pending_approval")
    job.set_status("approved")
    ctx.hub.register_job(job)
    return job
