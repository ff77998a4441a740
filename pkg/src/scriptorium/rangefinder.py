"""Locating the target section's page range.

The section is found either from a table-of-contents page (scanning a
window of front and back pages) or, failing that, by two monotone binary
searches over per-page BEFORE/INSIDE/AFTER classifications. Printed page
numbers rarely match tool page ids, so the printed offset is resolved by
probing, and pages adjacent to the range are scanned for supplements.

The page oracle is a plain callable (page_id, prompt) -> reply text; in
production it is analyze_page with a fixed prompt, in tests a fixture
table.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from . import workspace as ws_mod
from .errors import NonMonotoneOracle, OracleUnparseable, RangeNotFound, UnnumberedPage
from .providers import (
    TAG_CLASSIFY,
    TAG_PAGE_NUMBER,
    TAG_SUPPLEMENT,
    TAG_TOC_EXTRACT,
    TAG_TOC_SCAN,
)
from .workspace import PageRef, Workspace

Oracle = Callable[[int, str], str]

RANGES_FILE = "name_ranges.json"
REPAIR_RADIUS = 5


class PagePosition(Enum):
    BEFORE = "BEFORE"
    INSIDE = "INSIDE"
    AFTER = "AFTER"


@dataclass
class RangeResult:
    section: str
    start_page_id: int
    end_page_id: int
    printed_page_offset: int
    method: str  # "toc" | "binary_search"
    supplements: list[tuple[int, int, str]] = field(default_factory=list)
    verified_by_user: bool = False

    def to_dict(self) -> dict:
        return {
            "section": self.section,
            "start_page_id": self.start_page_id,
            "end_page_id": self.end_page_id,
            "printed_page_offset": self.printed_page_offset,
            "method": self.method,
            "supplements": [
                {"start": s, "end": e, "label": label}
                for s, e, label in self.supplements
            ],
            "verified_by_user": self.verified_by_user,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RangeResult":
        return cls(
            section=data["section"],
            start_page_id=data["start_page_id"],
            end_page_id=data["end_page_id"],
            printed_page_offset=data["printed_page_offset"],
            method=data["method"],
            supplements=[(s["start"], s["end"], s["label"])
                         for s in data.get("supplements", [])],
            verified_by_user=data.get("verified_by_user", False),
        )


def ranges_path(ws: Workspace, source: str) -> Path:
    return ws.data_dir(source) / RANGES_FILE


def load_range(ws: Workspace, source: str) -> RangeResult:
    return RangeResult.from_dict(
        json.loads(ranges_path(ws, source).read_text(encoding="utf-8"))
    )


def context_oracle(ctx, source: str) -> Oracle:
    """Page oracle backed by the engine's analyze_page."""
    def ask(page_id: int, prompt: str) -> str:
        conv = ctx.analyze_page(PageRef(source, page_id), prompt)
        return conv.turns[-1][1]
    return ask


# -- classification ------------------------------------------------------------

_POSITION_RE = re.compile(r"\b(BEFORE|INSIDE|AFTER)\b")


def classify_page(page_id: int, section: str, oracle: Oracle) -> PagePosition:
    """Ask whether a page lies before, inside, or after the section.

    One clarifying follow-up is allowed before giving up on the reply.
    """
    prompt = (
        f"{TAG_CLASSIFY} section={section}\n"
        f"Relative to the section '{section}', is this page BEFORE it, "
        "INSIDE it, or AFTER it? Answer with exactly one word."
    )
    for attempt in range(2):
        reply = oracle(page_id, prompt)
        m = _POSITION_RE.search(reply.upper())
        if m:
            return PagePosition(m.group(1))
        prompt = (
            f"{TAG_CLASSIFY} section={section}\n"
            "Answer with exactly one of: BEFORE, INSIDE, AFTER."
        )
    raise OracleUnparseable(f"page {page_id}: reply maps to no position: {reply!r}")


Classify = Callable[[int], PagePosition]


def _first_true(lo: int, hi: int, pred: Callable[[int], bool]) -> int:
    """Smallest p in [lo, hi] with pred(p), or hi+1; pred must be monotone."""
    result = hi + 1
    while lo <= hi:
        mid = (lo + hi) // 2
        if pred(mid):
            result = mid
            hi = mid - 1
        else:
            lo = mid + 1
    return result


def binary_search_range(n_pages: int, classify: Classify) -> tuple[int, int]:
    """Find (first INSIDE, last INSIDE) of a monotone page classification.

    Uses two monotone-predicate binary searches plus boundary
    verification; classifications are memoized so the oracle is consulted
    at most 2*ceil(log2 n) + 4 times. A failed verification triggers a
    local linear repair before giving up as non-monotone.
    """
    memo: dict[int, PagePosition] = {}

    def c(p: int) -> PagePosition:
        if p not in memo:
            memo[p] = classify(p)
        return memo[p]

    start = _first_true(1, n_pages, lambda p: c(p) != PagePosition.BEFORE)
    if start > n_pages or c(start) == PagePosition.AFTER:
        raise RangeNotFound("no page classified INSIDE")
    first_after = _first_true(start, n_pages, lambda p: c(p) == PagePosition.AFTER)
    end = first_after - 1

    ok = (start == 1 or c(start - 1) == PagePosition.BEFORE) and \
         (end == n_pages or c(end + 1) == PagePosition.AFTER) and \
         c(start) == PagePosition.INSIDE and c(end) == PagePosition.INSIDE
    if ok:
        return start, end
    return _linear_repair(n_pages, c, start, end)


def _linear_repair(n_pages: int, c: Classify, start: int, end: int) -> tuple[int, int]:
    """Re-derive both edges by scanning +-REPAIR_RADIUS around each."""
    lo = max(1, start - REPAIR_RADIUS)
    hi = min(n_pages, start + REPAIR_RADIUS)
    new_start = next((p for p in range(lo, hi + 1) if c(p) == PagePosition.INSIDE), None)
    lo = max(1, end - REPAIR_RADIUS)
    hi = min(n_pages, end + REPAIR_RADIUS)
    new_end = next((p for p in range(hi, lo - 1, -1) if c(p) == PagePosition.INSIDE), None)
    if new_start is None or new_end is None or new_start > new_end:
        raise NonMonotoneOracle("boundary verification failed beyond repair radius")
    if (new_start > 1 and c(new_start - 1) != PagePosition.BEFORE) or \
       (new_end < n_pages and c(new_end + 1) != PagePosition.AFTER):
        raise NonMonotoneOracle("boundaries remain inconsistent after linear repair")
    return new_start, new_end


# -- table of contents ---------------------------------------------------------

_TOC_RE = re.compile(r"START=(\d+)(?:\s+END=(\d+))?")


def toc_lookup(
    n_pages: int,
    section: str,
    oracle: Oracle,
    front_window: int = 15,
    back_window: int = 10,
) -> tuple[int, int | None] | None:
    """Printed (start, end?) from a contents page, or None when absent."""
    candidates = list(range(1, min(front_window, n_pages) + 1))
    for p in range(max(1, n_pages - back_window + 1), n_pages + 1):
        if p not in candidates:
            candidates.append(p)
    scan_prompt = f"{TAG_TOC_SCAN}\nIs this page a table of contents? Answer TOC or NO."
    for page in candidates:
        reply = oracle(page, scan_prompt).strip().upper()
        if not reply.startswith("TOC"):
            continue
        extract = oracle(page, (
            f"{TAG_TOC_EXTRACT} section={section}\n"
            f"What printed page does the section '{section}' start on "
            "(and end on, if listed)? Answer START=<n> [END=<n>] or NONE."
        ))
        m = _TOC_RE.search(extract)
        if m:
            return int(m.group(1)), int(m.group(2)) if m.group(2) else None
    return None


# -- printed-number offset -----------------------------------------------------

_NUMBER_RE = re.compile(r"-?\d+")

_NUMBER_PROMPT = (
    f"{TAG_PAGE_NUMBER}\n"
    "What page number is printed on this page? Answer with the number, or NONE."
)


def resolve_offset(
    oracle: Oracle, printed_number: int, guess_tool_id: int, n_pages: int
) -> int:
    """Iterate probes until tool_id = printed + offset is a fixed point."""
    guess = max(1, min(n_pages, guess_tool_id))
    offset = None
    for _ in range(6):
        reply = oracle(guess, _NUMBER_PROMPT).strip()
        if reply.upper().startswith("NONE"):
            guess = min(n_pages, guess + 1)  # plate/blank page: probe a neighbour
            continue
        m = _NUMBER_RE.search(reply)
        if not m:
            raise OracleUnparseable(f"page {guess}: unreadable page number {reply!r}")
        offset = guess - int(m.group(0))
        next_guess = max(1, min(n_pages, printed_number + offset))
        if next_guess == guess:
            return offset
        guess = next_guess
    if offset is None:
        raise UnnumberedPage("no printed number readable after 6 probes")
    return offset


def probe_offset(oracle: Oracle, pages: list[int]) -> int:
    """Offset from the first probed page carrying a printed number."""
    for page in pages[:6]:
        reply = oracle(page, _NUMBER_PROMPT).strip()
        if reply.upper().startswith("NONE"):
            continue
        m = _NUMBER_RE.search(reply)
        if m:
            return page - int(m.group(0))
    raise UnnumberedPage("no printed number readable after 3 probes")


# -- supplements ---------------------------------------------------------------

_SUPP_RE = re.compile(r"^\s*YES\b\s*(.*)$", re.IGNORECASE)

_SUPP_PROMPT = (
    f"{TAG_SUPPLEMENT}\n"
    "Is this page a supplement or corrections page for the main section? "
    "Answer YES <label> or NO."
)


def find_supplements(
    n_pages: int, start: int, end: int, oracle: Oracle, window: int = 10,
) -> tuple[list[tuple[int, int, str]], list[str]]:
    """Scan windows adjacent to the range; contiguous hits become ranges.

    Returns (supplements, warnings); a warning is raised when a run is
    cut off by the window edge.
    """
    supplements: list[tuple[int, int, str]] = []
    warnings: list[str] = []

    def scan(pages: list[int], edge: int | None) -> None:
        run_start, run_label = None, ""
        prev = None
        for page in pages:
            m = _SUPP_RE.match(oracle(page, _SUPP_PROMPT))
            if m:
                if run_start is None:
                    run_start, run_label = page, m.group(1).strip() or "supplement"
                prev = page
            elif run_start is not None:
                supplements.append((run_start, prev, run_label))
                run_start = None
        if run_start is not None:
            supplements.append((run_start, prev, run_label))
            if edge is not None and prev == edge:
                warnings.append(
                    f"supplement run ending at page {prev} may be truncated by "
                    f"the scan window of {len(pages)}"
                )

    before = list(range(max(1, start - window), start))
    after = list(range(end + 1, min(n_pages, end + window) + 1))
    scan(list(reversed(before)), None)
    scan(after, after[-1] if after and after[-1] < n_pages else None)
    supplements.sort()
    return supplements, warnings


# -- top-level -----------------------------------------------------------------

def find_range(ctx, source: str, section: str) -> RangeResult:
    """Run the full range-finding procedure and persist name_ranges.json."""
    src = ctx.ws.source(source)
    n = src.page_count
    oracle = context_oracle(ctx, source)
    cfg = ctx.config

    def classify(p: int) -> PagePosition:
        return classify_page(p, section, oracle)

    toc = toc_lookup(
        n, section, oracle,
        front_window=cfg.get_int("toc.front_window"),
        back_window=cfg.get_int("toc.back_window"),
    )
    if toc is not None:
        printed_start, printed_end = toc
        offset = resolve_offset(oracle, printed_start, printed_start, n)
        start = printed_start + offset
        if printed_end is not None:
            end = printed_end + offset
        else:
            first_after = _first_true(start, n, lambda p: classify(p) == PagePosition.AFTER)
            end = first_after - 1
        start, end = _verify_edges(n, classify, start, end)
        method = "toc"
    else:
        start, end = binary_search_range(n, classify)
        offset = probe_offset(oracle, [start, start + 1, start + 2])
        method = "binary_search"

    window = cfg.get_int("supplement.window")
    supplements, warnings = find_supplements(n, start, end, oracle, window=window)
    for warning in warnings:
        ws_mod.append_memory(ctx.ws, source, warning)

    result = RangeResult(
        section=section, start_page_id=start, end_page_id=end,
        printed_page_offset=offset, method=method, supplements=supplements,
    )
    path = ranges_path(ctx.ws, source)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.to_dict(), ensure_ascii=False, indent=1) + "\n",
                    encoding="utf-8")
    ctx.show_page(PageRef(source, start))
    ctx.show_page(PageRef(source, end))
    return result


def _verify_edges(n: int, classify: Classify, start: int, end: int) -> tuple[int, int]:
    memo: dict[int, PagePosition] = {}

    def c(p: int) -> PagePosition:
        if p not in memo:
            memo[p] = classify(p)
        return memo[p]

    ok = c(start) == PagePosition.INSIDE and c(end) == PagePosition.INSIDE and \
        (start == 1 or c(start - 1) == PagePosition.BEFORE) and \
        (end == n or c(end + 1) == PagePosition.AFTER)
    if ok:
        return start, end
    return _linear_repair(n, c, start, end)


def confirm_range(ws: Workspace, source: str) -> RangeResult:
    """Flip verified_by_user after an explicit historian confirmation."""
    result = load_range(ws, source)
    result.verified_by_user = True
    ranges_path(ws, source).write_text(
        json.dumps(result.to_dict(), ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
    return result
