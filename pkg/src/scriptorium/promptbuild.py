"""Building and revising the batch extraction prompt.

Harvests abbreviation tables and legends from pages around the detected
range, renders them with column definitions and source-specific rules
into a deterministic prompt, tests the prompt on a seeded-random
representative page, and supports historian-driven revision cycles with
every prior prompt version retained on disk.
"""
from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .batch import parse_tsv_text, strip_artifacts
from .errors import EmptyColumns, InvalidColumnName, OracleUnparseable, UnparseableOutput
from .providers import TAG_LEGEND_SCAN, TAG_LEGEND_TRANSCRIBE
from .rangefinder import Oracle, RangeResult, context_oracle
from .workspace import PageRef, Workspace

LOOKUP_FILE = "abbreviation_lookup.json"
PROMPT_FILE = "batch_prompt.md"
TEST_FILE = "test_extraction.json"

DEFAULT_BASE_PROMPT = (
    "You are an expert transcriber of historical printed documents. "
    "Transcribe every entry on this page exactly as printed, preserving "
    "original spelling, diacritics, and long-s characters."
)


@dataclass(frozen=True)
class AbbreviationEntry:
    abbr: str
    expansion: str
    source_page_id: int


@dataclass
class AbbreviationLookup:
    entries: list[AbbreviationEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"entries": [
            {"abbr": e.abbr, "expansion": e.expansion, "source_page_id": e.source_page_id}
            for e in self.entries
        ]}

    @classmethod
    def from_dict(cls, data: dict) -> "AbbreviationLookup":
        return cls([AbbreviationEntry(e["abbr"], e["expansion"], e["source_page_id"])
                    for e in data.get("entries", [])])


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    description: str = ""
    example: str = ""


@dataclass
class ExtractionPrompt:
    base: str
    columns: list[ColumnSpec]
    rules: list[str] = field(default_factory=list)
    abbreviations: AbbreviationLookup = field(default_factory=AbbreviationLookup)
    version: int = 1

    @property
    def rendered(self) -> str:
        return render_prompt(self)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.rendered.encode("utf-8")).hexdigest()


@dataclass
class TestExtraction:
    page: PageRef
    prompt_digest: str
    rows: list[list[str]]
    issues: list[str] = field(default_factory=list)
    output_tokens: int = 0

    def to_dict(self) -> dict:
        return {
            "source": self.page.source, "page_id": self.page.page_id,
            "prompt_digest": self.prompt_digest, "rows": self.rows,
            "issues": self.issues, "output_tokens": self.output_tokens,
        }


# -- cue harvesting ------------------------------------------------------------

_LEGEND_SCAN_PROMPT = (
    f"{TAG_LEGEND_SCAN}\n"
    "Does this page contain an abbreviation table or legend? Answer YES or NO."
)
_LEGEND_TRANSCRIBE_PROMPT = (
    f"{TAG_LEGEND_TRANSCRIBE}\n"
    "Transcribe the abbreviation table, one 'abbreviation<TAB>expansion' per line."
)


def harvest_cues(ctx, source: str, range_result: RangeResult,
                 oracle: Oracle | None = None) -> AbbreviationLookup:
    """Scan pages around the range for legends; write abbreviation_lookup.json."""
    oracle = oracle or context_oracle(ctx, source)
    n = ctx.ws.source(source).page_count
    window = ctx.config.get_int("supplement.window")
    start, end = range_result.start_page_id, range_result.end_page_id
    pages = list(range(max(1, start - window), start)) + \
        list(range(end + 1, min(n, end + window) + 1))
    lookup = AbbreviationLookup()
    seen: dict[str, str] = {}
    for page in pages:
        if not oracle(page, _LEGEND_SCAN_PROMPT).strip().upper().startswith("YES"):
            continue
        transcript = oracle(page, _LEGEND_TRANSCRIBE_PROMPT)
        for line in transcript.splitlines():
            if "\t" not in line:
                continue
            abbr, _, expansion = line.partition("\t")
            abbr, expansion = abbr.strip(), expansion.strip()
            if not abbr or not expansion:
                continue
            if abbr in seen:
                if seen[abbr] != expansion:
                    raise OracleUnparseable(
                        f"abbreviation {abbr!r} transcribed with conflicting expansions"
                    )
                continue
            seen[abbr] = expansion
            lookup.entries.append(AbbreviationEntry(abbr, expansion, page))
    path = ctx.ws.data_dir(source) / LOOKUP_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(lookup.to_dict(), ensure_ascii=False, indent=1) + "\n",
                    encoding="utf-8")
    return lookup


# -- assembly ------------------------------------------------------------------

def render_prompt(prompt: ExtractionPrompt) -> str:
    """Deterministic rendering with a fixed section order."""
    names = [c.name for c in prompt.columns]
    lines = ["# Role", "", prompt.base.strip(), "", "# Columns", ""]
    for i, col in enumerate(prompt.columns, 1):
        desc = f" -- {col.description}" if col.description else ""
        example = f" (e.g. {col.example})" if col.example else ""
        lines.append(f"{i}. {col.name}{desc}{example}")
    lines += ["", "# Abbreviations", ""]
    if prompt.abbreviations.entries:
        lines.append("Expand abbreviations using this table:")
        for e in prompt.abbreviations.entries:
            lines.append(f"{e.abbr} = {e.expansion}")
    else:
        lines.append("none")
    lines += ["", "# Rules", ""]
    if prompt.rules:
        lines += [f"- {rule}" for rule in prompt.rules]
    else:
        lines.append("none")
    lines += [
        "", "# Output format", "",
        "Return the entries as tab-separated values (TSV): first a header "
        "line reading " + "\t".join(names) + ", then one line per entry "
        f"with exactly {len(names)} fields in that order. "
        "Do not wrap the output in code fences.",
    ]
    return "\n".join(lines) + "\n"


def validate_columns(columns: list[ColumnSpec]) -> None:
    if not columns:
        raise EmptyColumns("at least one column is required")
    seen = set()
    for col in columns:
        if not col.name or "\t" in col.name or "\n" in col.name:
            raise InvalidColumnName(f"bad column name {col.name!r}")
        if col.name in seen:
            raise InvalidColumnName(f"duplicate column name {col.name!r}")
        seen.add(col.name)


def assemble_prompt(
    base: str,
    cues: AbbreviationLookup,
    columns: list[ColumnSpec],
    rules: list[str] | None = None,
    version: int = 1,
) -> ExtractionPrompt:
    validate_columns(columns)
    return ExtractionPrompt(base=base, columns=columns, rules=list(rules or []),
                            abbreviations=cues, version=version)


def prompt_path(ws: Workspace, source: str) -> Path:
    return ws.data_dir(source) / PROMPT_FILE


def write_prompt(ws: Workspace, source: str, prompt: ExtractionPrompt) -> Path:
    """Persist batch_prompt.md: front matter (version, columns) + body."""
    path = prompt_path(ws, source)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = ", ".join(c.name for c in prompt.columns)
    front = f"---\nversion: {prompt.version}\ncolumns: [{names}]\n---\n\n"
    path.write_text(front + prompt.rendered, encoding="utf-8")
    return path


_FRONT_RE = re.compile(r"\A---\nversion: (\d+)\ncolumns: \[(.*?)\]\n---\n\n", re.S)


def read_prompt_file(ws: Workspace, source: str) -> tuple[int, list[str], str]:
    """(version, column names, rendered body) of the current prompt file."""
    text = prompt_path(ws, source).read_text(encoding="utf-8")
    m = _FRONT_RE.match(text)
    if not m:
        raise UnparseableOutput(f"{PROMPT_FILE} has no recognisable front matter")
    columns = [c.strip() for c in m.group(2).split(",") if c.strip()]
    return int(m.group(1)), columns, text[m.end():]


# -- testing and revision ------------------------------------------------------

def pick_test_page(range_result: RangeResult, seed: int) -> PageRef:
    """Seeded uniform draw from the main range, excluding supplement pages."""
    excluded = {
        p for s, e, _ in range_result.supplements for p in range(s, e + 1)
    }
    candidates = [p for p in range(range_result.start_page_id,
                                   range_result.end_page_id + 1)
                  if p not in excluded]
    rng = random.Random(seed)
    return PageRef(source="", page_id=rng.choice(candidates))


def test_prompt(ctx, prompt: ExtractionPrompt, page: PageRef) -> TestExtraction:
    """Run the prompt on one page and parse the output as TSV."""
    conv = ctx.analyze_page(page, prompt.rendered)
    raw = conv.turns[-1][1]
    text, kinds = strip_artifacts(raw)
    issues = [f"{kind}_stripped" for kind in kinds]
    rows, row_issues = parse_tsv_text(text, expected_columns=len(prompt.columns))
    issues += row_issues
    if not rows:
        raise UnparseableOutput("test extraction produced no parseable rows")
    header, data = rows[0], rows[1:]
    if header != [c.name for c in prompt.columns]:
        # Treat a missing header as data: providers sometimes skip it.
        data = rows
        issues.append("missing_header")
    if not data:
        raise UnparseableOutput("test extraction produced a header but no rows")
    test = TestExtraction(
        page=page, prompt_digest=prompt.digest, rows=data, issues=issues,
        output_tokens=max(1, len(raw) // 4),
    )
    ctx.hub.push_state(page.source, page.page_id, attachment=data)
    path = ctx.ws.data_dir(page.source) / TEST_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(test.to_dict(), ensure_ascii=False, indent=1) + "\n",
                    encoding="utf-8")
    return test


REVISION_INSTRUCTION = (
    "Given the current extraction columns, rules, and the feedback below, "
    "return revised column definitions and rules as a JSON object "
    '{"columns": [{"name", "description", "example"}], "rules": []}. '
    "Feedback:\n"
)


def revise_prompt(ctx, source: str, prompt: ExtractionPrompt,
                  feedback: str) -> ExtractionPrompt:
    """Amend columns/rules per feedback; prior version kept as a v-file."""
    if not feedback.strip():
        raise ValueError("revision feedback must be non-empty")
    route = ctx.route("orchestration")
    provider = ctx.provider_for(route)
    current = json.dumps({
        "columns": [{"name": c.name, "description": c.description,
                     "example": c.example} for c in prompt.columns],
        "rules": prompt.rules,
    }, ensure_ascii=False)
    completion = provider.complete(
        [{"role": "system", "content": "You revise document-extraction prompts."},
         {"role": "user", "content": REVISION_INSTRUCTION + feedback +
          "\n\nCurrent:\n" + current}],
        model=route.model,
    )
    text, _ = strip_artifacts(completion.text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UnparseableOutput(f"revision reply is not JSON: {exc}") from exc
    columns = [ColumnSpec(c["name"], c.get("description", ""), c.get("example", ""))
               for c in data["columns"]]
    revised = assemble_prompt(prompt.base, prompt.abbreviations, columns,
                              data.get("rules", []), version=prompt.version + 1)
    # Retain the outgoing version before overwriting the current file.
    current_path = prompt_path(ctx.ws, source)
    if current_path.is_file():
        versioned = current_path.with_name(f"batch_prompt.v{prompt.version}.md")
        versioned.write_bytes(current_path.read_bytes())
    write_prompt(ctx.ws, source, revised)
    return revised
