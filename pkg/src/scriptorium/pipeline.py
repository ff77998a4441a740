"""Skill execution: prerequisite gating plus the four built-in steps.

A skill runs only after its `requires` artifacts exist under
data/<source>/; otherwise it halts with a report naming every missing
file and no agent work happens. The four pipeline skills (range-finder,
prompt-construction, batch-extract, merge) have native step runners;
any other skill body is handed to the orchestration model via the
agent turn loop.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

from . import batch as batch_mod
from . import merge as merge_mod
from . import promptbuild, rangefinder
from .agent import EngineContext, run_turn
from .errors import ApprovalDenied, NoTestRun, ProducesMissing, SkillHalted
from .promptbuild import ColumnSpec, DEFAULT_BASE_PROMPT
from .skills import HaltReport, Skill, check_prereqs
from .workspace import PageRef

AgentHandle = Callable[[EngineContext, str], None]

BASE_PROMPT_FILE = ".chronos/base_prompt.md"


@dataclass
class SkillRunRecord:
    skill: str
    source: str
    halted: HaltReport | None = None
    produced: list[str] = field(default_factory=list)
    result: object = None


def run_skill(
    ctx: EngineContext,
    skill: Skill,
    source: str,
    agent: AgentHandle | None = None,
    **options,
) -> SkillRunRecord:
    """Gate on prerequisites, execute, then verify declared artifacts."""
    report = check_prereqs(skill, source, ctx.ws)
    if report is not None:
        raise SkillHalted(report)
    ctx.log("system", {"event": "skill_start", "skill": skill.name, "source": source})
    record = SkillRunRecord(skill=skill.name, source=source)
    if agent is not None:
        agent(ctx, _instruction(skill, source))
    elif skill.name in STEP_RUNNERS:
        record.result = STEP_RUNNERS[skill.name](ctx, source, **options)
    else:
        run_turn(ctx, _instruction(skill, source))
    data_dir = ctx.ws.data_dir(source)
    missing = [p for p in skill.produces if not (data_dir / p).is_file()]
    if missing:
        raise ProducesMissing(
            f"skill {skill.name!r} finished without creating: {', '.join(missing)}"
        )
    record.produced = list(skill.produces)
    ctx.log("system", {"event": "skill_done", "skill": skill.name,
                       "produced": record.produced})
    return record


def _instruction(skill: Skill, source: str) -> str:
    return (
        f"You are working on source '{source}'; write derived artifacts "
        f"under data/{source}/ only.\n\n{skill.body}"
    )


# -- built-in steps ------------------------------------------------------------

def step_range_finder(ctx: EngineContext, source: str, section: str | None = None,
                      **_) -> rangefinder.RangeResult:
    section = section or str(ctx.config.get("range.section", "Namensliste"))
    return rangefinder.find_range(ctx, source, section)


def _base_prompt(ctx: EngineContext) -> str:
    path = ctx.ws.root / BASE_PROMPT_FILE
    if path.is_file():
        return path.read_text(encoding="utf-8").strip()
    path.write_text(DEFAULT_BASE_PROMPT + "\n", encoding="utf-8")
    return DEFAULT_BASE_PROMPT


def _configured_columns(ctx: EngineContext) -> list[ColumnSpec]:
    raw = str(ctx.config.get("prompt.columns", ""))
    names = [c.strip() for c in raw.split(",") if c.strip()]
    if not names:
        raise NoTestRun(
            "prompt.columns is not configured; set it in .chronos/config"
        )
    return [ColumnSpec(name) for name in names]


def step_prompt_construction(ctx: EngineContext, source: str, seed: int = 0,
                             **_) -> promptbuild.TestExtraction:
    range_result = rangefinder.load_range(ctx.ws, source)
    cues = promptbuild.harvest_cues(ctx, source, range_result)
    rules_raw = str(ctx.config.get("prompt.rules", "") or "")
    rules = [r.strip() for r in rules_raw.split(";") if r.strip()]
    prompt = promptbuild.assemble_prompt(
        _base_prompt(ctx), cues, _configured_columns(ctx), rules,
    )
    promptbuild.write_prompt(ctx.ws, source, prompt)
    page = promptbuild.pick_test_page(range_result, seed)
    page = PageRef(source, page.page_id)
    return promptbuild.test_prompt(ctx, prompt, page)


def step_batch_extract(
    ctx: EngineContext,
    source: str,
    approve: str | Callable = "via-ui",
    parallelism: int | None = None,
    justification: str = "",
    **_,
) -> tuple[batch_mod.BatchJob, batch_mod.ValidationReport]:
    """Propose, gate on approval, execute, validate.

    `approve` is "yes" (terminal grant recorded immediately), "via-ui"
    (block until the viewer decision arrives), or a callable given the
    ApprovalRequest.
    """
    version, columns, rendered = promptbuild.read_prompt_file(ctx.ws, source)
    test_path = ctx.ws.data_dir(source) / promptbuild.TEST_FILE
    if not test_path.is_file():
        raise NoTestRun("no test extraction on disk; run prompt-construction first")
    test = json.loads(test_path.read_text(encoding="utf-8"))
    range_result = rangefinder.load_range(ctx.ws, source)
    pages = list(range(range_result.start_page_id, range_result.end_page_id + 1))
    if ctx.config.get_bool("batch.include_supplements"):
        for s, e, _label in range_result.supplements:
            pages.extend(range(s, e + 1))
    job = batch_mod.make_job(ctx, source, pages, rendered, columns)
    batch_mod.estimate_cost(ctx, job, test.get("output_tokens", 0))
    if not justification:
        justification = (
            f"extraction route {job.route_provider}/{job.route_model} "
            f"validated on test page {test.get('page_id')}"
        )
    request = batch_mod.propose(ctx, job, justification)
    if approve == "yes":
        ctx.approvals.decide(request.id, "granted", note="terminal approval")
    elif callable(approve):
        approve(request)
    else:
        ctx.approvals.wait_for_decision(request.id)
    decided = ctx.approvals.get(request.id)
    if decided.decision != "granted":
        raise ApprovalDenied(
            f"batch {job.job_id} was not granted (decision: {decided.decision})"
        )
    batch_mod.execute(ctx, job, parallelism=parallelism)
    report = batch_mod.validate(ctx, job)
    return job, report


def step_merge(ctx: EngineContext, source: str, **_) -> merge_mod.MergedDataset:
    manifest_path = ctx.ws.data_dir(source) / batch_mod.MANIFEST_FILE
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    columns = manifest["columns"]
    data_dir = ctx.ws.data_dir(source)
    include = None
    if ctx.config.get_bool("merge.supplements_separate"):
        range_result = rangefinder.load_range(ctx.ws, source)
        supplement_pages = {
            p for s, e, _ in range_result.supplements for p in range(s, e + 1)
        }
        if supplement_pages:
            main = {p for p in manifest["pages"] if p not in supplement_pages}
            merge_mod.merge(data_dir, columns,
                            include_pages=supplement_pages,
                            output_name="entries_supplements.tsv")
            include = main
    merged = merge_mod.merge(data_dir, columns, include_pages=include)
    violations = merge_mod.verify_provenance(merged, data_dir)
    if violations:
        ctx.log("system", {"event": "merge_violations", "violations": violations})
    return merged


STEP_RUNNERS: dict[str, Callable] = {
    "range-finder": step_range_finder,
    "prompt-construction": step_prompt_construction,
    "batch-extract": step_batch_extract,
    "merge": step_merge,
}
