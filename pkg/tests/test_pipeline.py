from __future__ import annotations

import json

import pytest

from scriptorium import fixtures, pipeline, skills as skills_mod
from scriptorium.agent import EngineContext
from scriptorium.errors import ApprovalDenied, ProducesMissing, SkillHalted
from scriptorium.skills import Skill


def test_run_skill_halts_before_any_work(small_ctx):
    ctx, _ = small_ctx
    loaded = skills_mod.load_skills(ctx.ws)
    with pytest.raises(SkillHalted) as exc:
        pipeline.run_skill(ctx, loaded["batch-extract"], "book1")
    assert "batch_prompt.md" in str(exc.value)
    # the halt happened before anything was logged or executed
    assert ctx.head is None
    assert not list((ctx.ws.root / "data").rglob("*"))


def test_run_skill_verifies_produces(small_ctx):
    ctx, _ = small_ctx
    lazy = Skill(name="lazy", description="claims more than it writes",
                 requires=(), produces=("never_written.json",), body="noop\n")

    def agent(ctx_, instruction):
        pass  # writes nothing

    with pytest.raises(ProducesMissing):
        pipeline.run_skill(ctx, lazy, "book1", agent=agent)


def test_run_skill_logs_start_and_done(small_ctx):
    ctx, _ = small_ctx
    loaded = skills_mod.load_skills(ctx.ws)
    pipeline.run_skill(ctx, loaded["range-finder"], "book1")
    events = [e.content["event"] for e in ctx.session.lineage(ctx.head)
              if e.role == "system"]
    assert events[0] == "skill_start" and events[-1] == "skill_done"


def test_scripted_agent_satisfies_produces(small_ctx):
    ctx, _ = small_ctx
    custom = Skill(name="notes", description="writes a note",
                   requires=(), produces=("note.txt",), body="write a note\n")
    seen = []

    def agent(ctx_, instruction):
        seen.append(instruction)
        target = ctx_.ws.data_dir("book1") / "note.txt"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text("done\n")

    record = pipeline.run_skill(ctx, custom, "book1", agent=agent)
    assert record.produced == ["note.txt"]
    assert seen and "book1" in seen[0]


def test_batch_step_denial_raises(small_ctx):
    ctx, _ = small_ctx
    pipeline.step_range_finder(ctx, "book1")
    pipeline.step_prompt_construction(ctx, "book1", seed=0)

    def deny(request):
        ctx.approvals.decide(request.id, "denied", note="too expensive")

    with pytest.raises(ApprovalDenied):
        pipeline.step_batch_extract(ctx, "book1", approve=deny)


def test_batch_step_excludes_supplements_by_default(small_ctx):
    ctx, _ = small_ctx
    pipeline.step_range_finder(ctx, "book1")
    pipeline.step_prompt_construction(ctx, "book1", seed=0)
    job, report = pipeline.step_batch_extract(ctx, "book1", approve="yes")
    assert job.pages == list(range(12, 41))
    assert report.clean


def test_batch_step_can_include_supplements(small_ctx):
    ctx, _ = small_ctx
    ctx.config.set("batch.include_supplements", "true")
    pipeline.step_range_finder(ctx, "book1")
    pipeline.step_prompt_construction(ctx, "book1", seed=0)
    job, _report = pipeline.step_batch_extract(ctx, "book1", approve="yes")
    assert job.pages == list(range(12, 43))


def test_merge_step_supplements_split(small_ctx):
    ctx, _ = small_ctx
    ctx.config.set("batch.include_supplements", "true")
    ctx.config.set("merge.supplements_separate", "true")
    pipeline.step_range_finder(ctx, "book1")
    pipeline.step_prompt_construction(ctx, "book1", seed=0)
    pipeline.step_batch_extract(ctx, "book1", approve="yes")
    pipeline.step_merge(ctx, "book1")
    data = ctx.ws.data_dir("book1")
    main_ids = {r.split("\t")[0] for r in
                (data / "entries.tsv").read_text().splitlines()[1:]}
    supp_ids = {r.split("\t")[0] for r in
                (data / "entries_supplements.tsv").read_text().splitlines()[1:]}
    assert main_ids == {str(p) for p in range(12, 41)}
    assert supp_ids == {"41", "42"}
