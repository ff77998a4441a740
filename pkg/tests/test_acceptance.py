"""End-to-end acceptance checks for the extraction engine.

Each test states one externally visible guarantee and fails loudly if it
is not met. They run against deterministic synthetic fixtures only; no
network access and no real model calls are involved.
"""
from __future__ import annotations

import json
import math
import random
import threading
import time
import urllib.error
import urllib.request

import pytest

from scriptorium import batch, fixtures, merge as merge_mod, pipeline, rangefinder, viewer
from scriptorium import sessions as sessions_mod
from scriptorium import workspace as ws_mod
from scriptorium.agent import EngineContext
from scriptorium.batch import entries_filename, estimate_cost, make_job
from scriptorium.cli import main as cli_main
from scriptorium.errors import NotApproved, RangeNotFound, SkillHalted
from scriptorium.rangefinder import PagePosition, binary_search_range
from scriptorium.skills import Skill

GROUND_TRUTH = dict(start=37, end=150, offset=4, toc_page=3, legend_page=35,
                    supplements=[(151, 153, "Nachträge")])


@pytest.fixture(scope="module")
def directory_200(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept") / "ws"
    return fixtures.build_city_directory(root, n_pages=200, **GROUND_TRUTH)


@pytest.fixture(scope="module")
def directory_200_no_toc(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept-notoc") / "ws"
    kwargs = dict(GROUND_TRUTH, toc_page=None)
    return fixtures.build_city_directory(root, n_pages=200, **kwargs)


def _linear_scan(oracle: dict) -> tuple[int, int]:
    inside = [p for p in range(1, oracle["n_pages"] + 1)
              if oracle["start_page_id"] <= p <= oracle["end_page_id"]]
    return inside[0], inside[-1]


def test_range_agreement_toc_binary_and_linear(directory_200, directory_200_no_toc):
    """ToC path, binary path, and exhaustive scan agree on (37, 150) offset 4."""
    started = time.monotonic()

    ws, oracle = directory_200
    ctx = EngineContext.create(ws, source="book1")
    via_toc = rangefinder.find_range(ctx, "book1", "Namensliste")
    assert via_toc.method == "toc"
    assert (via_toc.start_page_id, via_toc.end_page_id) == (37, 150)
    assert via_toc.printed_page_offset == 4

    ws2, oracle2 = directory_200_no_toc
    ctx2 = EngineContext.create(ws2, source="book1")
    via_binary = rangefinder.find_range(ctx2, "book1", "Namensliste")
    assert via_binary.method == "binary_search"
    assert (via_binary.start_page_id, via_binary.end_page_id) == (37, 150)
    assert via_binary.printed_page_offset == 4

    assert _linear_scan(oracle) == (37, 150)

    calls = {"n": 0}

    def classify(page_id: int) -> PagePosition:
        calls["n"] += 1
        if page_id < 37:
            return PagePosition.BEFORE
        return PagePosition.INSIDE if page_id <= 150 else PagePosition.AFTER

    assert binary_search_range(200, classify) == (37, 150)
    bound = 2 * math.ceil(math.log2(200)) + 4
    assert calls["n"] <= bound == 20

    assert time.monotonic() - started < 5.0


def test_monotone_search_exhaustive():
    """binary_search_range equals the linear oracle on every sequence <= 64."""
    started = time.monotonic()
    checked = 0
    for total in range(1, 65):
        for a in range(total + 1):
            for b in range(total - a + 1):
                seq = [PagePosition.BEFORE] * a + [PagePosition.INSIDE] * b \
                    + [PagePosition.AFTER] * (total - a - b)
                classify = seq.__getitem__
                wrapped = lambda p: classify(p - 1)
                if b == 0:
                    with pytest.raises(RangeNotFound):
                        binary_search_range(total, wrapped)
                else:
                    assert binary_search_range(total, wrapped) == (a + 1, a + b)
                checked += 1
    assert checked == sum((t + 1) * (t + 2) // 2 for t in range(1, 65))
    assert time.monotonic() - started < 30.0


def test_prerequisite_gate_randomized(tmp_path):
    """Unmet requirements halt with the artifact named, before any agent work."""
    rng = random.Random(1234)
    ws = ws_mod.scaffold(tmp_path / "ws")
    fixtures.mock_routes(ws.config)
    for trial in range(100):
        n = rng.randint(1, 6)
        skills = {}
        for i in range(n):
            requires = tuple(f"art{j}" for j in range(i) if rng.random() < 0.5)
            skills[f"s{i}"] = Skill(
                name=f"s{i}", description=f"step {i}",
                requires=requires, produces=(f"art{i}",), body="noop\n")
        source = f"src{trial}"
        present = {f"art{j}" for j in range(n) if rng.random() < 0.5}
        data_dir = ws.root / "data" / source
        data_dir.mkdir(parents=True, exist_ok=True)
        for artifact in present:
            (data_dir / artifact).write_text("{}")
        target = skills[f"s{rng.randrange(n)}"]
        missing = [a for a in target.requires if a not in present]
        ctx = EngineContext.create(ws, source=source)
        agent_events = []

        def agent(ctx_, instruction):
            agent_events.append(instruction)
            for artifact in target.produces:
                (data_dir / artifact).write_text("{}")

        if missing:
            with pytest.raises(SkillHalted) as exc:
                pipeline.run_skill(ctx, target, source, agent=agent)
            for artifact in missing:
                assert artifact in str(exc.value)
            assert agent_events == []
            assert ctx.head is None, "halt must precede any session event"
        else:
            pipeline.run_skill(ctx, target, source, agent=agent)
            assert len(agent_events) == 1


def test_approval_gate_randomized_interleavings(tmp_path):
    """No extraction call ever precedes its granted approval in the log."""
    ws, oracle = fixtures.build_city_directory(
        tmp_path / "ws", n_pages=10, start=2, end=6, toc_page=None,
        legend_page=None, supplements=[])
    for seed in range(100):
        rng = random.Random(seed)
        ctx = EngineContext.create(ws, source="book1")
        pages = sorted(rng.sample(range(2, 7), k=rng.randint(1, 5)))
        job = make_job(ctx, "book1", pages, f"tab-separated s{seed}", fixtures.COLUMNS)
        estimate_cost(ctx, job, 200)
        request = batch.propose(ctx, job)

        def decide():
            time.sleep(rng.random() * 0.005)
            ctx.approvals.decide(request.id, "granted")

        t = threading.Thread(target=decide)
        t.start()
        while True:
            try:
                batch.execute(ctx, job, parallelism=rng.choice([1, 2, 4]))
                break
            except NotApproved:
                time.sleep(0.001)
        t.join()

        granted_at = None
        for i, entry in enumerate(ctx.session.lineage(ctx.head)):
            if entry.role != "tool":
                continue
            event = entry.content
            if event["event"] == "approval_decision" and \
                    event["approval_id"] == request.id:
                assert event["decision"] == "granted"
                granted_at = i
            if event["event"] == "provider_call" and event["job_id"] == job.job_id:
                assert granted_at is not None and granted_at < i, \
                    f"seed {seed}: extraction call before grant"
        # every written page must trace back to the approved job digest
        assert ctx.approvals.granted_for(job.digest) is not None
        for page in pages:
            (ws.root / "data" / "book1" / entries_filename(page)).unlink()


def test_batch_robustness_fault_matrix(tmp_path):
    """1 missing page, artifact flags, 1 column mismatch; 109 pages byte-exact."""
    faults = {
        "40": {"permanent": True},
        "55": {"transient_failures": 1},
        "90": {"transient_failures": 2},
        "60": {"code_fence": True},
        "61": {"code_fence": True},
        "62": {"code_fence": True},
        "70": {"column_drift": True},
    }
    ws, oracle = fixtures.build_city_directory(
        tmp_path / "ws", n_pages=200, faults=faults, **GROUND_TRUTH)
    ctx = EngineContext.create(ws, source="book1")
    pipeline.step_range_finder(ctx, "book1")
    pipeline.step_prompt_construction(ctx, "book1", seed=1)
    job, report = pipeline.step_batch_extract(
        ctx, "book1", approve="yes", parallelism=8)

    assert report.missing_pages == [40]
    assert len(report.artifacts) >= 1
    assert {p for p, _ in report.artifacts} == {60, 61, 62}
    assert [m[0] for m in report.column_mismatches] == [70]

    excluded = {40, 60, 61, 62, 70}
    matched = 0
    for page in range(37, 151):
        if page in excluded:
            continue
        path = ws.root / "data" / "book1" / entries_filename(page)
        assert path.read_text(encoding="utf-8") == \
            fixtures.expected_page_tsv(oracle, page), f"page {page} differs"
        matched += 1
    assert matched == 109
    # fenced pages were stripped clean on disk, and match ground truth too
    for page in (60, 61, 62):
        text = (ws.root / "data" / "book1" / entries_filename(page)).read_text()
        assert "```" not in text
        assert text == fixtures.expected_page_tsv(oracle, page)


def test_merge_conservation_randomized(tmp_path):
    """100 random batch shapes: counts conserved, provenance verified."""
    rng = random.Random(99)
    glyphs = ["Müller", "Groß", "ſchön", "Käthe", "Straße", "Wirtſchaft", "Jäger"]
    for trial in range(100):
        data_dir = tmp_path / f"batch{trial}"
        data_dir.mkdir()
        expected = {}
        n_files = rng.randint(1, 8)
        for page in rng.sample(range(1, 300), n_files):
            rows = [[rng.choice(glyphs), rng.choice(glyphs),
                     rng.choice(glyphs), str(rng.randint(1, 200))]
                    for _ in range(rng.randint(1, 9))]
            expected[page] = len(rows)
            lines = ["\t".join(fixtures.COLUMNS)] + ["\t".join(r) for r in rows]
            text = "\n".join(lines) + ("\n" if rng.random() < 0.5 else "")
            (data_dir / entries_filename(page)).write_text(text, encoding="utf-8")
        merged = merge_mod.merge(data_dir, fixtures.COLUMNS)
        assert len(merged.rows) == sum(expected.values()), f"trial {trial}"
        counts: dict[int, int] = {}
        for row in merged.rows:
            counts[int(row[0])] = counts.get(int(row[0]), 0) + 1
        assert counts == expected, f"trial {trial}"
        assert merge_mod.verify_provenance(merged, data_dir) == [], f"trial {trial}"


def test_determinism_parallelism_and_cli(tmp_path):
    """Parallelism 1 vs 16 and repeated CLI runs are byte-identical."""
    trees = {}
    for parallelism in (1, 16):
        ws, _ = fixtures.build_city_directory(
            tmp_path / f"p{parallelism}", n_pages=200, **GROUND_TRUTH)
        ctx = EngineContext.create(ws, source="book1")
        pipeline.step_range_finder(ctx, "book1")
        pipeline.step_prompt_construction(ctx, "book1", seed=0)
        pipeline.step_batch_extract(ctx, "book1", approve="yes",
                                    parallelism=parallelism)
        pipeline.step_merge(ctx, "book1")
        trees[parallelism] = {
            p.name: p.read_bytes()
            for p in sorted((ws.root / "data" / "book1").iterdir())
            if p.name != "batch_manifest.json"  # carries the random job id
        }
    assert trees[1] == trees[16]

    ws, _ = fixtures.build_city_directory(tmp_path / "cli", n_pages=200,
                                          **GROUND_TRUTH)
    outputs = []
    for _ in range(2):
        for argv in (["run", "range-finder", "--source", "book1"],
                     ["run", "prompt-construction", "--source", "book1",
                      "--seed", "0"],
                     ["run", "batch-extract", "--source", "book1", "--yes"],
                     ["run", "merge", "--source", "book1"]):
            code = cli_main(["--workspace", str(ws.root), "--mock"] + argv)
            assert code == 0, argv
        outputs.append((ws.root / "data" / "book1" / "entries.tsv").read_bytes())
    assert outputs[0] == outputs[1]


def test_tsv_compactness_vs_json(directory_200):
    """Merged TSV is at most 70% the size of an equivalent JSON serialization."""
    ws, oracle = directory_200
    columns = ["page_id"] + fixtures.COLUMNS
    rows = []
    for page in range(37, 151):
        for row in oracle["rows"][str(page)]:
            rows.append([str(page)] + row)
    tsv = "\t".join(columns) + "\n" + "".join("\t".join(r) + "\n" for r in rows)
    as_json = json.dumps([dict(zip(columns, r)) for r in rows], ensure_ascii=False)
    ratio = len(tsv) / len(as_json)
    assert ratio <= 0.70, f"TSV/JSON character ratio {ratio:.3f} exceeds 0.70"


def test_session_round_trip_and_compaction(tmp_path):
    """1000-entry trees survive save/resume; compaction appends, never edits."""
    rng = random.Random(5)
    tree = sessions_mod.new_session(tmp_path)
    ids = []
    head = None
    for i in range(1000):
        if ids and rng.random() < 0.1:
            parent = rng.choice(ids)  # fork somewhere in the tree
        else:
            parent = head
        role = rng.choice(["user", "assistant", "tool", "system"])
        head = tree.append(parent, role, f"entry {i} ſß{rng.random():.6f}")
        ids.append(head)
    resumed = sessions_mod.resume(tree.path)
    assert set(resumed.entries) == set(tree.entries)
    for probe in rng.sample(ids, 50):
        assert [e.id for e in resumed.lineage(probe)] == \
            [e.id for e in tree.lineage(probe)]
    assert resumed.heads == tree.heads

    before = tree.path.read_bytes()
    new_head = tree.compact(head, keep_last=5,
                            summarizer=sessions_mod.truncation_summarizer(200))
    lineage = tree.lineage(new_head)
    assert len(lineage) == 6
    assert lineage[0].role == "summary"
    assert tree.path.read_bytes().startswith(before)
    resumed_after = sessions_mod.resume(tree.path)
    assert [e.id for e in resumed_after.lineage(new_head)] == \
        [e.id for e in lineage]


def _fuzz_paths(rng):
    pieces = ["..", "data", "sources", "png", "book1", "%2e%2e", "entries.tsv",
              "page_0001.png", ".", "", "memory", "..%2f", "%2e%2e%2fsecret"]
    for _ in range(500):
        depth = rng.randint(1, 6)
        sep = rng.choice(["/", "//", "/./"])
        yield sep.join(rng.choice(pieces) for _ in range(depth))


def test_read_only_sources_traversal_fuzz(tmp_path):
    """500 hostile paths: no write is permitted and no outside read served."""
    ws, _ = fixtures.build_city_directory(
        tmp_path / "ws", n_pages=5, start=2, end=4, toc_page=None,
        legend_page=None, supplements=[])
    secret = tmp_path / "secret.txt"
    secret.write_text("outside-the-workspace")
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("console")

    snapshot = {
        str(p): p.stat().st_size
        for p in sorted((ws.root).rglob("*")) if p.is_file()
    }
    rng = random.Random(77)
    ctx = EngineContext.create(ws, source="book1")
    with viewer.serve(ctx, port=0, static_dir=static) as srv:
        for fuzz in _fuzz_paths(rng):
            decision = ws_mod.guard_write(ws, ws.root / fuzz)
            resolved = (ws.root / fuzz).resolve()
            inside = resolved.is_relative_to(ws.root)
            under_sources = inside and \
                resolved.relative_to(ws.root).parts[:1] == ("sources",)
            if not inside or under_sources:
                assert not decision.allowed, fuzz
            for endpoint in (f"/{fuzz}", f"/api/sources/{fuzz}/pages/1/image"):
                try:
                    req = urllib.request.Request(
                        f"http://127.0.0.1:{srv.port}{endpoint}")
                    with urllib.request.urlopen(req, timeout=5) as resp:
                        body = resp.read()
                    assert b"outside-the-workspace" not in body, endpoint
                except (urllib.error.HTTPError, urllib.error.URLError):
                    pass  # refusals are fine; leaked bytes are not
    after = {
        str(p): p.stat().st_size
        for p in sorted((ws.root).rglob("*")) if p.is_file()
    }
    # the fuzz run performed zero writes inside the workspace
    assert {k: v for k, v in after.items() if "sessions" not in k} == \
        {k: v for k, v in snapshot.items() if "sessions" not in k}
    assert secret.read_text() == "outside-the-workspace"
