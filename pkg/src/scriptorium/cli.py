"""Command-line entry point.

Human-readable output goes to stdout, diagnostics to stderr; `--json`
switches every command to a single machine-readable JSON document.
Exit codes: 0 success, 2 usage, 10-19 per error class (see errors.py).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline, sessions as sessions_mod, skills as skills_mod
from . import viewer as viewer_mod
from . import workspace as ws_mod
from .agent import EngineContext, run_turn
from .config import ModelRoute
from .errors import EngineError, UnknownSkill
from .workspace import workspace_lock


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, ensure_ascii=False))
    else:
        print(human)


def _load_ctx(args, source: str | None = None) -> EngineContext:
    ws = ws_mod.load(Path(args.workspace))
    if args.mock:
        for kind in ("orchestration", "extraction"):
            try:
                route = ws.config.route(kind)
                ws.config.set_route(ModelRoute(
                    task_kind=kind, provider="mock", model=route.model,
                    price_in=route.price_in, price_out=route.price_out,
                    image_token_constant=route.image_token_constant,
                ))
            except EngineError:
                ws.config.set_route(ModelRoute(kind, "mock", "mock"))
    return EngineContext.create(ws, source=source)


def cmd_init(args) -> int:
    ws = ws_mod.scaffold(args.dir)
    _emit(args, {"workspace": str(ws.root)}, f"scaffolded workspace at {ws.root}")
    return 0


def cmd_import(args) -> int:
    ws = ws_mod.load(Path(args.workspace))
    with workspace_lock(ws):
        source = ws_mod.import_source(ws, args.name, args.dir)
    _emit(args, {"name": source.name, "page_count": source.page_count},
          f"imported {source.name}: {source.page_count} pages")
    return 0


def cmd_sources(args) -> int:
    ws = ws_mod.load(Path(args.workspace))
    sources = [{"name": s.name, "page_count": s.page_count} for s in ws.sources()]
    _emit(args, {"sources": sources},
          "\n".join(f"{s['name']}\t{s['page_count']} pages" for s in sources) or "(none)")
    return 0


def cmd_skills_list(args) -> int:
    ws = ws_mod.load(Path(args.workspace))
    loaded = skills_mod.load_skills(ws)
    payload = [
        {"name": s.name, "description": s.description,
         "requires": list(s.requires), "produces": list(s.produces)}
        for s in loaded.values()
    ]
    _emit(args, {"skills": payload},
          "\n".join(f"{s['name']}\t{s['description']}" for s in payload) or "(none)")
    return 0


def _approval_mode(args):
    if args.yes:
        return "yes"
    if args.via_ui:
        return "via-ui"

    def terminal(request):
        summary = json.dumps(request.summary, ensure_ascii=False, indent=1)
        print(f"batch approval requested:\n{summary}", file=sys.stderr)
        reply = input("approve? [y/N] ").strip().lower()
        decision = "granted" if reply in ("y", "yes") else "denied"
        from_ctx = terminal.ctx
        from_ctx.approvals.decide(request.id, decision, note="terminal prompt")
    return terminal


def cmd_run(args) -> int:
    ctx = _load_ctx(args, source=args.source)
    loaded = skills_mod.load_skills(ctx.ws)
    if args.skill not in loaded:
        raise UnknownSkill(f"no skill named {args.skill!r}")
    skill = loaded[args.skill]
    options: dict = {}
    if args.seed is not None:
        options["seed"] = args.seed
    if args.section:
        options["section"] = args.section
    if args.parallelism is not None:
        options["parallelism"] = args.parallelism
    if skill.name == "batch-extract":
        mode = _approval_mode(args)
        if callable(mode):
            mode.ctx = ctx
        options["approve"] = mode
    with workspace_lock(ctx.ws):
        record = pipeline.run_skill(ctx, skill, args.source, **options)
    _emit(args, {"skill": record.skill, "source": record.source,
                 "produced": record.produced, "session": str(ctx.session.path)},
          f"skill {record.skill} completed; produced: "
          + (", ".join(record.produced) or "(nothing declared)"))
    return 0


def cmd_merge(args) -> int:
    ctx = _load_ctx(args, source=args.source)
    with workspace_lock(ctx.ws):
        merged = pipeline.step_merge(ctx, args.source)
    _emit(args, {"rows": len(merged.rows), "columns": merged.columns},
          f"merged {len(merged.rows)} rows into data/{args.source}/entries.tsv")
    return 0


def cmd_serve(args) -> int:
    ctx = _load_ctx(args)
    static = args.static or _default_static()
    server = viewer_mod.serve(ctx, port=args.port, static_dir=static)
    print(f"viewer service on http://127.0.0.1:{server.port}/ "
          f"(static: {static or 'none'})", file=sys.stderr)
    try:
        import time
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.close()
    return 0


def _default_static() -> str | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return str(candidate) if candidate.is_dir() else None


def cmd_sessions_list(args) -> int:
    ws = ws_mod.load(Path(args.workspace))
    files = sorted((ws.root / "sessions").glob("*.jsonl"))
    payload = [{"file": f.name, "entries": sum(1 for _ in f.open())} for f in files]
    _emit(args, {"sessions": payload},
          "\n".join(f"{s['file']}\t{s['entries']} entries" for s in payload) or "(none)")
    return 0


def cmd_sessions_fork(args) -> int:
    ws = ws_mod.load(Path(args.workspace))
    for path in sorted((ws.root / "sessions").glob("*.jsonl")):
        tree = sessions_mod.resume(path)
        if args.id in tree.entries:
            head = tree.fork(args.id)
            _emit(args, {"file": path.name, "fork_at": head},
                  f"fork point {head} in {path.name}; new appends branch from it")
            return 0
    raise EngineError(f"no session entry {args.id!r} found")


def cmd_chat(args) -> int:
    ctx = _load_ctx(args, source=args.source)
    print("interactive chat; empty line or Ctrl-D exits", file=sys.stderr)
    while True:
        try:
            line = input("> ").strip()
        except EOFError:
            break
        if not line:
            break
        result = run_turn(ctx, line)
        if result.status == "pending_approval":
            print(f"[paused: approval {result.pending_approval_id} pending]")
        else:
            print(result.text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scriptorium",
        description="Turn scanned primary sources into structured datasets.",
    )
    parser.add_argument("--workspace", default=".", help="workspace directory")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--mock", action="store_true", help="force the mock provider")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="scaffold a workspace")
    p.add_argument("dir")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("import", help="import a source directory of .png scans")
    p.add_argument("name")
    p.add_argument("dir")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("sources", help="list imported sources")
    p.set_defaults(func=cmd_sources)

    p = sub.add_parser("skills", help="skill operations")
    skills_sub = p.add_subparsers(dest="skills_command", required=True)
    sp = skills_sub.add_parser("list", help="list workspace skills")
    sp.set_defaults(func=cmd_skills_list)

    p = sub.add_parser("run", help="run a skill against a source")
    p.add_argument("skill")
    p.add_argument("--source", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--section", default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--yes", action="store_true",
                   help="record a terminal-granted batch approval")
    p.add_argument("--via-ui", action="store_true",
                   help="block until the viewer approval decision arrives")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("merge", help="merge per-page TSVs with provenance")
    p.add_argument("--source", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("serve", help="run the local viewer service")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--static", default=None, help="static UI directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("sessions", help="session operations")
    sessions_sub = p.add_subparsers(dest="sessions_command", required=True)
    sp = sessions_sub.add_parser("list")
    sp.set_defaults(func=cmd_sessions_list)
    sp = sessions_sub.add_parser("fork")
    sp.add_argument("id")
    sp.set_defaults(func=cmd_sessions_fork)

    p = sub.add_parser("chat", help="interactive turn loop")
    p.add_argument("--source", required=True)
    p.set_defaults(func=cmd_chat)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.json:
            print(json.dumps({"error": str(exc), "class": type(exc).__name__}))
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
