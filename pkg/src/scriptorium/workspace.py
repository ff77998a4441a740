"""Workspace layout: scaffolding, source import, page enumeration, memory.

A workspace is a rooted directory tree that strictly separates read-only
scanned sources from everything the engine derives from them:

    sources/<name>/png/page_NNNN.png   scanned pages (never written)
    data/<name>/                       extraction artifacts
    memory/MEMORY.MD, memory/<name>.md persistent notes
    skills/<skill>/SKILL.md            reusable procedures
    sessions/*.jsonl                   conversation logs
    .chronos/                          config, lock, mock fixtures
"""
from __future__ import annotations

import fcntl
import re
import shutil
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .config import CONFIG_DIR, GatewayConfig
from .errors import NoPages, PathNotWritable, SourceExists, UnknownSource, WorkspaceLocked

TOP_DIRS = ("sources", "data", "memory", "skills", "sessions", CONFIG_DIR)
PAGE_RE = re.compile(r"^page_(\d{4})\.png$")
SOURCE_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
MAX_PAGES = 9999
GLOBAL_MEMORY = "MEMORY.MD"


@dataclass(frozen=True)
class PageRef:
    source: str
    page_id: int  # 1-based tool page id, matches the file-name index

    def filename(self) -> str:
        return f"page_{self.page_id:04d}.png"


@dataclass(frozen=True)
class Source:
    name: str
    page_count: int


@dataclass
class Workspace:
    root: Path
    config: GatewayConfig = field(default_factory=GatewayConfig)

    def __post_init__(self):
        self.root = Path(self.root).resolve()

    # -- path helpers ---------------------------------------------------------

    def sources_dir(self) -> Path:
        return self.root / "sources"

    def data_dir(self, source: str) -> Path:
        return self.root / "data" / source

    def source_dir(self, name: str) -> Path:
        return self.sources_dir() / name / "png"

    def page_path(self, page: PageRef) -> Path:
        return self.source_dir(page.source) / page.filename()

    def memory_path(self, scope: str | None) -> Path:
        if scope is None or scope == "global":
            return self.root / "memory" / GLOBAL_MEMORY
        return self.root / "memory" / f"{scope}.md"

    def skill_path(self, name: str) -> Path:
        return self.root / "skills" / name / "SKILL.md"

    # -- queries --------------------------------------------------------------

    def sources(self) -> list[Source]:
        out = []
        base = self.sources_dir()
        if base.is_dir():
            for entry in sorted(base.iterdir()):
                if entry.is_dir() and (entry / "png").is_dir():
                    out.append(Source(entry.name, _count_pages(entry / "png")))
        return out

    def source(self, name: str) -> Source:
        png = self.source_dir(name)
        if not png.is_dir():
            raise UnknownSource(f"no source named {name!r}")
        return Source(name, _count_pages(png))

    def has_page(self, page: PageRef) -> bool:
        return self.page_path(page).is_file()


def _count_pages(png_dir: Path) -> int:
    return sum(1 for p in png_dir.iterdir() if PAGE_RE.match(p.name))


# -- operations ----------------------------------------------------------------

def scaffold(root: str | Path) -> Workspace:
    """Create the six top-level directories; idempotent, never overwrites."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        for name in TOP_DIRS:
            (root / name).mkdir(exist_ok=True)
    except OSError as exc:
        raise PathNotWritable(f"cannot scaffold {root}: {exc}") from exc
    return Workspace(root=root, config=GatewayConfig.load(root))


def load(root: str | Path) -> Workspace:
    root = Path(root)
    if not all((root / d).is_dir() for d in TOP_DIRS):
        raise UnknownSource(f"{root} is not a scaffolded workspace")
    return Workspace(root=root, config=GatewayConfig.load(root))


def import_source(ws: Workspace, name: str, images: str | Path) -> Source:
    """Copy image files into sources/<name>/png/ as page_0001.png onward.

    Files are taken in lexicographic order of their original names; only
    .png files are accepted (convert other formats beforehand).
    """
    if not SOURCE_NAME_RE.match(name):
        raise NoPages(f"source name {name!r} is not directory-safe")
    dest = ws.source_dir(name)
    if dest.parent.exists():
        raise SourceExists(f"source {name!r} already imported")
    images = Path(images)
    files = sorted(p for p in images.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise NoPages(f"{images} contains no .png files")
    if len(files) > MAX_PAGES:
        raise NoPages(f"{len(files)} pages exceeds the page_NNNN.png limit of {MAX_PAGES}")
    dest.mkdir(parents=True)
    for i, src in enumerate(files, start=1):
        target = dest / f"page_{i:04d}.png"
        shutil.copyfile(src, target)
        target.chmod(target.stat().st_mode & ~0o222)
    return Source(name, len(files))


def list_pages(ws: Workspace, name: str) -> list[PageRef]:
    source = ws.source(name)
    return [PageRef(name, i) for i in range(1, source.page_count + 1)]


@dataclass(frozen=True)
class WriteDecision:
    allowed: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.allowed


def guard_write(ws: Workspace, target: str | Path) -> WriteDecision:
    """Decide whether a write target is permitted.

    Denies any path that resolves (after `..` normalization and symlinks)
    under sources/ or outside the workspace root. Total: never raises.
    """
    p = Path(str(target))
    if not p.is_absolute():
        p = ws.root / p
    try:
        resolved = p.resolve()
    except OSError:
        return WriteDecision(False, "unresolvable path")
    try:
        rel = resolved.relative_to(ws.root)
    except ValueError:
        return WriteDecision(False, "outside the workspace")
    if rel.parts and rel.parts[0] == "sources":
        return WriteDecision(False, "sources/ is read-only")
    return WriteDecision(True)


def append_memory(ws: Workspace, scope: str | None, section: str) -> Path:
    """Append a timestamped section to a memory file; never rewrites."""
    path = ws.memory_path(scope)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    block = f"\n## {stamp}\n\n{section.rstrip()}\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(block)
    except OSError as exc:
        raise PathNotWritable(f"cannot append to {path}: {exc}") from exc
    return path


@contextmanager
def workspace_lock(ws: Workspace):
    """Advisory single-mutator lock held in .chronos/."""
    lock_path = ws.root / CONFIG_DIR / "lock"
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    fh = lock_path.open("w")
    try:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            raise WorkspaceLocked(f"workspace {ws.root} is locked") from exc
        yield
    finally:
        fcntl.flock(fh, fcntl.LOCK_UN)
        fh.close()
