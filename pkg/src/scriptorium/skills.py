"""Skill files: front-matter parsing, prerequisite checks, pipeline planning.

A skill lives at skills/<name>/SKILL.md: a `---`-delimited front-matter
block (keys `name`, `description`, `requires`, optional `produces`)
followed by a prose body the agent executes. `requires`/`produces` name
artifact files relative to data/<source>/ of the selected source, which
is how independent skills chain into an ordered pipeline.

Front matter is deliberately a minimal subset: string scalars (with
indented continuation lines), single-line flow lists, and the literal
`(none)`. Anything fancier is rejected so hand-authored typos surface.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

from .errors import (
    CycleDetected,
    DuplicateKey,
    MalformedFrontMatter,
    UnknownSkill,
    UnsatisfiableRequirement,
)
from .workspace import Workspace

KNOWN_KEYS = ("name", "description", "requires", "produces")


@dataclass(frozen=True)
class Skill:
    name: str
    description: str = ""
    requires: tuple[str, ...] = ()
    produces: tuple[str, ...] = ()
    body: str = ""


@dataclass(frozen=True)
class HaltReport:
    """Outcome of a failed prerequisite check; a value, not an exception."""
    skill: str
    missing: tuple[str, ...]

    @property
    def message(self) -> str:
        listed = ", ".join(self.missing)
        return f"skill {self.skill!r} halted: missing required artifact(s): {listed}"


@dataclass(frozen=True)
class SkillPlan:
    steps: tuple[str, ...]
    target: str


def _parse_list(value: str, key: str) -> tuple[str, ...]:
    value = value.strip()
    if not value or value == "(none)":
        return ()
    if value.startswith("["):
        if not value.endswith("]"):
            raise MalformedFrontMatter(f"unterminated list for {key!r}")
        items = [v.strip() for v in value[1:-1].split(",")]
        items = [v for v in items if v]
    else:
        items = [value]
    for item in items:
        parts = PurePosixPath(item).parts
        if item.startswith("/") or ".." in parts:
            raise MalformedFrontMatter(
                f"{key} entry {item!r} must be a relative path without '..'"
            )
    return tuple(items)


def parse_skill(text: str) -> Skill:
    """Parse SKILL.md text into a Skill value."""
    lines = text.split("\n")
    if not lines or lines[0].strip() != "---":
        raise MalformedFrontMatter("missing opening --- delimiter")
    fields: dict[str, str] = {}
    current_key: str | None = None
    close_index = None
    for i, line in enumerate(lines[1:], start=1):
        if line.strip() == "---":
            close_index = i
            break
        if not line.strip():
            current_key = None
            continue
        if line[0] in (" ", "\t"):
            if current_key is None:
                raise MalformedFrontMatter(f"stray continuation line: {line!r}")
            fields[current_key] = fields[current_key] + " " + line.strip()
            continue
        key, sep, value = line.partition(":")
        key = key.strip()
        if not sep or not key:
            raise MalformedFrontMatter(f"not a key: value line: {line!r}")
        if key in fields:
            raise DuplicateKey(f"duplicate front-matter key {key!r}")
        if key not in KNOWN_KEYS:
            raise MalformedFrontMatter(f"unknown front-matter key {key!r}")
        fields[key] = value.strip()
        current_key = key
    if close_index is None:
        raise MalformedFrontMatter("missing closing --- delimiter")
    name = fields.get("name", "").strip()
    if not name:
        raise MalformedFrontMatter("front matter has no name")
    body = "\n".join(lines[close_index + 1:]).lstrip("\n")
    return Skill(
        name=name,
        description=fields.get("description", ""),
        requires=_parse_list(fields.get("requires", ""), "requires"),
        produces=_parse_list(fields.get("produces", ""), "produces"),
        body=body,
    )


def serialize_skill(skill: Skill) -> str:
    """Inverse of parse_skill for single-line field values."""
    lines = ["---", f"name: {skill.name}"]
    if skill.description:
        lines.append(f"description: {skill.description}")
    if skill.requires:
        lines.append("requires: [" + ", ".join(skill.requires) + "]")
    else:
        lines.append("requires: (none)")
    if skill.produces:
        lines.append("produces: [" + ", ".join(skill.produces) + "]")
    lines.append("---")
    return "\n".join(lines) + "\n\n" + skill.body


def load_skills(ws: Workspace) -> dict[str, Skill]:
    """Parse every skills/<name>/SKILL.md in the workspace."""
    out: dict[str, Skill] = {}
    skills_dir = ws.root / "skills"
    if skills_dir.is_dir():
        for entry in sorted(skills_dir.iterdir()):
            path = entry / "SKILL.md"
            if path.is_file():
                skill = parse_skill(path.read_text(encoding="utf-8"))
                out[skill.name] = skill
    return out


def check_prereqs(skill: Skill, source: str, ws: Workspace) -> HaltReport | None:
    """None when every required artifact exists under data/<source>/."""
    data_dir = ws.data_dir(source)
    missing = tuple(r for r in skill.requires if not (data_dir / r).is_file())
    if missing:
        return HaltReport(skill=skill.name, missing=missing)
    return None


def plan(skills: dict[str, Skill], target: str, on_disk: set[str] | None = None) -> SkillPlan:
    """Topologically order the skills needed to reach `target`.

    Dependencies are artifact-mediated: a skill requiring artifact X
    depends on the skill whose `produces` lists X. Artifacts already on
    disk (`on_disk`) satisfy requirements without a producer.
    """
    if target not in skills:
        raise UnknownSkill(f"no skill named {target!r}")
    on_disk = on_disk or set()
    producers: dict[str, str] = {}
    for skill in skills.values():
        for artifact in skill.produces:
            producers.setdefault(artifact, skill.name)

    order: list[str] = []
    visiting: list[str] = []
    done: set[str] = set()

    def visit(name: str) -> None:
        if name in done:
            return
        if name in visiting:
            cycle = visiting[visiting.index(name):] + [name]
            raise CycleDetected("dependency cycle: " + " -> ".join(cycle))
        visiting.append(name)
        for artifact in skills[name].requires:
            if artifact in on_disk:
                continue
            producer = producers.get(artifact)
            if producer is not None and producer != name:
                visit(producer)
            else:
                raise UnsatisfiableRequirement(
                    f"skill {name!r} requires {artifact!r}, which no skill "
                    "produces and which is not on disk"
                )
        visiting.pop()
        done.add(name)
        order.append(name)

    visit(target)
    return SkillPlan(steps=tuple(order), target=target)
