"""Synthetic source generator for offline runs and tests.

Builds a workspace holding a fake scanned "city directory": numbered PNG
pages, a ground-truth oracle table for the mock provider, the four
pipeline skill files, and mock model routes. Everything is a pure
function of the seed, so repeated builds are byte-identical.
"""
from __future__ import annotations

import json
import random
import tempfile
from pathlib import Path

from PIL import Image

from . import workspace as ws_mod
from .config import GatewayConfig, ModelRoute
from .workspace import Workspace

MOCK_DIR = ".chronos/mock"

COLUMNS = ["Name", "Beruf", "Strasse", "Hausnummer"]

_SURNAMES = [
    "Müller", "Schäfer", "Groß", "Weiß", "Schloßer", "Hoffmann", "Caſpar",
    "Böttcher", "Jäger", "Künzel", "Straßburger", "Oßwald", "Löwe", "Vößler",
]
_OCCUPATIONS = ["Kfm.", "Schneider", "Bäcker", "Wwe.", "Schloſſer", "Lehrer", "Gärtner"]
_STREETS = ["Hauptstraße", "Marktgaſſe", "Königsallee", "Mühlenweg", "Schloßplatz"]

DEFAULT_LEGEND = [["Kfm.", "Kaufmann"], ["Wwe.", "Witwe"], ["Gärtn.", "Gärtner"]]

SKILL_FILES = {
    "range-finder": """---
name: range-finder
description: Find the alphabetical name-list page range in the source
requires: (none)
produces: name_ranges.json
---

Step 1 -- Read the per-source memory file for earlier findings.
Step 2 -- Orient: call list_pages to learn the page count.
Step 3 -- Find the table of contents; if absent, binary-search the pages.
Step 4 -- Resolve the printed-page offset and verify both boundaries.
Step 5 -- Search for supplements and write name_ranges.json.
""",
    "prompt-construction": """---
name: prompt-construction
description: Build and validate the extraction prompt for the name list
requires: name_ranges.json
produces: [batch_prompt.md, abbreviation_lookup.json, test_extraction.json]
---

Step 1 -- Scan pages around the range for abbreviation tables or legends.
Step 2 -- Transcribe any legend and write abbreviation_lookup.json.
Step 3 -- Assemble the base prompt with column definitions and rules.
Step 4 -- Test the prompt on a random representative page and show the
result beside the scan for review.
""",
    "batch-extract": """---
name: batch-extract
description: Run the validated prompt over every page in the range
requires: [batch_prompt.md, test_extraction.json]
produces: batch_manifest.json
---

Step 1 -- Estimate the cost and propose the batch for approval.
Step 2 -- After approval, process each page with an independent worker
writing entries_NNNN.tsv, retrying transient failures.
Step 3 -- Validate the results: missing files, column consistency,
code-fence artifacts, empty pages.
""",
    "merge": """---
name: merge
description: Combine per-page TSV files into one dataset with provenance
requires: batch_manifest.json
produces: entries.tsv
---

Step 1 -- Read every entries_NNNN.tsv in ascending page order.
Step 2 -- Prefix each row with its page_id and write entries.tsv,
guarding against missing trailing newlines and multi-byte text.
Step 3 -- Verify row counts reconcile with the per-page files.
""",
}


def generate_rows(source: str, page_id: int, seed: int = 0) -> list[list[str]]:
    """Deterministic ground-truth rows for one page."""
    rng = random.Random(f"{seed}:{source}:{page_id}")
    rows = []
    for _ in range(rng.randint(5, 14)):
        rows.append([
            rng.choice(_SURNAMES) + ", " + rng.choice(["J.", "A.", "Chr.", "Frz."]),
            rng.choice(_OCCUPATIONS),
            rng.choice(_STREETS),
            str(rng.randint(1, 199)),
        ])
    return rows


def expected_page_tsv(oracle: dict, page_id: int) -> str:
    """The TSV text a clean extraction of this page produces."""
    lines = ["\t".join(oracle["columns"])]
    lines += ["\t".join(r) for r in oracle["rows"][str(page_id)]]
    return "\n".join(lines) + "\n"


def _page_image(page_id: int) -> Image.Image:
    # Encode the page id into pixels so every page file is byte-distinct.
    img = Image.new("L", (12, 12), color=255)
    for bit in range(14):
        if page_id >> bit & 1:
            img.putpixel((bit % 12, bit // 12), 0)
    return img


def build_oracle(
    source: str,
    n_pages: int = 200,
    start: int = 37,
    end: int = 150,
    offset: int = 4,
    toc_page: int | None = 3,
    toc_lists_end: bool = True,
    legend_page: int | None = 35,
    supplements: list[tuple[int, int, str]] | None = None,
    faults: dict | None = None,
    seed: int = 0,
) -> dict:
    if supplements is None:
        supplements = [(151, 153, "Nachträge")]
    rows = {}
    supplement_pages = {
        p for s, e, _ in supplements for p in range(s, e + 1)
    }
    for page in sorted(set(range(start, end + 1)) | supplement_pages):
        rows[str(page)] = generate_rows(source, page, seed)
    oracle = {
        "section": "Namensliste",
        "n_pages": n_pages,
        "start_page_id": start,
        "end_page_id": end,
        "printed_page_offset": offset,
        "toc_page": toc_page,
        "toc_printed_start": start - offset,
        "toc_printed_end": (end - offset) if toc_lists_end else None,
        "legend_pages": (
            {str(legend_page): DEFAULT_LEGEND} if legend_page else {}
        ),
        "unnumbered_pages": [1, 2, 4] + ([toc_page] if toc_page else []),
        "supplements": [list(s) for s in supplements],
        "columns": COLUMNS,
        "rows": rows,
        "faults": faults or {},
    }
    return oracle


def oracle_path(ws: Workspace, source: str) -> Path:
    return ws.root / MOCK_DIR / f"{source}.json"


def write_oracle(ws: Workspace, source: str, oracle: dict) -> Path:
    path = oracle_path(ws, source)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(oracle, ensure_ascii=False, indent=1), encoding="utf-8")
    return path


def install_skills(ws: Workspace) -> None:
    for name, text in SKILL_FILES.items():
        path = ws.skill_path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def mock_routes(config: GatewayConfig) -> None:
    config.set_route(ModelRoute(
        task_kind="orchestration", provider="mock", model="mock-orchestrator",
        price_in=0.003, price_out=0.015, image_token_constant=1100,
    ))
    config.set_route(ModelRoute(
        task_kind="extraction", provider="mock", model="mock-extractor",
        price_in=0.002, price_out=0.01, image_token_constant=1100,
    ))


def build_city_directory(
    root: str | Path,
    source: str = "book1",
    **oracle_kwargs,
) -> tuple[Workspace, dict]:
    """Scaffold a workspace with one synthetic source and mock config."""
    ws = ws_mod.scaffold(root)
    oracle = build_oracle(source, **oracle_kwargs)
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        for page in range(1, oracle["n_pages"] + 1):
            _page_image(page).save(tmp_path / f"scan_{page:05d}.png")
        ws_mod.import_source(ws, source, tmp_path)
    write_oracle(ws, source, oracle)
    install_skills(ws)
    mock_routes(ws.config)
    ws.config.set("prompt.columns", ",".join(COLUMNS))
    ws.config.set("range.section", oracle["section"])
    ws.config.save(ws.root)
    return ws, oracle
