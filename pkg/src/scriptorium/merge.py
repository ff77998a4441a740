"""Merging per-page TSV files into one provenance-tracked dataset.

Files are consumed as byte streams with strict UTF-8 validation; a file
whose final line lacks a newline still contributes that line as a
complete row, and multi-byte text passes through byte-identically. Every
output row is prefixed with the page_id of the file it came from.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import HeaderMismatch, NoInputFiles

log = logging.getLogger(__name__)

ENTRIES_RE = re.compile(r"^entries_(\d{4})\.tsv$")
OUTPUT_FILE = "entries.tsv"


@dataclass
class MergedDataset:
    columns: list[str]  # ["page_id"] + extraction columns
    rows: list[list[str]] = field(default_factory=list)
    source: str = ""


def _page_files(data_dir: Path) -> list[tuple[int, Path]]:
    out = []
    for p in data_dir.iterdir():
        m = ENTRIES_RE.match(p.name)
        if m:
            out.append((int(m.group(1)), p))
    out.sort()
    return out


def _read_rows(path: Path) -> list[str]:
    """Decode a page file strictly as UTF-8 and split into logical lines.

    A missing final newline must not swallow the last row or let it run
    into the next file, so splitting happens on the decoded text of this
    file alone.
    """
    text = path.read_bytes().decode("utf-8")  # strict: raises on bad bytes
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # trailing newline present
    return lines


def merge(
    data_dir: str | Path,
    expected_columns: list[str],
    include_pages: set[int] | None = None,
    output_name: str = OUTPUT_FILE,
) -> MergedDataset:
    """Combine entries_NNNN.tsv files into data_dir/entries.tsv.

    Fully automated: ascending page order, one header row, each data row
    prefixed with its file's page_id, trailing newline guaranteed.
    """
    data_dir = Path(data_dir)
    files = _page_files(data_dir)
    if include_pages is not None:
        files = [(pid, p) for pid, p in files if pid in include_pages]
    if not files:
        raise NoInputFiles(f"no entries_NNNN.tsv files in {data_dir}")
    dataset = MergedDataset(columns=["page_id"] + list(expected_columns),
                            source=data_dir.name)
    out_path = data_dir / output_name
    with out_path.open("w", encoding="utf-8", newline="") as out:
        out.write("\t".join(dataset.columns) + "\n")
        for page_id, path in files:
            lines = _read_rows(path)
            if not lines:
                log.info("page %d: empty file, contributes no rows", page_id)
                continue
            header = lines[0].split("\t")
            if header != list(expected_columns):
                raise HeaderMismatch(page_id, list(expected_columns), header)
            if len(lines) == 1:
                log.info("page %d: header only, contributes no rows", page_id)
            for line in lines[1:]:
                out.write(f"{page_id}\t{line}\n")
                dataset.rows.append([str(page_id)] + line.split("\t"))
    return dataset


def read_merged(path: str | Path) -> MergedDataset:
    lines = _read_rows(Path(path))
    if not lines:
        raise NoInputFiles(f"{path} is empty")
    columns = lines[0].split("\t")
    return MergedDataset(columns=columns,
                         rows=[line.split("\t") for line in lines[1:]])


def verify_provenance(merged: MergedDataset, data_dir: str | Path) -> list[str]:
    """Check every merged row against its claimed per-page file.

    Returns the list of violations; empty means the dataset reconciles.
    """
    data_dir = Path(data_dir)
    violations: list[str] = []
    per_page: dict[int, list[str]] = {}
    for page_id, path in _page_files(data_dir):
        lines = _read_rows(path)
        per_page[page_id] = lines[1:] if lines else []

    cursor: dict[int, int] = {}
    for i, row in enumerate(merged.rows):
        if not row or not row[0].isdigit():
            violations.append(f"row {i}: page_id {row[0] if row else ''!r} not an integer")
            continue
        page_id = int(row[0])
        source_rows = per_page.get(page_id)
        if source_rows is None:
            violations.append(f"row {i}: no per-page file for page {page_id}")
            continue
        j = cursor.get(page_id, 0)
        if j >= len(source_rows):
            violations.append(f"row {i}: page {page_id} has only {len(source_rows)} rows")
            continue
        if "\t".join(row[1:]) != source_rows[j]:
            violations.append(
                f"row {i}: page {page_id} row {j} differs from the source file"
            )
        cursor[page_id] = j + 1

    used_pages = {int(r[0]) for r in merged.rows if r and r[0].isdigit()}
    expected_total = sum(len(per_page[p]) for p in used_pages if p in per_page)
    if len(merged.rows) != expected_total:
        violations.append(
            f"row-count mismatch: merged {len(merged.rows)} vs per-file {expected_total}"
        )
    for page_id, rows in per_page.items():
        if page_id in used_pages and cursor.get(page_id, 0) != len(rows):
            violations.append(
                f"page {page_id}: only {cursor.get(page_id, 0)} of {len(rows)} rows merged"
            )
    return violations
