from __future__ import annotations

import random

import pytest

from scriptorium.errors import HeaderMismatch, NoInputFiles
from scriptorium.merge import merge, read_merged, verify_provenance

COLUMNS = ["Name", "Beruf", "Strasse", "Hausnummer"]


def _write_page(data_dir, page_id, rows, trailing_newline=True, columns=None):
    data_dir.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(columns or COLUMNS)] + ["\t".join(r) for r in rows]
    text = "\n".join(lines)
    if trailing_newline:
        text += "\n"
    (data_dir / f"entries_{page_id:04d}.tsv").write_text(text, encoding="utf-8")


def test_merge_prepends_page_id(tmp_path):
    _write_page(tmp_path, 3, [["Müller, A.", "Kfm.", "Marktſtraße", "7"]])
    _write_page(tmp_path, 12, [["Schmidt, B.", "Bäcker", "Ringweg", "4"]])
    merged = merge(tmp_path, COLUMNS)
    assert merged.columns == ["page_id"] + COLUMNS
    assert merged.rows[0][0] == "3"
    assert merged.rows[1][0] == "12"
    assert merged.rows[0][1] == "Müller, A."


def test_merge_orders_pages_numerically(tmp_path):
    for page in (100, 2, 30):
        _write_page(tmp_path, page, [[f"p{page}", "x", "y", "1"]])
    merged = merge(tmp_path, COLUMNS)
    assert [r[0] for r in merged.rows] == ["2", "30", "100"]


def test_merge_handles_missing_trailing_newline(tmp_path):
    _write_page(tmp_path, 1, [["a", "b", "c", "1"], ["d", "e", "f", "2"]],
                trailing_newline=False)
    merged = merge(tmp_path, COLUMNS)
    assert len(merged.rows) == 2
    assert merged.rows[-1][1:] == ["d", "e", "f", "2"]


def test_merge_output_has_trailing_newline(tmp_path):
    _write_page(tmp_path, 1, [["a", "b", "c", "1"]], trailing_newline=False)
    merge(tmp_path, COLUMNS)
    text = (tmp_path / "entries.tsv").read_bytes()
    assert text.endswith(b"\n")
    assert not text.endswith(b"\n\n")


def test_merge_header_mismatch(tmp_path):
    _write_page(tmp_path, 1, [["a", "b", "c", "1"]])
    _write_page(tmp_path, 2, [["x", "y"]], columns=["Name", "Ort"])
    with pytest.raises(HeaderMismatch) as exc:
        merge(tmp_path, COLUMNS)
    assert exc.value.page_id == 2


def test_merge_no_inputs(tmp_path):
    tmp_path.mkdir(exist_ok=True)
    with pytest.raises(NoInputFiles):
        merge(tmp_path, COLUMNS)


def test_merge_skips_empty_files(tmp_path):
    _write_page(tmp_path, 1, [["a", "b", "c", "1"]])
    (tmp_path / "entries_0002.tsv").write_text("", encoding="utf-8")
    merged = merge(tmp_path, COLUMNS)
    assert len(merged.rows) == 1


def test_merge_include_pages_filter(tmp_path):
    for page in (1, 2, 3):
        _write_page(tmp_path, page, [[f"p{page}", "x", "y", "1"]])
    merged = merge(tmp_path, COLUMNS, include_pages={1, 3})
    assert [r[0] for r in merged.rows] == ["1", "3"]


def test_read_merged_round_trip(tmp_path):
    _write_page(tmp_path, 5, [["Groß, C.", "Wwe.", "Eichenallee", "9"]])
    merge(tmp_path, COLUMNS)
    merged = read_merged(tmp_path / "entries.tsv")
    assert merged.columns == ["page_id"] + COLUMNS
    assert merged.rows == [["5", "Groß, C.", "Wwe.", "Eichenallee", "9"]]


def test_verify_provenance_clean(tmp_path):
    for page in (1, 2):
        _write_page(tmp_path, page, [[f"n{page}", "b", "s", str(page)]])
    merged = merge(tmp_path, COLUMNS)
    assert verify_provenance(merged, tmp_path) == []


def test_verify_provenance_detects_tampering(tmp_path):
    for page in (1, 2):
        _write_page(tmp_path, page, [[f"n{page}", "b", "s", str(page)]])
    merged = merge(tmp_path, COLUMNS)
    merged.rows[0][1] = "forged"
    violations = verify_provenance(merged, tmp_path)
    assert violations


def test_verify_provenance_detects_dropped_row(tmp_path):
    _write_page(tmp_path, 1, [["a", "b", "c", "1"], ["d", "e", "f", "2"]])
    merged = merge(tmp_path, COLUMNS)
    merged.rows.pop()
    assert verify_provenance(merged, tmp_path)


def test_randomized_conservation(tmp_path):
    """Row counts and page ids survive random batch shapes and glyphs."""
    rng = random.Random(20260826)
    glyphs = ["Müller", "Groß", "ſchön", "Bäcker", "Straße", "Wirtſchaft"]
    expected_total = 0
    per_page = {}
    for page in rng.sample(range(1, 500), 40):
        rows = [
            [rng.choice(glyphs), rng.choice(glyphs), rng.choice(glyphs), str(rng.randint(1, 99))]
            for _ in range(rng.randint(1, 12))
        ]
        per_page[page] = len(rows)
        expected_total += len(rows)
        _write_page(tmp_path, page, rows, trailing_newline=rng.random() < 0.5)
    merged = merge(tmp_path, COLUMNS)
    assert len(merged.rows) == expected_total
    counts = {}
    for row in merged.rows:
        counts[int(row[0])] = counts.get(int(row[0]), 0) + 1
    assert counts == per_page
    assert verify_provenance(merged, tmp_path) == []
