from __future__ import annotations

import pytest

from scriptorium import fixtures
from scriptorium.agent import EngineContext


@pytest.fixture()
def small_directory(tmp_path):
    """A 60-page synthetic directory: section 12-40, offset 4, supplements 41-42."""
    ws, oracle = fixtures.build_city_directory(
        tmp_path / "ws", n_pages=60, start=12, end=40, offset=4,
        toc_page=3, legend_page=10, supplements=[(41, 42, "Nachträge")],
    )
    return ws, oracle


@pytest.fixture()
def small_ctx(small_directory):
    ws, oracle = small_directory
    return EngineContext.create(ws, source="book1"), oracle


@pytest.fixture(scope="session")
def full_directory(tmp_path_factory):
    """The 200-page fixture matching the documented ground truth. Read-only."""
    root = tmp_path_factory.mktemp("fullws") / "ws"
    ws, oracle = fixtures.build_city_directory(root)
    return ws, oracle
