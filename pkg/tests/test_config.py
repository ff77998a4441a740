from __future__ import annotations

import pytest

from scriptorium.config import GatewayConfig, ModelRoute
from scriptorium.errors import NoRoute


def test_defaults_without_file(tmp_path):
    cfg = GatewayConfig.load(tmp_path)
    assert cfg.get_int("batch.parallelism") == 8
    assert cfg.get_int("batch.retries") == 2
    assert cfg.get_float("batch.output_safety_factor") == pytest.approx(1.2)


def test_round_trip(tmp_path):
    cfg = GatewayConfig.load(tmp_path)
    cfg.set("batch.parallelism", "4")
    cfg.set("range.section", "Namensliste")
    cfg.save(tmp_path)
    text = (tmp_path / ".chronos" / "config").read_text(encoding="utf-8")
    assert "batch.parallelism = 4" in text
    again = GatewayConfig.load(tmp_path)
    assert again.get_int("batch.parallelism") == 4
    assert again.get("range.section") == "Namensliste"


def test_comments_and_blank_lines_ignored(tmp_path):
    (tmp_path / ".chronos").mkdir()
    (tmp_path / ".chronos" / "config").write_text(
        "# tuning\n\nbatch.retries = 5\n", encoding="utf-8",
    )
    cfg = GatewayConfig.load(tmp_path)
    assert cfg.get_int("batch.retries") == 5


def test_routes_round_trip(tmp_path):
    cfg = GatewayConfig.load(tmp_path)
    with pytest.raises(NoRoute):
        cfg.route("extraction")
    cfg.set_route(ModelRoute(
        task_kind="extraction", provider="mock", model="m1",
        price_in=0.002, price_out=0.01, image_token_constant=1100,
    ))
    cfg.save(tmp_path)
    route = GatewayConfig.load(tmp_path).route("extraction")
    assert route.provider == "mock" and route.model == "m1"
    assert route.price_out == pytest.approx(0.01)
    assert route.image_token_constant == 1100


def test_env_credential_wins(tmp_path, monkeypatch):
    cfg = GatewayConfig.load(tmp_path)
    cfg.set("provider.acme.api_key", "from-file")
    assert cfg.credential("acme") == "from-file"
    monkeypatch.setenv("ACME_API_KEY", "from-env")
    assert cfg.credential("acme") == "from-env"


def test_get_bool(tmp_path):
    cfg = GatewayConfig.load(tmp_path)
    cfg.set("merge.supplements_separate", "true")
    assert cfg.get_bool("merge.supplements_separate") is True
    cfg.set("merge.supplements_separate", "false")
    assert cfg.get_bool("merge.supplements_separate") is False
