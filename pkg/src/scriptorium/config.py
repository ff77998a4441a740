"""Gateway configuration: `.chronos/config` parsing, defaults, model routes.

The config file is a flat key-value file (`key = value`, `#` comments).
Provider credentials may alternatively come from environment variables
(`<PROVIDER>_API_KEY`), which take precedence over the file.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import NoRoute

CONFIG_DIR = ".chronos"
CONFIG_FILE = "config"

DEFAULTS: dict[str, object] = {
    "toc.front_window": 15,
    "toc.back_window": 10,
    "supplement.window": 10,
    "batch.parallelism": 8,
    "batch.retries": 2,
    "batch.output_safety_factor": 1.2,
    "batch.chars_per_token": 4,
    "agent.max_tool_rounds": 50,
    "merge.supplements_separate": False,
    "prompt.auto_pass": False,
}

TASK_KINDS = ("orchestration", "extraction")


@dataclass(frozen=True)
class ModelRoute:
    task_kind: str
    provider: str
    model: str
    price_in: float = 0.0       # currency per 1000 input tokens
    price_out: float = 0.0      # currency per 1000 output tokens
    image_token_constant: int = 1100

    def __post_init__(self):
        if self.price_in < 0 or self.price_out < 0:
            raise ValueError("route prices must be nonnegative")


class GatewayConfig:
    """Key-value configuration with typed accessors and a route table."""

    def __init__(self, values: dict[str, str] | None = None):
        self.values: dict[str, str] = dict(values or {})

    @classmethod
    def load(cls, workspace_root: str | Path) -> "GatewayConfig":
        path = Path(workspace_root) / CONFIG_DIR / CONFIG_FILE
        values: dict[str, str] = {}
        if path.is_file():
            for raw in path.read_text(encoding="utf-8").splitlines():
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    continue
                values[key.strip()] = value.strip()
        return cls(values)

    def save(self, workspace_root: str | Path) -> Path:
        path = Path(workspace_root) / CONFIG_DIR / CONFIG_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{k} = {v}" for k, v in sorted(self.values.items())]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    # -- typed accessors ------------------------------------------------------

    def get(self, key: str, default: object = None) -> object:
        if key in self.values:
            return self.values[key]
        if default is not None:
            return default
        return DEFAULTS.get(key)

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def get_float(self, key: str) -> float:
        return float(self.get(key))

    def get_bool(self, key: str) -> bool:
        value = self.get(key)
        if isinstance(value, bool):
            return value
        return str(value).lower() in ("1", "true", "yes", "on")

    def set(self, key: str, value: object) -> None:
        self.values[key] = str(value)

    # -- routes and credentials ----------------------------------------------

    def route(self, task_kind: str) -> ModelRoute:
        """Look up the active route for a task kind, or raise NoRoute."""
        if task_kind not in TASK_KINDS:
            raise NoRoute(f"unknown task kind {task_kind!r}")
        prefix = f"route.{task_kind}."
        provider = self.values.get(prefix + "provider")
        model = self.values.get(prefix + "model")
        if not provider or not model:
            raise NoRoute(f"no route configured for {task_kind!r}")
        return ModelRoute(
            task_kind=task_kind,
            provider=provider,
            model=model,
            price_in=float(self.values.get(prefix + "price_in", "0")),
            price_out=float(self.values.get(prefix + "price_out", "0")),
            image_token_constant=int(
                self.values.get(prefix + "image_tokens", "1100")
            ),
        )

    def set_route(self, route: ModelRoute) -> None:
        prefix = f"route.{route.task_kind}."
        self.values[prefix + "provider"] = route.provider
        self.values[prefix + "model"] = route.model
        self.values[prefix + "price_in"] = str(route.price_in)
        self.values[prefix + "price_out"] = str(route.price_out)
        self.values[prefix + "image_tokens"] = str(route.image_token_constant)

    def credential(self, provider: str) -> str | None:
        """API key for a provider; environment wins over the config file."""
        env = os.environ.get(f"{provider.upper()}_API_KEY")
        if env:
            return env
        return self.values.get(f"provider.{provider}.api_key")
