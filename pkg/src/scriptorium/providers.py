"""Model gateway: one completion interface, three backends.

`complete(messages, images, model)` is the whole provider contract. The
bundled backends are:

  * MockVlmProvider — offline, fixture-driven, deterministic; answers
    page-analysis prompts from a ground-truth table keyed by (page id,
    prompt tag). This is the backend every test runs against.
  * OpenAiChatProvider / AnthropicProvider — thin HTTP adapters for the
    two common commercial chat-completion wire formats.

Providers must be safe to call from multiple worker threads.
"""
from __future__ import annotations

import base64
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ProviderError

# Prompt tags the engine embeds so a scripted backend can recognise the
# question being asked without natural-language understanding.
TAG_CLASSIFY = "[RANGE-CLASSIFY]"
TAG_TOC_SCAN = "[TOC-SCAN]"
TAG_TOC_EXTRACT = "[TOC-EXTRACT]"
TAG_PAGE_NUMBER = "[PAGE-NUMBER]"
TAG_SUPPLEMENT = "[SUPPLEMENT-CLASSIFY]"
TAG_LEGEND_SCAN = "[LEGEND-SCAN]"
TAG_LEGEND_TRANSCRIBE = "[LEGEND-TRANSCRIBE]"
# Extraction prompts carry no tag; they are recognised by this phrase,
# which the prompt builder always includes in the output-format section.
EXTRACTION_MARKER = "tab-separated"

PAGE_FILE_RE = re.compile(r"page_(\d{4})\.png$")


@dataclass(frozen=True)
class Completion:
    text: str
    tokens_in: int = 0
    tokens_out: int = 0
    tool_calls: tuple[dict, ...] = ()


class Provider:
    """Interface; subclasses implement complete()."""

    name = "abstract"

    def complete(
        self,
        messages: Sequence[dict],
        images: Sequence[Path] = (),
        model: str = "",
    ) -> Completion:
        raise NotImplementedError


def _estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4)


class MockVlmProvider(Provider):
    """Deterministic fixture-backed oracle.

    The oracle table describes one synthetic source: its section range,
    printed-page offset, table of contents, legend, supplements, and the
    ground-truth rows of every page. Fault entries make individual pages
    fail permanently, fail transiently, wrap output in code fences, or
    drop a column, so batch robustness can be exercised offline.
    """

    name = "mock"

    def __init__(self, oracle: dict):
        self.oracle = oracle
        self._attempts: dict[int, int] = {}
        self._lock = threading.Lock()
        self.call_count = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "MockVlmProvider":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    # -- helpers --------------------------------------------------------------

    def _page_id(self, images: Sequence[Path]) -> int | None:
        for image in images:
            m = PAGE_FILE_RE.search(str(image))
            if m:
                return int(m.group(1))
        return None

    def _fault(self, page_id: int) -> dict:
        return self.oracle.get("faults", {}).get(str(page_id), {})

    def _rows(self, page_id: int) -> list[list[str]]:
        return self.oracle.get("rows", {}).get(str(page_id), [])

    # -- completion -----------------------------------------------------------

    def complete(self, messages, images=(), model="") -> Completion:
        with self._lock:
            self.call_count += 1
        prompt = "\n".join(str(m.get("content", "")) for m in messages)
        page_id = self._page_id(images)
        text = self._answer(prompt, page_id)
        return Completion(
            text=text,
            tokens_in=_estimate_tokens(prompt) + (1100 if images else 0),
            tokens_out=_estimate_tokens(text),
        )

    def _answer(self, prompt: str, page_id: int | None) -> str:
        o = self.oracle
        start, end = o["start_page_id"], o["end_page_id"]
        if TAG_CLASSIFY in prompt:
            if page_id < start:
                return "BEFORE"
            return "INSIDE" if page_id <= end else "AFTER"
        if TAG_TOC_SCAN in prompt:
            return "TOC" if page_id == o.get("toc_page") else "NO"
        if TAG_TOC_EXTRACT in prompt:
            if page_id != o.get("toc_page"):
                return "NONE"
            section = o.get("section", "")
            if section and section not in prompt:
                return "NONE"
            reply = f"START={o['toc_printed_start']}"
            if o.get("toc_printed_end") is not None:
                reply += f" END={o['toc_printed_end']}"
            return reply
        if TAG_PAGE_NUMBER in prompt:
            if page_id in o.get("unnumbered_pages", []):
                return "NONE"
            return str(page_id - o["printed_page_offset"])
        if TAG_SUPPLEMENT in prompt:
            for s, e, label in o.get("supplements", []):
                if s <= page_id <= e:
                    return f"YES {label}"
            return "NO"
        if TAG_LEGEND_SCAN in prompt:
            return "YES" if str(page_id) in o.get("legend_pages", {}) else "NO"
        if TAG_LEGEND_TRANSCRIBE in prompt:
            pairs = o.get("legend_pages", {}).get(str(page_id), [])
            if not pairs:
                return "NONE"
            return "\n".join(f"{abbr}\t{expansion}" for abbr, expansion in pairs)
        if EXTRACTION_MARKER in prompt:
            return self._extract(page_id)
        return "UNSCRIPTED"

    def _extract(self, page_id: int) -> str:
        fault = self._fault(page_id)
        if fault.get("permanent"):
            raise ProviderError(f"mock: permanent failure on page {page_id}", status=500)
        transient = int(fault.get("transient_failures", 0))
        if transient:
            with self._lock:
                attempt = self._attempts.get(page_id, 0)
                self._attempts[page_id] = attempt + 1
            if attempt < transient:
                raise ProviderError(
                    f"mock: transient failure {attempt + 1} on page {page_id}", status=503
                )
        columns = self.oracle.get("columns", [])
        rows = self._rows(page_id)
        if fault.get("column_drift") and rows:
            rows = [rows[0][:-1]] + rows[1:]
        lines = ["\t".join(columns)] + ["\t".join(r) for r in rows]
        text = "\n".join(lines) + "\n"
        if fault.get("code_fence"):
            text = "```tsv\n" + text + "```\n"
        return text


class ScriptedProvider(Provider):
    """Plays back a fixed sequence of completions; for turn-loop tests."""

    name = "scripted"

    def __init__(self, script: Sequence[Completion | dict]):
        self._script = [
            c if isinstance(c, Completion) else Completion(**c) for c in script
        ]
        self._i = 0
        self._lock = threading.Lock()
        self.requests: list[list[dict]] = []

    def complete(self, messages, images=(), model="") -> Completion:
        with self._lock:
            self.requests.append(list(messages))
            if self._i >= len(self._script):
                raise ProviderError("scripted provider exhausted")
            completion = self._script[self._i]
            self._i += 1
        return completion


def _image_b64(path: Path) -> str:
    return base64.standard_b64encode(path.read_bytes()).decode("ascii")


class OpenAiChatProvider(Provider):
    """Adapter for OpenAI-style /chat/completions APIs."""

    name = "openai"

    def __init__(self, api_key: str, base_url: str = "https://api.openai.com/v1"):
        self.api_key = api_key
        self.base_url = base_url.rstrip("/")

    def complete(self, messages, images=(), model="") -> Completion:
        import requests

        wire = [dict(m) for m in messages]
        if images and wire:
            parts = [{"type": "text", "text": wire[-1]["content"]}]
            for image in images:
                parts.append({
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{_image_b64(Path(image))}"},
                })
            wire[-1] = {"role": wire[-1]["role"], "content": parts}
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self.api_key}"},
                json={"model": model, "messages": wire},
                timeout=120,
            )
        except OSError as exc:
            raise ProviderError(f"openai request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"openai: {resp.text[:500]}", status=resp.status_code)
        data = resp.json()
        choice = data["choices"][0]["message"]
        usage = data.get("usage", {})
        return Completion(
            text=choice.get("content") or "",
            tokens_in=usage.get("prompt_tokens", 0),
            tokens_out=usage.get("completion_tokens", 0),
        )


class AnthropicProvider(Provider):
    """Adapter for Anthropic-style /v1/messages APIs."""

    name = "anthropic"

    def __init__(self, api_key: str, base_url: str = "https://api.anthropic.com"):
        self.api_key = api_key
        self.base_url = base_url.rstrip("/")

    def complete(self, messages, images=(), model="") -> Completion:
        import requests

        system = "\n".join(m["content"] for m in messages if m.get("role") == "system")
        wire = []
        for m in messages:
            if m.get("role") == "system":
                continue
            wire.append({"role": m["role"], "content": m["content"]})
        if images and wire:
            parts = [{"type": "text", "text": wire[-1]["content"]}]
            for image in images:
                parts.append({
                    "type": "image",
                    "source": {
                        "type": "base64",
                        "media_type": "image/png",
                        "data": _image_b64(Path(image)),
                    },
                })
            wire[-1] = {"role": wire[-1]["role"], "content": parts}
        body = {"model": model, "max_tokens": 8192, "messages": wire}
        if system:
            body["system"] = system
        try:
            resp = requests.post(
                f"{self.base_url}/v1/messages",
                headers={"x-api-key": self.api_key, "anthropic-version": "2023-06-01"},
                json=body,
                timeout=120,
            )
        except OSError as exc:
            raise ProviderError(f"anthropic request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"anthropic: {resp.text[:500]}", status=resp.status_code)
        data = resp.json()
        text = "".join(p.get("text", "") for p in data.get("content", []))
        usage = data.get("usage", {})
        return Completion(
            text=text,
            tokens_in=usage.get("input_tokens", 0),
            tokens_out=usage.get("output_tokens", 0),
        )


def make_provider(name: str, config) -> Provider:
    """Instantiate a provider by name using gateway config credentials."""
    if name == "mock":
        raise ProviderError("mock provider requires an oracle file; use MockVlmProvider")
    key = config.credential(name)
    if not key:
        raise ProviderError(f"no credential configured for provider {name!r}")
    if name == "openai":
        return OpenAiChatProvider(key)
    if name == "anthropic":
        return AnthropicProvider(key)
    raise ProviderError(f"unknown provider {name!r}")
