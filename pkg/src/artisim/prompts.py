"""Versioned prompt templates and the transcript record.

Templates live in a data file so bridge-connected models always see stable
text; code renders them with named placeholders only.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

TEMPLATE_VERSION = 1


@lru_cache(maxsize=1)
def _load() -> dict:
    ref = resources.files("artisim.data") / "prompt_templates_v1.json"
    doc = json.loads(ref.read_text())
    if doc.get("version") != TEMPLATE_VERSION:
        raise ValueError(f"unexpected template version {doc.get('version')}")
    return doc["templates"]


def template_names() -> list:
    return sorted(_load())


def get_template(name: str) -> str:
    templates = _load()
    if name not in templates:
        raise KeyError(f"no prompt template named {name!r}")
    return templates[name]


def render_template(name: str, **fields) -> str:
    """Fill a template; every placeholder must be supplied."""
    text = get_template(name)
    needed = {fname for _, fname, _, _ in string.Formatter().parse(text)
              if fname is not None}
    missing = needed - set(fields)
    if missing:
        raise ValueError(f"template {name!r} missing fields {sorted(missing)}")
    return text.format(**{k: fields[k] for k in needed})


@dataclass
class PromptExchange:
    """One prompt/response round in a session transcript."""

    kind: str  # template name or task tag
    prompt: str
    response: str = ""
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "prompt": self.prompt, "response": self.response}
        if self.meta:
            out["meta"] = self.meta
        return out

    @staticmethod
    def from_dict(d: dict) -> "PromptExchange":
        return PromptExchange(kind=d["kind"], prompt=d["prompt"],
                              response=d.get("response", ""),
                              meta=d.get("meta", {}))
