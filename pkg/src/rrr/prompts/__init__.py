"""Prompt template assets. Bump PROMPT_VERSION whenever a .txt file changes."""

from __future__ import annotations

from functools import cache
from importlib import resources

PROMPT_VERSION = "1"


@cache
def template(name: str) -> str:
    text = resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return text.removesuffix("\n")
