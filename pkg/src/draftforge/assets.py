"""Bundled asset loading: lexicons, prompt preambles, pattern tables.

Assets are plain text, one entry per line; blank lines and lines starting
with '#' are ignored. Callers may override any asset with a file path of
their own (ServiceConfig does this).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def asset_path(name: str) -> Path:
    return Path(str(resources.files("draftforge").joinpath("assets", name)))


def read_asset(name: str, override: str | Path | None = None) -> str:
    if override is not None:
        return Path(override).read_text(encoding="utf-8")
    return resources.files("draftforge").joinpath("assets", name).read_text(encoding="utf-8")


def load_lexicon(name: str, override: str | Path | None = None) -> list[str]:
    entries = []
    for line in read_asset(name, override).splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.append(line)
    return entries


def load_pair_lexicon(name: str, override: str | Path | None = None) -> list[tuple[str, str]]:
    """Lexicon of 'left|right' pairs."""
    pairs = []
    for entry in load_lexicon(name, override):
        left, sep, right = entry.partition("|")
        if not sep:
            raise ValueError(f"{name}: entry {entry!r} is not a pair")
        pairs.append((left.strip(), right.strip()))
    return pairs
