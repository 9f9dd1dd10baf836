"""Bundled example problems, usable by name from the CLI and tests."""

from importlib import resources
from pathlib import Path

__all__ = ["fixture_path", "available"]


def available() -> list:
    """Names of the bundled problem files (without extension)."""
    base = resources.files(__name__)
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def fixture_path(name: str) -> Path | None:
    """Filesystem path of a bundled problem, or None if there is no such
    fixture."""
    base = resources.files(__name__)
    candidate = base / f"{name}.json"
    if candidate.is_file():
        return Path(str(candidate))
    return None
