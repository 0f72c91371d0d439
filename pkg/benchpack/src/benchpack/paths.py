"""Locations of the bundled problem directories."""

from pathlib import Path

_PROBLEMS_ROOT = Path(__file__).parent / "problems"


def problem_dir(name: str = "circle_packing") -> Path:
    """Absolute path of a bundled problem directory."""
    path = _PROBLEMS_ROOT / name
    if not path.is_dir():
        known = sorted(p.name for p in _PROBLEMS_ROOT.iterdir() if p.is_dir())
        raise KeyError(f"no bundled problem named {name!r}; known: {known}")
    return path
