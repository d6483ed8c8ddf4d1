"""Small shared output helpers: stable float text and JSON dumps."""

from __future__ import annotations

import json


def fmt_float(x) -> str:
    """17-significant-digit text, round-trippable for IEEE-754 doubles."""
    return format(float(x), ".17g")


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
