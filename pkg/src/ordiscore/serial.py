"""Deterministic serialization helpers.

Every artifact the pipeline writes goes through these functions so that reruns
with unchanged inputs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path


def fmt_number(x: float) -> str:
    """Shortest stable decimal form; integral floats drop the trailing '.0'."""
    xf = float(x)
    if math.isnan(xf):
        return ""
    if xf == math.floor(xf) and abs(xf) < 1e16:
        return str(int(xf))
    return repr(xf)


def canonical_json(obj) -> str:
    """Key-sorted, indented, newline-terminated JSON."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")
