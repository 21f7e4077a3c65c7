"""Deterministic CSV/JSON output with seed/config-hash headers.

Every artifact carries the seed and a hash of the producing configuration:
CSV files in a single ``#``-prefixed metadata line, JSON files as top-level
fields.  Files are written atomically (temp file + rename).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """Stable sha256 over the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def metadata_line(seed, cfg_hash: str, **extra) -> str:
    parts = [f"seed={seed}", f"config_hash={cfg_hash}"]
    parts.extend(f"{k}={v}" for k, v in sorted(extra.items()))
    return "# " + " ".join(parts)


def write_csv(path, fieldnames, rows, seed, cfg_hash: str, **extra) -> None:
    """Dict rows with one metadata header line, written atomically."""
    buffer = io.StringIO()
    buffer.write(metadata_line(seed, cfg_hash, **extra) + "\n")
    writer = csv.DictWriter(buffer, fieldnames=fieldnames)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buffer.getvalue())


def write_json(path, payload: dict, seed, cfg_hash: str) -> None:
    document = {"seed": seed, "config_hash": cfg_hash}
    document.update(payload)
    atomic_write_text(path, json.dumps(document, sort_keys=True, indent=2) + "\n")


def read_metadata(path) -> dict:
    """Parse the ``#`` metadata line of a CSV artifact."""
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("# "):
        raise ValueError(f"{path} has no metadata header line")
    out = {}
    for token in first[2:].split():
        key, _, value = token.partition("=")
        out[key] = value
    return out
