"""Provenance records written at the top of every output file.

A record holds the tool version, the full run configuration and a SHA-256
digest of each input file. Nothing time- or host-dependent goes in, so
identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import DataError


def file_digest(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
    except OSError:
        raise DataError(f"cannot read input file {path}") from None
    return h.hexdigest()


def make_record(config: dict, inputs=()) -> dict:
    from . import __version__

    return {
        "tool": "dimclass",
        "version": __version__,
        "config": config,
        "inputs": {str(p): file_digest(p) for p in inputs},
    }


def header_lines(record: dict, prefix: str = "# ") -> str:
    """Text header: one line per field, JSON-encoded values."""
    out = [f"{prefix}dimclass {record['version']}"]
    out.append(f"{prefix}config {json.dumps(record['config'], sort_keys=True)}")
    for path, digest in sorted(record["inputs"].items()):
        out.append(f"{prefix}input sha256={digest} {path}")
    return "\n".join(out) + "\n"


def read_header(path) -> dict:
    """Parse a header written by :func:`header_lines` from a text file."""
    rec = {"inputs": {}}
    with open(Path(path)) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, rest = line[1:].strip().partition(" ")
            if key == "dimclass":
                rec["version"] = rest
            elif key == "config":
                rec["config"] = json.loads(rest)
            elif key == "input":
                digest, _, p = rest.partition(" ")
                rec["inputs"][p] = digest.removeprefix("sha256=")
    return rec
