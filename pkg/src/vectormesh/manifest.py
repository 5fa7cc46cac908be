"""Run manifests and stats files.

A manifest is the canonical JSON record of everything that determines a
run: architecture, configuration, workload selector, schedule overrides,
seed.  Its SHA-256 is embedded in every emitted stats file, and re-running
a manifest must reproduce the stats byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

SCHEMA_VERSION = 1

KNOWN_KEYS = {
    "schema", "arch", "workload", "spatial", "seed", "pes",
    "machine", "tile", "assignment", "sharing",
}


class SpecError(ValueError):
    """Malformed run specification."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(canonical_json(manifest).encode()).hexdigest()


def load_config(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise SpecError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise SpecError("config must be a JSON object")
    if data.get("schema") != SCHEMA_VERSION:
        raise SpecError(
            f"config schema {data.get('schema')!r} unsupported (want {SCHEMA_VERSION})"
        )
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise SpecError(f"unknown config keys: {sorted(unknown)}")
    return data


def write_manifest(path: Path, manifest: dict) -> str:
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest_hash(manifest)


def write_stats(path: Path, rows: list[tuple[str, str]]) -> None:
    lines = ["key\tvalue"]
    for k, v in rows:
        lines.append(f"{k}\t{v}")
    path.write_text("\n".join(lines) + "\n")


def write_trace(path: Path, trace: list) -> None:
    lines = ["cycle\tteu\tevent\tbytes"]
    for cycle, teu, event, nbytes in trace:
        lines.append(f"{cycle}\t{teu}\t{event}\t{nbytes}")
    path.write_text("\n".join(lines) + "\n")
