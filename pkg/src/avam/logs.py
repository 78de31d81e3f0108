"""Line-delimited JSON logs: a header line, then one tagged record per line."""

from __future__ import annotations

import json
import math

LOG_VERSION = 1


class LogError(ValueError):
    """Malformed log file."""


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise LogError(f"non-finite value {obj} cannot be logged")
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return obj.item()
    return obj


def dumps(record: dict) -> str:
    """Canonical single-line JSON; floats use their shortest round-trip repr."""
    return json.dumps(_clean(record), sort_keys=True, separators=(",", ":"), allow_nan=False)


def header(config_hash: str, seed: int, **extra) -> dict:
    return {"type": "header", "version": LOG_VERSION, "config_hash": config_hash, "seed": seed, **extra}


def write_log(path, head: dict, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(head) + "\n")
        for r in records:
            if "type" not in r:
                raise LogError("every record needs a type tag")
            fh.write(dumps(r) + "\n")


def append_records(path, records) -> None:
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        for r in records:
            if "type" not in r:
                raise LogError("every record needs a type tag")
            fh.write(dumps(r) + "\n")


def read_log(path) -> tuple[dict, list[dict]]:
    """Return (first header, records); errors name the offending line."""
    head = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogError(f"{path}:{n}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "type" not in rec:
                raise LogError(f"{path}:{n}: record without a type tag")
            if head is None and rec["type"] != "header":
                raise LogError(f"{path}:{n}: first record must be the header")
            if rec["type"] == "header":
                # later headers come from concatenated logs
                if rec.get("version") != LOG_VERSION:
                    raise LogError(f"{path}:{n}: unsupported log version {rec.get('version')}")
                head = head or rec
            else:
                records.append(rec)
    if head is None:
        raise LogError(f"{path}: empty log")
    return head, records
