"""Line-delimited JSON record files with a schema version and a record kind."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

from .errors import DataError

SCHEMA_VERSION = 1


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, allow_nan=False)


def write_records(path, kind: str, records: Iterable[dict]) -> int:
    """Write records atomically enough for a batch tool; returns the count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps({"schema_version": SCHEMA_VERSION, "kind": kind, **rec}) + "\n")
            n += 1
    tmp.replace(path)
    return n


def read_records(path, kind: Optional[str] = None) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: record is not an object")
            if rec.get("schema_version") != SCHEMA_VERSION:
                raise DataError(f"{path}:{lineno}: unsupported schema_version {rec.get('schema_version')!r}")
            if kind is not None and rec.get("kind") != kind:
                raise DataError(f"{path}:{lineno}: expected a {kind!r} record, got {rec.get('kind')!r}")
            rec.pop("schema_version")
            rec.pop("kind", None)
            out.append(rec)
    return out


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")
