"""Event trace: one JSON object per line, ``{t, seq, node, event, fields}``."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Union


class TraceError(ValueError):
    pass


class Trace:
    def __init__(self):
        self.records: list[dict] = []

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def emit(self, t: float, node, event: str, fields: dict) -> dict:
        rec = {"t": t, "seq": len(self.records), "node": str(node), "event": event, "fields": fields}
        self.records.append(rec)
        return rec

    def select(self, event: str) -> list[dict]:
        return [r for r in self.records if r["event"] == event]

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records)

    def write(self, path: Union[str, Path]) -> None:
        atomic_write(path, self.dumps())


def atomic_write(path: Union[str, Path], text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def parse_lines(lines: Iterable[str]) -> list[dict]:
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            last = records[-1]["seq"] if records else None
            raise TraceError(f"line {lineno} is not valid JSON; last valid record seq={last}") from None
        if not isinstance(rec, dict) or not {"t", "seq", "node", "event", "fields"} <= rec.keys():
            last = records[-1]["seq"] if records else None
            raise TraceError(f"line {lineno} is not a trace record; last valid record seq={last}")
        records.append(rec)
    return records


def read_trace(path: Union[str, Path]) -> list[dict]:
    with open(path) as fh:
        return parse_lines(fh)
