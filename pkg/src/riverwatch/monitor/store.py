"""Append-only JSON-lines persistence for the monitor service.

One file per record kind. Every record carries a writer-assigned ``seq``
number, so replay can merge the files back into a single total order and
reconstruct state that matches what the live process held, including
delete-then-recreate histories.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

FILES = {
    "aoi": "aois.jsonl",
    "observation": "observations.jsonl",
    "alert": "alerts.jsonl",
    "delivery": "deliveries.jsonl",
    "ingest_failure": "failures.jsonl",
}


class JsonlStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def append(self, kind: str, record: dict) -> None:
        """Append one record; the single json.dumps write keeps lines atomic."""
        path = self.root / FILES[kind]
        line = json.dumps(record, separators=(",", ":"), allow_nan=False) + "\n"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def replay(self) -> list[tuple[str, dict]]:
        """All records across all kinds, sorted by seq."""
        records: list[tuple[str, dict]] = []
        for kind, name in FILES.items():
            path = self.root / name
            if not path.is_file():
                continue
            for line in path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    records.append((kind, json.loads(line)))
        records.sort(key=lambda kr: kr[1].get("seq", 0))
        return records
