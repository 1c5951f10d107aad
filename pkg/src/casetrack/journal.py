"""Append-only audit journal for gate decisions and ticket events.

One JSON object per line. Entries are written in the order decisions are
taken; nothing is ever rewritten, so byte-comparing the file is a valid
idempotence check.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path


class Journal:
    def __init__(self, path: Path | str | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self.entries: list[dict] = []
        if self.path is not None and self.path.exists():
            with self.path.open() as fh:
                self.entries = [json.loads(line) for line in fh if line.strip()]

    def record(self, entry: dict) -> None:
        line = json.dumps(entry, sort_keys=True, separators=(",", ":"))
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                with self.path.open("a") as fh:
                    fh.write(line + "\n")

    def digest_bytes(self) -> bytes:
        if self.path is not None and self.path.exists():
            return self.path.read_bytes()
        return "\n".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.entries
        ).encode()
