"""Append-only event log and content-addressed blob store.

All lifecycle state persists as one JSON record per line in
``events.log``; file contents live in ``blobs/`` addressed by the SHA-256
hex of their content.  No external database: rebuilding state is a replay
of the log.  A corrupt or half-written trailing record is truncated away
with a warning on open; corruption anywhere earlier is unrecoverable and
raises.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import uuid
from pathlib import Path

logger = logging.getLogger(__name__)

EVENTS_FILENAME = "events.log"
BLOBS_DIRNAME = "blobs"


class StoreCorruptError(RuntimeError):
    """The event log is corrupt before its final record."""


class EventLog:
    """One-writer append-only log of JSON records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._records = self._recover()
        self._fh = open(self.path, "ab")

    def _recover(self) -> list[dict]:
        if not self.path.exists():
            return []
        raw = self.path.read_bytes()
        records: list[dict] = []
        offset = 0
        good_end = 0
        while offset < len(raw):
            newline = raw.find(b"\n", offset)
            if newline == -1:
                logger.warning(
                    "event log %s: truncated trailing record dropped (%d bytes)",
                    self.path,
                    len(raw) - offset,
                )
                break
            line = raw[offset:newline]
            try:
                record = json.loads(line.decode("utf-8"))
                if not isinstance(record, dict) or "type" not in record:
                    raise ValueError("record must be an object with a 'type'")
            except (ValueError, UnicodeDecodeError) as exc:
                if newline == len(raw) - 1:
                    logger.warning(
                        "event log %s: corrupt trailing record dropped: %s", self.path, exc
                    )
                    break
                raise StoreCorruptError(
                    f"event log {self.path} corrupt at byte {offset}: {exc}"
                ) from exc
            records.append(record)
            offset = newline + 1
            good_end = offset
        if good_end != len(raw):
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)
        return records

    def append(self, event_type: str, data: dict) -> dict:
        record = {"type": event_type, **data}
        line = json.dumps(record, separators=(",", ":"), ensure_ascii=False) + "\n"
        with self._lock:
            self._fh.write(line.encode("utf-8"))
            self._fh.flush()
            self._records.append(record)
        return record

    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)

    def close(self) -> None:
        with self._lock:
            self._fh.close()


class BlobStore:
    """Content-addressed immutable file snapshots."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, content: bytes) -> str:
        digest = hashlib.sha256(content).hexdigest()
        target = self.root / digest
        if not target.exists():
            tmp = self.root / f".tmp-{uuid.uuid4().hex}"
            tmp.write_bytes(content)
            os.replace(tmp, target)
        return digest

    def get(self, digest: str) -> bytes:
        target = self.root / digest
        if not target.exists():
            raise KeyError(f"unknown blob {digest}")
        return target.read_bytes()

    def __contains__(self, digest: str) -> bool:
        return (self.root / digest).exists()

    def put_files(self, files: dict[str, bytes]) -> dict[str, str]:
        return {path: self.put(content) for path, content in files.items()}

    def get_files(self, manifest: dict[str, str]) -> dict[str, bytes]:
        return {path: self.get(digest) for path, digest in manifest.items()}
