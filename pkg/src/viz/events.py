"""Append-only hash-chained event log; all marketplace state derives from it.

Entries chain exactly like provenance records: the hash preimage is the fixed
field order (seq, kind, timestamp, canonical payload JSON, prev_hash) with
length-prefixed UTF-8 strings and 64-bit big-endian integers, and the genesis
entry links to the same fixed tag.  Persistence is line-delimited JSON.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from enum import Enum

from .compliance import genesis_hash
from .errors import RefuseAppendError, RefuseStartError


class EventKind(str, Enum):
    PUBLISH = "publish"
    PRICE_UPDATE = "price-update"
    LICENSE_GRANT = "license-grant"
    USAGE = "usage"
    PERIOD_CLOSE = "period-close"


def canonical_payload(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _enc_int(value: int) -> bytes:
    return int(value).to_bytes(8, "big")


def _enc_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return _enc_int(len(raw)) + raw


@dataclass(frozen=True)
class EventLogEntry:
    seq: int
    kind: EventKind
    timestamp: int
    payload: dict
    prev_hash: str
    entry_hash: str

    def compute_hash(self) -> str:
        preimage = b"".join(
            (
                _enc_int(self.seq),
                _enc_str(self.kind.value),
                _enc_int(self.timestamp),
                _enc_str(canonical_payload(self.payload)),
                _enc_str(self.prev_hash),
            )
        )
        return hashlib.sha256(preimage).hexdigest()

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind.value,
            "timestamp": self.timestamp,
            "payload": self.payload,
            "prev_hash": self.prev_hash,
            "entry_hash": self.entry_hash,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "EventLogEntry":
        return cls(
            seq=doc["seq"],
            kind=EventKind(doc["kind"]),
            timestamp=doc["timestamp"],
            payload=doc["payload"],
            prev_hash=doc["prev_hash"],
            entry_hash=doc["entry_hash"],
        )


@dataclass
class EventLog:
    """In-memory chain, optionally mirrored to a JSONL file on every append."""

    path: str | None = None
    entries: list[EventLogEntry] = field(default_factory=list)

    def verify(self) -> bool:
        prev = genesis_hash()
        for i, e in enumerate(self.entries):
            if e.seq != i or e.prev_hash != prev or e.compute_hash() != e.entry_hash:
                return False
            prev = e.entry_hash
        return True

    def append(self, kind: EventKind, timestamp: int, payload: dict) -> EventLogEntry:
        prev = self.entries[-1].entry_hash if self.entries else genesis_hash()
        entry = EventLogEntry(
            seq=len(self.entries),
            kind=EventKind(kind),
            timestamp=int(timestamp),
            payload=payload,
            prev_hash=prev,
            entry_hash="",
        )
        entry = EventLogEntry(
            seq=entry.seq,
            kind=entry.kind,
            timestamp=entry.timestamp,
            payload=entry.payload,
            prev_hash=entry.prev_hash,
            entry_hash=entry.compute_hash(),
        )
        self.entries.append(entry)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry.to_doc(), sort_keys=True,
                                   separators=(",", ":")) + "\n")
                f.flush()
                os.fsync(f.fileno())
        return entry

    @classmethod
    def load(cls, path: str) -> "EventLog":
        """Read and verify a persisted log; any corruption refuses startup."""
        entries = []
        if os.path.exists(path):
            with open(path, "rb") as f:
                for lineno, line in enumerate(f):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        entries.append(
                            EventLogEntry.from_doc(json.loads(line.decode("utf-8")))
                        )
                    except (json.JSONDecodeError, KeyError, ValueError,
                            UnicodeDecodeError, TypeError) as exc:
                        raise RefuseStartError(
                            f"{path}:{lineno + 1}: unreadable event: {exc}"
                        ) from exc
        log = cls(path=path, entries=entries)
        if not log.verify():
            raise RefuseStartError(f"{path}: event chain fails verification")
        return log
