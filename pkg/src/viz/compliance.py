"""License manifests gating publication, and the tamper-evident provenance log.

The allowlist check is deliberately mechanical: a source passes iff its
license token is allowlisted.  Published adapters are recorded in a
hash-chained append-only log; canonical hashing uses a fixed field order with
length-prefixed UTF-8 strings and 64-bit big-endian integers so independent
implementations agree byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import InvalidManifestError, RefuseAppendError

DEFAULT_LICENSE_ALLOWLIST = frozenset(
    {"CC0-1.0", "CC-BY-4.0", "Apache-2.0", "MIT", "public-domain"}
)

GENESIS_TAG = b"viz-genesis0"


def genesis_hash() -> str:
    return hashlib.sha256(GENESIS_TAG).hexdigest()


def _enc_int(value: int) -> bytes:
    return int(value).to_bytes(8, "big")


def _enc_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return _enc_int(len(raw)) + raw


@dataclass(frozen=True)
class DataSource:
    uri: str
    license_id: str
    content_hash: str  # SHA-256 hex of the source material


@dataclass(frozen=True)
class LicenseManifest:
    sources: tuple[DataSource, ...]
    data_usage_disclosure: str = ""

    def canonical_bytes(self) -> bytes:
        parts = [_enc_int(len(self.sources))]
        for s in self.sources:
            parts += [_enc_str(s.uri), _enc_str(s.license_id), _enc_str(s.content_hash)]
        parts.append(_enc_str(self.data_usage_disclosure))
        return b"".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def to_doc(self) -> dict:
        return {
            "sources": [
                {"uri": s.uri, "license_id": s.license_id, "content_hash": s.content_hash}
                for s in self.sources
            ],
            "data_usage_disclosure": self.data_usage_disclosure,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "LicenseManifest":
        return cls(
            sources=tuple(
                DataSource(s["uri"], s["license_id"], s["content_hash"])
                for s in doc.get("sources", ())
            ),
            data_usage_disclosure=doc.get("data_usage_disclosure", ""),
        )


def validate_manifest(
    manifest: LicenseManifest, allowlist=DEFAULT_LICENSE_ALLOWLIST
) -> list[tuple[int, str]]:
    """Return (index, license_id) for every source whose license is not allowed.

    An empty list means the manifest is acceptable.  A manifest with no
    sources at all is structurally invalid.
    """
    if not manifest.sources:
        raise InvalidManifestError("manifest must declare at least one data source")
    violations = []
    for i, source in enumerate(manifest.sources):
        if not source.license_id or source.license_id not in allowlist:
            violations.append((i, source.license_id))
    return violations


@dataclass(frozen=True)
class ProvenanceRecord:
    seq: int
    adapter_id: str
    base_model_id: str
    manifest_hash: str
    timestamp: int  # UTC seconds
    prev_hash: str
    record_hash: str

    def preimage(self) -> bytes:
        return b"".join(
            (
                _enc_int(self.seq),
                _enc_str(self.adapter_id),
                _enc_str(self.base_model_id),
                _enc_str(self.manifest_hash),
                _enc_int(self.timestamp),
                _enc_str(self.prev_hash),
            )
        )

    def compute_hash(self) -> str:
        return hashlib.sha256(self.preimage()).hexdigest()

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "adapter_id": self.adapter_id,
            "base_model_id": self.base_model_id,
            "manifest_hash": self.manifest_hash,
            "timestamp": self.timestamp,
            "prev_hash": self.prev_hash,
            "record_hash": self.record_hash,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ProvenanceRecord":
        return cls(
            seq=doc["seq"],
            adapter_id=doc["adapter_id"],
            base_model_id=doc["base_model_id"],
            manifest_hash=doc["manifest_hash"],
            timestamp=doc["timestamp"],
            prev_hash=doc["prev_hash"],
            record_hash=doc["record_hash"],
        )


@dataclass
class ProvenanceLog:
    """Append-only chain of publication records; genesis links to a fixed tag."""

    records: list[ProvenanceRecord] = field(default_factory=list)

    def verify(self) -> bool:
        prev = genesis_hash()
        for i, rec in enumerate(self.records):
            if rec.seq != i or rec.prev_hash != prev:
                return False
            if rec.compute_hash() != rec.record_hash:
                return False
            prev = rec.record_hash
        return True

    def append(
        self, adapter_id: str, base_model_id: str, manifest_hash: str, timestamp: int
    ) -> ProvenanceRecord:
        if not self.verify():
            raise RefuseAppendError("provenance chain fails verification; refusing append")
        prev = self.records[-1].record_hash if self.records else genesis_hash()
        rec = ProvenanceRecord(
            seq=len(self.records),
            adapter_id=adapter_id,
            base_model_id=base_model_id,
            manifest_hash=manifest_hash,
            timestamp=int(timestamp),
            prev_hash=prev,
            record_hash="",
        )
        rec = ProvenanceRecord(**{**rec.to_doc(), "record_hash": rec.compute_hash()})
        self.records.append(rec)
        return rec

    def to_lines(self) -> list[str]:
        return [
            json.dumps(r.to_doc(), sort_keys=True, separators=(",", ":"))
            for r in self.records
        ]

    @classmethod
    def from_lines(cls, lines) -> "ProvenanceLog":
        records = []
        for line in lines:
            line = line.strip()
            if line:
                records.append(ProvenanceRecord.from_doc(json.loads(line)))
        return cls(records=records)
