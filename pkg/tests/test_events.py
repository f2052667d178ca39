import json
import random

import pytest

from viz.compliance import genesis_hash
from viz.errors import RefuseStartError
from viz.events import EventKind, EventLog

T0 = 1772323200


def fill(log, n=6):
    for i in range(n):
        log.append(EventKind.USAGE, T0 + i, {"seq": i, "units": i * 3})
    return log


class TestChain:
    def test_empty_log_verifies(self):
        assert EventLog().verify()

    def test_first_entry_links_to_genesis(self):
        log = fill(EventLog(), 1)
        assert log.entries[0].prev_hash == genesis_hash()
        assert log.verify()

    def test_chain_links(self):
        log = fill(EventLog())
        for prev, cur in zip(log.entries, log.entries[1:]):
            assert cur.prev_hash == prev.entry_hash
        assert log.verify()

    def test_payload_tamper_detected(self):
        log = fill(EventLog())
        e = log.entries[3]
        log.entries[3] = type(e)(
            seq=e.seq, kind=e.kind, timestamp=e.timestamp,
            payload={**e.payload, "units": 999_999},
            prev_hash=e.prev_hash, entry_hash=e.entry_hash,
        )
        assert not log.verify()


class TestPersistence:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "events.log")
        log = fill(EventLog(path=path))
        loaded = EventLog.load(path)
        assert loaded.entries == log.entries
        assert loaded.verify()

    def test_load_missing_file_is_empty(self, tmp_path):
        log = EventLog.load(str(tmp_path / "nope.log"))
        assert log.entries == []

    def test_tampered_byte_refuses_start(self, tmp_path):
        path = str(tmp_path / "events.log")
        fill(EventLog(path=path))
        raw = bytearray(open(path, "rb").read())
        rng = random.Random(5)
        for _ in range(200):
            pos = rng.randrange(len(raw))
            tampered = bytearray(raw)
            tampered[pos] = (tampered[pos] + rng.randrange(1, 255)) % 256
            with open(path, "wb") as f:
                f.write(tampered)
            with pytest.raises(RefuseStartError):
                EventLog.load(path)
        with open(path, "wb") as f:
            f.write(raw)
        assert EventLog.load(path).verify()

    def test_appends_survive_reload(self, tmp_path):
        path = str(tmp_path / "events.log")
        log = fill(EventLog(path=path), 3)
        loaded = EventLog.load(path)
        loaded.append(EventKind.PERIOD_CLOSE, T0 + 100, {"period": "2026-03"})
        again = EventLog.load(path)
        assert len(again.entries) == 4
        assert again.verify()

    def test_canonical_line_format(self, tmp_path):
        path = str(tmp_path / "events.log")
        fill(EventLog(path=path), 1)
        line = open(path, encoding="utf-8").read().strip()
        doc = json.loads(line)
        assert line == json.dumps(doc, sort_keys=True, separators=(",", ":"))
