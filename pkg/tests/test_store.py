"""Tests for the event log and blob store."""

import hashlib

import pytest

from gradeforge.store import BlobStore, EventLog, StoreCorruptError


class TestEventLog:
    def test_append_and_replay(self, tmp_path):
        path = tmp_path / "events.log"
        log = EventLog(path)
        log.append("a", {"x": 1})
        log.append("b", {"y": "two"})
        log.close()
        replayed = EventLog(path)
        assert replayed.records() == [{"type": "a", "x": 1}, {"type": "b", "y": "two"}]

    def test_truncated_trailing_record_dropped(self, tmp_path):
        path = tmp_path / "events.log"
        log = EventLog(path)
        log.append("a", {"x": 1})
        log.append("b", {"x": 2})
        log.close()
        with open(path, "ab") as fh:
            fh.write(b'{"type":"c","x":')  # no newline, not valid JSON
        recovered = EventLog(path)
        assert [r["type"] for r in recovered.records()] == ["a", "b"]
        recovered.append("d", {"x": 4})
        recovered.close()
        again = EventLog(path)
        assert [r["type"] for r in again.records()] == ["a", "b", "d"]

    def test_corrupt_final_line_with_newline_dropped(self, tmp_path):
        path = tmp_path / "events.log"
        log = EventLog(path)
        log.append("a", {"x": 1})
        log.close()
        with open(path, "ab") as fh:
            fh.write(b"not json at all\n")
        recovered = EventLog(path)
        assert [r["type"] for r in recovered.records()] == ["a"]

    def test_corruption_before_tail_raises(self, tmp_path):
        path = tmp_path / "events.log"
        path.write_bytes(b'garbage\n{"type":"a"}\n')
        with pytest.raises(StoreCorruptError):
            EventLog(path)

    def test_fresh_log(self, tmp_path):
        log = EventLog(tmp_path / "events.log")
        assert log.records() == []


class TestBlobStore:
    def test_put_get_round_trip(self, tmp_path):
        store = BlobStore(tmp_path / "blobs")
        digest = store.put(b"hello world")
        assert digest == hashlib.sha256(b"hello world").hexdigest()
        assert store.get(digest) == b"hello world"
        assert digest in store

    def test_content_addressing_dedupes(self, tmp_path):
        store = BlobStore(tmp_path / "blobs")
        assert store.put(b"same") == store.put(b"same")
        assert len(list((tmp_path / "blobs").iterdir())) == 1

    def test_missing_blob(self, tmp_path):
        store = BlobStore(tmp_path / "blobs")
        with pytest.raises(KeyError):
            store.get("0" * 64)

    def test_files_round_trip(self, tmp_path):
        store = BlobStore(tmp_path / "blobs")
        files = {"a.py": b"print(1)", "data/iris.csv": b"x,y\n"}
        manifest = store.put_files(files)
        assert store.get_files(manifest) == files
