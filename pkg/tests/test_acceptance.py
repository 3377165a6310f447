"""Acceptance suite: one test per shipped-quality criterion.

Each test prints one ``ACCEPTANCE PASS/FAIL`` line (visible with ``pytest -s``)
and enforces the criterion at its stated tolerance.
"""

import hashlib
import json
import random
import subprocess
import sys
import threading
import time
import urllib.request
from contextlib import contextmanager
from datetime import datetime, timedelta, timezone

import pytest

from gradeforge import sandbox
from gradeforge.classroom import AssignmentConfig, ClassroomManager, pick_variant
from gradeforge.cli import main as cli_main
from gradeforge.engine import GradingPolicy, grade_submission
from gradeforge.fixtures import iris_solution_files, iris_suite_text
from gradeforge.sandbox import ExecLimits, ExecRequest, execute, prepare_workspace
from gradeforge.service import BindAddress, GradeforgeService, ServiceConfig
from gradeforge.similarity import (
    HASH_BASE,
    HASH_MODULUS,
    fingerprints,
    kgram_hashes,
    normalize_source,
    similarity_score,
)
from gradeforge.suite import compare_output, parse_suite


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}")
        raise
    print(f"ACCEPTANCE PASS: {name}")


# -- 1. iris fixture end-to-end ------------------------------------------------


def test_iris_fixture_end_to_end(tmp_path, capsys):
    with criterion("iris fixture end-to-end (25/25 reference, 12/25 stubbed, <= 60 s)"):
        started = time.monotonic()

        solution_dir = tmp_path / "solution"
        solution_dir.mkdir()
        for name, content in iris_solution_files().items():
            (solution_dir / name).write_bytes(content)
        spec_path = tmp_path / "autograde.spec"
        spec_path.write_text(iris_suite_text())

        exit_code = cli_main(
            ["grade-local", "--spec", str(spec_path), "--dir", str(solution_dir)]
        )
        out = capsys.readouterr().out
        assert exit_code == 0, out
        assert "total: 25/25" in out
        assert out.count("passed") >= 3

        stubbed = dict(iris_solution_files())
        stubbed["regression.py"] = b""  # runs cleanly, prints nothing
        report = grade_submission(stubbed, parse_suite(iris_suite_text()))
        assert report.earned == 12, [(r.test_name, r.status) for r in report.results]
        assert report.max == 25
        assert not report.all_passed
        statuses = {r.test_name: r.status for r in report.results}
        assert statuses == {"average": "passed", "range": "passed", "regression": "failed"}

        elapsed = time.monotonic() - started
        assert elapsed <= 60, f"iris end-to-end took {elapsed:.1f}s"


# -- 2. comparison matrix -------------------------------------------------------


COMPARISON_MATRIX = [
    ("included", "1.2", "the value is 1.2", True),
    ("included", "1.2", "the value is 1.3", False),
    ("included", "1.2", "1.2\n", True),
    ("included", "1.2", "1.2   ", True),
    ("exact", "abc", "abc", True),
    ("exact", "abc", "abcd", False),
    ("exact", "abc", "abc\n", True),
    ("exact", "abc", "abc ", True),
    ("regex", r"^[0-9]+\.[0-9]+$", "1.85", True),
    ("regex", r"^[0-9]+\.[0-9]+$", "one point eight", False),
    ("regex", r"^[0-9]+\.[0-9]+$", "1.85\n", True),
    ("regex", r"^[0-9]+\.[0-9]+$", "1.85   ", True),
]


def test_comparison_matrix_and_property():
    with criterion("comparison matrix (12 cases) and exact=>included over 1,000 pairs"):
        for mode, expected, actual, want in COMPARISON_MATRIX:
            got = compare_output(expected, actual, mode)
            assert got is want, (mode, expected, actual)

        rng = random.Random(424242)
        alphabet = "xy z\n\t.1"
        checked = 0
        for _ in range(1000):
            expected = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 10)))
            actual = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))
            if rng.random() < 0.5:
                actual = expected + rng.choice(["", "\n", "  "])
            try:
                if compare_output(expected, actual, "exact"):
                    assert compare_output(expected, actual, "included"), (expected, actual)
                    checked += 1
            except Exception:
                continue  # whitespace-only expected normalizes empty; out of domain
        assert checked >= 100, f"only {checked} exact matches exercised"


# -- 3. sandbox limits ----------------------------------------------------------


def test_sandbox_limits():
    with criterion("sandbox limits: 2 s wall timeout, exact 64 KiB cap, 50x zero orphans"):
        started = time.monotonic()
        with prepare_workspace({}) as ws:
            result = execute(
                ExecRequest(
                    command="python3 -c 'while True: pass'",
                    workspace=ws,
                    limits=ExecLimits(wall_seconds=2, cpu_seconds=2),
                )
            )
        assert result.outcome == "timeout"
        assert time.monotonic() - started <= 4.0

        with prepare_workspace({}) as ws:
            result = execute(
                ExecRequest(
                    command=(
                        "python3 -c \"import sys; sys.stdout.write('x' * (10 * 1024 * 1024))\""
                    ),
                    workspace=ws,
                    limits=ExecLimits(wall_seconds=30, cpu_seconds=20, max_output_bytes=65536),
                )
            )
        assert len(result.stdout) == 65536
        assert result.truncated is True
        assert result.outcome == "output_truncated_ok"

        def live_group_members(pgid):
            import os

            members = []
            for entry in os.listdir("/proc"):
                if not entry.isdigit():
                    continue
                try:
                    fields = open(f"/proc/{entry}/stat").read().rsplit(")", 1)[1].split()
                    state, proc_pgid = fields[0], int(fields[2])
                except (OSError, IndexError, ValueError):
                    continue
                if proc_pgid == pgid and state != "Z":
                    members.append(int(entry))
            return members

        for repetition in range(50):
            with prepare_workspace({}) as ws:
                result = execute(
                    ExecRequest(
                        command="echo $$; sleep 30 & sleep 30 &",
                        workspace=ws,
                        limits=ExecLimits(wall_seconds=10, cpu_seconds=5),
                    )
                )
                pgid = int(result.stdout.split()[0])
            deadline = time.monotonic() + 2
            while time.monotonic() < deadline and live_group_members(pgid):
                time.sleep(0.02)
            leftovers = live_group_members(pgid)
            assert leftovers == [], f"repetition {repetition}: orphans {leftovers}"


# -- 4. concurrency at desk scale ------------------------------------------------


def test_hundred_concurrent_runs(tmp_path):
    with criterion("100 concurrent /runs, pool of 4, all 200 with own token, <= 120 s"):
        config = ServiceConfig(
            data_dir=tmp_path / "data",
            bind_addresses=(BindAddress("127.0.0.1", 0),),
            worker_count=4,
            sandbox_concurrency=4,
        )
        service = GradeforgeService(config)
        service.start()
        try:
            base = f"http://127.0.0.1:{service.ports()[0]}"
            started = time.monotonic()
            outcomes: dict[int, tuple[int, str, str]] = {}
            errors: list[Exception] = []

            def one(i):
                token = f"token-{i}-{hashlib.sha256(str(i).encode()).hexdigest()[:12]}"
                payload = json.dumps(
                    {"language_id": "python3", "sourcecode": f"print({token!r})"}
                ).encode()
                request = urllib.request.Request(
                    f"{base}/api/v1/runs", data=payload,
                    headers={"Content-Type": "application/json"}, method="POST",
                )
                try:
                    with urllib.request.urlopen(request, timeout=110) as resp:
                        body = json.loads(resp.read())
                        outcomes[i] = (resp.status, token, body.get("stdout", ""))
                except Exception as exc:  # pragma: no cover
                    errors.append(exc)

            threads = [threading.Thread(target=one, args=(i,)) for i in range(100)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            elapsed = time.monotonic() - started

            assert not errors, errors[:3]
            assert len(outcomes) == 100
            for i, (status, token, stdout) in outcomes.items():
                assert status == 200
                assert stdout == f"{token}\n", f"request {i} got foreign output"
            assert elapsed <= 120, f"took {elapsed:.1f}s"
        finally:
            service.stop()


# -- 5. lifecycle properties ------------------------------------------------------


SUITE_25 = json.dumps(
    {
        "tests": [
            {"name": "average", "run": "true", "points": 5},
            {"name": "range", "run": "true", "points": 7},
            {"name": "regression", "run": "true", "points": 13},
        ]
    }
)


def test_lifecycle_properties(tmp_path):
    with criterion(
        "lifecycle: idempotent accept, monotone concurrent sequences, exact deadline, "
        "byte-identical replay"
    ):
        deadline = datetime(2026, 9, 1, 12, 0, 0, tzinfo=timezone.utc)
        manager = ClassroomManager(tmp_path / "data")
        room = manager.create_classroom("Lab", [("prof", "")])
        manager.import_roster(room.id, "id\nalice\nbob\n")
        assignment = manager.create_assignment(
            room.id,
            AssignmentConfig(title="A", deadline=deadline, seed="acc"),
            [({"readme.md": b"# a"}, SUITE_25)],
        )

        first = manager.accept(assignment.id, "alice")
        for _ in range(100):
            again = manager.accept(assignment.id, "alice")
            assert again.id == first.id and again.files == first.files
        assert len(manager.workspaces) == 1

        sequences = []

        def submit_one(i):
            sub = manager.submit(first.id, "alice", {"f": f"{i}".encode()},
                                 now=deadline - timedelta(minutes=5))
            sequences.append(sub.sequence)

        threads = [threading.Thread(target=submit_one, args=(i,)) for i in range(20)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(sequences) == list(range(1, 21))

        on_time = manager.submit(first.id, "alice", {"f": b"edge"}, now=deadline)
        early = manager.submit(first.id, "alice", {"f": b"early"},
                               now=deadline - timedelta(seconds=1))
        late = manager.submit(first.id, "alice", {"f": b"late"},
                              now=deadline + timedelta(seconds=1))
        assert on_time.late is False
        assert early.late is False
        assert late.late is True

        csv_before = manager.export_grades(assignment.id)
        manager.log.close()

        rebuilt = ClassroomManager(tmp_path / "data")
        assert rebuilt.export_grades(assignment.id) == csv_before
        rebuilt.log.close()

        with open(tmp_path / "data" / "events.log", "ab") as fh:
            fh.write(b'{"type":"submission_created","id":"half-written')
        repaired = ClassroomManager(tmp_path / "data")
        assert repaired.export_grades(assignment.id) == csv_before
        repaired.log.close()


# -- 6. variant distribution -------------------------------------------------------


def test_variant_distribution_and_restart_stability():
    with criterion("variant distribution in [900, 1100] x3 and stable across 3 processes"):
        seed = "classroom-seed-2026"
        counts = [0, 0, 0]
        for i in range(3000):
            counts[pick_variant(seed, f"student-{i}", 3)] += 1
        assert sum(counts) == 3000
        for count in counts:
            assert 900 <= count <= 1100, counts

        snippet = (
            "from gradeforge.classroom import pick_variant\n"
            "import hashlib\n"
            f"mapping = [pick_variant({seed!r}, f'student-{{i}}', 3) for i in range(3000)]\n"
            "print(hashlib.sha256(bytes(mapping)).hexdigest())\n"
        )
        digests = set()
        for _ in range(3):
            proc = subprocess.run(
                [sys.executable, "-c", snippet], capture_output=True, text=True, check=True
            )
            digests.add(proc.stdout.strip())
        assert len(digests) == 1, digests


# -- 7. winnowing oracle equivalence --------------------------------------------------


def oracle_kgram_hashes(data: bytes, k: int) -> list[int]:
    out = []
    for start in range(len(data) - k + 1):
        value = 0
        for byte in data[start : start + k]:
            value = (value * HASH_BASE + byte) % HASH_MODULUS
        out.append(value)
    return out


def oracle_fingerprints(text: str, k: int, w: int) -> set[tuple[int, int]]:
    hashes = oracle_kgram_hashes(text.encode("utf-8"), k)
    n = len(hashes)
    if n == 0:
        return set()
    windows = [(0, n)] if n <= w else [(s, s + w) for s in range(n - w + 1)]
    chosen = set()
    for start, end in windows:
        best = start
        for i in range(start + 1, end):
            if hashes[i] <= hashes[best]:
                best = i
        chosen.add((hashes[best], best))
    return chosen


def test_winnowing_oracle_equivalence():
    with criterion(
        "winnowing: 500 random strings x (k,w) grid match the brute-force oracle; "
        "coverage, identity, disjointness, mutation invariance"
    ):
        rng = random.Random(20260808)
        alphabet = "abcdefgh ()=+;\n\t"
        for _ in range(500):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 200)))
            for k in (3, 5, 12):
                for w in (1, 4, 8):
                    got = fingerprints(text, k=k, w=w)
                    expected = oracle_fingerprints(text, k, w)
                    assert got.prints == frozenset(expected), (text[:40], k, w)

                    hashes = kgram_hashes(text.encode("utf-8"), k)
                    positions = {pos for _, pos in got.prints}
                    n = len(hashes)
                    if n == 0:
                        continue
                    if n <= w:
                        assert positions
                    else:
                        for start in range(n - w + 1):
                            assert positions & set(range(start, start + w))

        body = "def solve(data):\n    total = sum(data)\n    return total / len(data)\n"
        identical_a = fingerprints(normalize_source(body, "python3"), k=5, w=4, doc_id="a")
        identical_b = fingerprints(normalize_source(body, "python3"), k=5, w=4, doc_id="b")
        assert similarity_score(identical_a, identical_b)[0] == 1.0

        disjoint_a = fingerprints("aaaabbbbaaaabbbb", k=3, w=2, doc_id="a")
        disjoint_b = fingerprints("zzzzyyyyzzzzyyyy", k=3, w=2, doc_id="b")
        assert similarity_score(disjoint_a, disjoint_b)[0] == 0.0

        mutated = (
            "def solve(data):  # compute the mean\n\n"
            "    total   = sum(data)   # add them up\n"
            "    return total / len(data)\n\n"
        )
        mutated_fp = fingerprints(normalize_source(mutated, "python3"), k=5, w=4, doc_id="m")
        original_fp = fingerprints(normalize_source(body, "python3"), k=5, w=4, doc_id="o")
        assert similarity_score(original_fp, mutated_fp)[0] == 1.0
