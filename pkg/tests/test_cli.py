"""Tests for the CLI: offline grading, exit codes, formats, server flows."""

import csv
import io
import json
from pathlib import Path

import pytest

from gradeforge.cli import main, parse_deadline
from gradeforge.engine import GradingPolicy
from gradeforge.sandbox import ExecLimits
from gradeforge.service import BindAddress, GradeforgeService, ServiceConfig

FAST_POLICY = GradingPolicy(
    limits=ExecLimits(wall_seconds=30, cpu_seconds=15),
    setup_limits=ExecLimits(wall_seconds=30, cpu_seconds=15),
)

MINI_SUITE = json.dumps(
    {
        "tests": [
            {"name": "first", "run": "cat answer.txt", "output": "42", "points": 12},
            {"name": "second", "run": "cat other.txt", "output": "ok", "points": 13},
        ]
    }
)


@pytest.fixture(autouse=True)
def isolated_cli_home(tmp_path, monkeypatch):
    monkeypatch.setenv("GRADEFORGE_CONFIG", str(tmp_path / "cli.conf"))
    monkeypatch.setenv("GRADEFORGE_WORKSPACE_CACHE", str(tmp_path / "ws-cache.json"))


def write_submission(tmp_path, passing=True) -> Path:
    sub = tmp_path / ("sub-pass" if passing else "sub-fail")
    sub.mkdir(exist_ok=True)
    (sub / "answer.txt").write_bytes(b"42\n" if passing else b"41\n")
    (sub / "other.txt").write_bytes(b"ok\n")
    return sub


def write_spec(tmp_path, text=MINI_SUITE) -> Path:
    spec = tmp_path / "autograde.spec"
    spec.write_text(text)
    return spec


class TestGradeLocal:
    def test_passing_directory_exit_zero(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        sub = write_submission(tmp_path, passing=True)
        code = main(["grade-local", "--spec", str(spec), "--dir", str(sub)])
        out = capsys.readouterr().out
        assert code == 0
        assert "total: 25/25" in out
        assert out.count("passed") >= 2

    def test_failing_directory_exit_three(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        sub = write_submission(tmp_path, passing=False)
        code = main(["grade-local", "--spec", str(spec), "--dir", str(sub)])
        out = capsys.readouterr().out
        assert code == 3
        assert "total: 13/25" in out

    def test_malformed_spec_exit_one_names_field(self, tmp_path, capsys):
        spec = write_spec(
            tmp_path,
            json.dumps({"tests": [{"name": "x", "run": "true", "comparison": "fuzzy",
                                   "points": 1}]}),
        )
        sub = write_submission(tmp_path)
        code = main(["grade-local", "--spec", str(spec), "--dir", str(sub)])
        err = capsys.readouterr().err
        assert code == 1
        assert "comparison" in err

    def test_missing_dir_exit_one(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        code = main(["grade-local", "--spec", str(spec), "--dir", str(tmp_path / "nope")])
        assert code == 1

    def test_structured_format(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        sub = write_submission(tmp_path)
        code = main(["grade-local", "--spec", str(spec), "--dir", str(sub),
                     "--format", "structured"])
        lines = [json.loads(line) for line in capsys.readouterr().out.strip().splitlines()]
        assert code == 0
        assert [l["test"] for l in lines] == ["first", "second"]
        assert all(l["status"] == "passed" for l in lines)


class TestDeadlineParsing:
    def test_relative(self):
        assert parse_deadline("+90m")  # just needs to parse

    def test_iso(self):
        assert parse_deadline("2030-01-01T00:00:00Z").startswith("2030-01-01")

    def test_bad(self):
        from gradeforge.cli import CliError

        with pytest.raises(CliError):
            parse_deadline("soon")


class TestServerErrors:
    def test_unreachable_server_exit_two(self, capsys):
        code = main(["--server", "http://127.0.0.1:9", "status", "--assignment", "abc"])
        err = capsys.readouterr().err
        assert code == 2
        assert "127.0.0.1:9" in err

    def test_assignment_create_validates_before_network(self, tmp_path, capsys):
        template = tmp_path / "template"
        template.mkdir()
        (template / "readme.md").write_text("# x")
        bad_spec = tmp_path / "bad.spec"
        bad_spec.write_text(json.dumps({"tests": [{"name": "x", "run": "true",
                                                   "points": -5}]}))
        code = main([
            "--server", "http://127.0.0.1:9",  # unreachable; must not be contacted
            "assignment", "create", "--classroom", "c1", "--title", "T",
            "--template", str(template), "--spec", str(bad_spec), "--deadline", "+90m",
        ])
        err = capsys.readouterr().err
        assert code == 1
        assert "points" in err


@pytest.fixture()
def live_service(tmp_path_factory):
    data_root = tmp_path_factory.mktemp("service")
    config = ServiceConfig(
        data_dir=data_root / "data",
        bind_addresses=(BindAddress("127.0.0.1", 0),),
        worker_count=2,
        policy=FAST_POLICY,
    )
    service = GradeforgeService(config)
    service.start()
    yield f"http://127.0.0.1:{service.ports()[0]}"
    service.stop()


def seed_assignment(base, tmp_path, capsys) -> tuple[str, str]:
    template = tmp_path / "template"
    template.mkdir(exist_ok=True)
    (template / "readme.md").write_text("# mini\n")
    (template / "answer.txt").write_text("edit me\n")
    (template / "other.txt").write_text("ok\n")
    spec = write_spec(tmp_path)

    assert main(["--server", base, "classroom", "create", "--name", "Lab",
                 "--instructor", "prof:Dr P"]) == 0
    room = json.loads(capsys.readouterr().out)
    roster = tmp_path / "roster.csv"
    roster.write_text("id,name\nalice,Alice\nbob,Bob\n")
    assert main(["--server", base, "classroom", "roster-import",
                 "--classroom", room["id"], str(roster)]) == 0
    capsys.readouterr()
    assert main([
        "--server", base, "assignment", "create", "--classroom", room["id"],
        "--title", "Mini", "--template", str(template), "--spec", str(spec),
        "--deadline", "+90m",
    ]) == 0
    assignment = json.loads(capsys.readouterr().out)
    return room["id"], assignment["id"]


class TestServerFlows:
    def test_accept_submit_status_grades(self, live_service, tmp_path, capsys):
        base = live_service
        _, assignment_id = seed_assignment(base, tmp_path, capsys)

        assert main(["--server", base, "accept", "--assignment", assignment_id,
                     "--owner", "alice"]) == 0
        out = capsys.readouterr().out
        workspace = json.loads(out[: out.rindex("}") + 1])
        ws_id = workspace["id"]

        sub = write_submission(tmp_path, passing=False)
        code = main(["--server", base, "submit", "--workspace", ws_id,
                     "--submitter", "alice", str(sub)])
        out = capsys.readouterr().out
        assert code == 3  # graded, not all passing
        assert "total: 13/25" in out

        sub = write_submission(tmp_path, passing=True)
        code = main(["--server", base, "submit", "--workspace", ws_id,
                     "--submitter", "alice", str(sub)])
        out = capsys.readouterr().out
        assert code == 0
        assert "total: 25/25" in out

        assert main(["--server", base, "status", "--assignment", assignment_id]) == 0
        table = capsys.readouterr().out
        assert "alice" in table and "25" in table

        assert main(["--server", base, "grades", "--assignment", assignment_id]) == 0
        grades = capsys.readouterr().out
        assert grades.splitlines()[0].startswith("owner,accepted,submitted")
        assert "alice,true,true,true,25,25" in grades

    def test_status_formats_round_trip(self, live_service, tmp_path, capsys):
        base = live_service
        _, assignment_id = seed_assignment(base, tmp_path, capsys)
        assert main(["--server", base, "accept", "--assignment", assignment_id,
                     "--owner", "alice"]) == 0
        capsys.readouterr()

        columns = ["owner", "accepted", "submitted", "passed", "points", "last_submission_at"]
        assert main(["--server", base, "status", "--assignment", assignment_id,
                     "--format", "csv"]) == 0
        csv_rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))

        assert main(["--server", base, "status", "--assignment", assignment_id,
                     "--format", "structured"]) == 0
        json_rows = [json.loads(line) for line in capsys.readouterr().out.strip().splitlines()]

        assert main(["--server", base, "status", "--assignment", assignment_id,
                     "--format", "table"]) == 0
        table_lines = capsys.readouterr().out.splitlines()
        table_rows = [dict(zip(columns, line.split())) for line in table_lines[2:]]

        def canonical(rows):
            def cell(value):
                return "" if value is None else str(value)

            return [
                {c: cell(r.get(c)) for c in columns}
                for r in sorted(rows, key=lambda r: r["owner"])
            ]

        assert canonical(csv_rows) == canonical(json_rows) == canonical(table_rows)

    def test_similarity_command(self, live_service, tmp_path, capsys):
        base = live_service
        _, assignment_id = seed_assignment(base, tmp_path, capsys)
        for owner in ("alice", "bob"):
            assert main(["--server", base, "accept", "--assignment", assignment_id,
                         "--owner", owner]) == 0
            out = capsys.readouterr().out
            ws_id = json.loads(out[: out.rindex("}") + 1])["id"]
            sub = write_submission(tmp_path, passing=True)
            main(["--server", base, "submit", "--workspace", ws_id,
                  "--submitter", owner, str(sub)])
            capsys.readouterr()
        assert main(["--server", base, "similarity", "--assignment", assignment_id,
                     "--k", "5", "--w", "4", "--threshold", "0.5",
                     "--format", "structured"]) == 0
        rows = [json.loads(line) for line in capsys.readouterr().out.strip().splitlines()]
        assert rows and rows[0]["score"] == "1.0000"

    def test_config_file_provides_server(self, live_service, tmp_path, capsys, monkeypatch):
        conf = tmp_path / "cli.conf"
        conf.write_text(f"server_url = {live_service}\noutput_format = structured\n")
        monkeypatch.setenv("GRADEFORGE_CONFIG", str(conf))
        _, assignment_id = seed_assignment(live_service, tmp_path, capsys)
        assert main(["status", "--assignment", assignment_id]) == 0
        out = capsys.readouterr().out
        for line in out.strip().splitlines():
            json.loads(line)  # structured format came from the config file
