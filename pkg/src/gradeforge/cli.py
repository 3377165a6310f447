"""Command-line client: operator commands over the HTTP API plus a fully
offline ``grade-local`` mode for closed-book labs.

Exit codes: 0 success, 1 validation error, 2 server/connection error,
3 grading completed but not every test passed (for shell gating).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys
import time
import urllib.error
import urllib.request
import uuid
import zipfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

from . import __version__
from .classroom import ValidationError, read_dir_files
from .engine import GradingPolicy, grade_submission
from .suite import SuiteError, parse_suite

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SERVER = 2
EXIT_TESTS_FAILED = 3

def default_config_path() -> Path:
    return Path(os.environ.get("GRADEFORGE_CONFIG", Path.home() / ".gradeforge.conf"))


def workspace_cache_path() -> Path:
    return Path(os.environ.get("GRADEFORGE_WORKSPACE_CACHE",
                               Path.home() / ".gradeforge-workspaces.json"))

POLL_INITIAL = 0.5
POLL_CAP = 8.0


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.exit_code = exit_code


def load_config_file(path: Path | None = None) -> dict[str, str]:
    path = path or default_config_path()
    """Parse ``key = value`` lines; missing file is an empty config."""
    if not path.is_file():
        return {}
    config = {}
    for line in path.read_text("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        config[key.strip()] = value.strip()
    return config


# --- HTTP client -------------------------------------------------------------


class Client:
    def __init__(self, server_url: str, api_key: str | None = None):
        self.server_url = server_url.rstrip("/")
        self.api_key = api_key

    def _request(self, method: str, path: str, body: bytes | None = None,
                 content_type: str | None = None):
        url = self.server_url + path
        req = urllib.request.Request(url, data=body, method=method)
        if content_type:
            req.add_header("Content-Type", content_type)
        if self.api_key:
            req.add_header("X-Api-Key", self.api_key)
        try:
            with urllib.request.urlopen(req, timeout=120) as resp:
                return resp.status, resp.read(), dict(resp.headers)
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read(), dict(exc.headers)
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise CliError(f"cannot reach server at {self.server_url}: {exc}", EXIT_SERVER)

    def json(self, method: str, path: str, payload: dict | None = None,
             body: bytes | None = None, content_type: str | None = None):
        if payload is not None:
            body = json.dumps(payload).encode("utf-8")
            content_type = "application/json"
        status, raw, _ = self._request(method, path, body, content_type)
        data = None
        if raw:
            try:
                data = json.loads(raw.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                data = None
        if status >= 400:
            message = raw.decode("utf-8", "replace")
            if isinstance(data, dict) and "error" in data:
                err = data["error"]
                message = err.get("message", message)
                if err.get("field"):
                    message += f" (field: {err['field']})"
            exit_code = EXIT_SERVER if status >= 500 else EXIT_VALIDATION
            raise CliError(f"server returned {status}: {message}", exit_code)
        return data

    def text(self, path: str) -> str:
        status, raw, _ = self._request("GET", path)
        if status >= 400:
            raise CliError(f"server returned {status}: {raw.decode('utf-8', 'replace')}",
                           EXIT_SERVER if status >= 500 else EXIT_VALIDATION)
        return raw.decode("utf-8")


def encode_multipart(fields: dict[str, str], files: list[tuple[str, str, bytes]]):
    """RFC 2388 multipart/form-data body; files are (field, filename, content)."""
    boundary = f"gradeforge-{uuid.uuid4().hex}"
    out = io.BytesIO()
    for name, value in fields.items():
        out.write(f"--{boundary}\r\n".encode())
        out.write(f'Content-Disposition: form-data; name="{name}"\r\n\r\n'.encode())
        out.write(value.encode("utf-8"))
        out.write(b"\r\n")
    for name, filename, content in files:
        out.write(f"--{boundary}\r\n".encode())
        out.write(
            f'Content-Disposition: form-data; name="{name}"; filename="{filename}"\r\n'.encode()
        )
        out.write(b"Content-Type: application/octet-stream\r\n\r\n")
        out.write(content)
        out.write(b"\r\n")
    out.write(f"--{boundary}--\r\n".encode())
    return out.getvalue(), f"multipart/form-data; boundary={boundary}"


# --- output formatting --------------------------------------------------------


def print_table(rows: list[dict], columns: list[str], out=None) -> None:
    out = out or sys.stdout
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) if rows else len(c)
              for c in columns}
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    print(header, file=out)
    print("  ".join("-" * widths[c] for c in columns), file=out)
    for row in rows:
        print("  ".join(str(row.get(c, "")).ljust(widths[c]) for c in columns), file=out)


def print_rows(rows: list[dict], columns: list[str], fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "table":
        print_table(rows, columns, out)
    elif fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])
    elif fmt == "structured":
        for row in rows:
            print(json.dumps({c: row.get(c) for c in columns}), file=out)
    else:
        raise CliError(f"unknown output format {fmt!r}")


def report_rows_for_display(report: dict) -> list[dict]:
    return [
        {
            "test": r["test_name"],
            "status": r["status"],
            "points": f"{r['points_earned']}",
            "duration_ms": r["duration_ms"],
        }
        for r in report["results"]
    ]


def print_report(report: dict, fmt: str = "table") -> None:
    print_rows(report_rows_for_display(report), ["test", "status", "points", "duration_ms"], fmt)
    if fmt == "table":
        tick = "all tests passed" if report["all_passed"] else "some tests failed"
        print(f"total: {report['earned']}/{report['max']} ({tick})")


# --- workspace cache (maps workspace id -> assignment id for `submit`) --------


def _load_workspace_cache() -> dict[str, str]:
    try:
        return json.loads(workspace_cache_path().read_text("utf-8"))
    except (OSError, json.JSONDecodeError):
        return {}


def _remember_workspace(workspace_id: str, assignment_id: str) -> None:
    cache = _load_workspace_cache()
    cache[workspace_id] = assignment_id
    try:
        workspace_cache_path().write_text(json.dumps(cache, indent=2))
    except OSError:
        pass


# --- commands -----------------------------------------------------------------


def parse_deadline(text: str) -> str:
    """ISO 8601 timestamp, or a relative offset like +90m / +2h / +1d."""
    match = re.fullmatch(r"\+(\d+)([mhd])", text.strip())
    if match:
        amount, unit = int(match.group(1)), match.group(2)
        delta = {"m": timedelta(minutes=amount), "h": timedelta(hours=amount),
                 "d": timedelta(days=amount)}[unit]
        return (datetime.now(timezone.utc) + delta).isoformat()
    try:
        parsed = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise CliError(f"bad deadline {text!r}: use ISO 8601 or +90m/+2h/+1d")
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.isoformat()


def collect_submission_files(paths: list[str]) -> dict[str, bytes]:
    files: dict[str, bytes] = {}
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            for rel, content in read_dir_files(path).items():
                files[rel] = content
        elif path.is_file():
            files[path.name] = path.read_bytes()
        else:
            raise CliError(f"no such file or directory: {raw}")
    if not files:
        raise CliError("no files to submit")
    return files


def cmd_serve(args, config) -> int:
    from .service import ROLE_LIFECYCLE, BindAddress, parse_bind_spec, serve_forever, service_config_from_env

    try:
        service_config = service_config_from_env(
            data_dir=args.data_dir,
            bind=args.bind,
            api_key=args.api_key,
            workers=args.workers,
            ui_dir=args.ui_dir,
        )
        if args.languages:
            from .languages import load_registry

            service_config.registry = load_registry(args.languages)
        if args.public_bind:
            public = tuple(
                BindAddress(b.host, b.port, role=ROLE_LIFECYCLE)
                for b in parse_bind_spec(args.public_bind)
            )
            service_config.bind_addresses = service_config.bind_addresses + public
        if args.package_mode:
            service_config.policy = GradingPolicy(package_mode=args.package_mode)
    except (ValueError, ValidationError) as exc:
        raise CliError(str(exc))
    serve_forever(service_config)
    return EXIT_OK


def cmd_classroom_create(args, config) -> int:
    client = make_client(args, config)
    instructors = []
    for spec in args.instructor or ["instructor"]:
        ident, _, name = spec.partition(":")
        instructors.append({"id": ident, "name": name})
    room = client.json("POST", "/api/v1/classrooms",
                       {"name": args.name, "instructors": instructors})
    print(json.dumps(room, indent=2))
    return EXIT_OK


def cmd_roster_import(args, config) -> int:
    client = make_client(args, config)
    csv_path = Path(args.file)
    if not csv_path.is_file():
        raise CliError(f"no such roster file: {csv_path}")
    result = client.json(
        "POST",
        f"/api/v1/classrooms/{args.classroom}/roster",
        body=csv_path.read_bytes(),
        content_type="text/csv",
    )
    print(json.dumps(result))
    return EXIT_OK


def _build_template_zip(template_dir: str, spec_file: str, variants: list[str]) -> bytes:
    template = Path(template_dir)
    spec_path = Path(spec_file)
    if not template.is_dir():
        raise CliError(f"template directory not found: {template}")
    if not spec_path.is_file():
        raise CliError(f"suite file not found: {spec_path}")
    # Validate every suite before any network call; parse errors name the field.
    try:
        parse_suite(spec_path.read_text("utf-8"))
    except SuiteError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        raise CliError(f"invalid suite {spec_path}: {exc}{field}")

    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("autograde.spec", spec_path.read_bytes())
        for rel, content in read_dir_files(template).items():
            zf.writestr(f"template/{rel}", content)
        for index, spec in enumerate(variants or [], start=1):
            var_dir, _, var_spec = spec.partition(":")
            var_path = Path(var_dir)
            if not var_path.is_dir():
                raise CliError(f"variant directory not found: {var_dir}")
            for rel, content in read_dir_files(var_path).items():
                zf.writestr(f"variants/{index}/template/{rel}", content)
            if var_spec:
                var_spec_path = Path(var_spec)
                if not var_spec_path.is_file():
                    raise CliError(f"variant suite file not found: {var_spec}")
                try:
                    parse_suite(var_spec_path.read_text("utf-8"))
                except SuiteError as exc:
                    field = f" (field: {exc.field})" if exc.field else ""
                    raise CliError(f"invalid suite {var_spec_path}: {exc}{field}")
                zf.writestr(f"variants/{index}/autograde.spec", var_spec_path.read_bytes())
    return out.getvalue()


def cmd_assignment_create(args, config) -> int:
    mode = args.mode
    team_size = None
    if mode.startswith("group"):
        _, _, size = mode.partition(":")
        if not size.isdigit():
            raise CliError("group mode must be written group:N (e.g. group:3)")
        mode, team_size = "group", int(size)
    elif mode != "individual":
        raise CliError(f"unknown mode {args.mode!r}")
    deadline = parse_deadline(args.deadline)
    archive = _build_template_zip(args.template, args.spec, args.variant)

    assignment_config = {
        "title": args.title,
        "deadline": deadline,
        "mode": mode,
        "team_size": team_size,
        "late_policy": args.late_policy,
        "score_policy": args.score_policy,
    }
    if args.seed:
        assignment_config["seed"] = args.seed
    body, content_type = encode_multipart(
        {"config": json.dumps(assignment_config)}, [("template", "template.zip", archive)]
    )
    client = make_client(args, config)
    assignment = client.json(
        "POST", f"/api/v1/classrooms/{args.classroom}/assignments",
        body=body, content_type=content_type,
    )
    print(json.dumps(assignment, indent=2))
    return EXIT_OK


def cmd_accept(args, config) -> int:
    client = make_client(args, config)
    payload = {"owner": args.owner}
    if args.members:
        payload["members"] = [m.strip() for m in args.members.split(",") if m.strip()]
    workspace = client.json("POST", f"/api/v1/assignments/{args.assignment}/accept", payload)
    _remember_workspace(workspace["id"], workspace["assignment_id"])
    print(json.dumps({k: v for k, v in workspace.items() if k != "files"}, indent=2))
    print(f"files: {', '.join(sorted(workspace['files']))}")
    return EXIT_OK


def poll_job(client: Client, job_id: str, timeout: float = 600.0) -> dict:
    deadline = time.monotonic() + timeout
    delay = POLL_INITIAL
    while True:
        job = client.json("GET", f"/api/v1/jobs/{job_id}")
        if job["state"] in ("done", "failed"):
            return job
        if time.monotonic() > deadline:
            raise CliError(f"job {job_id} still {job['state']} after {timeout:.0f}s", EXIT_SERVER)
        time.sleep(delay)
        delay = min(delay * 2, POLL_CAP)


def cmd_submit(args, config) -> int:
    assignment_id = args.assignment or _load_workspace_cache().get(args.workspace)
    if not assignment_id:
        raise CliError(
            "cannot resolve the assignment for this workspace; pass --assignment ID"
        )
    files = collect_submission_files(args.paths)
    client = make_client(args, config)
    body, content_type = encode_multipart(
        {"workspace_id": args.workspace, "submitter": args.submitter},
        [("file", name, content) for name, content in sorted(files.items())],
    )
    accepted = client.json(
        "POST", f"/api/v1/assignments/{assignment_id}/submissions",
        body=body, content_type=content_type,
    )
    print(f"submission {accepted['submission_id']} queued as job {accepted['job_id']}")
    job = poll_job(client, accepted["job_id"])
    if job["state"] == "failed":
        raise CliError(f"grading failed: {job.get('error')}", EXIT_SERVER)
    report = job["report"]
    print_report(report, args.format)
    return EXIT_OK if report["all_passed"] else EXIT_TESTS_FAILED


def cmd_status(args, config) -> int:
    client = make_client(args, config)
    rows = client.json("GET", f"/api/v1/assignments/{args.assignment}/status")
    display = [
        {
            "owner": r["owner"],
            "accepted": str(r["accepted"]).lower(),
            "submitted": str(r["submitted"]).lower(),
            "passed": str(r["passed"]).lower(),
            "points": r["points"],
            "last_submission_at": r["last_submission_at"] or "",
        }
        for r in rows
    ]
    print_rows(display, ["owner", "accepted", "submitted", "passed", "points",
                         "last_submission_at"], args.format)
    return EXIT_OK


def cmd_grades(args, config) -> int:
    client = make_client(args, config)
    sys.stdout.write(client.text(f"/api/v1/assignments/{args.assignment}/grades.csv"))
    return EXIT_OK


def cmd_similarity(args, config) -> int:
    client = make_client(args, config)
    query = f"?k={args.k}&w={args.w}&threshold={args.threshold}"
    rows = client.json("GET", f"/api/v1/assignments/{args.assignment}/similarity{query}")
    print_rows(rows, ["doc_a", "doc_b", "score", "shared_print_count"], args.format)
    return EXIT_OK


def cmd_grade_local(args, config) -> int:
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        raise CliError(f"suite file not found: {spec_path}")
    try:
        suite = parse_suite(spec_path.read_text("utf-8"))
    except SuiteError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        raise CliError(f"invalid suite {spec_path}: {exc}{field}")
    submission_dir = Path(args.dir)
    if not submission_dir.is_dir():
        raise CliError(f"submission directory not found: {submission_dir}")
    files = read_dir_files(submission_dir)
    if not files:
        raise CliError(f"submission directory is empty: {submission_dir}")
    policy = GradingPolicy(package_mode=args.package_mode)
    report = grade_submission(files, suite, policy)
    from .suite import report_to_dict

    print_report(report_to_dict(report), args.format)
    return EXIT_OK if report.all_passed else EXIT_TESTS_FAILED


# --- argument parsing -----------------------------------------------------------


def make_client(args, config: dict[str, str]) -> Client:
    server = args.server or config.get("server_url") or "http://127.0.0.1:8080"
    api_key = args.api_key or config.get("api_key")
    if not server.startswith(("http://", "https://")):
        raise CliError(f"server URL must start with http:// or https://: {server!r}")
    return Client(server, api_key)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradeforge",
        description="Autograding service client and offline grader.",
    )
    parser.add_argument("--version", action="version", version=f"gradeforge {__version__}")
    parser.add_argument("--server", help="service base URL (default from ~/.gradeforge.conf)")
    parser.add_argument("--api-key", help="API key when the service requires one")
    parser.add_argument("--config", help="alternate config file path")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p):
        p.add_argument("--format", choices=["table", "csv", "structured"], default=None)

    p = sub.add_parser("serve", help="run the grading service")
    p.add_argument("--bind", help="comma-separated host:port list")
    p.add_argument("--public-bind", help="extra lifecycle-only bind addresses")
    p.add_argument("--data-dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--ui-dir", help="directory of static UI assets served at /ui/")
    p.add_argument("--languages", help="language registry JSON file")
    p.add_argument("--package-mode", choices=["cached", "live"])
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("classroom", help="classroom management")
    class_sub = p.add_subparsers(dest="subcommand", required=True)
    c = class_sub.add_parser("create")
    c.add_argument("--name", required=True)
    c.add_argument("--instructor", action="append", help="ID[:NAME], repeatable")
    c.set_defaults(func=cmd_classroom_create)
    c = class_sub.add_parser("roster-import")
    c.add_argument("--classroom", required=True)
    c.add_argument("file", help="CSV file with columns id[,name]")
    c.set_defaults(func=cmd_roster_import)

    p = sub.add_parser("assignment", help="assignment management")
    assign_sub = p.add_subparsers(dest="subcommand", required=True)
    a = assign_sub.add_parser("create")
    a.add_argument("--classroom", required=True)
    a.add_argument("--title", required=True)
    a.add_argument("--template", required=True, help="starter files directory")
    a.add_argument("--spec", required=True, help="suite file (autograde.spec)")
    a.add_argument("--deadline", required=True, help="ISO 8601 or +90m/+2h/+1d")
    a.add_argument("--mode", default="individual", help="individual or group:N")
    a.add_argument("--variant", action="append", help="DIR[:SPECFILE], repeatable")
    a.add_argument("--seed", help="hex seed for variant distribution")
    a.add_argument("--late-policy", choices=["reject", "accept_flagged"],
                   default="accept_flagged")
    a.add_argument("--score-policy", choices=["best", "latest"], default="best")
    a.set_defaults(func=cmd_assignment_create)

    p = sub.add_parser("accept", help="claim a workspace for an owner")
    p.add_argument("--assignment", required=True)
    p.add_argument("--owner", required=True)
    p.add_argument("--members", help="comma-separated member ids for group mode")
    p.set_defaults(func=cmd_accept)

    p = sub.add_parser("submit", help="upload files, wait for grading, print the report")
    p.add_argument("--workspace", required=True)
    p.add_argument("--assignment", help="assignment id (cached from accept if omitted)")
    p.add_argument("--submitter", default=os.environ.get("USER", "student"))
    p.add_argument("paths", nargs="+", help="files or directories to upload")
    add_format(p)
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("status", help="instructor status table")
    p.add_argument("--assignment", required=True)
    add_format(p)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("grades", help="grade export CSV to stdout")
    p.add_argument("--assignment", required=True)
    p.set_defaults(func=cmd_grades)

    p = sub.add_parser("similarity", help="similarity report for an assignment")
    p.add_argument("--assignment", required=True)
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--w", type=int, default=8)
    p.add_argument("--threshold", type=float, default=0.5)
    add_format(p)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("grade-local", help="grade a directory offline, no server")
    p.add_argument("--spec", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--package-mode", choices=["cached", "live"], default="cached")
    add_format(p)
    p.set_defaults(func=cmd_grade_local)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config_file(Path(args.config) if args.config else None)
    if getattr(args, "format", None) is None and hasattr(args, "format"):
        args.format = config.get("output_format", "table")
    try:
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SuiteError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        print(f"error: {exc}{field}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
