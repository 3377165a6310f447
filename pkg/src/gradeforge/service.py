"""HTTP facade: ad-hoc sandbox runs, assignment lifecycle, job polling,
status, grade export, similarity, and static UI assets.

The service is a single process over one data directory: an event-sourced
``ClassroomManager`` plus a bounded grading worker pool.  ``POST /runs`` is
synchronous (a student watching a check wants the result now); grading jobs
run in the background and are polled via ``GET /jobs/{id}``.  The same
application can listen on several addresses at once, e.g. an intranet
address with ad-hoc runs enabled and a public address restricted to
lifecycle endpoints.

Error bodies are always ``{"error": {"code", "message", "field"?}}``.
"""

from __future__ import annotations

import base64
import binascii
import email.parser
import email.policy
import hmac
import io
import json
import logging
import mimetypes
import os
import re
import tempfile
import threading
import time
import zipfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from . import __version__, engine, sandbox
from .classroom import (
    AssignmentConfig,
    ClassroomManager,
    NotFoundError,
    ValidationError,
    load_assignment_dir,
)
from .engine import GradingPolicy, JobRunner, QueueFullError, UnknownJobError
from .languages import LanguageRegistry, compile_if_needed
from .sandbox import ExecLimits, ExecRequest, ExecResult, WorkspaceError, merge_limits
from .similarity import DEFAULT_K, DEFAULT_THRESHOLD, DEFAULT_W, report_rows
from .store import StoreCorruptError
from .suite import SuiteError, report_to_dict

logger = logging.getLogger(__name__)

ENV_DATA_DIR = "GRADEFORGE_DATA_DIR"
ENV_API_KEY = "GRADEFORGE_API_KEY"
ENV_BIND = "GRADEFORGE_BIND"
ENV_WORKERS = "GRADEFORGE_WORKERS"
ENV_UI_DIR = "GRADEFORGE_UI_DIR"

ROLE_FULL = "full"
ROLE_LIFECYCLE = "lifecycle"  # no ad-hoc /runs on this address

# Hard ceilings for client-supplied /runs limits.
MAX_RUN_WALL = 600
MAX_RUN_CPU = 300
MAX_RUN_MEMORY = 4 * 1024 * 1024 * 1024
MAX_RUN_OUTPUT = 8 * 1024 * 1024
MAX_RUN_PROCESSES = 256

_ZIP_MAX_MEMBERS = 10_000
_ZIP_MAX_TOTAL = 64 * 1024 * 1024


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None,
                 headers: dict[str, str] | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.field = field
        self.headers = headers or {}


@dataclass(frozen=True)
class BindAddress:
    host: str
    port: int
    role: str = ROLE_FULL


@dataclass
class ServiceConfig:
    data_dir: Path
    bind_addresses: tuple[BindAddress, ...] = (BindAddress("127.0.0.1", 8080),)
    api_key: str | None = None
    worker_count: int = 0  # 0 -> cpu count
    max_pending: int | None = None  # None -> 10 * workers
    sandbox_concurrency: int | None = None  # None -> cpu count
    registry: LanguageRegistry = field(default_factory=LanguageRegistry)
    policy: GradingPolicy = field(default_factory=GradingPolicy)
    run_limits: ExecLimits = field(
        default_factory=lambda: ExecLimits(wall_seconds=60, cpu_seconds=30)
    )
    ui_dir: Path | None = None
    max_upload_bytes: int = 10 * 1024 * 1024

    def __post_init__(self):
        if not self.bind_addresses:
            raise ValueError("at least one bind address is required")
        if self.worker_count <= 0:
            self.worker_count = os.cpu_count() or 2


def parse_bind_spec(spec: str) -> tuple[BindAddress, ...]:
    """Parse a comma-separated ``host:port`` list."""
    addresses = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        host, _, port = chunk.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad bind address {chunk!r} (want host:port)")
        addresses.append(BindAddress(host=host, port=int(port)))
    if not addresses:
        raise ValueError("empty bind address list")
    return tuple(addresses)


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str]
    headers: dict[str, str]  # lower-cased names
    body: bytes
    bind_role: str = ROLE_FULL


@dataclass
class Response:
    status: int
    body: bytes
    content_type: str = "application/json"
    headers: dict[str, str] = field(default_factory=dict)


def _json_response(payload, status: int = 200, headers: dict[str, str] | None = None) -> Response:
    body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
    return Response(status=status, body=body, headers=headers or {})


@dataclass(frozen=True)
class Part:
    name: str | None
    filename: str | None
    content: bytes


def parse_multipart(content_type: str, body: bytes) -> list[Part]:
    header = f"Content-Type: {content_type}\r\nMIME-Version: 1.0\r\n\r\n".encode("latin-1")
    message = email.parser.BytesParser(policy=email.policy.HTTP).parsebytes(header + body)
    if not message.is_multipart():
        raise ApiError(400, "validation", "expected a multipart/form-data body")
    parts = []
    for piece in message.iter_parts():
        parts.append(
            Part(
                name=piece.get_param("name", header="content-disposition"),
                filename=piece.get_filename(),
                content=piece.get_payload(decode=True) or b"",
            )
        )
    return parts


def _exec_result_payload(result: ExecResult) -> dict:
    return {
        "outcome": result.outcome,
        "exit_code": result.exit_code,
        "stdout": result.stdout_text(),
        "stderr": result.stderr_text(),
        "wall_ms": result.wall_ms,
        "truncated": result.truncated,
    }


def _iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


class GradeforgeService:
    """Application core plus (optional) HTTP servers over it."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        config.data_dir.mkdir(parents=True, exist_ok=True)
        try:
            self.manager = ClassroomManager(config.data_dir)
        except StoreCorruptError:
            logger.exception("event log corrupt beyond the recoverable tail")
            raise
        if config.sandbox_concurrency:
            sandbox.set_max_concurrent(config.sandbox_concurrency)
        self.runner = JobRunner(
            worker_count=config.worker_count,
            max_pending=config.max_pending,
            policy=config.policy,
            on_complete=self._job_completed,
        )
        self._runs_dir = Path(tempfile.mkdtemp(prefix="gradeforge-runs-"))
        self._servers: list[ThreadingHTTPServer] = []
        self._threads: list[threading.Thread] = []
        self._recover_pending_jobs()

    # -- lifecycle ---------------------------------------------------------

    def _recover_pending_jobs(self) -> None:
        for sub in self.manager.unfinished_submissions():
            ws = self.manager.get_workspace(sub.workspace_id)
            assignment = self.manager.get_assignment(ws.assignment_id)
            suite = assignment.variants[ws.variant_index].suite
            files = self.manager.snapshot_files(sub.files)
            try:
                self.runner.enqueue(sub.id, suite, files, job_id=sub.job_id)
                logger.info("re-enqueued unfinished grading job %s", sub.job_id)
            except QueueFullError:
                logger.warning("queue full during recovery; job %s stays pending", sub.job_id)

    def _job_completed(self, view) -> None:
        try:
            if view.state == engine.DONE:
                self.manager.attach_report(view.submission_ref, view.report)
            else:
                self.manager.record_job_failure(view.submission_ref, view.error or "grading failed")
        except Exception:
            logger.exception("failed to persist result of job %s", view.job_id)

    def start(self) -> None:
        for bind in self.config.bind_addresses:
            server = _Server((bind.host, bind.port), _Handler)
            server.gradeforge = self
            server.bind_role = bind.role
            thread = threading.Thread(
                target=server.serve_forever, daemon=True, name=f"http-{bind.host}:{bind.port}"
            )
            thread.start()
            self._servers.append(server)
            self._threads.append(thread)
        bound = ", ".join(f"{b.host}:{b.port} ({b.role})" for b in self.config.bind_addresses)
        logger.info("gradeforge %s listening on %s", __version__, bound)

    def ports(self) -> list[int]:
        return [server.server_address[1] for server in self._servers]

    def stop(self) -> None:
        for server in self._servers:
            server.shutdown()
            server.server_close()
        self._servers.clear()
        self.runner.shutdown()
        self.manager.log.close()

    # -- request handling ----------------------------------------------------

    ROUTES = []  # populated after class body

    def handle(self, request: Request) -> Response:
        try:
            if request.path != "/healthz":
                self._check_auth(request)
            for method, pattern, handler, needs_runs in self.ROUTES:
                if request.method != method:
                    continue
                match = pattern.match(request.path)
                if match is None:
                    continue
                if needs_runs and request.bind_role == ROLE_LIFECYCLE:
                    raise ApiError(404, "not_found", "endpoint not available on this address")
                return handler(self, request, *match.groups())
            raise ApiError(404, "not_found", f"no route for {request.method} {request.path}")
        except ApiError as exc:
            payload = {"error": {"code": exc.code, "message": str(exc)}}
            if exc.field:
                payload["error"]["field"] = exc.field
            return _json_response(payload, status=exc.status, headers=exc.headers)
        except (ValidationError, WorkspaceError) as exc:
            payload = {"error": {"code": "validation", "message": str(exc)}}
            if getattr(exc, "field", None):
                payload["error"]["field"] = exc.field
            return _json_response(payload, status=400)
        except SuiteError as exc:
            payload = {"error": {"code": "suite_error", "message": str(exc)}}
            if exc.field:
                payload["error"]["field"] = exc.field
            return _json_response(payload, status=422)
        except (NotFoundError, UnknownJobError) as exc:
            return _json_response(
                {"error": {"code": "not_found", "message": str(exc)}}, status=404
            )
        except QueueFullError as exc:
            return _json_response(
                {"error": {"code": "queue_full", "message": str(exc)}},
                status=503,
                headers={"Retry-After": "2"},
            )
        except Exception as exc:
            logger.exception("unhandled error for %s %s", request.method, request.path)
            return _json_response(
                {"error": {"code": "internal", "message": f"internal error: {exc}"}}, status=500
            )

    def _check_auth(self, request: Request) -> None:
        expected = self.config.api_key
        if not expected:
            return
        provided = request.headers.get("x-api-key") or request.query.get("api_key") or ""
        if not hmac.compare_digest(provided.encode(), expected.encode()):
            raise ApiError(401, "auth", "missing or invalid API key")

    def _json_body(self, request: Request) -> dict:
        try:
            data = json.loads(request.body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ApiError(400, "validation", f"request body is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ApiError(400, "validation", "request body must be a JSON object")
        return data

    @staticmethod
    def _require(data: dict, key: str, kind=str):
        value = data.get(key)
        if not isinstance(value, kind) or (kind is str and not value.strip()):
            raise ApiError(400, "validation", f"missing or invalid field {key!r}", field=key)
        return value

    # -- endpoints ----------------------------------------------------------

    def ep_healthz(self, request: Request) -> Response:
        return _json_response(
            {
                "version": __version__,
                "languages_count": len(self.config.registry),
                "queue_depth": self.runner.pending(),
            }
        )

    def ep_languages(self, request: Request) -> Response:
        return _json_response(
            [
                {
                    "id": lang.id,
                    "display_name": lang.display_name,
                    "extension": lang.source_extension,
                    "compiled": lang.is_compiled,
                }
                for lang in self.config.registry.list_languages()
            ]
        )

    def _run_limits(self, data: dict) -> ExecLimits:
        raw = data.get("limits") or {}
        if not isinstance(raw, dict):
            raise ApiError(400, "validation", "limits must be an object", field="limits")
        caps = {
            "wall_seconds": MAX_RUN_WALL,
            "cpu_seconds": MAX_RUN_CPU,
            "memory_bytes": MAX_RUN_MEMORY,
            "max_output_bytes": MAX_RUN_OUTPUT,
            "max_processes": MAX_RUN_PROCESSES,
        }
        overrides = {}
        for name, cap in caps.items():
            if name not in raw:
                continue
            value = raw[name]
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ApiError(400, "validation", f"limit {name} must be a positive integer",
                               field=name)
            if value > cap:
                raise ApiError(400, "validation", f"limit {name} exceeds maximum {cap}", field=name)
            overrides[name] = value
        try:
            limits = merge_limits(self.config.run_limits, **overrides)
        except ValueError as exc:
            raise ApiError(400, "validation", str(exc), field="limits")
        return limits

    def ep_run(self, request: Request) -> Response:
        data = self._json_body(request)
        language_id = self._require(data, "language_id")
        lang = self.config.registry.get(language_id)
        if lang is None:
            raise ApiError(400, "validation", f"unknown language {language_id!r}",
                           field="language_id")
        sourcecode = data.get("sourcecode")
        if not isinstance(sourcecode, str):
            raise ApiError(400, "validation", "missing or invalid field 'sourcecode'",
                           field="sourcecode")
        limits = self._run_limits(data)

        main = lang.main_file_name()
        files = {main: sourcecode.encode("utf-8")}
        for extra in data.get("files") or []:
            if not isinstance(extra, dict) or "name" not in extra or "content_base64" not in extra:
                raise ApiError(400, "validation",
                               "files entries must be {name, content_base64}", field="files")
            try:
                files[extra["name"]] = base64.b64decode(extra["content_base64"], validate=True)
            except (binascii.Error, ValueError):
                raise ApiError(400, "validation",
                               f"invalid base64 content for file {extra['name']!r}", field="files")

        stdin_text = data.get("input")
        if stdin_text is not None and not isinstance(stdin_text, str):
            raise ApiError(400, "validation", "input must be a string", field="input")

        workspace = sandbox.prepare_workspace(files, base_dir=self._runs_dir)
        try:
            if lang.is_compiled:
                compiled = compile_if_needed(lang, workspace)
                if not compiled.succeeded:
                    return _json_response(_exec_result_payload(compiled))
            result = sandbox.execute(
                ExecRequest(
                    command=lang.render_run(main),
                    workspace=workspace,
                    stdin_data=stdin_text.encode("utf-8") if stdin_text is not None else None,
                    limits=limits,
                )
            )
        finally:
            workspace.cleanup()
        return _json_response(_exec_result_payload(result))

    def ep_create_classroom(self, request: Request) -> Response:
        data = self._json_body(request)
        name = self._require(data, "name")
        instructors = data.get("instructors") or [{"id": "instructor", "name": ""}]
        staff = []
        for entry in instructors:
            if isinstance(entry, dict) and entry.get("id"):
                staff.append((entry["id"], entry.get("name", "")))
            else:
                raise ApiError(400, "validation", "instructors entries must be {id, name?}",
                               field="instructors")
        room = self.manager.create_classroom(name, staff)
        return _json_response(self._classroom_payload(room))

    def _classroom_payload(self, room) -> dict:
        return {
            "id": room.id,
            "name": room.name,
            "roster": [{"id": s.id, "name": s.name} for s in room.roster],
            "staff": [{"id": s.id, "name": s.name} for s in room.staff],
        }

    def ep_import_roster(self, request: Request, classroom_id: str) -> Response:
        try:
            csv_text = request.body.decode("utf-8")
        except UnicodeDecodeError:
            raise ApiError(400, "validation", "roster CSV must be UTF-8", field="roster")
        imported = self.manager.import_roster(classroom_id, csv_text)
        room = self.manager.get_classroom(classroom_id)
        return _json_response({"imported": imported, "roster_size": len(room.roster)})

    def ep_create_assignment(self, request: Request, classroom_id: str) -> Response:
        content_type = request.headers.get("content-type", "")
        if "multipart" not in content_type:
            raise ApiError(400, "validation", "expected multipart body (config + template)")
        config_part = None
        template_part = None
        for part in parse_multipart(content_type, request.body):
            if part.name == "config":
                config_part = part
            elif part.name == "template":
                template_part = part
        if config_part is None:
            raise ApiError(400, "validation", "missing 'config' part", field="config")
        if template_part is None:
            raise ApiError(400, "validation", "missing 'template' part (zip archive)",
                           field="template")
        try:
            raw = json.loads(config_part.content.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ApiError(400, "validation", f"config part is not valid JSON: {exc}",
                           field="config")
        config = self._assignment_config(raw)
        variants = self._variants_from_zip(template_part.content)
        assignment = self.manager.create_assignment(classroom_id, config, variants)
        return _json_response(self._assignment_payload(assignment))

    def _assignment_config(self, raw: dict) -> AssignmentConfig:
        title = raw.get("title")
        deadline_text = raw.get("deadline")
        if not title or not isinstance(title, str):
            raise ApiError(400, "validation", "config.title is required", field="title")
        if not deadline_text or not isinstance(deadline_text, str):
            raise ApiError(400, "validation", "config.deadline is required (ISO 8601)",
                           field="deadline")
        try:
            deadline = datetime.fromisoformat(deadline_text.replace("Z", "+00:00"))
        except ValueError:
            raise ApiError(400, "validation", f"bad deadline {deadline_text!r}", field="deadline")
        if deadline.tzinfo is None:
            deadline = deadline.replace(tzinfo=timezone.utc)
        return AssignmentConfig(
            title=title,
            deadline=deadline,
            mode=raw.get("mode", "individual"),
            team_size=raw.get("team_size"),
            visibility=raw.get("visibility", "private"),
            late_policy=raw.get("late_policy", "accept_flagged"),
            score_policy=raw.get("score_policy", "best"),
            seed=raw.get("seed"),
        )

    def _variants_from_zip(self, archive: bytes) -> list[tuple[dict[str, bytes], str]]:
        try:
            zf = zipfile.ZipFile(io.BytesIO(archive))
        except zipfile.BadZipFile:
            raise ApiError(400, "validation", "template part must be a zip archive",
                           field="template")
        names = zf.namelist()
        if len(names) > _ZIP_MAX_MEMBERS:
            raise ApiError(400, "validation", "template archive has too many members",
                           field="template")
        total = sum(info.file_size for info in zf.infolist())
        if total > _ZIP_MAX_TOTAL:
            raise ApiError(413, "too_large", "template archive too large uncompressed",
                           field="template")
        with tempfile.TemporaryDirectory(prefix="gradeforge-tmpl-") as tmp:
            root = Path(tmp)
            for info in zf.infolist():
                if info.is_dir():
                    continue
                relative = sandbox.validate_relative_path(info.filename)
                target = root / relative
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(zf.read(info))
            return load_assignment_dir(root)

    def _assignment_payload(self, assignment) -> dict:
        return {
            "id": assignment.id,
            "classroom_id": assignment.classroom_id,
            "title": assignment.config.title,
            "deadline": _iso(assignment.config.deadline),
            "mode": assignment.config.mode,
            "team_size": assignment.config.team_size,
            "visibility": assignment.config.visibility,
            "late_policy": assignment.config.late_policy,
            "score_policy": assignment.config.score_policy,
            "variant_count": len(assignment.variants),
            "max_points": assignment.max_points,
        }

    def ep_accept(self, request: Request, assignment_id: str) -> Response:
        data = self._json_body(request)
        owner = self._require(data, "owner")
        members = data.get("members")
        if members is not None and (
            not isinstance(members, list) or not all(isinstance(m, str) for m in members)
        ):
            raise ApiError(400, "validation", "members must be a list of ids", field="members")
        workspace = self.manager.accept(assignment_id, owner, members=members)
        files = self.manager.snapshot_files(workspace.files)
        return _json_response(
            {
                "id": workspace.id,
                "assignment_id": workspace.assignment_id,
                "owner": workspace.owner,
                "members": list(workspace.members),
                "variant_index": workspace.variant_index,
                "created_at": _iso(workspace.created_at),
                "files": {path: content.decode("utf-8", "replace") for path, content in files.items()},
            }
        )

    def ep_submit(self, request: Request, assignment_id: str) -> Response:
        content_type = request.headers.get("content-type", "")
        if "multipart" not in content_type:
            raise ApiError(400, "validation", "expected multipart body (workspace_id, submitter, files)")
        workspace_id = None
        submitter = None
        files: dict[str, bytes] = {}
        for part in parse_multipart(content_type, request.body):
            if part.filename:
                files[part.filename] = part.content
            elif part.name == "workspace_id":
                workspace_id = part.content.decode("utf-8").strip()
            elif part.name == "submitter":
                submitter = part.content.decode("utf-8").strip()
        if not workspace_id:
            raise ApiError(400, "validation", "missing field 'workspace_id'", field="workspace_id")
        if not submitter:
            raise ApiError(400, "validation", "missing field 'submitter'", field="submitter")

        ws = self.manager.get_workspace(workspace_id)
        if ws.assignment_id != assignment_id:
            raise ApiError(409, "conflict", "workspace does not belong to this assignment")
        if self.runner.pending() >= self.runner.max_pending:
            raise QueueFullError("grading queue is full; retry later")
        submission = self.manager.submit(workspace_id, submitter, files)
        assignment = self.manager.get_assignment(assignment_id)
        suite = assignment.variants[ws.variant_index].suite
        try:
            self.runner.enqueue(
                submission.id, suite, self.manager.snapshot_files(submission.files),
                job_id=submission.job_id,
            )
        except QueueFullError:
            # Snapshot persisted; grading will be re-enqueued on next boot.
            raise
        return _json_response(
            {"submission_id": submission.id, "job_id": submission.job_id}, status=202
        )

    def ep_job_status(self, request: Request, job_id: str) -> Response:
        submission = self.manager.find_submission_by_job(job_id)
        try:
            view = self.runner.job_status(job_id)
            state, report, error = view.state, view.report, view.error
        except UnknownJobError:
            if submission is None:
                raise
            if submission.report is not None:
                state, report, error = engine.DONE, submission.report, None
            elif submission.job_error is not None:
                state, report, error = engine.FAILED_JOB, None, submission.job_error
            else:
                state, report, error = engine.QUEUED, None, None
        report_payload = report_to_dict(report) if report is not None else None
        if report_payload is not None and submission is not None:
            self._attach_expectations(report_payload, submission)
        return _json_response(
            {
                "job_id": job_id,
                "state": state,
                "submission_id": submission.id if submission else None,
                "report": report_payload,
                "error": error,
            }
        )

    def _attach_expectations(self, report_payload: dict, submission) -> None:
        """Annotate result rows with the suite's expected output and comparison
        mode so clients can show expected-vs-actual without re-grading."""
        try:
            ws = self.manager.get_workspace(submission.workspace_id)
            assignment = self.manager.get_assignment(ws.assignment_id)
            suite = assignment.variants[ws.variant_index].suite
        except (NotFoundError, IndexError):
            return
        by_name = {t.name: t for t in suite.tests}
        for row in report_payload["results"]:
            test = by_name.get(row["test_name"])
            if test is not None:
                row["expected_output"] = test.expected_output
                row["comparison"] = test.comparison
                row["max_points"] = test.points

    def ep_status(self, request: Request, assignment_id: str) -> Response:
        rows = self.manager.status(assignment_id)
        return _json_response(
            [
                {
                    "owner": row.owner,
                    "accepted": row.accepted,
                    "submitted": row.submitted,
                    "passed": row.passed,
                    "points": row.points,
                    "last_submission_at": _iso(row.last_submission_at)
                    if row.last_submission_at
                    else None,
                }
                for row in rows
            ]
        )

    def ep_grades_csv(self, request: Request, assignment_id: str) -> Response:
        csv_text = self.manager.export_grades(assignment_id)
        return Response(
            status=200,
            body=csv_text.encode("utf-8"),
            content_type="text/csv; charset=utf-8",
            headers={"Content-Disposition": "attachment; filename=grades.csv"},
        )

    def ep_similarity(self, request: Request, assignment_id: str) -> Response:
        def int_param(name, default, minimum):
            raw = request.query.get(name)
            if raw is None:
                return default
            try:
                value = int(raw)
            except ValueError:
                raise ApiError(400, "validation", f"{name} must be an integer", field=name)
            if value < minimum:
                raise ApiError(400, "validation", f"{name} must be >= {minimum}", field=name)
            return value

        k = int_param("k", DEFAULT_K, 2)
        w = int_param("w", DEFAULT_W, 1)
        raw_threshold = request.query.get("threshold")
        try:
            threshold = float(raw_threshold) if raw_threshold is not None else DEFAULT_THRESHOLD
        except ValueError:
            raise ApiError(400, "validation", "threshold must be a number", field="threshold")
        if not 0.0 <= threshold <= 1.0:
            raise ApiError(400, "validation", "threshold must be in [0, 1]", field="threshold")
        pairs = self.manager.similarity_report(
            assignment_id, k=k, w=w, threshold=threshold, registry=self.config.registry
        )
        return _json_response(report_rows(pairs))

    def ep_ui_config(self, request: Request) -> Response:
        assignments = []
        for assignment in self.manager.assignments.values():
            template = assignment.variants[0]
            readme = ""
            for path, digest in template.files.items():
                if path.lower() == "readme.md":
                    readme = self.manager.blobs.get(digest).decode("utf-8", "replace")
                    break
            assignments.append({**self._assignment_payload(assignment), "readme": readme})
        assignments.sort(key=lambda a: a["title"])
        return _json_response(
            {
                "server_time": _iso(datetime.now(timezone.utc)),
                "version": __version__,
                "assignments": assignments,
            }
        )

    def ep_ui_asset(self, request: Request, asset_path: str) -> Response:
        ui_dir = self.config.ui_dir
        if ui_dir is None:
            raise ApiError(404, "not_found", "no UI bundle configured")
        relative = asset_path or "index.html"
        try:
            clean = sandbox.validate_relative_path(relative)
        except WorkspaceError:
            raise ApiError(404, "not_found", "no such asset")
        target = Path(ui_dir) / clean
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            raise ApiError(404, "not_found", f"no such asset {relative!r}")
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        return Response(status=200, body=target.read_bytes(), content_type=content_type)


def _route(method: str, pattern: str, handler, needs_runs: bool = False):
    return (method, re.compile(pattern + r"$"), handler, needs_runs)


GradeforgeService.ROUTES = [
    _route("GET", r"/healthz", GradeforgeService.ep_healthz),
    _route("GET", r"/api/v1/languages", GradeforgeService.ep_languages),
    _route("POST", r"/api/v1/runs", GradeforgeService.ep_run, needs_runs=True),
    _route("POST", r"/api/v1/classrooms", GradeforgeService.ep_create_classroom),
    _route("POST", r"/api/v1/classrooms/([0-9a-f]+)/roster", GradeforgeService.ep_import_roster),
    _route("POST", r"/api/v1/classrooms/([0-9a-f]+)/assignments",
           GradeforgeService.ep_create_assignment),
    _route("POST", r"/api/v1/assignments/([0-9a-f]+)/accept", GradeforgeService.ep_accept),
    _route("POST", r"/api/v1/assignments/([0-9a-f]+)/submissions", GradeforgeService.ep_submit),
    _route("GET", r"/api/v1/jobs/([0-9a-f]+)", GradeforgeService.ep_job_status),
    _route("GET", r"/api/v1/assignments/([0-9a-f]+)/status", GradeforgeService.ep_status),
    _route("GET", r"/api/v1/assignments/([0-9a-f]+)/grades\.csv", GradeforgeService.ep_grades_csv),
    _route("GET", r"/api/v1/assignments/([0-9a-f]+)/similarity", GradeforgeService.ep_similarity),
    _route("GET", r"/api/v1/ui-config", GradeforgeService.ep_ui_config),
    _route("GET", r"/ui/?(.*)", GradeforgeService.ep_ui_asset),
]


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128
    allow_reuse_address = True
    gradeforge: GradeforgeService = None
    bind_role: str = ROLE_FULL


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = f"gradeforge/{__version__}"

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        logger.debug("%s - %s", self.address_string(), format % args)

    def _read_body(self) -> bytes | None:
        length = int(self.headers.get("Content-Length") or 0)
        if length > self.server.gradeforge.config.max_upload_bytes:
            self._send(
                Response(
                    status=413,
                    body=json.dumps(
                        {"error": {"code": "too_large",
                                   "message": "request body exceeds upload limit"}}
                    ).encode(),
                )
            )
            self.close_connection = True
            return None
        return self.rfile.read(length) if length else b""

    def _dispatch(self):
        body = self._read_body()
        if body is None:
            return
        split = urlsplit(self.path)
        query = {k: v[-1] for k, v in parse_qs(split.query).items()}
        request = Request(
            method=self.command,
            path=split.path,
            query=query,
            headers={k.lower(): v for k, v in self.headers.items()},
            body=body,
            bind_role=self.server.bind_role,
        )
        response = self.server.gradeforge.handle(request)
        self._send(response)

    def _send(self, response: Response):
        self.send_response(response.status)
        self.send_header("Content-Type", response.content_type)
        self.send_header("Content-Length", str(len(response.body)))
        for name, value in response.headers.items():
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(response.body)

    do_GET = _dispatch
    do_POST = _dispatch
    do_PUT = _dispatch
    do_DELETE = _dispatch


def service_config_from_env(
    data_dir: str | None = None,
    bind: str | None = None,
    api_key: str | None = None,
    workers: int | None = None,
    ui_dir: str | None = None,
    **overrides,
) -> ServiceConfig:
    """Build a ServiceConfig from GRADEFORGE_* environment variables, with
    explicit arguments taking precedence."""
    data = data_dir or os.environ.get(ENV_DATA_DIR) or "./gradeforge-data"
    bind_spec = bind or os.environ.get(ENV_BIND) or "127.0.0.1:8080"
    key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)
    worker_env = os.environ.get(ENV_WORKERS)
    worker_count = workers or (int(worker_env) if worker_env else 0)
    ui = ui_dir or os.environ.get(ENV_UI_DIR)
    return ServiceConfig(
        data_dir=Path(data),
        bind_addresses=parse_bind_spec(bind_spec),
        api_key=key or None,
        worker_count=worker_count,
        ui_dir=Path(ui) if ui else None,
        **overrides,
    )


def serve_forever(config: ServiceConfig) -> None:
    """Run the service until interrupted (CLI entry)."""
    service = GradeforgeService(config)
    service.start()
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
