"""Assignment lifecycle: classrooms, rosters, templates, accept/submit,
deadlines, variants, status aggregation, grade export and project metrics.

All state lives in the event log + blob store (``store``); every mutation
serializes through one appender lock and is immediately visible to readers
in-process.  Rebuilding a manager over the same data directory replays the
log and reproduces identical state.
"""

from __future__ import annotations

import csv
import hashlib
import io
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import similarity
from .languages import LanguageRegistry
from .sandbox import validate_relative_path
from .store import BLOBS_DIRNAME, EVENTS_FILENAME, BlobStore, EventLog
from .suite import SUITE_FILENAME, GradeReport, TestSuite, parse_suite, report_from_dict, report_to_dict

INDIVIDUAL = "individual"
GROUP = "group"

LATE_REJECT = "reject"
LATE_ACCEPT_FLAGGED = "accept_flagged"

SCORE_BEST = "best"
SCORE_LATEST = "latest"


class ValidationError(ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class NotFoundError(KeyError):
    def __str__(self):
        return self.args[0] if self.args else "not found"


@dataclass(frozen=True)
class Student:
    id: str
    name: str = ""


@dataclass(frozen=True)
class Instructor:
    id: str
    name: str = ""


@dataclass
class Classroom:
    id: str
    name: str
    roster: list[Student] = field(default_factory=list)
    staff: list[Instructor] = field(default_factory=list)


@dataclass(frozen=True)
class Variant:
    files: dict[str, str]  # path -> blob digest
    suite_text: str
    suite: TestSuite


@dataclass(frozen=True)
class AssignmentConfig:
    title: str
    deadline: datetime
    mode: str = INDIVIDUAL
    team_size: int | None = None
    visibility: str = "private"
    late_policy: str = LATE_ACCEPT_FLAGGED
    score_policy: str = SCORE_BEST
    seed: str | None = None

    def validate(self) -> None:
        if not self.title.strip():
            raise ValidationError("assignment title must be non-empty", field="title")
        if self.deadline.tzinfo is None:
            raise ValidationError("deadline must be timezone-aware", field="deadline")
        if self.mode not in (INDIVIDUAL, GROUP):
            raise ValidationError(f"unknown mode {self.mode!r}", field="mode")
        if self.mode == GROUP:
            if not isinstance(self.team_size, int) or self.team_size < 2:
                raise ValidationError("group mode requires team_size >= 2", field="team_size")
        elif self.team_size is not None:
            raise ValidationError("team_size only applies to group mode", field="team_size")
        if self.visibility not in ("private", "public"):
            raise ValidationError(f"unknown visibility {self.visibility!r}", field="visibility")
        if self.late_policy not in (LATE_REJECT, LATE_ACCEPT_FLAGGED):
            raise ValidationError(f"unknown late policy {self.late_policy!r}", field="late_policy")
        if self.score_policy not in (SCORE_BEST, SCORE_LATEST):
            raise ValidationError(f"unknown score policy {self.score_policy!r}", field="score_policy")


@dataclass
class Assignment:
    id: str
    classroom_id: str
    config: AssignmentConfig
    variants: list[Variant]
    created_at: datetime

    @property
    def seed(self) -> str:
        return self.config.seed or self.id

    @property
    def max_points(self) -> int:
        return self.variants[0].suite.max_points


@dataclass
class Workspace:
    id: str
    assignment_id: str
    owner: str
    members: tuple[str, ...]
    variant_index: int
    files: dict[str, str]  # path -> blob digest
    created_at: datetime


@dataclass(frozen=True)
class Comment:
    author: str
    text: str
    created_at: datetime


@dataclass
class SubmissionRecord:
    id: str
    workspace_id: str
    submitter: str
    sequence: int
    submitted_at: datetime
    late: bool
    files: dict[str, str]  # path -> blob digest
    job_id: str
    report: GradeReport | None = None
    job_error: str | None = None
    comments: list[Comment] = field(default_factory=list)


@dataclass(frozen=True)
class StatusRow:
    owner: str
    accepted: bool
    submitted: bool
    passed: bool
    points: int
    last_submission_at: datetime | None


@dataclass(frozen=True)
class ProjectMetrics:
    submission_count: int
    contributors: dict[str, int]
    weekly: dict[str, int]  # ISO week ("2026-W32") -> submissions


def pick_variant(seed: str, owner_id: str, variant_count: int) -> int:
    """Deterministic variant assignment: hash of seed and owner, mod count."""
    if variant_count < 1:
        raise ValidationError("assignment must have at least one variant")
    digest = hashlib.sha256(f"{seed}:{owner_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % variant_count


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def _iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


def _parse_iso(text: str) -> datetime:
    return datetime.fromisoformat(text)


def read_dir_files(path: str | Path) -> dict[str, bytes]:
    """All files under ``path`` keyed by their relative (posix) path."""
    root = Path(path)
    if not root.is_dir():
        raise ValidationError(f"not a directory: {root}")
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def load_assignment_dir(path: str | Path) -> list[tuple[dict[str, bytes], str]]:
    """Build variant sources from the template directory convention.

    Layout: ``template/`` (starter files), ``autograde.spec``, optional
    ``variants/<n>/`` whose own ``template/`` or ``autograde.spec`` override
    the base for that variant.  Returns ``[(files, suite_text), ...]``.
    """
    root = Path(path)
    base_template = root / "template"
    base_spec = root / SUITE_FILENAME
    base_files = read_dir_files(base_template) if base_template.is_dir() else {}
    base_suite = base_spec.read_text("utf-8") if base_spec.is_file() else None

    variants_dir = root / "variants"
    if not variants_dir.is_dir():
        if base_suite is None:
            raise ValidationError(f"missing {SUITE_FILENAME} in {root}")
        return [(base_files, base_suite)]

    numbered = sorted(
        (d for d in variants_dir.iterdir() if d.is_dir() and d.name.isdigit()),
        key=lambda d: int(d.name),
    )
    if not numbered:
        raise ValidationError(f"variants/ in {root} contains no numbered variant directories")
    sources = []
    for d in numbered:
        files = read_dir_files(d / "template") if (d / "template").is_dir() else dict(base_files)
        spec_file = d / SUITE_FILENAME
        suite_text = spec_file.read_text("utf-8") if spec_file.is_file() else base_suite
        if suite_text is None:
            raise ValidationError(f"variant {d.name} has no suite and no base {SUITE_FILENAME}")
        sources.append((files, suite_text))
    return sources


class ClassroomManager:
    """Event-sourced lifecycle state over one data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log = EventLog(self.data_dir / EVENTS_FILENAME)
        self.blobs = BlobStore(self.data_dir / BLOBS_DIRNAME)
        self._lock = threading.RLock()

        self.classrooms: dict[str, Classroom] = {}
        self.assignments: dict[str, Assignment] = {}
        self.workspaces: dict[str, Workspace] = {}
        self._workspace_by_owner: dict[tuple[str, str], str] = {}
        self.submissions: dict[str, SubmissionRecord] = {}
        self._submissions_by_workspace: dict[str, list[str]] = {}
        # submission id -> "pending" | "done" | "failed" (grading outcome)
        self._job_state: dict[str, str] = {}

        for record in self.log.records():
            self._apply(record)

    # -- event handling -------------------------------------------------

    def _append(self, event_type: str, data: dict) -> None:
        self.log.append(event_type, data)
        self._apply({"type": event_type, **data})

    def _apply(self, record: dict) -> None:
        handler = getattr(self, f"_apply_{record['type']}", None)
        if handler is None:
            raise ValueError(f"unknown event type {record['type']!r} in log")
        handler(record)

    def _apply_classroom_created(self, r: dict) -> None:
        self.classrooms[r["id"]] = Classroom(
            id=r["id"],
            name=r["name"],
            staff=[Instructor(id=i, name=n) for i, n in r["staff"]],
        )

    def _apply_roster_imported(self, r: dict) -> None:
        room = self.classrooms[r["classroom_id"]]
        by_id = {s.id: s for s in room.roster}
        for sid, name in r["students"]:
            by_id[sid] = Student(id=sid, name=name)
        room.roster = list(by_id.values())

    def _apply_assignment_created(self, r: dict) -> None:
        cfg = r["config"]
        config = AssignmentConfig(
            title=cfg["title"],
            deadline=_parse_iso(cfg["deadline"]),
            mode=cfg["mode"],
            team_size=cfg.get("team_size"),
            visibility=cfg.get("visibility", "private"),
            late_policy=cfg.get("late_policy", LATE_ACCEPT_FLAGGED),
            score_policy=cfg.get("score_policy", SCORE_BEST),
            seed=cfg.get("seed"),
        )
        variants = [
            Variant(files=v["files"], suite_text=v["suite"], suite=parse_suite(v["suite"]))
            for v in r["variants"]
        ]
        self.assignments[r["id"]] = Assignment(
            id=r["id"],
            classroom_id=r["classroom_id"],
            config=config,
            variants=variants,
            created_at=_parse_iso(r["ts"]),
        )

    def _apply_workspace_accepted(self, r: dict) -> None:
        ws = Workspace(
            id=r["id"],
            assignment_id=r["assignment_id"],
            owner=r["owner"],
            members=tuple(r["members"]),
            variant_index=r["variant_index"],
            files=r["files"],
            created_at=_parse_iso(r["ts"]),
        )
        self.workspaces[ws.id] = ws
        self._workspace_by_owner[(ws.assignment_id, ws.owner)] = ws.id
        self._submissions_by_workspace.setdefault(ws.id, [])

    def _apply_submission_created(self, r: dict) -> None:
        sub = SubmissionRecord(
            id=r["id"],
            workspace_id=r["workspace_id"],
            submitter=r["submitter"],
            sequence=r["sequence"],
            submitted_at=_parse_iso(r["ts"]),
            late=r["late"],
            files=r["files"],
            job_id=r["job_id"],
        )
        self.submissions[sub.id] = sub
        self._submissions_by_workspace.setdefault(sub.workspace_id, []).append(sub.id)
        self._job_state[sub.id] = "pending"

    def _apply_report_attached(self, r: dict) -> None:
        sub = self.submissions[r["submission_id"]]
        sub.report = report_from_dict(r["report"])
        self._job_state[sub.id] = "done"

    def _apply_job_failed(self, r: dict) -> None:
        sub = self.submissions[r["submission_id"]]
        sub.job_error = r["error"]
        self._job_state[sub.id] = "failed"

    def _apply_comment_added(self, r: dict) -> None:
        sub = self.submissions[r["submission_id"]]
        sub.comments.append(
            Comment(author=r["author"], text=r["text"], created_at=_parse_iso(r["ts"]))
        )

    # -- lookups ----------------------------------------------------------

    def get_classroom(self, classroom_id: str) -> Classroom:
        room = self.classrooms.get(classroom_id)
        if room is None:
            raise NotFoundError(f"unknown classroom {classroom_id}")
        return room

    def get_assignment(self, assignment_id: str) -> Assignment:
        assignment = self.assignments.get(assignment_id)
        if assignment is None:
            raise NotFoundError(f"unknown assignment {assignment_id}")
        return assignment

    def get_workspace(self, workspace_id: str) -> Workspace:
        ws = self.workspaces.get(workspace_id)
        if ws is None:
            raise NotFoundError(f"unknown workspace {workspace_id}")
        return ws

    def get_submission(self, submission_id: str) -> SubmissionRecord:
        sub = self.submissions.get(submission_id)
        if sub is None:
            raise NotFoundError(f"unknown submission {submission_id}")
        return sub

    def find_submission_by_job(self, job_id: str) -> SubmissionRecord | None:
        for sub in self.submissions.values():
            if sub.job_id == job_id:
                return sub
        return None

    def workspace_for(self, assignment_id: str, owner: str) -> Workspace | None:
        ws_id = self._workspace_by_owner.get((assignment_id, owner))
        return self.workspaces[ws_id] if ws_id else None

    def workspace_submissions(self, workspace_id: str) -> list[SubmissionRecord]:
        self.get_workspace(workspace_id)
        return [self.submissions[sid] for sid in self._submissions_by_workspace.get(workspace_id, [])]

    def snapshot_files(self, manifest: dict[str, str]) -> dict[str, bytes]:
        return self.blobs.get_files(manifest)

    # -- mutations ----------------------------------------------------------

    def create_classroom(self, name: str, staff: list[Instructor | tuple]) -> Classroom:
        staff = [s if isinstance(s, Instructor) else Instructor(*s) for s in staff]
        if not name.strip():
            raise ValidationError("classroom name must be non-empty", field="name")
        if not staff:
            raise ValidationError("a classroom needs at least one instructor", field="staff")
        if len({s.id for s in staff}) != len(staff):
            raise ValidationError("duplicate instructor id", field="staff")
        classroom_id = uuid.uuid4().hex
        with self._lock:
            self._append(
                "classroom_created",
                {"id": classroom_id, "name": name, "staff": [[s.id, s.name] for s in staff],
                 "ts": _iso(_utcnow())},
            )
            return self.classrooms[classroom_id]

    def import_roster(self, classroom_id: str, csv_text: str) -> int:
        """Merge students from CSV with header ``id[,name]`` into the roster."""
        with self._lock:
            self.get_classroom(classroom_id)
            reader = csv.reader(io.StringIO(csv_text))
            rows = [row for row in reader if row and any(cell.strip() for cell in row)]
            if not rows:
                raise ValidationError("roster CSV is empty", field="roster")
            header = [cell.strip().lower() for cell in rows[0]]
            if "id" not in header:
                raise ValidationError("roster CSV must have an 'id' column", field="roster")
            id_col = header.index("id")
            name_col = header.index("name") if "name" in header else None
            students = []
            seen = set()
            for row in rows[1:]:
                sid = row[id_col].strip()
                if not sid:
                    raise ValidationError("roster CSV contains an empty student id", field="roster")
                if sid in seen:
                    raise ValidationError(f"duplicate student id {sid!r} in roster CSV", field="roster")
                seen.add(sid)
                name = row[name_col].strip() if name_col is not None and len(row) > name_col else ""
                students.append([sid, name])
            if not students:
                raise ValidationError("roster CSV has no student rows", field="roster")
            self._append(
                "roster_imported",
                {"classroom_id": classroom_id, "students": students, "ts": _iso(_utcnow())},
            )
            return len(students)

    def create_assignment(
        self,
        classroom_id: str,
        config: AssignmentConfig,
        variants: list[tuple[dict[str, bytes], str]],
        now: datetime | None = None,
    ) -> Assignment:
        config.validate()
        with self._lock:
            self.get_classroom(classroom_id)
            if not variants:
                raise ValidationError("assignment needs at least one variant", field="variants")
            parsed: list[tuple[dict[str, bytes], str, TestSuite]] = []
            for files, suite_text in variants:
                if not files:
                    raise ValidationError("empty template", field="template")
                for path in files:
                    validate_relative_path(path)
                parsed.append((files, suite_text, parse_suite(suite_text)))
            points = {suite.max_points for _, _, suite in parsed}
            if len(points) != 1:
                raise ValidationError(
                    f"variants must have equal max_points, got {sorted(points)}", field="variants"
                )
            assignment_id = uuid.uuid4().hex
            event_variants = [
                {"files": self.blobs.put_files(files), "suite": suite_text}
                for files, suite_text, _ in parsed
            ]
            self._append(
                "assignment_created",
                {
                    "id": assignment_id,
                    "classroom_id": classroom_id,
                    "config": {
                        "title": config.title,
                        "deadline": _iso(config.deadline),
                        "mode": config.mode,
                        "team_size": config.team_size,
                        "visibility": config.visibility,
                        "late_policy": config.late_policy,
                        "score_policy": config.score_policy,
                        "seed": config.seed,
                    },
                    "variants": event_variants,
                    "ts": _iso(now or _utcnow()),
                },
            )
            return self.assignments[assignment_id]

    def accept(
        self,
        assignment_id: str,
        owner: str,
        members: list[str] | None = None,
        now: datetime | None = None,
    ) -> Workspace:
        """Claim a workspace for an owner; idempotent for repeated accepts."""
        if not owner or not owner.strip():
            raise ValidationError("owner must be non-empty", field="owner")
        with self._lock:
            assignment = self.get_assignment(assignment_id)
            existing = self.workspace_for(assignment_id, owner)
            if existing is not None:
                return existing
            room = self.get_classroom(assignment.classroom_id)
            roster_ids = {s.id for s in room.roster}
            if assignment.config.mode == INDIVIDUAL:
                if owner not in roster_ids:
                    raise NotFoundError(f"owner {owner!r} is not on the roster")
                team = (owner,)
            else:
                members = list(members or [])
                if len(members) != assignment.config.team_size:
                    raise ValidationError(
                        f"team must have exactly {assignment.config.team_size} members, "
                        f"got {len(members)}",
                        field="members",
                    )
                if len(set(members)) != len(members):
                    raise ValidationError("duplicate team members", field="members")
                unknown = [m for m in members if m not in roster_ids]
                if unknown:
                    raise NotFoundError(f"team members not on the roster: {unknown}")
                taken = [
                    m
                    for m in members
                    for ws in self.workspaces.values()
                    if ws.assignment_id == assignment_id and m in ws.members
                ]
                if taken:
                    raise ValidationError(
                        f"members already in another team: {sorted(set(taken))}", field="members"
                    )
                team = tuple(members)
            index = pick_variant(assignment.seed, owner, len(assignment.variants))
            ws_id = uuid.uuid4().hex
            self._append(
                "workspace_accepted",
                {
                    "id": ws_id,
                    "assignment_id": assignment_id,
                    "owner": owner,
                    "members": list(team),
                    "variant_index": index,
                    "files": dict(assignment.variants[index].files),
                    "ts": _iso(now or _utcnow()),
                },
            )
            return self.workspaces[ws_id]

    def submit(
        self,
        workspace_id: str,
        submitter: str,
        files: dict[str, bytes],
        now: datetime | None = None,
    ) -> SubmissionRecord:
        """Persist an immutable snapshot; grading happens out of band via job_id."""
        now = now or _utcnow()
        with self._lock:
            ws = self.get_workspace(workspace_id)
            assignment = self.get_assignment(ws.assignment_id)
            if submitter != ws.owner and submitter not in ws.members:
                raise ValidationError(
                    f"submitter {submitter!r} is not a member of this workspace", field="submitter"
                )
            if not files:
                raise ValidationError("submission has no files", field="files")
            for path in files:
                validate_relative_path(path)
            late = now > assignment.config.deadline
            if late and assignment.config.late_policy == LATE_REJECT:
                raise ValidationError(
                    f"submission rejected: deadline was {_iso(assignment.config.deadline)}",
                    field="deadline",
                )
            sequence = len(self._submissions_by_workspace.get(workspace_id, [])) + 1
            sub_id = uuid.uuid4().hex
            self._append(
                "submission_created",
                {
                    "id": sub_id,
                    "workspace_id": workspace_id,
                    "submitter": submitter,
                    "sequence": sequence,
                    "ts": _iso(now),
                    "late": late,
                    "files": self.blobs.put_files(files),
                    "job_id": uuid.uuid4().hex,
                },
            )
            return self.submissions[sub_id]

    def attach_report(self, submission_id: str, report: GradeReport) -> None:
        with self._lock:
            self.get_submission(submission_id)
            self._append(
                "report_attached",
                {"submission_id": submission_id, "report": report_to_dict(report)},
            )

    def record_job_failure(self, submission_id: str, error: str) -> None:
        with self._lock:
            sub = self.get_submission(submission_id)
            self._append(
                "job_failed",
                {"submission_id": submission_id, "job_id": sub.job_id, "error": error,
                 "ts": _iso(_utcnow())},
            )

    def add_comment(self, submission_id: str, author: str, text: str,
                    now: datetime | None = None) -> None:
        if not text.strip():
            raise ValidationError("comment text must be non-empty", field="text")
        with self._lock:
            self.get_submission(submission_id)
            self._append(
                "comment_added",
                {"submission_id": submission_id, "author": author, "text": text,
                 "ts": _iso(now or _utcnow())},
            )

    # -- views ------------------------------------------------------------

    def _owners_for(self, assignment: Assignment) -> list[str]:
        if assignment.config.mode == INDIVIDUAL:
            room = self.get_classroom(assignment.classroom_id)
            return sorted(s.id for s in room.roster)
        return sorted(
            ws.owner for ws in self.workspaces.values() if ws.assignment_id == assignment.id
        )

    def _trustworthy_reports(self, subs: list[SubmissionRecord]) -> list[GradeReport]:
        return [s.report for s in subs if s.report is not None and not s.report.has_grader_fault()]

    def status(self, assignment_id: str) -> list[StatusRow]:
        """One row per roster owner: accepted / submitted / passed and points."""
        with self._lock:
            assignment = self.get_assignment(assignment_id)
            rows = []
            for owner in self._owners_for(assignment):
                ws = self.workspace_for(assignment_id, owner)
                subs = self.workspace_submissions(ws.id) if ws else []
                reports = self._trustworthy_reports(subs)
                if assignment.config.score_policy == SCORE_LATEST:
                    points = reports[-1].earned if reports else 0
                else:
                    points = max((r.earned for r in reports), default=0)
                rows.append(
                    StatusRow(
                        owner=owner,
                        accepted=ws is not None,
                        submitted=bool(subs),
                        passed=any(r.all_passed for r in reports),
                        points=points,
                        last_submission_at=max((s.submitted_at for s in subs), default=None),
                    )
                )
            return rows

    def project_metrics(self, workspace_id: str) -> ProjectMetrics:
        """Counts derived solely from submission records, per contributor and ISO week."""
        with self._lock:
            subs = self.workspace_submissions(workspace_id)
            contributors: dict[str, int] = {}
            weekly: dict[str, int] = {}
            for sub in subs:
                contributors[sub.submitter] = contributors.get(sub.submitter, 0) + 1
                iso = sub.submitted_at.isocalendar()
                bucket = f"{iso.year}-W{iso.week:02d}"
                weekly[bucket] = weekly.get(bucket, 0) + 1
            return ProjectMetrics(
                submission_count=len(subs), contributors=contributors, weekly=weekly
            )

    def export_grades(self, assignment_id: str) -> str:
        """RFC-4180 CSV of status rows plus max_points, sorted by owner."""
        with self._lock:
            assignment = self.get_assignment(assignment_id)
            out = io.StringIO()
            writer = csv.writer(out, lineterminator="\r\n")
            writer.writerow(
                ["owner", "accepted", "submitted", "passed", "points", "max_points",
                 "last_submission_at"]
            )
            for row in self.status(assignment_id):
                writer.writerow(
                    [
                        row.owner,
                        "true" if row.accepted else "false",
                        "true" if row.submitted else "false",
                        "true" if row.passed else "false",
                        row.points,
                        assignment.max_points,
                        _iso(row.last_submission_at) if row.last_submission_at else "",
                    ]
                )
            return out.getvalue()

    def unfinished_submissions(self) -> list[SubmissionRecord]:
        """Submissions whose grading never completed, in submission order."""
        with self._lock:
            pending = [
                sub for sub in self.submissions.values() if self._job_state[sub.id] == "pending"
            ]
            return sorted(pending, key=lambda s: (s.submitted_at, s.sequence))

    def similarity_report(
        self,
        assignment_id: str,
        k: int = similarity.DEFAULT_K,
        w: int = similarity.DEFAULT_W,
        threshold: float = similarity.DEFAULT_THRESHOLD,
        registry: LanguageRegistry | None = None,
    ) -> list[similarity.SimilarityPair]:
        """Pairwise similarity over each owner's latest submission."""
        with self._lock:
            assignment = self.get_assignment(assignment_id)
            registry = registry or LanguageRegistry()
            ext_to_lang = {
                lang.source_extension: lang.id for lang in registry.list_languages()
            }
            docs: dict[str, similarity.FingerprintSet] = {}
            for owner in self._owners_for(assignment):
                ws = self.workspace_for(assignment_id, owner)
                if ws is None:
                    continue
                subs = self.workspace_submissions(ws.id)
                if not subs:
                    continue
                files = self.snapshot_files(subs[-1].files)
                text = similarity.snapshot_document(files, ext_to_lang)
                docs[owner] = similarity.fingerprints(text, k=k, w=w, doc_id=owner)
            return similarity.pairwise_report(docs, threshold=threshold)
