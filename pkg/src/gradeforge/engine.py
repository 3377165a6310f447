"""Grade one submission against one suite; queue grading jobs for workers.

Each grading run owns a single fresh workspace shared by all tests of the
suite, mirroring a repository checkout: files a setup or earlier test writes
stay visible to later tests.  Identical setup commands within one run
execute once (suites routinely repeat the same install line per test).

Setup commands are rewritten before execution: ``sudo`` prefixes are
dropped (the grader is not privileged), and in the default ``cached``
package mode ``pip install`` lines degrade to an import check against the
interpreter's package cache, so closed-network graders never touch an
index.  ``live`` mode runs the install for real with network access.
"""

from __future__ import annotations

import logging
import os
import queue
import re
import shlex
import threading
import time
import uuid
from dataclasses import dataclass, replace

from . import sandbox
from .suite import (
    ERROR,
    FAILED,
    PASSED,
    TIMEOUT,
    ComparisonError,
    GradeReport,
    TestCase,
    TestResult,
    TestSuite,
    compare_output,
    make_result,
    score,
)
from .sandbox import ExecLimits, ExecRequest, ExecResult, Workspace

logger = logging.getLogger(__name__)

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED_JOB = "failed"

# pip distribution name -> import name, for the cached-mode import check.
_IMPORT_NAMES = {
    "scikit-learn": "sklearn",
    "pyyaml": "yaml",
    "pillow": "PIL",
    "opencv-python": "cv2",
    "beautifulsoup4": "bs4",
    "python-dateutil": "dateutil",
}


class QueueFullError(RuntimeError):
    """The grading queue is at capacity; retry later."""


class UnknownJobError(KeyError):
    """No job with the given id."""


@dataclass(frozen=True)
class GradingPolicy:
    limits: ExecLimits = ExecLimits()
    setup_limits: ExecLimits = ExecLimits(wall_seconds=300, cpu_seconds=120)
    # cached: pip installs become import checks, setup runs offline.
    # live: installs run for real, with network access for setup commands.
    package_mode: str = "cached"
    # Deployment ceiling on per-test wall time, overriding suite timeouts.
    max_wall_seconds: int | None = None

    def run_limits_for(self, test: TestCase) -> ExecLimits:
        wall = test.timeout_minutes * 60
        if self.max_wall_seconds is not None:
            wall = min(wall, self.max_wall_seconds)
        return replace(self.limits, wall_seconds=wall, cpu_seconds=min(self.limits.cpu_seconds, wall))

    @property
    def setup_network(self) -> bool:
        return self.package_mode == "live"


DEFAULT_POLICY = GradingPolicy()


def _strip_sudo(tokens: list[str]) -> list[str]:
    while tokens and tokens[0] == "sudo":
        i = 1
        while i < len(tokens) and tokens[i].startswith("-"):
            # flags that consume a value
            if tokens[i] in ("-u", "-g", "-p", "-h", "-C") and i + 1 < len(tokens):
                i += 2
            else:
                i += 1
        tokens = tokens[i:]
    return tokens


# Textual twin of _strip_sudo, used when a segment must otherwise pass
# through verbatim (re-joining tokens would mangle redirects and pipes).
_SUDO_PREFIX = re.compile(r"^\s*sudo(?:\s+(?:-[ugpC]\s+\S+|-{1,2}\S+))*\s+")


def _strip_sudo_text(segment: str) -> str:
    while True:
        m = _SUDO_PREFIX.match(segment)
        if m is None:
            return segment
        segment = segment[m.end():]


def _rewrite_pip_install(tokens: list[str]) -> list[str] | None:
    """Turn ``pip3 install pkg...`` into an import check, or None if not pip."""
    head = tokens[:3]
    if tokens and tokens[0] in ("pip", "pip3"):
        rest = tokens[1:]
    elif len(head) == 3 and head[0].startswith("python") and head[1] == "-m" and head[2] == "pip":
        rest = tokens[3:]
    else:
        return None
    if not rest or rest[0] != "install":
        return None
    packages = []
    for arg in rest[1:]:
        if arg.startswith("-"):
            continue
        name = arg.split("==")[0].split(">=")[0].split("<=")[0].strip()
        if name:
            packages.append(name)
    if not packages:
        return ["true"]
    modules = [_IMPORT_NAMES.get(p.lower(), p.lower().replace("-", "_")) for p in packages]
    check = "import importlib; " + "; ".join(f"importlib.import_module({m!r})" for m in modules)
    return ["python3", "-c", check]


def transform_setup_command(command: str, package_mode: str = "cached") -> str:
    """Normalize one setup command for execution in this deployment.

    Strips ``sudo`` prefixes from each ``;``-chained segment; in cached mode
    additionally rewrites pip installs to import checks.
    """
    segments = [seg.strip() for seg in command.split(";")]
    out = []
    for seg in segments:
        if not seg:
            continue
        try:
            tokens = shlex.split(seg)
        except ValueError:
            out.append(seg)
            continue
        stripped = _strip_sudo(tokens)
        if not stripped:
            continue
        if package_mode == "cached":
            rewritten = _rewrite_pip_install(stripped)
            if rewritten is not None:
                out.append(shlex.join(rewritten))
                continue
        # Pass the segment through textually so shell syntax survives.
        out.append(seg if stripped == tokens else _strip_sudo_text(seg))
    return "; ".join(out) if out else "true"


def run_test(
    workspace: Workspace,
    test: TestCase,
    policy: GradingPolicy = DEFAULT_POLICY,
    setup_cache: dict[str, ExecResult] | None = None,
) -> TestResult:
    """Execute one test case in the given workspace.

    Order: setup command (if any), then the run command with stdin under
    limits derived from the test timeout, then output comparison.  Setup
    failure is status error with zero points; a sandbox fault is status
    error flagged as a grader fault.
    """
    if test.setup_command is not None:
        cached = setup_cache.get(test.setup_command) if setup_cache is not None else None
        if cached is None:
            setup_res = sandbox.execute(
                ExecRequest(
                    command=transform_setup_command(test.setup_command, policy.package_mode),
                    workspace=workspace,
                    limits=replace(policy.setup_limits, network_allowed=policy.setup_network),
                )
            )
            if setup_cache is not None:
                setup_cache[test.setup_command] = setup_res
        else:
            setup_res = cached
        if setup_res.outcome == sandbox.INTERNAL_ERROR:
            return make_result(
                test,
                ERROR,
                actual_stderr=setup_res.stderr_text(),
                diagnostic="grader fault: sandbox failed during setup",
                grader_fault=True,
            )
        if not setup_res.succeeded:
            return make_result(
                test,
                ERROR,
                actual_stdout=setup_res.stdout_text(),
                actual_stderr=setup_res.stderr_text(),
                duration_ms=setup_res.wall_ms,
                diagnostic=f"setup command failed with exit code {setup_res.exit_code}",
            )

    res = sandbox.execute(
        ExecRequest(
            command=test.run_command,
            workspace=workspace,
            stdin_data=test.stdin_data,
            limits=policy.run_limits_for(test),
        )
    )
    common = dict(
        actual_stdout=res.stdout_text(),
        actual_stderr=res.stderr_text(),
        duration_ms=res.wall_ms,
    )
    if res.outcome == sandbox.INTERNAL_ERROR:
        return make_result(
            test, ERROR, **common, diagnostic="grader fault: sandbox failed", grader_fault=True
        )
    if res.outcome == sandbox.TIMEOUT:
        return make_result(test, TIMEOUT, **common)
    if not res.succeeded:
        return make_result(test, FAILED, **common)
    if test.expected_output is None:
        return make_result(test, PASSED, **common)
    try:
        matched = compare_output(test.expected_output, res.stdout_text(), test.comparison)
    except ComparisonError as exc:
        return make_result(test, ERROR, **common, diagnostic=f"comparison error: {exc}")
    return make_result(test, PASSED if matched else FAILED, **common)


def grade_submission(
    files: dict[str, bytes],
    suite: TestSuite,
    policy: GradingPolicy = DEFAULT_POLICY,
    base_dir=None,
) -> GradeReport:
    """Grade a submission snapshot: all tests, in suite order, in one workspace."""
    workspace = sandbox.prepare_workspace(files, base_dir=base_dir)
    setup_cache: dict[str, ExecResult] = {}
    try:
        results = [run_test(workspace, t, policy, setup_cache) for t in suite.tests]
    finally:
        workspace.cleanup()
    return score(results, suite)


@dataclass
class GradingJob:
    job_id: str
    submission_ref: str
    suite: TestSuite
    files: dict[str, bytes]
    language_hint: str | None = None
    state: str = QUEUED
    report: GradeReport | None = None
    error: str | None = None


@dataclass(frozen=True)
class JobView:
    """Immutable snapshot of a job's observable state."""

    job_id: str
    submission_ref: str
    state: str
    report: GradeReport | None
    error: str | None


class JobRunner:
    """Bounded worker pool consuming a FIFO queue of grading jobs.

    Workers own their workspaces exclusively; report publication is atomic
    (job_status never observes state ``done`` without its report).
    ``on_complete`` fires after a job reaches done or failed.
    """

    def __init__(
        self,
        worker_count: int | None = None,
        max_pending: int | None = None,
        policy: GradingPolicy = DEFAULT_POLICY,
        on_complete=None,
    ):
        self.worker_count = worker_count or (os.cpu_count() or 2)
        self.max_pending = max_pending if max_pending is not None else 10 * self.worker_count
        self.policy = policy
        self.on_complete = on_complete
        self._queue: queue.Queue = queue.Queue()
        self._jobs: dict[str, GradingJob] = {}
        self._lock = threading.Lock()
        self._workers = [
            threading.Thread(target=self._worker_loop, daemon=True, name=f"grader-{i}")
            for i in range(self.worker_count)
        ]
        for w in self._workers:
            w.start()

    def enqueue(
        self,
        submission_ref: str,
        suite: TestSuite,
        files: dict[str, bytes],
        job_id: str | None = None,
        language_hint: str | None = None,
    ) -> str:
        job = GradingJob(
            job_id=job_id or uuid.uuid4().hex,
            submission_ref=submission_ref,
            suite=suite,
            files=dict(files),
            language_hint=language_hint,
        )
        with self._lock:
            if self.pending() >= self.max_pending:
                raise QueueFullError(
                    f"grading queue full ({self.max_pending} pending jobs); retry later"
                )
            self._jobs[job.job_id] = job
        self._queue.put(job.job_id)
        return job.job_id

    def pending(self) -> int:
        return self._queue.qsize()

    def job_status(self, job_id: str) -> JobView:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJobError(job_id)
            return JobView(
                job_id=job.job_id,
                submission_ref=job.submission_ref,
                state=job.state,
                report=job.report,
                error=job.error,
            )

    def wait(self, job_id: str, timeout: float = 120.0, poll: float = 0.05) -> JobView:
        deadline = time.monotonic() + timeout
        while True:
            view = self.job_status(job_id)
            if view.state in (DONE, FAILED_JOB):
                return view
            if time.monotonic() > deadline:
                raise TimeoutError(f"job {job_id} still {view.state} after {timeout}s")
            time.sleep(poll)

    def shutdown(self) -> None:
        for _ in self._workers:
            self._queue.put(None)
        for w in self._workers:
            w.join(timeout=5)

    def _worker_loop(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            with self._lock:
                job = self._jobs[job_id]
                job.state = RUNNING
            try:
                report = grade_submission(job.files, job.suite, self.policy)
                with self._lock:
                    job.report = report
                    job.state = DONE
            except Exception as exc:
                logger.exception("grading job %s failed", job_id)
                with self._lock:
                    job.error = str(exc)
                    job.state = FAILED_JOB
            if self.on_complete is not None:
                try:
                    self.on_complete(self.job_status(job_id))
                except Exception:
                    logger.exception("on_complete callback failed for job %s", job_id)
