"""Run one untrusted command in an isolated working directory under limits.

Isolation model: each execution gets a private directory, its own session /
process group, OS resource limits (CPU time, address space, process count,
file size) and a process-group kill on completion, so nothing it spawned
survives the call.  Network access is withheld through a network namespace
when the host supports unprivileged ``unshare -n``; otherwise execution
proceeds with a one-time warning (deployments on trusted private networks).

Output capture is capped: stdout and stderr are each truncated at
``max_output_bytes`` while the pipes keep draining, so a 10 MiB writer can
never wedge the grader.
"""

from __future__ import annotations

import logging
import os
import posixpath
import resource
import shutil
import signal
import subprocess
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

logger = logging.getLogger(__name__)

# ExecResult.outcome values.
OK = "ok"
NONZERO_EXIT = "nonzero_exit"
TIMEOUT = "timeout"
MEMORY_EXCEEDED = "memory_exceeded"
OUTPUT_TRUNCATED_OK = "output_truncated_ok"
INTERNAL_ERROR = "internal_error"

# Seconds past the wall limit before SIGTERM escalates to SIGKILL.
GRACE_SECONDS = 2

# Cap on files written by sandboxed code (RLIMIT_FSIZE); not client-tunable.
_FSIZE_LIMIT = 256 * 1024 * 1024

_READ_CHUNK = 65536

_MEMORY_MARKERS = (b"MemoryError", b"bad_alloc", b"Cannot allocate memory", b"OutOfMemoryError")

SANDBOX_ROOT_ENV = "GRADEFORGE_SANDBOX_ROOT"


class WorkspaceError(ValueError):
    """A workspace could not be prepared (bad path, disk trouble)."""


class SandboxError(RuntimeError):
    """The sandbox itself failed; never attributed to the student."""


@dataclass(frozen=True)
class ExecLimits:
    wall_seconds: int = 600
    cpu_seconds: int = 10
    # Address-space cap.  1 GiB accommodates numpy/pandas-style stacks that
    # reserve far more virtual memory than they touch.
    memory_bytes: int = 1024 * 1024 * 1024
    max_output_bytes: int = 1024 * 1024
    max_processes: int = 64
    network_allowed: bool = False

    def __post_init__(self):
        for name in ("wall_seconds", "cpu_seconds", "memory_bytes", "max_output_bytes", "max_processes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.cpu_seconds > self.wall_seconds:
            raise ValueError("cpu_seconds must not exceed wall_seconds")


DEFAULT_LIMITS = ExecLimits()


@dataclass(frozen=True)
class ExecRequest:
    command: str
    workspace: "Workspace"
    stdin_data: bytes | None = None
    limits: ExecLimits = DEFAULT_LIMITS
    environment: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.command or not self.command.strip():
            raise ValueError("command must be non-empty")


@dataclass(frozen=True)
class ExecResult:
    outcome: str
    exit_code: int | None
    stdout: bytes
    stderr: bytes
    wall_ms: int
    truncated: bool

    @property
    def succeeded(self) -> bool:
        return self.outcome in (OK, OUTPUT_TRUNCATED_OK)

    def stdout_text(self) -> str:
        return self.stdout.decode("utf-8", "replace")

    def stderr_text(self) -> str:
        return self.stderr.decode("utf-8", "replace")


class Workspace:
    """A private directory of files owned by one execution context."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def path(self, relative: str) -> Path:
        return self.root / validate_relative_path(relative)

    def write_file(self, relative: str, content: bytes) -> None:
        target = self.path(relative)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(content)

    def read_file(self, relative: str) -> bytes:
        return self.path(relative).read_bytes()

    def list_files(self) -> list[str]:
        return sorted(
            str(p.relative_to(self.root)) for p in self.root.rglob("*") if p.is_file()
        )

    def cleanup(self) -> None:
        shutil.rmtree(self.root, ignore_errors=True)

    def __enter__(self) -> "Workspace":
        return self

    def __exit__(self, *exc) -> None:
        self.cleanup()


def validate_relative_path(path: str) -> str:
    """Reject absolute paths and parent-directory traversal; return the
    normalized relative path."""
    if not path or path != path.strip():
        raise WorkspaceError(f"invalid file path {path!r}")
    if path.startswith("/") or path.startswith("\\") or "\x00" in path:
        raise WorkspaceError(f"absolute or malformed file path {path!r}")
    normalized = posixpath.normpath(path)
    if normalized == ".." or normalized.startswith("../") or normalized == ".":
        raise WorkspaceError(f"path traversal rejected: {path!r}")
    return normalized


def sandbox_root() -> Path:
    configured = os.environ.get(SANDBOX_ROOT_ENV)
    if configured:
        root = Path(configured)
        root.mkdir(parents=True, exist_ok=True)
        return root
    return Path(tempfile.gettempdir())


def prepare_workspace(files: dict[str, bytes], base_dir: Path | None = None) -> Workspace:
    """Create a fresh directory containing exactly the given files.

    Paths must be relative, traversal-free and unique after normalization.
    """
    normalized: dict[str, bytes] = {}
    for path, content in files.items():
        clean = validate_relative_path(path)
        if clean in normalized:
            raise WorkspaceError(f"duplicate file path after normalization: {path!r}")
        normalized[clean] = content

    parent = Path(base_dir) if base_dir is not None else sandbox_root()
    try:
        parent.mkdir(parents=True, exist_ok=True)
        root = parent / f"gf-{uuid.uuid4().hex}"
        root.mkdir()
    except OSError as exc:
        raise SandboxError(f"could not create workspace under {parent}: {exc}") from exc

    ws = Workspace(root)
    try:
        for path, content in normalized.items():
            ws.write_file(path, content)
    except OSError as exc:
        ws.cleanup()
        raise SandboxError(f"could not populate workspace: {exc}") from exc
    return ws


# --- admission control -------------------------------------------------------

_admission = threading.BoundedSemaphore(os.cpu_count() or 2)
_admission_cap = os.cpu_count() or 2


def set_max_concurrent(n: int) -> None:
    """Resize the global cap on simultaneously running sandboxes."""
    global _admission, _admission_cap
    if n < 1:
        raise ValueError("concurrency cap must be >= 1")
    _admission = threading.BoundedSemaphore(n)
    _admission_cap = n


def max_concurrent() -> int:
    return _admission_cap


# --- network isolation probe --------------------------------------------------

_unshare_prefix: list[str] | None = None
_unshare_probed = False
_probe_lock = threading.Lock()


def _network_isolation_prefix() -> list[str]:
    """Command prefix that drops network access, or [] with a warning."""
    global _unshare_prefix, _unshare_probed
    with _probe_lock:
        if _unshare_probed:
            return list(_unshare_prefix or [])
        for candidate in (["unshare", "-n"], ["unshare", "-r", "-n"]):
            try:
                probe = subprocess.run(
                    candidate + ["true"], capture_output=True, timeout=5
                )
                if probe.returncode == 0:
                    _unshare_prefix = candidate
                    break
            except (OSError, subprocess.TimeoutExpired):
                continue
        else:
            _unshare_prefix = []
            logger.warning(
                "network namespaces unavailable (unshare -n failed); "
                "sandboxed commands keep host network access"
            )
        _unshare_probed = True
        return list(_unshare_prefix)


def _base_environment(ws: Workspace) -> dict[str, str]:
    # HOME and TMPDIR point inside the workspace so stray writes stay local.
    return {
        "PATH": "/usr/local/bin:/usr/bin:/bin",
        "HOME": str(ws.root),
        "TMPDIR": str(ws.root),
        "LANG": "C.UTF-8",
        "LC_ALL": "C.UTF-8",
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTHONUNBUFFERED": "1",
    }


class _PipeReader(threading.Thread):
    """Drain a pipe fully, keeping at most ``cap`` bytes."""

    def __init__(self, pipe, cap: int):
        super().__init__(daemon=True)
        self.pipe = pipe
        self.cap = cap
        self.buffer = bytearray()
        self.truncated = False

    def run(self):
        try:
            while True:
                chunk = self.pipe.read(_READ_CHUNK)
                if not chunk:
                    break
                room = self.cap - len(self.buffer)
                if room > 0:
                    self.buffer.extend(chunk[:room])
                if len(chunk) > room:
                    self.truncated = True
        except (OSError, ValueError):
            pass
        finally:
            try:
                self.pipe.close()
            except OSError:
                pass


def _make_preexec(limits: ExecLimits):
    cpu = limits.cpu_seconds
    mem = limits.memory_bytes
    nproc = limits.max_processes

    def preexec():
        os.setsid()
        # Soft CPU limit raises SIGXCPU (classified as timeout); the hard
        # limit one second later is the backstop.
        resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu + 1))
        resource.setrlimit(resource.RLIMIT_AS, (mem, mem))
        resource.setrlimit(resource.RLIMIT_FSIZE, (_FSIZE_LIMIT, _FSIZE_LIMIT))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
        try:
            resource.setrlimit(resource.RLIMIT_NPROC, (nproc, nproc))
        except (ValueError, OSError):
            pass  # not enforceable for privileged users

    return preexec


def _killpg(pgid: int, sig: int) -> None:
    try:
        os.killpg(pgid, sig)
    except (ProcessLookupError, PermissionError):
        pass


def execute(req: ExecRequest) -> ExecResult:
    """Run the request's command to completion under its limits.

    On return the child process group is fully terminated and outputs are
    captured (capped at max_output_bytes each, with ``truncated`` set).
    Sandbox failures come back as outcome ``internal_error``, never as a
    student-attributable result.
    """
    limits = req.limits
    argv = _network_isolation_prefix() if not limits.network_allowed else []
    argv = argv + ["/bin/bash", "-c", req.command]
    env = _base_environment(req.workspace)
    env.update(req.environment)

    start = time.monotonic()
    with _admission:
        try:
            proc = subprocess.Popen(
                argv,
                cwd=str(req.workspace.root),
                stdin=subprocess.PIPE if req.stdin_data is not None else subprocess.DEVNULL,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                env=env,
                preexec_fn=_make_preexec(limits),
                start_new_session=False,  # preexec's setsid owns the group
            )
        except OSError as exc:
            return ExecResult(
                outcome=INTERNAL_ERROR,
                exit_code=None,
                stdout=b"",
                stderr=f"sandbox spawn failed: {exc}".encode(),
                wall_ms=int((time.monotonic() - start) * 1000),
                truncated=False,
            )

        pgid = proc.pid
        out_reader = _PipeReader(proc.stdout, limits.max_output_bytes)
        err_reader = _PipeReader(proc.stderr, limits.max_output_bytes)
        out_reader.start()
        err_reader.start()

        if req.stdin_data is not None:
            def feed_stdin():
                try:
                    proc.stdin.write(req.stdin_data)
                    proc.stdin.close()
                except (BrokenPipeError, OSError):
                    pass
            threading.Thread(target=feed_stdin, daemon=True).start()

        timed_out = False
        try:
            proc.wait(timeout=limits.wall_seconds)
        except subprocess.TimeoutExpired:
            timed_out = True
            _killpg(pgid, signal.SIGTERM)
            try:
                proc.wait(timeout=GRACE_SECONDS)
            except subprocess.TimeoutExpired:
                _killpg(pgid, signal.SIGKILL)
                proc.wait()

        # Reap stragglers unconditionally: background children in the group
        # must not outlive the call (and they hold the output pipes open).
        _killpg(pgid, signal.SIGKILL)
        out_reader.join(timeout=10)
        err_reader.join(timeout=10)
        wall_ms = int((time.monotonic() - start) * 1000)

    stdout = bytes(out_reader.buffer)
    stderr = bytes(err_reader.buffer)
    truncated = out_reader.truncated or err_reader.truncated
    returncode = proc.returncode

    if timed_out or returncode == -signal.SIGXCPU:
        outcome = TIMEOUT
    elif returncode == 0:
        outcome = OUTPUT_TRUNCATED_OK if truncated else OK
    elif any(marker in stderr for marker in _MEMORY_MARKERS):
        outcome = MEMORY_EXCEEDED
    else:
        outcome = NONZERO_EXIT

    return ExecResult(
        outcome=outcome,
        exit_code=returncode if not timed_out else None,
        stdout=stdout,
        stderr=stderr,
        wall_ms=wall_ms,
        truncated=truncated,
    )


def merge_limits(base: ExecLimits, **overrides) -> ExecLimits:
    """ExecLimits with selected fields overridden (None values ignored)."""
    clean = {k: v for k, v in overrides.items() if v is not None}
    return replace(base, **clean) if clean else base
