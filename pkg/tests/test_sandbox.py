"""Tests for sandboxed execution, workspaces and the language registry."""

import json
import os
import threading
import time
import uuid

import pytest

from gradeforge import sandbox
from gradeforge.languages import (
    DEFAULT_LANGUAGES,
    LanguageRegistry,
    LanguageSpec,
    RegistryError,
    compile_if_needed,
    load_registry,
)
from gradeforge.sandbox import (
    ExecLimits,
    ExecRequest,
    WorkspaceError,
    execute,
    merge_limits,
    prepare_workspace,
    validate_relative_path,
)

FAST = ExecLimits(wall_seconds=20, cpu_seconds=10)


def run(command, files=None, *, limits=FAST, stdin=None):
    ws = prepare_workspace(files or {})
    try:
        return execute(ExecRequest(command=command, workspace=ws, stdin_data=stdin, limits=limits))
    finally:
        ws.cleanup()


def live_group_members(pgid):
    """Pids in the given process group, ignoring zombies."""
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


class TestPrepareWorkspace:
    def test_exact_files(self):
        with prepare_workspace({"average.py": b"print(1)", "iris.csv": b"a,b\n"}) as ws:
            assert ws.list_files() == ["average.py", "iris.csv"]
            assert ws.read_file("iris.csv") == b"a,b\n"

    def test_empty_map_is_valid(self):
        with prepare_workspace({}) as ws:
            assert ws.list_files() == []

    def test_nested_paths(self):
        with prepare_workspace({"pkg/sub/mod.py": b"x"}) as ws:
            assert ws.list_files() == ["pkg/sub/mod.py"]

    def test_path_traversal_rejected(self):
        with pytest.raises(WorkspaceError, match="traversal"):
            prepare_workspace({"../escape.txt": b"x"})

    def test_absolute_path_rejected(self):
        with pytest.raises(WorkspaceError):
            prepare_workspace({"/etc/passwd": b"x"})

    def test_sneaky_traversal_rejected(self):
        with pytest.raises(WorkspaceError):
            prepare_workspace({"a/../../escape": b"x"})

    def test_duplicate_after_normalization(self):
        with pytest.raises(WorkspaceError, match="duplicate"):
            prepare_workspace({"a/./b": b"1", "a/b": b"2"})

    def test_cleanup_removes_directory(self):
        ws = prepare_workspace({"f": b"x"})
        root = ws.root
        assert root.exists()
        ws.cleanup()
        assert not root.exists()

    def test_validate_relative_path(self):
        assert validate_relative_path("a/./b") == "a/b"
        with pytest.raises(WorkspaceError):
            validate_relative_path("..")
        with pytest.raises(WorkspaceError):
            validate_relative_path("")


class TestExecute:
    def test_echo_token_ok(self):
        token = uuid.uuid4().hex
        res = run(f"echo {token}")
        assert res.outcome == "ok"
        assert res.exit_code == 0
        assert res.stdout == f"{token}\n".encode()
        assert not res.truncated

    def test_nonzero_exit(self):
        res = run("exit 3")
        assert res.outcome == "nonzero_exit"
        assert res.exit_code == 3

    def test_command_not_found(self):
        res = run("definitely-not-a-command-xyz")
        assert res.outcome == "nonzero_exit"
        assert res.stderr != b""

    def test_stdin_piped(self):
        res = run("cat", stdin=b"5\n7\n")
        assert res.outcome == "ok"
        assert res.stdout == b"5\n7\n"

    def test_infinite_loop_times_out(self):
        start = time.monotonic()
        res = run(
            "python3 -c 'while True: pass'",
            limits=ExecLimits(wall_seconds=2, cpu_seconds=2),
        )
        elapsed = time.monotonic() - start
        assert res.outcome == "timeout"
        assert elapsed <= 2 + sandbox.GRACE_SECONDS + 1
        assert res.wall_ms <= (2 + sandbox.GRACE_SECONDS) * 1000 + 500

    def test_cpu_hog_times_out(self):
        # Burns CPU while ignoring wall clock slack; SIGXCPU classifies as timeout.
        res = run(
            "python3 -c 'x=0\nwhile True: x+=1'",
            limits=ExecLimits(wall_seconds=15, cpu_seconds=1),
        )
        assert res.outcome == "timeout"

    def test_output_cap_exact(self):
        cap = 65536
        res = run(
            "python3 -c \"import sys; sys.stdout.write('x' * (10 * 1024 * 1024))\"",
            limits=ExecLimits(wall_seconds=30, cpu_seconds=20, max_output_bytes=cap),
        )
        assert res.outcome == "output_truncated_ok"
        assert len(res.stdout) == cap
        assert res.truncated

    def test_stderr_capped_too(self):
        cap = 1024
        res = run(
            "python3 -c \"import sys; sys.stderr.write('e' * 100000)\"",
            limits=ExecLimits(wall_seconds=30, cpu_seconds=20, max_output_bytes=cap),
        )
        assert len(res.stderr) == cap
        assert res.truncated

    def test_memory_exceeded(self):
        res = run(
            "python3 -c \"x = bytearray(1024 * 1024 * 1024)\"",
            limits=ExecLimits(wall_seconds=20, cpu_seconds=10, memory_bytes=128 * 1024 * 1024),
        )
        assert res.outcome == "memory_exceeded"
        assert res.exit_code != 0

    def test_no_orphan_processes(self):
        # The shell prints its pid (== the sandbox process group id), then
        # backgrounds two sleeps.  After execute returns, nothing may remain
        # in that group; poll briefly for SIGKILL delivery.
        with prepare_workspace({}) as ws:
            res = execute(
                ExecRequest(
                    command="echo $$; sleep 30 & sleep 30 &", workspace=ws, limits=FAST
                )
            )
            pgid = int(res.stdout.split()[0])
        deadline = time.monotonic() + 2
        while time.monotonic() < deadline and live_group_members(pgid):
            time.sleep(0.05)
        assert live_group_members(pgid) == []

    def test_writes_go_to_workspace(self):
        with prepare_workspace({}) as ws:
            res = execute(
                ExecRequest(command="echo data > out.txt && echo $HOME", workspace=ws, limits=FAST)
            )
            assert res.outcome == "ok"
            assert ws.read_file("out.txt") == b"data\n"
            assert res.stdout.decode().strip() == str(ws.root)

    def test_environment_overlay(self):
        res = run("echo $GRADE_TOKEN", limits=FAST, files={})
        assert res.stdout == b"\n"
        with prepare_workspace({}) as ws:
            res = execute(
                ExecRequest(
                    command="echo $GRADE_TOKEN",
                    workspace=ws,
                    limits=FAST,
                    environment={"GRADE_TOKEN": "tok123"},
                )
            )
            assert res.stdout == b"tok123\n"

    def test_network_blocked_by_default(self):
        if not sandbox._network_isolation_prefix():
            pytest.skip("no network namespace support on this host")
        res = run(
            "python3 -c \"import socket; s=socket.socket(); s.settimeout(3);"
            ' s.connect((\'127.0.0.1\', 9));"'
        )
        assert res.outcome == "nonzero_exit"

    def test_isolation_concurrent_token_files(self):
        results = {}
        errors = []

        def one(i):
            token = f"token-{i}-{uuid.uuid4().hex}"
            try:
                with prepare_workspace({}) as ws:
                    res = execute(
                        ExecRequest(
                            command=f"echo {token} > t.txt; cat t.txt", workspace=ws, limits=FAST
                        )
                    )
                    results[i] = (token, res.stdout.decode().strip())
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=one, args=(i,)) for i in range(100)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert len(results) == 100
        for token, seen in results.values():
            assert token == seen

    def test_limits_validation(self):
        with pytest.raises(ValueError):
            ExecLimits(wall_seconds=0)
        with pytest.raises(ValueError):
            ExecLimits(wall_seconds=5, cpu_seconds=10)

    def test_merge_limits(self):
        merged = merge_limits(FAST, max_output_bytes=10, cpu_seconds=None)
        assert merged.max_output_bytes == 10
        assert merged.cpu_seconds == FAST.cpu_seconds

    def test_empty_command_rejected(self):
        with prepare_workspace({}) as ws:
            with pytest.raises(ValueError):
                ExecRequest(command="  ", workspace=ws)


class TestLanguages:
    def test_default_registry_contents(self):
        reg = LanguageRegistry()
        ids = {lang.id for lang in reg.list_languages()}
        assert {"python3", "c", "cpp", "java"} <= ids

    def test_empty_registry_boots(self):
        reg = LanguageRegistry([])
        assert reg.list_languages() == ()

    def test_duplicate_id_is_config_error(self):
        with pytest.raises(RegistryError, match="duplicate"):
            LanguageRegistry([DEFAULT_LANGUAGES[0], DEFAULT_LANGUAGES[0]])

    def test_load_registry_file(self, tmp_path):
        path = tmp_path / "langs.json"
        path.write_text(
            json.dumps(
                [
                    {"id": "python3", "extension": ".py", "run": "python3 {main}", "probe": "python3 --version"},
                ]
            )
        )
        reg = load_registry(path)
        assert reg.get("python3").render_run("main.py") == "python3 main.py"

    def test_load_registry_duplicate(self, tmp_path):
        path = tmp_path / "langs.json"
        entry = {"id": "python3", "extension": ".py", "run": "python3 {main}"}
        path.write_text(json.dumps([entry, entry]))
        with pytest.raises(RegistryError, match="duplicate"):
            load_registry(path)

    def test_python_compile_is_noop(self):
        lang = LanguageRegistry().get("python3")
        with prepare_workspace({"main.py": b"print('hi')"}) as ws:
            res = compile_if_needed(lang, ws)
            assert res.outcome == "ok"
            assert res.wall_ms == 0
            assert ws.list_files() == ["main.py"]

    def test_c_hello_world(self):
        lang = LanguageRegistry().get("c")
        src = b'#include <stdio.h>\nint main(void){printf("hello from c\\n");return 0;}\n'
        with prepare_workspace({"main.c": src}) as ws:
            res = compile_if_needed(lang, ws)
            assert res.outcome == "ok", res.stderr_text()
            assert "prog" in ws.list_files()
            run_res = execute(
                ExecRequest(command=lang.render_run("main.c"), workspace=ws, limits=FAST)
            )
            assert run_res.stdout == b"hello from c\n"

    def test_c_compile_error_surfaces(self):
        lang = LanguageRegistry().get("c")
        src = b"int main(void){int x = 1\nreturn 0;}\n"
        with prepare_workspace({"main.c": src}) as ws:
            res = compile_if_needed(lang, ws)
            assert res.outcome == "nonzero_exit"
            assert res.stderr != b""

    def test_compile_without_sources_is_usage_error(self):
        lang = LanguageRegistry().get("c")
        with prepare_workspace({}) as ws:
            with pytest.raises(ValueError, match="no .c sources"):
                compile_if_needed(lang, ws)
