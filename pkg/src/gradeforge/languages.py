"""Registry of runnable languages, with optional compile steps.

Registry file format: a JSON array of objects ``{id, display_name,
extension, compile?, run, probe, main?}``.  ``compile`` templates may use
``{src}`` (all sources, shell-quoted) and ``{out}`` (artifact name); ``run``
templates may use ``{main}`` (main source file), ``{stem}`` (its basename
without extension) and ``{out}``.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass
from pathlib import Path

from . import sandbox
from .sandbox import ExecLimits, ExecRequest, ExecResult, Workspace

ARTIFACT_NAME = "prog"


class RegistryError(ValueError):
    """The language registry configuration is invalid."""


@dataclass(frozen=True)
class LanguageSpec:
    id: str
    display_name: str
    source_extension: str
    run_command_template: str
    version_probe: str
    compile_command: str | None = None
    main_basename: str = "main"

    def __post_init__(self):
        if not self.id:
            raise RegistryError("language id must be non-empty")
        if not self.source_extension.startswith("."):
            raise RegistryError(f"language {self.id!r}: extension must start with '.'")

    @property
    def is_compiled(self) -> bool:
        return self.compile_command is not None

    def main_file_name(self) -> str:
        return self.main_basename + self.source_extension

    def render_run(self, main: str) -> str:
        stem = Path(main).stem
        return self.run_command_template.format(
            main=shlex.quote(main), stem=shlex.quote(stem), out=shlex.quote(ARTIFACT_NAME)
        )


DEFAULT_LANGUAGES: tuple[LanguageSpec, ...] = (
    LanguageSpec(
        id="python3",
        display_name="Python 3",
        source_extension=".py",
        run_command_template="python3 {main}",
        version_probe="python3 --version",
    ),
    LanguageSpec(
        id="c",
        display_name="C (gcc)",
        source_extension=".c",
        compile_command="gcc -O2 -std=c11 {src} -o {out} -lm",
        run_command_template="./{out}",
        version_probe="gcc --version",
    ),
    LanguageSpec(
        id="cpp",
        display_name="C++ (g++)",
        source_extension=".cpp",
        compile_command="g++ -O2 -std=c++17 {src} -o {out} -lm",
        run_command_template="./{out}",
        version_probe="g++ --version",
    ),
    LanguageSpec(
        id="java",
        display_name="Java",
        source_extension=".java",
        compile_command="javac {src}",
        run_command_template="java {stem}",
        version_probe="javac -version",
        main_basename="Main",
    ),
    LanguageSpec(
        id="php",
        display_name="PHP",
        source_extension=".php",
        run_command_template="php {main}",
        version_probe="php --version",
    ),
    LanguageSpec(
        id="octave",
        display_name="GNU Octave",
        source_extension=".m",
        run_command_template="octave --no-gui --quiet {main}",
        version_probe="octave --version",
    ),
)


class LanguageRegistry:
    def __init__(self, languages: tuple[LanguageSpec, ...] | list[LanguageSpec] = DEFAULT_LANGUAGES):
        seen: set[str] = set()
        for lang in languages:
            if lang.id in seen:
                raise RegistryError(f"duplicate language id {lang.id!r}")
            seen.add(lang.id)
        self._languages = tuple(languages)
        self._by_id = {lang.id: lang for lang in self._languages}
        self._by_extension = {lang.source_extension: lang for lang in self._languages}

    def list_languages(self) -> tuple[LanguageSpec, ...]:
        return self._languages

    def get(self, language_id: str) -> LanguageSpec | None:
        return self._by_id.get(language_id)

    def by_extension(self, extension: str) -> LanguageSpec | None:
        return self._by_extension.get(extension)

    def __len__(self) -> int:
        return len(self._languages)


def load_registry(path: str | Path) -> LanguageRegistry:
    """Load a registry from a JSON file; duplicate ids are a startup error."""
    try:
        entries = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RegistryError(f"could not read language registry {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise RegistryError("language registry must be a JSON array")
    languages = []
    for entry in entries:
        try:
            languages.append(
                LanguageSpec(
                    id=entry["id"],
                    display_name=entry.get("display_name", entry["id"]),
                    source_extension=entry["extension"],
                    compile_command=entry.get("compile"),
                    run_command_template=entry["run"],
                    version_probe=entry.get("probe", ""),
                    main_basename=entry.get("main", "main"),
                )
            )
        except (KeyError, TypeError) as exc:
            raise RegistryError(f"malformed language entry {entry!r}: {exc}") from exc
    return LanguageRegistry(languages)


def compile_if_needed(
    lang: LanguageSpec, workspace: Workspace, limits: ExecLimits | None = None
) -> ExecResult:
    """Compile the workspace sources for ``lang`` if it has a compile step.

    Interpreted languages return an immediate ok with empty outputs.  A
    failing compiler surfaces as nonzero_exit with its diagnostics on
    stderr.
    """
    if not lang.is_compiled:
        return ExecResult(
            outcome=sandbox.OK, exit_code=0, stdout=b"", stderr=b"", wall_ms=0, truncated=False
        )
    sources = [f for f in workspace.list_files() if f.endswith(lang.source_extension)]
    if not sources:
        raise ValueError(f"no {lang.source_extension} sources in workspace for {lang.id}")
    command = lang.compile_command.format(
        src=" ".join(shlex.quote(s) for s in sources), out=shlex.quote(ARTIFACT_NAME)
    )
    limits = limits or ExecLimits(wall_seconds=120, cpu_seconds=60)
    return sandbox.execute(ExecRequest(command=command, workspace=workspace, limits=limits))
