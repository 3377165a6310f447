"""Test-suite data model, output comparison and score aggregation.

Pure functions and immutable values only: no processes, no I/O.  The suite
file format is a UTF-8 JSON document with a top-level ``tests`` array; see
``parse_suite`` for the schema.  By convention the file is named
``autograde.spec`` at the root of an assignment template.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

COMPARISON_MODES = ("included", "exact", "regex")

DEFAULT_COMPARISON = "included"
DEFAULT_TIMEOUT_MINUTES = 10

# TestResult.status values.
PASSED = "passed"
FAILED = "failed"
ERROR = "error"
TIMEOUT = "timeout"
STATUSES = (PASSED, FAILED, ERROR, TIMEOUT)

SUITE_FILENAME = "autograde.spec"

_TEST_KEYS = {"name", "setup", "run", "input", "output", "comparison", "timeout", "points"}


class SuiteError(ValueError):
    """A suite document failed validation.  ``field`` names the offender."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ComparisonError(ValueError):
    """compare_output could not be evaluated (e.g. invalid regex)."""


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # domain type, not a pytest class

    name: str
    run_command: str
    setup_command: str | None = None
    stdin_data: bytes | None = None
    expected_output: str | None = None
    comparison: str = DEFAULT_COMPARISON
    timeout_minutes: int = DEFAULT_TIMEOUT_MINUTES
    points: int = 0

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise SuiteError("test name must be a non-empty string", field="name")
        if not self.run_command or not self.run_command.strip():
            raise SuiteError(f"test {self.name!r}: run command must be non-empty", field="run")
        if self.comparison not in COMPARISON_MODES:
            raise SuiteError(
                f"test {self.name!r}: unknown comparison {self.comparison!r} "
                f"(expected one of {', '.join(COMPARISON_MODES)})",
                field="comparison",
            )
        if not _is_int(self.timeout_minutes) or self.timeout_minutes < 1:
            raise SuiteError(
                f"test {self.name!r}: timeout must be a positive integer number of minutes",
                field="timeout",
            )
        if not _is_int(self.points) or self.points < 0:
            raise SuiteError(
                f"test {self.name!r}: points must be a non-negative integer", field="points"
            )
        if self.expected_output is not None and self.comparison in ("included", "exact"):
            if self.expected_output == "":
                raise SuiteError(
                    f"test {self.name!r}: expected output must be non-empty for "
                    f"comparison {self.comparison!r}",
                    field="output",
                )


@dataclass(frozen=True)
class TestSuite:
    __test__ = False  # domain type, not a pytest class

    tests: tuple[TestCase, ...]

    def __post_init__(self):
        if not self.tests:
            raise SuiteError("empty test list", field="tests")
        seen: set[str] = set()
        for t in self.tests:
            if t.name in seen:
                raise SuiteError(f"duplicate test name {t.name!r}", field="name")
            seen.add(t.name)

    @property
    def max_points(self) -> int:
        return sum(t.points for t in self.tests)


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # domain type, not a pytest class

    test_name: str
    status: str
    points_earned: int
    actual_stdout: str = ""
    actual_stderr: str = ""
    duration_ms: int = 0
    # Diagnostics for error statuses; grader_fault marks infrastructure
    # failure (never the student's), so dashboards can exclude the report.
    diagnostic: str = ""
    grader_fault: bool = False

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown test status {self.status!r}")
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be non-negative")


@dataclass(frozen=True)
class GradeReport:
    results: tuple[TestResult, ...]
    earned: int
    max: int
    all_passed: bool

    def has_grader_fault(self) -> bool:
        return any(r.grader_fault for r in self.results)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def normalize_output(text: str) -> str:
    """Strip trailing whitespace from each line and trailing newlines.

    Applied to program output (and, for included/exact, to the expected
    text) before comparison, so that ``print(1.2)`` matches an expected
    value of ``"1.2"`` despite the trailing newline.  Idempotent.
    """
    lines = [line.rstrip() for line in text.split("\n")]
    return "\n".join(lines).rstrip("\n")


def compare_output(expected: str, actual_stdout: str, mode: str) -> bool:
    """Decide whether actual output satisfies the expected output.

    included: expected appears in the normalized output as a contiguous
    substring.  exact: normalized equality.  regex: the pattern matches
    anywhere in the normalized output (the pattern itself is not
    normalized).  Raises ComparisonError for an invalid mode, an empty
    expected value (included/exact) or an unparseable pattern.
    """
    if mode not in COMPARISON_MODES:
        raise ComparisonError(f"unknown comparison mode {mode!r}")
    actual = normalize_output(actual_stdout)
    if mode == "included":
        if expected == "":
            raise ComparisonError("expected output must be non-empty for mode 'included'")
        return normalize_output(expected) in actual
    if mode == "exact":
        if expected == "":
            raise ComparisonError("expected output must be non-empty for mode 'exact'")
        return normalize_output(expected) == actual
    try:
        pattern = re.compile(expected)
    except re.error as exc:
        raise ComparisonError(f"invalid regex pattern: {exc}") from exc
    return pattern.search(actual) is not None


def parse_suite(spec_text: str) -> TestSuite:
    """Parse and validate a suite document.

    Schema: ``{"tests": [{"name", "run", "setup"?, "input"?, "output"?,
    "comparison"?, "timeout"?, "points"}, ...]}``.  Defaults: comparison
    "included", timeout 10 minutes.  Raises SuiteError naming the offending
    field on any violation.
    """
    try:
        doc = json.loads(spec_text)
    except json.JSONDecodeError as exc:
        raise SuiteError(f"malformed suite document: {exc}") from exc
    if not isinstance(doc, dict):
        raise SuiteError("malformed suite document: top level must be an object")
    unknown = set(doc) - {"tests"}
    if unknown:
        raise SuiteError(f"unknown top-level field {sorted(unknown)[0]!r}", field=sorted(unknown)[0])
    if "tests" not in doc:
        raise SuiteError("missing top-level field 'tests'", field="tests")
    entries = doc["tests"]
    if not isinstance(entries, list):
        raise SuiteError("'tests' must be an array", field="tests")
    if not entries:
        raise SuiteError("empty test list", field="tests")

    tests = []
    for i, entry in enumerate(entries):
        tests.append(_parse_test(entry, i))
    return TestSuite(tests=tuple(tests))


def _parse_test(entry, index: int) -> TestCase:
    where = f"tests[{index}]"
    if not isinstance(entry, dict):
        raise SuiteError(f"{where}: test entry must be an object", field="tests")
    unknown = set(entry) - _TEST_KEYS
    if unknown:
        bad = sorted(unknown)[0]
        raise SuiteError(f"{where}: unknown field {bad!r}", field=bad)
    for required in ("name", "run"):
        if required not in entry:
            raise SuiteError(f"{where}: missing required field {required!r}", field=required)

    def text_field(key: str, required: bool = False) -> str | None:
        value = entry.get(key)
        if value is None and not required:
            return None
        if not isinstance(value, str):
            raise SuiteError(f"{where}: field {key!r} must be a string", field=key)
        return value

    def int_field(key: str, default: int | None) -> int | None:
        if key not in entry:
            return default
        value = entry[key]
        if not _is_int(value):
            raise SuiteError(f"{where}: field {key!r} must be an integer", field=key)
        return value

    name = text_field("name", required=True)
    stdin_text = text_field("input")
    points = int_field("points", None)
    if points is None:
        raise SuiteError(f"{where}: missing required field 'points'", field="points")
    return TestCase(
        name=name,
        run_command=text_field("run", required=True),
        setup_command=text_field("setup"),
        stdin_data=stdin_text.encode("utf-8") if stdin_text is not None else None,
        expected_output=text_field("output"),
        comparison=text_field("comparison") or DEFAULT_COMPARISON,
        timeout_minutes=int_field("timeout", DEFAULT_TIMEOUT_MINUTES),
        points=points,
    )


def serialize_suite(suite: TestSuite) -> str:
    """Render a suite back to the file format; parse_suite round-trips it."""
    entries = []
    for t in suite.tests:
        entry: dict = {"name": t.name}
        if t.setup_command is not None:
            entry["setup"] = t.setup_command
        entry["run"] = t.run_command
        if t.stdin_data is not None:
            entry["input"] = t.stdin_data.decode("utf-8")
        if t.expected_output is not None:
            entry["output"] = t.expected_output
        entry["comparison"] = t.comparison
        entry["timeout"] = t.timeout_minutes
        entry["points"] = t.points
        entries.append(entry)
    return json.dumps({"tests": entries}, indent=2, ensure_ascii=False) + "\n"


def score(results: list[TestResult] | tuple[TestResult, ...], suite: TestSuite) -> GradeReport:
    """Aggregate per-test results into a GradeReport.

    Results must correspond one-to-one, in order, with suite.tests; a test
    earns its points only when it passed.
    """
    results = tuple(results)
    if len(results) != len(suite.tests):
        raise ValueError(
            f"result count {len(results)} does not match suite test count {len(suite.tests)}"
        )
    for r, t in zip(results, suite.tests):
        if r.test_name != t.name:
            raise ValueError(f"result {r.test_name!r} does not match suite test {t.name!r}")
        expected_points = t.points if r.status == PASSED else 0
        if r.points_earned != expected_points:
            raise ValueError(
                f"test {t.name!r}: points_earned {r.points_earned} inconsistent with "
                f"status {r.status!r} (expected {expected_points})"
            )
    earned = sum(r.points_earned for r in results)
    return GradeReport(
        results=results,
        earned=earned,
        max=suite.max_points,
        all_passed=all(r.status == PASSED for r in results),
    )


def make_result(test: TestCase, status: str, **fields) -> TestResult:
    """Build a TestResult for ``test`` with points derived from status."""
    points = test.points if status == PASSED else 0
    return TestResult(test_name=test.name, status=status, points_earned=points, **fields)


# --- JSON round-trip helpers for persistence and the HTTP API ---------------


def result_to_dict(r: TestResult) -> dict:
    return {
        "test_name": r.test_name,
        "status": r.status,
        "points_earned": r.points_earned,
        "actual_stdout": r.actual_stdout,
        "actual_stderr": r.actual_stderr,
        "duration_ms": r.duration_ms,
        "diagnostic": r.diagnostic,
        "grader_fault": r.grader_fault,
    }


def result_from_dict(d: dict) -> TestResult:
    return TestResult(
        test_name=d["test_name"],
        status=d["status"],
        points_earned=d["points_earned"],
        actual_stdout=d.get("actual_stdout", ""),
        actual_stderr=d.get("actual_stderr", ""),
        duration_ms=d.get("duration_ms", 0),
        diagnostic=d.get("diagnostic", ""),
        grader_fault=d.get("grader_fault", False),
    )


def report_to_dict(report: GradeReport) -> dict:
    return {
        "results": [result_to_dict(r) for r in report.results],
        "earned": report.earned,
        "max": report.max,
        "all_passed": report.all_passed,
    }


def report_from_dict(d: dict) -> GradeReport:
    return GradeReport(
        results=tuple(result_from_dict(r) for r in d["results"]),
        earned=d["earned"],
        max=d["max"],
        all_passed=d["all_passed"],
    )
