"""Locator helpers for the shipped iris fixture assignment.

The fixture mirrors a three-program statistics exercise: starter files plus
dataset under ``template/``, the grading suite in ``autograde.spec`` (5/7/13
points), and a reference solution under ``solution/`` whose expected outputs
the suite pins (recomputed from a deterministic 70/30 split, seed 0).
"""

from __future__ import annotations

from pathlib import Path

from .classroom import read_dir_files

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def iris_fixture_dir() -> Path:
    return FIXTURES_DIR / "iris"


def iris_suite_text() -> str:
    return (iris_fixture_dir() / "autograde.spec").read_text("utf-8")


def iris_template_files() -> dict[str, bytes]:
    return read_dir_files(iris_fixture_dir() / "template")


def iris_solution_files() -> dict[str, bytes]:
    return read_dir_files(iris_fixture_dir() / "solution")
