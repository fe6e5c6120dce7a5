"""Shared fixtures: one fixture-mode pipeline run reused across the session."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phenokg.config import DEFAULT_CONFIG, load_config  # noqa: E402
from phenokg.pipeline import Run, run_pipeline  # noqa: E402


def golden_config(out: Path):
    cfg = load_config(DEFAULT_CONFIG)
    cfg.output_dir = out
    return cfg


@pytest.fixture(scope="session")
def golden_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("golden")
    run_pipeline(golden_config(out), out=out)
    return out


@pytest.fixture(scope="session")
def golden_run(golden_dir) -> Run:
    return Run(golden_config(golden_dir), golden_dir)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LEDGER

    if LEDGER.parts:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in LEDGER.lines():
            terminalreporter.write_line(line)
