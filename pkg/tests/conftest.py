from __future__ import annotations

import os
from pathlib import Path

import pytest

from probit_evidence import ProbitModel
from probit_evidence.bench import BenchConfig, load_pima_csv, run_benchmark

REPO = Path(__file__).resolve().parents[1]

# Lines collected by tests/test_acceptance.py, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pima_csv(tmp_path_factory) -> Path:
    """Path to MASS::Pima.te as CSV: $PIMA_CSV, data/pima_te.csv, or an rdatasets export."""
    env = os.environ.get("PIMA_CSV")
    if env:
        return Path(env)
    local = REPO / "data" / "pima_te.csv"
    if local.exists():
        return local
    try:
        import rdatasets
    except ImportError:
        pytest.skip("Pima data unavailable: set PIMA_CSV or pip install rdatasets")
    frame = rdatasets.data("MASS", "Pima.te").drop(columns=["rownames"], errors="ignore")
    out = tmp_path_factory.mktemp("data") / "pima_te.csv"
    frame.to_csv(out, index=False)
    return out


@pytest.fixture(scope="session")
def pima_data(pima_csv):
    return load_pima_csv(pima_csv)


@pytest.fixture(scope="session")
def pima_models(pima_data):
    return ProbitModel(pima_data, ("glu", "bp")), ProbitModel(pima_data, ("glu", "bp", "ped"))


@pytest.fixture(scope="session")
def full_benchmark_config(pima_csv) -> BenchConfig:
    return BenchConfig(data_path=str(pima_csv))


@pytest.fixture(scope="session")
def full_benchmark(full_benchmark_config):
    """The default 100 x 20000 run, shared by the benchmark criteria (a few minutes)."""
    return run_benchmark(full_benchmark_config)
