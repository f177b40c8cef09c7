"""Shared, session-scoped experiment runs (each trains networks for minutes)."""

import pytest

from riskpde.bench import BenchConfig, run_adaptation, run_efficiency, run_generalization, run_gradient

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def bench_cfg():
    return BenchConfig(counts=(100,), pipe_counts=(100,), seeds=(0, 1, 2))


@pytest.fixture(scope="session")
def generalization(bench_cfg):
    return run_generalization(bench_cfg)


@pytest.fixture(scope="session")
def efficiency(bench_cfg):
    return run_efficiency(bench_cfg)


@pytest.fixture(scope="session")
def adaptation(bench_cfg):
    return run_adaptation(bench_cfg)


@pytest.fixture(scope="session")
def gradient(bench_cfg, generalization):
    # Same protocol as the generalization run, so its trained network is reused.
    return run_gradient(bench_cfg, params=generalization.artifacts["params"]["pipe"])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
