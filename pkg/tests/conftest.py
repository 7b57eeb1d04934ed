"""Shared fixtures: builtin datasets, their certificates, one generated set."""

from pathlib import Path

import numpy as np
import pytest

import hingeflow as hf

ACCEPTANCE_REPORT = Path(__file__).parent / "acceptance_report.txt"


@pytest.fixture(scope="session")
def fig1():
    return hf.builtin_dataset("fig1")


@pytest.fixture(scope="session")
def fig2a():
    return hf.builtin_dataset("fig2a")


@pytest.fixture(scope="session")
def fig2b():
    return hf.builtin_dataset("fig2b")


@pytest.fixture(scope="session")
def fig3():
    return hf.builtin_dataset("fig3")


@pytest.fixture(scope="session")
def fig1_cert(fig1):
    return hf.solve_max_margin(fig1)


@pytest.fixture(scope="session")
def fig2a_cert(fig2a):
    return hf.solve_max_margin(fig2a)


@pytest.fixture(scope="session")
def gen_d3():
    """One generated dataset with a known planted margin, d=3."""
    params = hf.GeneratorParams(d=3, n=8, gamma=1.5, seed=7)
    data = hf.generate_separable(params)
    return data, hf.solve_max_margin(data)


@pytest.fixture(scope="session")
def short_run(fig1, fig1_cert):
    """A modest complete-hinge run on fig1 reused by diagnostics tests."""
    u0 = 0.1 * np.random.default_rng(0).standard_normal(fig1.d)
    config = hf.TrainConfig(eta=0.01, alpha=1.0, max_iters=20_000, u0=u0)
    return hf.train(fig1, config, fig1_cert), config


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_REPORT.exists():
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_REPORT.read_text().splitlines():
            terminalreporter.write_line(line)
