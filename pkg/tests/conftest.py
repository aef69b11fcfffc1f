import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from escape_lab.battery import bernoulli_half, biased_bernoulli, markov_chain, parry_golden_mean  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PHI = (1 + math.sqrt(5)) / 2


def _oracle_for(name):
    if name == "bernoulli":
        return oracles.markov_form([[1, 1], [1, 1]], f1=[-math.log(2)] * 2)
    if name == "biased":
        return oracles.markov_form([[1, 1], [1, 1]], f1=[math.log(0.7), math.log(0.3)])
    if name == "chain":
        return oracles.markov_form([[1, 1], [1, 1]], f2=np.log([[0.7, 0.3], [0.4, 0.6]]))
    return oracles.markov_form([[1, 1], [1, 0]], f1=[0.0, 0.0])


SYSTEMS = {
    "bernoulli": bernoulli_half,
    "biased": biased_bernoulli,
    "chain": markov_chain,
    "parry": parry_golden_mean,
}


@pytest.fixture(scope="session")
def bern():
    return bernoulli_half()


@pytest.fixture(scope="session")
def parry():
    return parry_golden_mean()


@pytest.fixture(scope="session")
def chain():
    return markov_chain()


@pytest.fixture(scope="session", params=list(SYSTEMS))
def system(request):
    """``(gibbs, G, pi, P)``: a battery system with its independent oracle chain."""
    g = SYSTEMS[request.param]()
    pi, P, _ = _oracle_for(request.param)
    return g, np.asarray(g.sft.transition), pi, P


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)
