import numpy as np
import pytest

from charnet.alphabet import build_alphabet
from charnet.encoding import EncodingConfig
from charnet.model import Model, build_default_spec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and rep.when in ("call", "setup"):
                rows.append((nodeid.split("::")[-1], outcome.upper()))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in sorted(set(rows)):
            terminalreporter.write_line(f"{outcome:8s} {name}")


@pytest.fixture(scope="session")
def alphabet():
    return build_alphabet()


@pytest.fixture(scope="session")
def tiny_encoding():
    return EncodingConfig(max_chars=16, max_sentences=3)


@pytest.fixture(scope="session")
def tiny_model(tiny_encoding):
    """A small untrained 2-class model shared by read-only tests."""
    spec = build_default_spec(2, tiny_encoding, scale=0.05)
    return Model.initialize(spec, seed=42)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
