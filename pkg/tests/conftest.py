import math

import pytest

from posix_index.providers.bigram import ReferenceBigramLM

# acceptance results collected by tests/test_acceptance.py, printed at the end
ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture
def toy_lm():
    """P(a|a)=0.7, P(b|a)=0.2, P(end|a)=0.1; P(a|b)=0.3."""
    counts = {
        "a": {"a": 7, "b": 2, "</s>": 1},
        "b": {"a": 3, "b": 5, "</s>": 2},
        "</s>": {"a": 1, "b": 1, "</s>": 8},
    }
    return ReferenceBigramLM(["a", "b", "</s>"], counts, alpha=0.0)


@pytest.fixture
def ln():
    return math.log


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{status:4s} {name}: {detail}")
