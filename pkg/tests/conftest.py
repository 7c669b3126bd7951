import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qrw.experiment import Workspace, load_spec  # noqa: E402
from qrw.index import Document  # noqa: E402
from qrw.synthetic import bundled_spec_path  # noqa: E402

WORDS = "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi omicron pi rho sigma tau".split()


class ScriptedGenerator:
    """Test double: returns the first scripted response whose key occurs in the prompt."""

    def __init__(self, responses=None, default=""):
        self.responses = responses or {}
        self.default = default
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        for key, response in self.responses.items():
            if key in prompt:
                return response(prompt) if callable(response) else response
        return self.default(prompt) if callable(self.default) else self.default


def random_corpus(rng, n_docs, vocab=WORDS, max_len=30):
    docs = []
    for i in range(n_docs):
        length = rng.randint(0, max_len)
        docs.append(Document(f"d{i:04d}", " ".join(rng.choice(vocab) for _ in range(length))))
    return docs


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def scripted():
    return ScriptedGenerator


@pytest.fixture(scope="session")
def bundled_spec(tmp_path_factory):
    return load_spec(bundled_spec_path(), output_dir=tmp_path_factory.mktemp("bundled-out"))


@pytest.fixture(scope="session")
def workspace(bundled_spec):
    return Workspace.open(bundled_spec)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, title = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  AC{n:<2} {title}")
