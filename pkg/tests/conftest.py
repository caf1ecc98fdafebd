import numpy as np
import pytest

from dualhead_pd import data, synth

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_LANGS = [
    {"name": "lang_a", "n_hc": 12, "n_pd": 6},
    {"name": "lang_b", "n_hc": 8, "n_pd": 8},
]


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A few dozen utterances across two languages, short audio."""
    root = tmp_path_factory.mktemp("small_corpus")
    cfg = synth.SynthConfig(languages=SMALL_LANGS, ddk_seconds=1.0, continuous_seconds=1.5, seed=3)
    synth.generate(cfg, str(root))
    return root


@pytest.fixture(scope="session")
def small_splits(small_corpus):
    return {s: data.load_utterances(str(small_corpus / f"{s}.jsonl")) for s in ("train", "val", "test")}


@pytest.fixture(scope="session")
def default_corpus(tmp_path_factory):
    """The default synthetic corpus (about 600 utterances)."""
    root = tmp_path_factory.mktemp("default_corpus")
    synth.generate(synth.SynthConfig(), str(root))
    return root


@pytest.fixture(scope="session")
def default_splits(default_corpus):
    return {s: data.load_utterances(str(default_corpus / f"{s}.jsonl")) for s in ("train", "val", "test")}
