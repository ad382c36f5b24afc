import numpy as np
import pytest

from bprlex.core import Provenance, TranslationGraph, TranslationPair, Vocabulary

_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(tag, text): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    tag = getattr(report, "criterion", None)
    if tag is not None:
        _criteria[tag[0]] = (tag[1], report.outcome.upper())


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(_criteria, key=lambda t: int(t.split("-")[-1])):
        text, outcome = _criteria[tag]
        terminalreporter.write_line(f"{tag:6s} {'PASS' if outcome == 'PASSED' else 'FAIL'}  {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def vocabs():
    return (Vocabulary("target", ["cat", "dog", "house", "tree"]),
            Vocabulary("source", ["chat", "chien", "maison", "arbre", "Paris"]))


@pytest.fixture
def small_graph(vocabs):
    tv, sv = vocabs
    pairs = [TranslationPair(0, 0, Provenance.WIKI), TranslationPair(1, 1, Provenance.WIKI),
             TranslationPair(1, 1, Provenance.WIKI_CROWD), TranslationPair(2, 2, Provenance.WIKI_CROWD),
             TranslationPair(3, 2, Provenance.WIKI_CROWD), TranslationPair(3, 3, Provenance.WIKI_CROWD)]
    return TranslationGraph(tv, sv, pairs)
