from pathlib import Path

import pytest

from toricstab.inputs import load_problem

CORPUS = Path(__file__).resolve().parents[1] / "corpus"


@pytest.fixture(scope="session")
def corpus():
    return {p.stem: load_problem(p) for p in sorted(CORPUS.glob("*.json"))}


@pytest.fixture(scope="session")
def p1(corpus):
    return corpus["p1"]


@pytest.fixture(scope="session")
def p1_o1(corpus):
    return corpus["p1_O1"]


@pytest.fixture(scope="session")
def p2(corpus):
    return corpus["p2"]


@pytest.fixture(scope="session")
def p3(corpus):
    return corpus["p3"]


@pytest.fixture(scope="session")
def blp2(corpus):
    return corpus["blp2"]


@pytest.fixture(scope="session")
def p1xp1(corpus):
    return corpus["p1xp1"]


@pytest.fixture(scope="session")
def coupled_p1(corpus):
    return corpus["coupled_p1"]
