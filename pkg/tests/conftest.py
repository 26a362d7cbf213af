import pytest
from pathlib import Path

from qpcl.lang import parse_protocol
from qpcl.runtime import build_tree
from qpcl.scenario import load_scenario

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

SCENARIO_FILES = sorted(CORPUS.glob("*.scenario"))


@pytest.fixture(scope="session")
def cr_protocol():
    return parse_protocol((CORPUS / "cr.qpcl").read_text())


@pytest.fixture(scope="session")
def cr_proof_text():
    return (CORPUS / "cr.qpclproof").read_text()


@pytest.fixture(scope="session")
def scenarios():
    return [load_scenario(p) for p in SCENARIO_FILES]


_TREE_CACHE = {}


def scenario_tree(sc):
    """Exhaustive tree for a bundled scenario, cached per scenario file."""
    key = str(sc.path)
    if key not in _TREE_CACHE:
        setup = sc.make_setup()
        _TREE_CACHE[key] = build_tree(sc.initial(setup), setup, sc.tb)
    return _TREE_CACHE[key]
