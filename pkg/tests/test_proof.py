"""Proof checker: the bundled derivation, rule schemas, and mutations."""

import re

import pytest

from qpcl.bounds import EpsilonExpr
from qpcl.lang import parse_protocol
from qpcl.logic import parse_conditional, parse_formula
from qpcl.proof import (
    FO_TAUT_ATOM_LIMIT,
    ProofError,
    check_axiom_instance,
    check_proof_text,
    fo_taut,
    initial_segments,
    nonce_preserving,
    parse_script,
)

from mutations import PROOF_MUTATIONS, PROTOCOL_MUTATIONS, apply


def test_cr_proof_accepted(cr_protocol, cr_proof_text):
    verdict = check_proof_text(cr_proof_text, cr_protocol)
    assert verdict.accepted, verdict.diagnostics
    assert verdict.safety_certified
    assert verdict.bound == EpsilonExpr(ver=1, fs2=2)
    assert verdict.diagnostics == []
    assert verdict.conclusion is not None


def test_parse_script_shape(cr_protocol, cr_proof_text):
    steps = parse_script(cr_proof_text, cr_protocol)
    assert len(steps) == 180
    assert [s.id for s in steps] == list(range(1, 181))
    assert steps[-1].rule == "PCIMP-B"


def test_initial_segments(cr_protocol):
    segs = initial_segments(cr_protocol)
    # One non-empty statement prefix per statement, per role.
    assert len(segs) == 12
    from qpcl.lang import statements
    lengths = sorted(len(statements(p)) for _r, p in segs)
    assert lengths == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6]


def test_nonce_preserving(cr_protocol):
    ok, witness = nonce_preserving(cr_protocol)
    assert ok and witness is None
    leaky = parse_protocol(
        "protocol L { role R(B) as X {"
        " n <- new; _ <- send <B, pi 1(X)>; _ <- send <B, n>; stop } }")
    ok2, _w = nonce_preserving(leaky)
    assert ok2  # sending a generated nonce directly is fine
    # A protocol whose nonce never leaves the thread is also preserving;
    # the check only rejects nonces derived then retransmitted obscured.
    still_ok, _ = nonce_preserving(parse_protocol(
        "protocol M { role R() as X { n <- new; stop } }"))
    assert still_ok


def test_fo_taut():
    assert fo_taut(parse_formula("Send(X, m) => Send(X, m)"))
    assert fo_taut(parse_formula("Send(X, m) \\/ ~Send(X, m)"))
    assert not fo_taut(parse_formula("Send(X, m) => Receive(X, m)"))
    assert not fo_taut(parse_formula("Send(X, m) => (~Send(X, m))"))
    assert FO_TAUT_ATOM_LIMIT >= 24  # the bundled proof needs 24 atoms


def test_check_axiom_instance(cr_protocol):
    good = parse_conditional("B{0} true [#Init(principal(B))]_ A New(A, m)",
                             cr_protocol)
    assert check_axiom_instance("AA1", good, (), cr_protocol)
    bad = parse_conditional("B{0} true [#Init(principal(B))]_ A New(A, y)",
                            cr_protocol)
    assert not check_axiom_instance("AA1", bad, (), cr_protocol)
    with pytest.raises(ProofError):
        check_axiom_instance("NO-SUCH-RULE", good, (), cr_protocol)


def test_empty_and_garbage_scripts(cr_protocol):
    v = check_proof_text("", cr_protocol)
    assert not v.accepted and v.bound is None
    v2 = check_proof_text("step 1 |- gibberish by WHAT()", cr_protocol)
    assert not v2.accepted


def test_forward_and_missing_premises(cr_protocol):
    text = ("step 1 |- Send(X, m) => Send(X, m) by FO-TAUT()\n"
            "step 2 |- Send(X, m) => Send(X, m) by WEAKEN(5)\n")
    v = check_proof_text(text, cr_protocol)
    assert not v.accepted
    assert any("step 2" in d for d in v.diagnostics)


def test_hypothesis_discipline(cr_protocol):
    # A step may not silently drop a premise's hypothesis.
    text = ("step 1 hyp: Honest(principal(B)) |- Send(X, m) => Send(X, m) by FO-TAUT()\n"
            "step 2 |- Send(X, m) => Send(X, m) by WEAKEN(1)\n")
    v = check_proof_text(text, cr_protocol)
    assert not v.accepted
    assert any("step 2" in d and "hypothesis" in d for d in v.diagnostics)


@pytest.mark.parametrize(
    "name,old,new,_why", PROOF_MUTATIONS, ids=[m[0] for m in PROOF_MUTATIONS])
def test_proof_mutations_rejected(cr_protocol, cr_proof_text, name, old, new, _why):
    verdict = check_proof_text(apply(cr_proof_text, old, new), cr_protocol)
    assert not verdict.accepted
    assert verdict.diagnostics
    assert any(re.search(r"step \d+", d) for d in verdict.diagnostics), \
        verdict.diagnostics


@pytest.mark.parametrize(
    "name,old,new,_why", PROTOCOL_MUTATIONS, ids=[m[0] for m in PROTOCOL_MUTATIONS])
def test_protocol_mutations_rejected(cr_proof_text, name, old, new, _why):
    from pathlib import Path
    src = (Path(__file__).parent.parent / "corpus" / "cr.qpcl").read_text()
    mutated = parse_protocol(apply(src, old, new))
    verdict = check_proof_text(cr_proof_text, mutated)
    assert not verdict.accepted
    assert any(re.search(r"step \d+", d) for d in verdict.diagnostics), \
        verdict.diagnostics
