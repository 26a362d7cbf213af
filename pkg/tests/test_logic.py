"""Formulas: parsing, satisfaction, probability, conditional checking."""

from fractions import Fraction

import pytest

from qpcl.impls import make_adversary, make_setup
from qpcl.lang import LangError, nonce, parse_protocol, principal, thread_id
from qpcl.logic import (
    And,
    Before,
    Belief,
    CondImp,
    Forall,
    Honest,
    Imp,
    Lift,
    LogicError,
    Not,
    Pred,
    TRUE,
    alpha_eq,
    check_conditional,
    conclusion_bound,
    erase,
    formula_fv,
    holds,
    match_program,
    measure,
    parse_conditional,
    parse_formula,
    prob,
    render_conditional,
    render_formula,
    split_imp,
    subst_formula,
    universal_closure,
)
from qpcl.bounds import EpsilonExpr
from qpcl.lang import Lit, Var
from qpcl.runtime import build_tree, initial_config, is_prefix, traces


@pytest.fixture(scope="module")
def cr_tree(cr_protocol):
    setup = make_setup(make_adversary("faithful", 8), 8)
    cfg = initial_config(
        cr_protocol, [("Init", (principal("B"),), "A"), ("Resp", (), "B")], setup)
    return build_tree(cfg, setup, 400)


def test_parser_roundtrip_and_precedence():
    f = parse_formula("Send(X, m) /\\ Receive(Y, m) => (exists n. New(X, n))")
    pair = split_imp(f)
    assert pair is not None
    ante, cons = pair
    assert isinstance(ante, And)  # /\ binds tighter than =>
    assert render_formula(parse_formula(render_formula(f))) == render_formula(f)
    g = parse_formula("~Send(X, m) \\/ Honest(A)")
    assert isinstance(g, Not) and isinstance(g.sub, And)
    h = parse_formula("forall X. forall m. (Send(X, m) => Contains(m, m))")
    assert formula_fv(h) == set()


def test_parser_errors():
    for bad in ("Send(X)", "Frobnicate(X, m)", "Send(X, m", "Send(X, m))"):
        with pytest.raises((LogicError, LangError)):
            parse_formula(bad)


def test_conditional_forms():
    c = parse_conditional("B{eVER + 2*eFS2} Honest(principal(B))")
    assert conclusion_bound(c) == EpsilonExpr(ver=1, fs2=2)
    assert isinstance(erase(c), Honest)
    lifted = parse_conditional("Send(X, m)")
    assert isinstance(lifted, Lift)
    assert conclusion_bound(lifted) == EpsilonExpr()
    assert render_conditional(c).startswith("B{eVER + 2*eFS2}")


def test_alpha_and_substitution():
    f = parse_formula("exists n. New(X, n)")
    g = parse_formula("exists k. New(X, k)")
    assert alpha_eq(f, g)
    h = subst_formula(f, {"X": Lit(thread_id("A", 1))})
    assert formula_fv(h) == set()
    # Capture avoidance: substituting a term mentioning the bound name.
    i = subst_formula(f, {"X": Var("n")})
    assert "n" in formula_fv(i)
    assert not alpha_eq(i, parse_formula("exists n. New(n, n)"))


def test_holds_on_real_trace(cr_tree):
    (run,) = traces(cr_tree)
    A, B = thread_id("A", 1), thread_id("B", 1)
    lam = {"X": A, "Y": B}
    assert holds(run, lam, parse_formula("exists m. (New(X, m) /\\ (New(X, m) < New(Y, m)))")) is False
    assert holds(run, lam, parse_formula("exists m. New(X, m)"))
    assert holds(run, lam, parse_formula("Honest(pi 1(X))"))
    assert holds(run, lam, parse_formula("Start(X)")) is False  # X acted
    # On the faithful wire every received payload rode on an earlier send.
    f = parse_formula(
        "forall Z. forall m. (Receive(Z, m) => "
        "(exists W. exists m2. (Contains(pi 1(m), m2) /\\ (Send(W, m2) < Receive(Z, m)))))")
    assert holds(run, {}, f)
    # Contains sees into tuples and signature messages.
    g = parse_formula("exists m. exists n. (New(X, n) /\\ Receive(X, m) /\\ Contains(n, m))")
    assert holds(run, lam, g)


def test_prob_measure_agree(cr_protocol):
    setup = make_setup(make_adversary("dropper", 2, {"p": "1/2"}), 2)
    cfg = initial_config(
        cr_protocol, [("Init", (principal("B"),), "A"), ("Resp", (), "B")], setup)
    tree = build_tree(cfg, setup, 400)
    A = thread_id("A", 1)
    for src in ("exists m. Send(X, m)",
                "exists m. (exists Y. (Send(X, m) /\\ Receive(Y, m)))",
                "Start(X)"):
        f = parse_formula(src)
        p = prob(f, tree, {"X": A})
        assert p == measure(f, tree, {"X": A})
        assert 0 <= p <= 1


def test_check_conditional(cr_tree):
    eps = lambda e: Fraction(e.ver + e.fs2, 100)
    ok = parse_conditional("B{eVER} (exists X. (exists m. Send(X, m)))")
    assert check_conditional(ok, cr_tree, eps)
    # A lifted falsehood fails outright.
    bad = parse_conditional("forall X. Start(X)")
    assert not check_conditional(bad, cr_tree, eps)
    # Conditional implication: vacuous antecedent is accepted.
    vac = CondImp(parse_formula("exists m. New(principal(Eve), m)"),
                  EpsilonExpr(), TRUE)
    assert check_conditional(vac, cr_tree, eps)


def test_universal_closure_and_erase():
    c = Belief(EpsilonExpr(ver=1), parse_formula("Send(X, m)"))
    f = universal_closure(erase(c))
    assert formula_fv(f) == set()
    assert isinstance(f, Forall)


def test_match_program(cr_protocol, cr_tree):
    (run,) = traces(cr_tree)
    init = cr_protocol.role("Init")
    A = thread_id("A", 1)
    env = {"A": A, "B": principal("B")}
    matches = match_program(run, env, init.body, Lit(A))
    assert len(matches) == 1
    tau1, tau2, lam = matches[0]
    assert is_prefix(tau1, tau2) and is_prefix(tau2, run)
    new_results = [l.result for l in run.labels
                   if l.action == "new" and l.thread == A]
    assert lam["m"] in new_results
    # The Resp program does not match A's thread.
    resp = cr_protocol.role("Resp")
    assert match_program(run, {"B": A}, resp.body, Lit(A)) == []
