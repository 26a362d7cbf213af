"""Runtime: configurations, transitions, trees, sampling, budgets."""

from fractions import Fraction

import pytest

from qpcl.impls import make_adversary, make_setup
from qpcl.lang import Tup, parse_protocol, principal, session, thread_id
from qpcl.runtime import (
    Abort,
    ExecError,
    NodeBudgetExceeded,
    Outcome,
    ReactionError,
    Ret,
    Wait,
    build_tree,
    check_outcomes,
    honest_principals,
    initial_config,
    is_prefix,
    sample_traces,
    trace_prob,
    trace_runtime,
    trace_prefixes,
    traces,
    tree_measure,
    tree_prefix,
    _validate_reaction,
)


def faithful_setup(eta=2, new_kind="counter"):
    return make_setup(make_adversary("faithful", eta), eta, new_kind=new_kind)


def test_initial_config(cr_protocol):
    setup = faithful_setup()
    cfg = initial_config(
        cr_protocol, [("Init", (principal("B1"),)), ("Resp", ())], setup)
    tids = [t for t, _ in cfg.threads]
    assert thread_id("Init1", 1) in tids
    assert thread_id("Resp1", 1) in tids
    assert cfg.active is None and cfg.elapsed == 0
    assert honest_principals(cfg) == {"Init1", "Resp1"}
    # Explicit principal names and per-principal session numbering.
    cfg2 = initial_config(
        cr_protocol,
        [("Resp", (), "B"), ("Resp", (), "B"), ("Init", (principal("B"),), "A")],
        setup)
    sessions = sorted((t.items[1] for t, _ in cfg2.threads
                       if t.items[0] == principal("B")),
                      key=lambda a: a.payload)
    assert sessions == [session(1), session(2)]

    with pytest.raises(ExecError):
        initial_config(cr_protocol, [("Init", ())], setup)  # missing parameter


def test_faithful_run_is_deterministic(cr_protocol):
    setup = faithful_setup()
    cfg = initial_config(
        cr_protocol, [("Init", (principal("B"),), "A"), ("Resp", (), "B")], setup)
    tree = build_tree(cfg, setup, 400)
    runs = list(traces(tree))
    assert len(runs) == 1
    (run,) = runs
    assert trace_prob(run) == 1
    assert run.final.is_final()
    actions = [lab.action for lab in run.labels]
    assert actions.count("verify") == 2
    assert tree_measure(tree) == 1


def test_uniform_nonces_branch(cr_protocol):
    setup = faithful_setup(new_kind="uniform")
    cfg = initial_config(
        cr_protocol, [("Init", (principal("B"),), "A"), ("Resp", (), "B")], setup)
    tree = build_tree(cfg, setup, 400)
    runs = list(traces(tree))
    assert len(runs) == 16  # two 2-bit nonces, four values each
    assert tree_measure(tree) == 1
    probs = {trace_prob(t) for t in runs}
    assert probs == {Fraction(1, 16)}


def test_budget_truncation_and_tree_prefix(cr_protocol):
    setup = faithful_setup()
    cfg = initial_config(
        cr_protocol, [("Init", (principal("B"),), "A"), ("Resp", (), "B")], setup)
    full = build_tree(cfg, setup, 400)
    (run,) = traces(full)
    total = trace_runtime(run)
    assert 0 < total <= 400
    half = build_tree(cfg, setup, total // 2)
    assert tree_prefix(half, full)
    assert not tree_prefix(full, half)
    assert tree_measure(half) == 1
    (short,) = traces(half)
    assert is_prefix(short, run)
    assert len(list(trace_prefixes(run))) == len(run.steps) + 1


def test_node_budget(cr_protocol):
    setup = faithful_setup(new_kind="uniform")
    cfg = initial_config(
        cr_protocol, [("Init", (principal("B"),), "A"), ("Resp", (), "B")], setup)
    with pytest.raises(NodeBudgetExceeded):
        build_tree(cfg, setup, 400, node_cap=10)


def test_sampling_deterministic(cr_protocol):
    setup = faithful_setup(new_kind="uniform")
    cfg = initial_config(
        cr_protocol, [("Init", (principal("B"),), "A"), ("Resp", (), "B")], setup)
    a = sample_traces(cfg, setup, 400, 20, seed=7)
    b = sample_traces(cfg, setup, 400, 20, seed=7)
    assert [t.steps for t in a] == [t.steps for t in b]
    c = sample_traces(cfg, setup, 400, 20, seed=8)
    assert [t.steps for t in a] != [t.steps for t in c]
    # Sampled traces land in the exhaustive tree's trace set.
    exhaustive = {t.steps for t in traces(build_tree(cfg, setup, 400))}
    for t in a:
        assert t.steps in exhaustive


def test_check_outcomes():
    ok = [Outcome(Fraction(1, 2), 1, None, Ret(Tup(()))),
          Outcome(Fraction(1, 2), 1, None, Abort())]
    assert check_outcomes(ok) is ok
    with pytest.raises(ExecError):
        check_outcomes([])
    with pytest.raises(ExecError):
        check_outcomes([Outcome(Fraction(1, 2), 1, None, Wait())])
    with pytest.raises(ExecError):
        check_outcomes([Outcome(0.5, 1, None, Wait()),
                        Outcome(0.5, 1, None, Wait())])


def test_validate_reaction():
    unit = Tup(())
    assert _validate_reaction("new", Ret(unit), True) == Ret(unit)
    assert _validate_reaction("verify", Abort(), True) == Abort()
    assert _validate_reaction("receive", Wait(), True) == Wait()
    with pytest.raises(ReactionError):
        _validate_reaction("send", Wait(), True)
    with pytest.raises(ReactionError):
        _validate_reaction("verify", Ret(principal("A")), True)
    # Non-strict mode coerces a bad reaction to Abort instead of raising.
    assert _validate_reaction("send", Wait(), False) == Abort()


def test_stuck_receiver_truncates():
    proto = parse_protocol(
        "protocol P { role R() as X { <z, S0> <- receive; stop } }")
    setup = faithful_setup()
    cfg = initial_config(proto, [("R", ())], setup)
    tree = build_tree(cfg, setup, 100)
    (run,) = traces(tree)
    # Nothing is ever sent, so the receive waits forever and the run ends
    # without the thread finishing; the measure is still 1.
    assert not run.final.is_final() or run.final.waiting
    assert tree_measure(tree) == 1
