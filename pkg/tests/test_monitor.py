"""Soundness monitors: instrumentation, bad flags, experiments."""

from fractions import Fraction

import pytest

from conftest import scenario_tree
from qpcl.impls import make_adversary, make_setup
from qpcl.lang import nonce, parse_protocol, principal
from qpcl.logic import TraceIndex, holds
from qpcl.monitor import (
    FS2_LABEL,
    InstrumentedSetup,
    MonitorError,
    OverheadPoly,
    VER_LABEL,
    branch_isomorphic,
    default_instances,
    instrument_fs2,
    instrument_ver,
    max_cost_inflation,
    monitor_biconditional,
    nonces,
    phi_fs2,
    phi_fs2_holds,
    phi_ver,
    phi_ver_holds,
    run_experiment,
    trace_bad,
)
from qpcl.runtime import build_tree, initial_config, traces
from qpcl.scenario import load_scenario


_INSTR_CACHE = {}


def instrumented_tree(sc, which):
    key = (str(sc.path), which)
    if key not in _INSTR_CACHE:
        setup = InstrumentedSetup(sc.make_setup(), which, sc.overhead)
        cfg = sc.initial(setup)
        _INSTR_CACHE[key] = build_tree(cfg, setup, sc.tb)
    return _INSTR_CACHE[key]


def by_name(scenarios, name):
    for sc in scenarios:
        if sc.path.stem == name:
            return sc
    raise KeyError(name)


def test_nonces():
    from qpcl.lang import Tup, make_signature
    v = Tup((nonce(1), make_signature(principal("A"), nonce(2), 4)))
    assert nonces(v) == frozenset({nonce(1), nonce(2)})
    assert nonces(principal("A")) == frozenset()


def test_overhead_poly():
    p = OverheadPoly(c2=0, c1=1, c0=1)
    assert p.cost(0) == 1 and p.cost(3) == 4
    q = OverheadPoly(c2=2, c1=0, c0=0)
    assert q.cost(3) == 18
    assert q.bound(3) == q.cost(3)


def test_honest_run_never_bad(scenarios):
    sc = by_name(scenarios, "cr")
    for which in ("ver", "fs2"):
        tree = instrumented_tree(sc, which)
        for t in traces(tree):
            assert not trace_bad(t, which)


def test_forged_signature_trips_ver(scenarios):
    sc = by_name(scenarios, "veronly")
    tree = instrumented_tree(sc, "ver")
    runs = list(traces(tree))
    assert runs and all(trace_bad(t, "ver") for t in runs)
    # And the monitored property fails on exactly those traces.
    for t in runs:
        assert not phi_ver_holds(t)


def test_nonce_guess_trips_fs2(scenarios):
    sc = by_name(scenarios, "crmini_random")
    tree = instrumented_tree(sc, "fs2")
    bad_mass = sum((p for p, bad in
                    ((t, trace_bad(t, "fs2")) for t in traces(tree)) if bad
                    for p in [1]), 0)
    bads = [t for t in traces(tree) if trace_bad(t, "fs2")]
    assert bads  # the guess lands with probability 1/8
    for t in bads:
        assert not phi_fs2_holds(t)


@pytest.mark.parametrize("name,which", [
    ("cr_eta2", "ver"), ("cr_eta2", "fs2"),
    ("cr_dropper", "ver"), ("cr_dropper", "fs2"),
    ("cr_replayer", "ver"), ("cr_replayer", "fs2"),
    ("crmini_random", "fs2"), ("crmini_const", "fs2"),
    ("veronly", "ver"),
])
def test_biconditional(scenarios, name, which):
    sc = by_name(scenarios, name)
    tree = instrumented_tree(sc, which)
    ok, total, mismatches = monitor_biconditional(tree, which)
    assert ok, mismatches
    assert total > 0


def test_fast_evaluators_match_generic_holds(scenarios):
    # The specialised evaluators agree with the quantifier semantics of
    # the rendered formulas; checked exhaustively on the small scenarios
    # (which include both satisfying and violating traces) and on two
    # representative traces of the larger one, where the generic
    # evaluator's quantifier blow-up starts to bite.
    f_ver, f_fs2 = phi_ver(), phi_fs2()
    for name in ("crmini_random", "crmini_const", "veronly"):
        for t in traces(scenario_tree(by_name(scenarios, name))):
            ix = TraceIndex(t)
            assert phi_ver_holds(t, ix) == holds(t, {}, f_ver, ix)
            assert phi_fs2_holds(t, ix) == holds(t, {}, f_fs2, ix)
    big = list(traces(scenario_tree(by_name(scenarios, "cr_eta2"))))
    for t in (big[0], big[-1]):
        ix = TraceIndex(t)
        assert phi_ver_holds(t, ix) == holds(t, {}, f_ver, ix)
        assert phi_fs2_holds(t, ix) == holds(t, {}, f_fs2, ix)


def test_instrumentation_preserves_branching(scenarios):
    sc = by_name(scenarios, "cr_eta2")
    base = scenario_tree(sc)
    for which in ("ver", "fs2"):
        instr = instrumented_tree(sc, which)
        assert branch_isomorphic(base, instr)
        # poly(1 + set size) overhead only: bounded single-digit factor here.
        assert 1 <= max_cost_inflation(base, instr) <= 10


def test_instrument_helpers(scenarios):
    sc = by_name(scenarios, "cr")
    s1 = instrument_ver(sc.make_setup())
    s2 = instrument_fs2(sc.make_setup())
    cfg1 = sc.initial(s1)
    cfg2 = sc.initial(s2)
    assert any(k == VER_LABEL for k, _ in cfg1.cells)
    assert any(k == FS2_LABEL for k, _ in cfg2.cells)


def test_run_experiment_random_vs_broken(scenarios):
    rand = by_name(scenarios, "crmini_random")
    rep = run_experiment(rand.protocol, rand.make_adversary(), "fs2", "random",
                         rand.eta, rand.tb, instances=rand.instances,
                         l=rand.l_effective, table=rand.table)
    assert rep.bad_probability == Fraction(1, 8)
    assert rep.bound == Fraction(1, 8)
    assert not rep.violated
    assert rep.budget > rand.tb  # monitoring overhead added to the budget

    const = by_name(scenarios, "crmini_const")
    rep2 = run_experiment(const.protocol, const.make_adversary(), "fs2",
                          const.rng, const.eta, const.tb,
                          instances=const.instances, l=const.l_effective,
                          new_opts=dict(const.new_opts), table=const.table)
    assert rep2.bad_probability == 1
    assert rep2.violated


def test_run_experiment_sampled(scenarios):
    sc = by_name(scenarios, "crmini_random")
    rep = run_experiment(sc.protocol, sc.make_adversary(), "fs2", "random",
                         sc.eta, sc.tb, instances=sc.instances,
                         l=sc.l_effective, table=sc.table,
                         mode="sample:400:11")
    assert rep.mode == "sample:400:11"
    assert rep.half_width is not None and rep.half_width > 0
    assert abs(rep.bad_probability - Fraction(1, 8)) <= rep.half_width * 2
    # Same seed, same estimate.
    rep2 = run_experiment(sc.protocol, sc.make_adversary(), "fs2", "random",
                          sc.eta, sc.tb, instances=sc.instances,
                          l=sc.l_effective, table=sc.table,
                          mode="sample:400:11")
    assert rep2.bad_probability == rep.bad_probability
    d = rep.to_dict()
    assert d["axiom"] == "fs2" and isinstance(d["bad_probability"], str)


def test_run_experiment_errors(scenarios):
    sc = by_name(scenarios, "crmini_random")
    adv = sc.make_adversary()
    with pytest.raises(MonitorError):
        run_experiment(sc.protocol, adv, "nope", "random", sc.eta, sc.tb,
                       instances=sc.instances)
    with pytest.raises(MonitorError):
        run_experiment(sc.protocol, adv, "fs2", "quantum", sc.eta, sc.tb,
                       instances=sc.instances)
    with pytest.raises(MonitorError):
        run_experiment(sc.protocol, adv, "fs2", "random", sc.eta, sc.tb)
    with pytest.raises(MonitorError):  # node cap exhausted suggests sampling
        run_experiment(sc.protocol, adv, "fs2", "random", sc.eta, sc.tb,
                       instances=sc.instances, node_cap=2)


def test_default_instances(cr_protocol):
    mini = parse_protocol("protocol M { role Gen() as X { n <- new; stop } }")
    inst = default_instances(mini, (3,))
    assert len(inst) == 3 and all(i[0] == "Gen" for i in inst)
    with pytest.raises(MonitorError):
        default_instances(cr_protocol, (1,))  # wrong vector length
    with pytest.raises(MonitorError):
        default_instances(cr_protocol, (1, 1))  # Init takes parameters
