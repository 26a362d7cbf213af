"""Executable soundness monitors and the experiment harness.

The two trace axioms that carry error bounds have operational monitors:
wrapping a setup's implementations with bookkeeping code that raises a
``bad`` flag exactly when the axiom's trace formula fails.

* VER monitor: ``sign'`` records every message signed under a
  principal's key; ``verify'`` sets ``bad`` when a verification
  succeeds on a message the honest key owner never signed.  Because
  ``verify'`` must consult the *key owner's* signed set while executing
  under the verifier's thread, all per-principal signing cells are
  merged into one composite monitor cell.

* FS2 monitor: ``new'`` records generated nonces as unsent, ``send'``
  marks the sender's nonces contained in the outgoing message as sent,
  and ``receive'`` sets ``bad`` when a delivered message contains a
  nonce some generator has not yet sent.  The adversary cell and all
  per-thread generator cells are merged into one composite cell for the
  same reason.

The unsent-nonce set tracks *which thread* generated each nonce.  A
plain value set would conflate colliding nonces drawn by different
threads, breaking the per-generator reading of the first-send formula.

Monitored transitions are charged an extra cost from a configured
quadratic set-operation polynomial; the wrapped setup otherwise
simulates the base one exactly (same reactions, same probabilities).

``run_experiment`` runs an instrumented scenario exhaustively (exact
rational bad-probability) or by sampling (Wilson interval) and compares
the result against the relevant computed bound: the tight form
q_r*l/(eta*2^eta) (with the looser q_r*l*2^-eta also reported) for FS2
in random mode, and the uf-cma evaluation for VER.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from typing import Dict, List, Optional, Sequence, Tuple

from .bounds import BoundParams, BoundTable, count_actions
from .bounds import eps_ver as _eps_ver_value
from .lang import Atom, Protocol, Tup, Value, subvalues, value_key
from .logic import Formula, TraceIndex, contains, parse_formula
from .runtime import (
    Configuration,
    ExecTree,
    Implementation,
    NodeBudgetExceeded,
    Outcome,
    Ret,
    Setup,
    Trace,
    _principal_of,
    build_tree,
    initial_config,
    new_label,
    sample_traces,
    sign_label,
    trace_prob,
    traces,
    ADV_LABEL,
)


class MonitorError(Exception):
    pass


VER_LABEL = ("mon", "ver")
FS2_LABEL = ("mon", "fs2")


@dataclass(frozen=True)
class OverheadPoly:
    """Cost of one monitored set operation at current set size k:
    c2*k^2 + c1*k + c0."""
    c2: int = 0
    c1: int = 1
    c0: int = 1

    def cost(self, k: int) -> int:
        return self.c2 * k * k + self.c1 * k + self.c0

    def bound(self, q: int) -> int:
        """Per-transition inflation bound when at most q items are live."""
        return self.cost(q)


def nonces(v: Value) -> frozenset:
    """Nonce atoms reachable from v by the containment closure."""
    return frozenset(s for s in subvalues(v)
                     if isinstance(s, Atom) and s.kind == "nonce")


# ---------------------------------------------------------------------------
# Association-tuple helpers (cell states must stay hashable and ordered)
# ---------------------------------------------------------------------------

def _assoc_get(pairs: tuple, key):
    for k, v in pairs:
        if k == key:
            return v
    raise MonitorError(f"no monitor sub-state for {key!r}")


def _assoc_set(pairs: tuple, key, value) -> tuple:
    return tuple((k, value if k == key else v) for k, v in pairs)


# ---------------------------------------------------------------------------
# VER instrumentation: composite cell (sigma, signed, bad)
#   sigma:  tuple of (principal name, base sign/verify cell state)
#   signed: frozenset of (principal name, message value)
#   bad:    bool, monotone
# ---------------------------------------------------------------------------

class _VerSign(Implementation):
    def __init__(self, base: Implementation, pname: str, poly: OverheadPoly):
        self.base = base
        self.pname = pname
        self.poly = poly

    def outcomes(self, cell, value):
        sigma, signed, bad = cell
        extra = self.poly.cost(len(signed))
        out = []
        for o in self.base.outcomes(_assoc_get(sigma, self.pname), value):
            signed2 = signed | {(self.pname, value)}
            cell2 = (_assoc_set(sigma, self.pname, o.state), signed2, bad)
            out.append(Outcome(o.prob, o.cost + extra, cell2, o.reaction))
        return out


def _verify_triple(value: Value):
    """(signature, message, key-owner name) from a well-formed verify
    argument <s, t, vk(owner)>; None when the argument is malformed."""
    if isinstance(value, Tup) and len(value.items) == 3:
        sig, msg, key = value.items
        if isinstance(key, Atom) and key.kind == "vkey":
            return sig, msg, str(key.payload)
    return None


class _VerVerify(Implementation):
    def __init__(self, base: Implementation, pname: str, poly: OverheadPoly):
        self.base = base
        self.pname = pname
        self.poly = poly

    def outcomes(self, cell, value):
        sigma, signed, bad = cell
        extra = self.poly.cost(len(signed))
        honest = {k for k, _ in sigma}
        out = []
        for o in self.base.outcomes(_assoc_get(sigma, self.pname), value):
            bad2 = bad
            triple = _verify_triple(value)
            if isinstance(o.reaction, Ret) and triple is not None:
                _sig, msg, owner = triple
                if owner in honest and (owner, msg) not in signed:
                    bad2 = True
            cell2 = (_assoc_set(sigma, self.pname, o.state), signed, bad2)
            out.append(Outcome(o.prob, o.cost + extra, cell2, o.reaction))
        return out


# ---------------------------------------------------------------------------
# FS2 instrumentation: composite cell (adv, news, unsent, bad)
#   adv:    base adversary cell state
#   news:   tuple of (thread id, base generator cell state)
#   unsent: frozenset of (nonce atom, generating thread id)
#   bad:    bool, monotone
# ---------------------------------------------------------------------------

class _Fs2New(Implementation):
    def __init__(self, base: Implementation, thread: Value, poly: OverheadPoly):
        self.base = base
        self.thread = thread
        self.poly = poly

    def outcomes(self, cell, value):
        adv, news, unsent, bad = cell
        extra = self.poly.cost(len(unsent))
        out = []
        for o in self.base.outcomes(_assoc_get(news, self.thread), value):
            unsent2 = unsent
            if isinstance(o.reaction, Ret) and isinstance(o.reaction.value, Atom) \
                    and o.reaction.value.kind == "nonce":
                unsent2 = unsent | {(o.reaction.value, self.thread)}
            cell2 = (adv, _assoc_set(news, self.thread, o.state), unsent2, bad)
            out.append(Outcome(o.prob, o.cost + extra, cell2, o.reaction))
        return out


class _Fs2Adversary(Implementation):
    """Wraps one adversary sub-implementation (send / receive / scheduler)
    over the composite cell."""

    def __init__(self, base: Implementation, kind: str, thread, poly: OverheadPoly):
        self.base = base
        self.kind = kind
        self.thread = thread
        self.poly = poly

    def outcomes(self, cell, value):
        adv, news, unsent, bad = cell
        extra = self.poly.cost(len(unsent)) if self.kind != "scheduler" else 0
        out = []
        for o in self.base.outcomes(adv, value):
            unsent2, bad2 = unsent, bad
            if self.kind == "send":
                sent = nonces(value)
                unsent2 = frozenset(
                    (n, t) for n, t in unsent
                    if not (t == self.thread and n in sent))
            elif self.kind == "receive" and isinstance(o.reaction, Ret):
                live = {n for n, _t in unsent}
                if live & nonces(o.reaction.value):
                    bad2 = True
            cell2 = (o.state, news, unsent2, bad2)
            out.append(Outcome(o.prob, o.cost + extra, cell2, o.reaction))
        return out


# ---------------------------------------------------------------------------
# Instrumented setups
# ---------------------------------------------------------------------------

class InstrumentedSetup(Setup):
    """A setup whose monitored actions run over a merged monitor cell."""

    def __init__(self, base: Setup, which: str, poly: OverheadPoly = OverheadPoly()):
        if which not in ("ver", "fs2"):
            raise MonitorError(f"unknown monitor {which!r}")
        super().__init__(base.adversary, base.new_impl, base.sign_impl, base.verify_impl)
        self.base = base
        self.which = which
        self.poly = poly

    @property
    def label(self):
        return VER_LABEL if self.which == "ver" else FS2_LABEL

    def implementation(self, action: str, thread: Value):
        if self.which == "ver":
            if action == "sign":
                p = _principal_of(thread)
                return _VerSign(self.base.sign_impl(p), p, self.poly), VER_LABEL
            if action == "verify":
                p = _principal_of(thread)
                return _VerVerify(self.base.verify_impl(p), p, self.poly), VER_LABEL
            return self.base.implementation(action, thread)
        if action == "new":
            return _Fs2New(self.base.new_impl(thread), thread, self.poly), FS2_LABEL
        if action == "send":
            return _Fs2Adversary(self.base.adversary.send(thread), "send",
                                 thread, self.poly), FS2_LABEL
        if action == "receive":
            return _Fs2Adversary(self.base.adversary.receive(thread), "receive",
                                 thread, self.poly), FS2_LABEL
        if action == "scheduler":
            return _Fs2Adversary(self.base.adversary.scheduler(), "scheduler",
                                 thread, self.poly), FS2_LABEL
        return self.base.implementation(action, thread)

    def initial_global_state(self, threads) -> dict:
        cells = self.base.initial_global_state(threads)
        if self.which == "ver":
            sig_labels = sorted((k for k in cells if k[0] == "s"), key=repr)
            sigma = tuple((lab[1], cells.pop(lab)) for lab in sig_labels)
            cells[VER_LABEL] = (sigma, frozenset(), False)
        else:
            adv = cells.pop(ADV_LABEL)
            new_labels = sorted((k for k in cells if k[0] == "p"),
                                key=lambda k: value_key(k[1]))
            news = tuple((lab[1], cells.pop(lab)) for lab in new_labels)
            cells[FS2_LABEL] = (adv, news, frozenset(), False)
        return cells


def instrument_ver(s: Setup, poly: OverheadPoly = OverheadPoly()) -> InstrumentedSetup:
    return InstrumentedSetup(s, "ver", poly)


def instrument_fs2(s: Setup, poly: OverheadPoly = OverheadPoly()) -> InstrumentedSetup:
    return InstrumentedSetup(s, "fs2", poly)


def bad_flag(config: Configuration, which: str) -> bool:
    label = VER_LABEL if which == "ver" else FS2_LABEL
    return bool(config.cell(label)[-1])


def trace_bad(trace: Trace, which: str) -> bool:
    return bad_flag(trace.final, which)


# ---------------------------------------------------------------------------
# Monitor trace formulas
# ---------------------------------------------------------------------------

PHI_VER_SRC = (
    "forall Yv. forall sv. forall mv. forall bv. "
    "((Honest(bv) /\\ Verify(Yv, sv, mv, bv)) => "
    "(exists iv. (exists s2. (Sign(<bv, iv>, s2, mv) < Verify(Yv, sv, mv, bv)))))"
)

PHI_FS2_SRC = (
    "forall Xv. forall nv. forall Yv. forall mv. "
    "(((New(Xv, nv) < Receive(Yv, mv)) /\\ Contains(nv, mv)) => "
    "(exists m2. (Contains(nv, m2) /\\ (Send(Xv, m2) < Receive(Yv, mv)))))"
)


def phi_ver() -> Formula:
    return parse_formula(PHI_VER_SRC)


def phi_fs2() -> Formula:
    return parse_formula(PHI_FS2_SRC)


def phi_ver_holds(trace: Trace, index: Optional[TraceIndex] = None) -> bool:
    """Event-level evaluation of the VER monitor formula, equivalent to
    ``holds(trace, {}, phi_ver())`` but enumerating verify events instead
    of domain quadruples."""
    ix = index or TraceIndex(trace)
    signs: Dict[Tuple[str, object], int] = {}
    for lab, pos in ix.first_index.items():
        thread, action, _arg, _res = lab
        if action == "sign":
            key = (_principal_of(thread), value_key(lab[2]))
            if key not in signs or pos < signs[key]:
                signs[key] = pos
    for lab, pos in ix.first_index.items():
        if lab[1] != "verify":
            continue
        triple = _verify_triple(lab[2])
        if triple is None:
            continue
        _sig, msg, owner = triple
        if owner not in ix.honest:
            continue
        first_sign = signs.get((owner, value_key(msg)))
        if first_sign is None or first_sign >= pos:
            return False
    return True


def phi_fs2_holds(trace: Trace, index: Optional[TraceIndex] = None) -> bool:
    """Event-level evaluation of the FS2 monitor formula: every nonce,
    once generated, is first sent by its generator before any thread
    receives a message containing it."""
    ix = index or TraceIndex(trace)
    news = [(lab, pos) for lab, pos in ix.first_index.items()
            if lab[1] == "new" and isinstance(lab[3], Atom) and lab[3].kind == "nonce"]
    recvs = [(lab, pos) for lab, pos in ix.first_index.items() if lab[1] == "receive"]
    sends = [(lab, pos) for lab, pos in ix.first_index.items() if lab[1] == "send"]
    for nlab, npos in news:
        gen, n = nlab[0], nlab[3]
        for rlab, rpos in recvs:
            if npos < rpos and contains(n, rlab[3]):
                if not any(slab[0] == gen and spos < rpos and contains(n, slab[2])
                           for slab, spos in sends):
                    return False
    return True


def monitor_biconditional(tree: ExecTree, which: str):
    """Checks bad <=> not phi on every maximal trace of an instrumented
    tree.  Returns (all-ok, total traces, mismatch descriptions)."""
    check = phi_ver_holds if which == "ver" else phi_fs2_holds
    total = 0
    mismatches = []
    for i, tr in enumerate(traces(tree)):
        total += 1
        bad = trace_bad(tr, which)
        phi = check(tr)
        if bad != (not phi):
            mismatches.append(f"trace {i}: bad={bad} but phi={phi}")
    return not mismatches, total, mismatches


# ---------------------------------------------------------------------------
# Simulation fidelity
# ---------------------------------------------------------------------------

def branch_isomorphic(base: ExecTree, instr: ExecTree) -> bool:
    """Same branching, probabilities, and action labels; cell contents
    and costs may differ (the monitor adds bookkeeping and overhead)."""
    if len(base.branches) != len(instr.branches):
        return False
    for (s1, sub1), (s2, sub2) in zip(base.branches, instr.branches):
        if s1.prob != s2.prob or s1.label != s2.label:
            return False
        if not branch_isomorphic(sub1, sub2):
            return False
    return True


def max_cost_inflation(base: ExecTree, instr: ExecTree) -> int:
    """Largest per-transition cost increase between matching branches."""
    worst = 0
    for (s1, sub1), (s2, sub2) in zip(base.branches, instr.branches):
        worst = max(worst, s2.cost - s1.cost, max_cost_inflation(sub1, sub2))
    return worst


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    axiom: str
    rng: str
    mode: str
    eta: int
    tb: int
    budget: int
    bad_probability: Fraction
    half_width: Optional[Fraction]
    bound: Fraction
    bound_detail: Dict[str, Fraction]
    violated: bool
    traces_total: int
    bad_traces: int
    log: Tuple[Tuple[int, str, bool], ...] = ()

    def to_dict(self) -> dict:
        return {
            "axiom": self.axiom,
            "rng": self.rng,
            "mode": self.mode,
            "eta": self.eta,
            "tb": self.tb,
            "budget": self.budget,
            "bad_probability": str(self.bad_probability),
            "half_width": None if self.half_width is None else str(self.half_width),
            "bound": str(self.bound),
            "bound_detail": {k: str(v) for k, v in self.bound_detail.items()},
            "violated": self.violated,
            "traces_total": self.traces_total,
            "bad_traces": self.bad_traces,
        }


def _rng_new_kind(rng: str) -> str:
    if rng == "random":
        return "uniform"
    if rng in ("counter", "constant"):
        return rng
    raise MonitorError(f"unknown rng {rng!r} (use random, counter, or constant)")


def default_instances(protocol: Protocol, nvec: Sequence[int]) -> list:
    if len(nvec) != len(protocol.roles):
        raise MonitorError(
            f"n-vector has {len(nvec)} entries for {len(protocol.roles)} roles")
    out = []
    for role, n in zip(protocol.roles, nvec):
        if role.params and n > 0:
            raise MonitorError(
                f"role {role.name} takes parameters; pass explicit instances")
        out.extend((role.name, ()) for _ in range(n))
    return out


def _wilson(k: int, n: int, z: Fraction = Fraction(196, 100)) -> Fraction:
    p = Fraction(k, n)
    z2 = z * z
    inner = float(p * (1 - p) / n + z2 / (4 * n * n))
    hw = float(z) * sqrt(inner) / float(1 + z2 / n)
    return Fraction(hw).limit_denominator(10**9)


def run_experiment(protocol: Protocol, adversary, which: str, rng: str,
                   eta: int, tb: int, nvec: Optional[Sequence[int]] = None,
                   mode: str = "exhaustive", *,
                   instances: Optional[list] = None,
                   l: Optional[int] = None,
                   verify_kind: str = "toy",
                   new_opts: Optional[dict] = None,
                   table: Optional[BoundTable] = None,
                   poly: OverheadPoly = OverheadPoly(),
                   node_cap: int = 500_000,
                   log_cap: int = 1000) -> ExperimentReport:
    """Runs the Exp harness for one axiom monitor and compares the bad
    probability against the computed bound."""
    from .impls import make_setup

    which = which.lower()
    if which not in ("ver", "fs2"):
        raise MonitorError(f"unknown axiom {which!r} (use ver or fs2)")
    if instances is None:
        if nvec is None:
            raise MonitorError("provide either instances or an n-vector")
        instances = default_instances(protocol, nvec)

    per_role: Dict[str, int] = {}
    for inst in instances:
        per_role[inst[0]] = per_role.get(inst[0], 0) + 1
    counts = count_actions(protocol, per_role)
    if which == "ver":
        q_mon = counts["sign"] + counts["verify"]
    else:
        q_mon = counts["new"] + counts["send"] + counts["receive"]
    delta = q_mon * q_mon * eta
    budget = tb + delta

    setup = make_setup(adversary, eta, new_kind=_rng_new_kind(rng),
                       new_opts=new_opts, verify_kind=verify_kind)
    isetup = InstrumentedSetup(setup, which, poly)
    cfg = initial_config(protocol, instances, isetup)

    log: List[Tuple[int, str, bool]] = []
    if mode == "exhaustive":
        try:
            tree = build_tree(cfg, isetup, budget, node_cap=node_cap)
        except NodeBudgetExceeded as e:
            raise MonitorError(f"{e}; try mode='sample:N:SEED'") from e
        bad_p = Fraction(0)
        total = 0
        bad_n = 0
        for i, tr in enumerate(traces(tree)):
            total += 1
            p = trace_prob(tr)
            bad = trace_bad(tr, which)
            if bad:
                bad_p += p
                bad_n += 1
            if i < log_cap:
                log.append((i, str(p), bad))
        bad_probability = bad_p
        half_width = None
    elif mode.startswith("sample:"):
        try:
            _, n_s, seed_s = mode.split(":")
            n, seed = int(n_s), int(seed_s)
        except ValueError as e:
            raise MonitorError("sampled mode must look like sample:N:SEED") from e
        walks = sample_traces(cfg, isetup, budget, n, seed)
        total = len(walks)
        bad_n = sum(1 for tr in walks if trace_bad(tr, which))
        for i, tr in enumerate(walks[:log_cap]):
            log.append((i, "sampled", trace_bad(tr, which)))
        bad_probability = Fraction(bad_n, total)
        half_width = _wilson(bad_n, total)
    else:
        raise MonitorError(f"unknown mode {mode!r}")

    l_eff = l if l is not None else eta
    detail: Dict[str, Fraction] = {}
    if which == "fs2":
        q_r = counts["receive"]
        detail["tight"] = Fraction(q_r * l_eff, eta * 2**eta)
        detail["loose"] = Fraction(q_r * l_eff, 2**eta)
        bound = detail["tight"]
    else:
        params = BoundParams(eta=eta, tb=Fraction(tb),
                             q_sign=counts["sign"], q_new=counts["new"],
                             q_recv=counts["receive"], l=l_eff,
                             table=table or BoundTable())
        bound = _eps_ver_value(params)
        detail["ufcma"] = bound

    return ExperimentReport(
        axiom=which, rng=rng, mode=mode, eta=eta, tb=tb, budget=budget,
        bad_probability=bad_probability, half_width=half_width,
        bound=bound, bound_detail=detail,
        violated=bad_probability > bound,
        traces_total=total, bad_traces=bad_n, log=tuple(log))
