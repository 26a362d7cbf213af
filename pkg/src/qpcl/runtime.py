"""Probabilistic operational semantics.

A configuration holds a shared global state (one cell per implementation
label), a set of waiting threads, at most one active thread, and the
elapsed runtime.  Implementations are finite-outcome state machines; each
outcome carries an exact rational probability, an integer cost, a
successor cell state, and a reaction.  The step relation implements the
act / abort / wait / switch rules; only act steps are labelled.

Implementation labels follow the sharing discipline of the model: all
send and receive activity (and the scheduler) share the adversary cell
``('a',)``; sign and verify share a per-principal cell ``('s', name)``;
new has a per-thread cell ``('p', thread-id)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from .lang import (
    EvalError,
    Program,
    Protocol,
    Role,
    Stmt,
    Stop,
    Tup,
    UNIT,
    Value,
    Lit,
    destructure,
    eval_term,
    pattern_projections,
    pattern_term,
    render_value,
    session,
    statements,
    subst_program,
    substitute,
    thread_id,
    value_key,
)


class ExecError(Exception):
    pass


class ReactionError(ExecError):
    """A reaction outside the permitted set for the invoked action."""


# ---------------------------------------------------------------------------
# Reactions and implementations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ret:
    value: Value


@dataclass(frozen=True)
class Abort:
    pass


@dataclass(frozen=True)
class Wait:
    pass


@dataclass(frozen=True)
class Switch:
    thread: Value


Reaction = object


@dataclass(frozen=True)
class Outcome:
    prob: Fraction
    cost: int
    state: object
    reaction: Reaction


class Implementation:
    """Interface: a finite-outcome probabilistic state machine.

    ``outcomes(state, value)`` must return a non-empty sequence of
    Outcome records whose probabilities are positive exact rationals
    summing to one.
    """

    def initial_state(self) -> object:
        raise NotImplementedError

    def outcomes(self, state: object, value: Value) -> Sequence[Outcome]:
        raise NotImplementedError


def check_outcomes(outs: Sequence[Outcome]) -> Sequence[Outcome]:
    if not outs:
        raise ExecError("implementation returned no outcomes")
    total = Fraction(0)
    for o in outs:
        if not isinstance(o.prob, Fraction) or o.prob <= 0:
            raise ExecError(f"outcome probability must be a positive Fraction, got {o.prob!r}")
        total += o.prob
    if total != 1:
        raise ExecError(f"outcome probabilities sum to {total}, expected 1")
    return outs


# ---------------------------------------------------------------------------
# Setup: wiring actions and threads to implementations
# ---------------------------------------------------------------------------

ADV_LABEL = ("a",)


def sign_label(principal_name: str):
    return ("s", principal_name)


def new_label(thread: Value):
    return ("p", thread)


class Setup:
    """Maps (action, thread) pairs to implementations plus the shared-state
    label each one reads and writes.

    * ``adversary`` provides send / receive / scheduler behaviour on the
      ``('a',)`` cell.
    * ``sign_impl`` / ``verify_impl`` are factories keyed by principal
      name, sharing the ``('s', name)`` cell.
    * ``new_impl`` is a factory keyed by thread id on ``('p', I)``.
    """

    def __init__(self, adversary, new_impl: Callable, sign_impl: Callable, verify_impl: Callable):
        self.adversary = adversary
        self.new_impl = new_impl
        self.sign_impl = sign_impl
        self.verify_impl = verify_impl

    def implementation(self, action: str, thread: Value):
        """Returns (implementation, state label)."""
        pname = _principal_of(thread)
        if action == "send":
            return self.adversary.send(thread), ADV_LABEL
        if action == "receive":
            return self.adversary.receive(thread), ADV_LABEL
        if action == "scheduler":
            return self.adversary.scheduler(), ADV_LABEL
        if action == "new":
            return self.new_impl(thread), new_label(thread)
        if action == "sign":
            return self.sign_impl(pname), sign_label(pname)
        if action == "verify":
            return self.verify_impl(pname), sign_label(pname)
        raise ExecError(f"unknown action {action!r}")

    def initial_global_state(self, threads: Iterable) -> dict:
        cells = {ADV_LABEL: self.adversary.initial_state()}
        for thread, _prog in threads:
            pname = _principal_of(thread)
            cells.setdefault(sign_label(pname), self.sign_impl(pname).initial_state())
            cells[new_label(thread)] = self.new_impl(thread).initial_state()
        return cells


def _principal_of(thread: Value) -> str:
    if isinstance(thread, Tup) and thread.items and thread.items[0].kind == "principal":
        return str(thread.items[0].payload)
    raise ExecError(f"not a thread id: {render_value(thread)}")


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    cells: tuple          # sorted tuple of (label, state)
    waiting: tuple        # sorted tuple of (thread, program)
    active: Optional[tuple]  # (thread, program) or None
    elapsed: int

    def cell(self, label):
        for key, state in self.cells:
            if key == label:
                return state
        raise ExecError(f"no state cell {label!r}")

    def with_cell(self, label, state) -> "Configuration":
        cells = tuple((k, state if k == label else s) for k, s in self.cells)
        return Configuration(cells, self.waiting, self.active, self.elapsed)

    @property
    def threads(self) -> list:
        out = list(self.waiting)
        if self.active is not None:
            out.append(self.active)
        return out

    def is_final(self) -> bool:
        return self.active is None and not self.waiting


def _sort_threads(threads: Iterable) -> tuple:
    return tuple(sorted(threads, key=lambda t: value_key(t[0])))


def _make_config(cells: dict, waiting, active, elapsed) -> Configuration:
    sorted_cells = tuple(sorted(cells.items(), key=lambda kv: repr(kv[0])))
    return Configuration(sorted_cells, _sort_threads(waiting), active, elapsed)


def initial_config(protocol: Protocol, instances: Sequence, setup: Setup) -> Configuration:
    """Build the initial configuration.

    ``instances`` is a list of (role_name, param_values) pairs; session ids
    are assigned consecutively per principal and the principal of instance
    k of role R is named like the role (``R1``, ``R2``, ...) unless an
    explicit principal name is supplied as (role_name, params, principal).
    """
    threads = []
    session_counter: dict = {}
    role_counter: dict = {}
    for inst in instances:
        if len(inst) == 3:
            rname, params, pname = inst
        else:
            rname, params = inst
            role_counter[rname] = role_counter.get(rname, 0) + 1
            pname = f"{rname}{role_counter[rname]}"
        role = protocol.role(rname)
        if len(params) != len(role.params):
            raise ExecError(
                f"role {rname} takes {len(role.params)} parameter(s), got {len(params)}")
        idx = session_counter.get(pname, 0) + 1
        session_counter[pname] = idx
        tid = thread_id(pname, idx)
        bindings = {role.thread_var: tid}
        for formal, actual in zip(role.params, params):
            bindings[formal] = actual
        body = subst_program(role.body, bindings)
        threads.append((tid, body))
    cells = setup.initial_global_state(threads)
    return _make_config(cells, threads, None, 0)


# ---------------------------------------------------------------------------
# Transitions, traces, trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionLabel:
    thread: Value
    action: str
    arg: Value
    result: Value

    def as_tuple(self):
        return (self.thread, self.action, self.arg, self.result)


@dataclass(frozen=True)
class TransitionStep:
    prob: Fraction
    cost: int
    label: Optional[ActionLabel]
    config: Configuration


@dataclass(frozen=True)
class Trace:
    init: Configuration
    steps: tuple

    def extend(self, step: TransitionStep) -> "Trace":
        return Trace(self.init, self.steps + (step,))

    @property
    def labels(self) -> list:
        return [s.label for s in self.steps if s.label is not None]

    @property
    def final(self) -> Configuration:
        return self.steps[-1].config if self.steps else self.init


@dataclass(frozen=True)
class ExecTree:
    config: Configuration
    branches: tuple  # of (TransitionStep, ExecTree); empty at leaves

    @property
    def is_leaf(self) -> bool:
        return not self.branches


def trace_prob(trace: Trace) -> Fraction:
    p = Fraction(1)
    for s in trace.steps:
        p *= s.prob
    return p


def trace_runtime(trace: Trace) -> int:
    return sum(s.cost for s in trace.steps)


def traces(tree: ExecTree, base: Optional[Trace] = None) -> Iterable:
    """Maximal root-to-leaf traces of the tree."""
    if base is None:
        base = Trace(tree.config, ())
    if tree.is_leaf:
        yield base
        return
    for step, sub in tree.branches:
        yield from traces(sub, base.extend(step))


def tree_measure(tree: ExecTree) -> Fraction:
    return sum((trace_prob(t) for t in traces(tree)), Fraction(0))


def is_prefix(t1: Trace, t2: Trace) -> bool:
    return t1.init == t2.init and t2.steps[: len(t1.steps)] == t1.steps


def trace_prefixes(trace: Trace) -> Iterable:
    for k in range(len(trace.steps) + 1):
        yield Trace(trace.init, trace.steps[:k])


def tree_prefix(t1: ExecTree, t2: ExecTree) -> bool:
    """Tree prefix by structural induction: equal roots, and either t1 stops
    here, or both branch identically with prefix subtrees."""
    if t1.config != t2.config:
        return False
    if t1.is_leaf:
        return True
    if len(t1.branches) != len(t2.branches):
        return False
    for (s1, sub1), (s2, sub2) in zip(t1.branches, t2.branches):
        if (s1.prob, s1.cost, s1.label, s1.config) != (s2.prob, s2.cost, s2.label, s2.config):
            return False
        if not tree_prefix(sub1, sub2):
            return False
    return True


# ---------------------------------------------------------------------------
# The step relation
# ---------------------------------------------------------------------------

def _waiting_ids_value(waiting) -> Value:
    return Tup(tuple(sorted((t for t, _ in waiting), key=value_key)))


def step(config: Configuration, setup: Setup, strict: bool = True) -> list:
    """All transitions enabled at ``config``: a list of TransitionStep.

    With ``strict`` the permitted-reaction discipline is enforced by
    raising; otherwise out-of-place reactions are coerced to Abort.
    """
    if config.active is not None:
        thread, prog = config.active
        if isinstance(prog, Stop):
            raise ExecError("active thread already stopped")
        stmt: Stmt = prog
        try:
            arg_value, eval_cost = eval_term(stmt.arg)
        except EvalError as e:
            raise ExecError(f"statement {stmt.label}: {e}") from e
        impl, label = setup.implementation(stmt.action, thread)
        outs = check_outcomes(impl.outcomes(config.cell(label), arg_value))
        results = []
        for out in outs:
            reaction = _validate_reaction(stmt.action, out.reaction, strict)
            cost = out.cost + eval_cost
            cells = dict(config.cells)
            cells[label] = out.state
            if isinstance(reaction, Ret):
                bindings = {stmt.binder: Lit(reaction.value)}
                matched = destructure(stmt.pattern, reaction.value)
                if matched is not None:
                    for name, v in matched.items():
                        bindings[name] = Lit(v)
                rest = subst_program(stmt.rest, bindings)
                active = None if isinstance(rest, Stop) else (thread, rest)
                new_cfg = _make_config(cells, config.waiting, active, config.elapsed + cost)
                act = ActionLabel(thread, stmt.action, arg_value, reaction.value)
                results.append(TransitionStep(out.prob, cost, act, new_cfg))
            elif isinstance(reaction, Abort):
                new_cfg = _make_config(cells, config.waiting, None, config.elapsed + cost)
                results.append(TransitionStep(out.prob, cost, None, new_cfg))
            elif isinstance(reaction, Wait):
                waiting = list(config.waiting) + [(thread, prog)]
                new_cfg = _make_config(cells, waiting, None, config.elapsed + cost)
                results.append(TransitionStep(out.prob, cost, None, new_cfg))
            else:
                raise ReactionError(f"reaction {reaction!r} not allowed for {stmt.action}")
        _check_cell_isolation(config, results, label)
        return results
    if config.is_final():
        return []
    impl, label = setup.implementation("scheduler", None if False else _any_thread(config))
    outs = check_outcomes(impl.outcomes(config.cell(label), _waiting_ids_value(config.waiting)))
    results = []
    waiting_map = {t: p for t, p in config.waiting}
    for out in outs:
        if not isinstance(out.reaction, Switch):
            raise ReactionError("scheduler must react with Switch")
        target = out.reaction.thread
        if target not in waiting_map:
            raise ExecError(f"scheduler chose non-waiting thread {render_value(target)}")
        cells = dict(config.cells)
        cells[label] = out.state
        waiting = [(t, p) for t, p in config.waiting if t != target]
        active = (target, waiting_map[target])
        new_cfg = _make_config(cells, waiting, active, config.elapsed + out.cost)
        results.append(TransitionStep(out.prob, out.cost, None, new_cfg))
    _check_cell_isolation(config, results, label)
    return results


def _any_thread(config: Configuration) -> Value:
    return config.waiting[0][0]


def _validate_reaction(action: str, reaction: Reaction, strict: bool) -> Reaction:
    ok = (
        (isinstance(reaction, Ret) and action in ("new", "receive", "sign"))
        or (isinstance(reaction, Ret) and reaction.value == UNIT and action in ("send", "verify"))
        or (isinstance(reaction, Wait) and action == "receive")
        or (isinstance(reaction, Abort) and action == "verify")
    )
    if ok:
        return reaction
    if strict:
        raise ReactionError(f"reaction {reaction!r} not permitted for action {action!r}")
    return Abort()


def _check_cell_isolation(config: Configuration, steps: list, label) -> None:
    """Debug invariant: a transition may only rewrite the invoked cell."""
    before = dict(config.cells)
    for s in steps:
        for key, state in s.config.cells:
            if key != label and before[key] is not state and before[key] != state:
                raise ExecError(f"transition touched foreign state cell {key!r}")


# ---------------------------------------------------------------------------
# Tree construction
# ---------------------------------------------------------------------------

class NodeBudgetExceeded(ExecError):
    pass


def build_tree(config: Configuration, setup: Setup, tb: int,
               strict: bool = True, node_cap: int = 500_000) -> ExecTree:
    """Exhaustive execution tree up to the runtime budget ``tb``.

    A node stops expanding once it is final, stuck, or once even the
    cheapest enabled transition would push the elapsed runtime past tb.
    """
    counter = [0]

    def expand(cfg: Configuration) -> ExecTree:
        counter[0] += 1
        if counter[0] > node_cap:
            raise NodeBudgetExceeded(f"execution tree exceeded {node_cap} nodes")
        if cfg.is_final():
            return ExecTree(cfg, ())
        transitions = step(cfg, setup, strict=strict)
        if not transitions:
            return ExecTree(cfg, ())
        if cfg.elapsed + min(t.cost for t in transitions) > tb:
            return ExecTree(cfg, ())
        return ExecTree(cfg, tuple((t, expand(t.config)) for t in transitions))

    return expand(config)


def sample_traces(config: Configuration, setup: Setup, tb: int, count: int, seed: int,
                  strict: bool = True, max_steps: int = 100_000) -> list:
    """Monte Carlo mode: ``count`` independent root-to-leaf walks, the walk
    for index i driven by a PRNG seeded with (seed, i)."""
    import random

    out = []
    for i in range(count):
        rng = random.Random((seed << 32) ^ i)
        cfg = config
        trace = Trace(config, ())
        steps_taken = 0
        while True:
            if cfg.is_final():
                break
            transitions = step(cfg, setup, strict=strict)
            if not transitions:
                break
            if cfg.elapsed + min(t.cost for t in transitions) > tb:
                break
            r = Fraction(rng.randrange(1, 10**9), 10**9)
            acc = Fraction(0)
            chosen = transitions[-1]
            for t in transitions:
                acc += t.prob
                if r <= acc:
                    chosen = t
                    break
            trace = trace.extend(chosen)
            cfg = chosen.config
            steps_taken += 1
            if steps_taken > max_steps:
                raise ExecError("sampled walk exceeded step limit")
        out.append(trace)
    return out


def honest_principals(init: Configuration) -> set:
    """Principals that start out executing a role in the initial
    configuration."""
    return {_principal_of(t) for t, _ in init.threads}
