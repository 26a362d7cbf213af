"""Trace logic: formulas, satisfaction, matching, and probability.

Basic formulas talk about a single trace: action predicates, ordering,
equality, start, containment, honesty, the usual connectives, modal
formulas ``pre [P]_I post``, and universal quantification over the
(finite) value domain of the trace.  ``Fresh`` and ``FirstSend`` are
parsed as sugar and expand to their definitions.  ``exists`` and ``=>``
and ``\\/`` desugar into ``~``/``/\\``/``forall``.

Conditional formulas layer quantitative belief on top: ``B{eps} phi``
abbreviates ``true ->{eps} phi``; satisfaction of ``theta ->{eps} phi``
on an execution tree compares the conditional measure of phi given theta
against 1 - eps (with the convention that an impossible condition
satisfies everything).

Quantifiers range over the subterm-closed set of values occurring in the
trace (labels and initial threads) plus any values mentioned by the
formula or the valuation; evaluation reports are expected to flag this
finite-domain choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

from .lang import (
    Atom,
    EvalError,
    LangError,
    Lit,
    PTup,
    PVar,
    PWild,
    Pattern,
    Program,
    Protocol,
    Proj,
    Stmt,
    Stop,
    Term,
    TermTuple,
    TokenStream,
    Tup,
    UNIT,
    Value,
    Var,
    VerKey,
    eval_term,
    parse_inline_program,
    parse_term,
    pattern_vars,
    program_binders,
    program_of,
    render_program,
    render_statement,
    render_term,
    statements,
    subst_program,
    substitute,
    subvalues,
    term_vars,
    tokenize,
    value_key,
    vkey,
)
from .runtime import Trace, ExecTree, honest_principals, trace_prob, traces

from .bounds import EpsilonExpr, ZERO, parse_epsilon_tokens


class LogicError(Exception):
    pass


# ---------------------------------------------------------------------------
# Formula AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrueC:
    pass


@dataclass(frozen=True)
class Pred:
    kind: str  # Send / Receive / Sign / Verify / New
    args: tuple


@dataclass(frozen=True)
class Before:
    first: Pred
    second: Pred


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term


@dataclass(frozen=True)
class StartF:
    thread: Term


@dataclass(frozen=True)
class ContainsF:
    part: Term
    whole: Term


@dataclass(frozen=True)
class Honest:
    principal: Term


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Not:
    sub: "Formula"


@dataclass(frozen=True)
class Modal:
    pre: "Formula"
    program: Program
    thread: Term
    post: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    body: "Formula"


Formula = Union[TrueC, Pred, Before, Eq, StartF, ContainsF, Honest, And, Not, Modal, Forall]

TRUE = TrueC()
PRED_ARITY = {"Send": 2, "Receive": 2, "Sign": 3, "Verify": 4, "New": 2}


def Imp(a: Formula, b: Formula) -> Formula:
    return Not(And(a, Not(b)))


def Or(a: Formula, b: Formula) -> Formula:
    return Not(And(Not(a), Not(b)))


def Exists(var: str, body: Formula) -> Formula:
    return Not(Forall(var, Not(body)))


def conj(parts: List[Formula]) -> Formula:
    if not parts:
        return TRUE
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = And(p, out)
    return out


def split_imp(f: Formula) -> Optional[Tuple[Formula, Formula]]:
    """Recognize the ``Imp`` desugaring ``~(a /\\ ~b)``."""
    if isinstance(f, Not) and isinstance(f.sub, And) and isinstance(f.sub.right, Not):
        return f.sub.left, f.sub.right.sub
    return None


def split_exists(f: Formula) -> Optional[Tuple[str, Formula]]:
    if isinstance(f, Not) and isinstance(f.sub, Forall) and isinstance(f.sub.body, Not):
        return f.sub.var, f.sub.body.sub
    return None


def conjuncts(f: Formula) -> List[Formula]:
    if isinstance(f, And):
        return conjuncts(f.left) + conjuncts(f.right)
    return [f]


def fresh_formula(thread: Term, t: Term, qvar: str = "tq") -> Formula:
    """Fresh(I, t) expansion: I generated t and has sent nothing
    containing it."""
    q = _avoid(qvar, term_vars(thread) | term_vars(t))
    body = Imp(Pred("Send", (thread, Var(q))), Not(ContainsF(t, Var(q))))
    return And(Pred("New", (thread, t)), Forall(q, body))


def firstsend_formula(thread: Term, n: Term, m: Term, qvar: str = "tq") -> Formula:
    """FirstSend(I, n, m) expansion: m contains n, and nothing I sent
    before m did."""
    q = _avoid(qvar, term_vars(thread) | term_vars(n) | term_vars(m))
    ordering = Before(Pred("Send", (thread, Var(q))), Pred("Send", (thread, m)))
    body = Imp(And(Pred("New", (thread, n)), ordering), Not(ContainsF(n, Var(q))))
    return And(ContainsF(n, m), Forall(q, body))


def _avoid(stem: str, used: set) -> str:
    if stem not in used:
        return stem
    k = 0
    while f"{stem}{k}" in used:
        k += 1
    return f"{stem}{k}"


# ---------------------------------------------------------------------------
# Conditional formulas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lift:
    formula: Formula


@dataclass(frozen=True)
class CondImp:
    ante: Formula
    eps: EpsilonExpr
    cons: Formula


@dataclass(frozen=True)
class CAnd:
    left: "Conditional"
    right: "Conditional"


@dataclass(frozen=True)
class CNot:
    sub: "Conditional"


@dataclass(frozen=True)
class CForall:
    var: str
    body: "Conditional"


Conditional = Union[Lift, CondImp, CAnd, CNot, CForall]


def Belief(eps: EpsilonExpr, f: Formula) -> Conditional:
    return CondImp(TRUE, eps, f)


def as_belief(c: Conditional) -> Optional[Tuple[EpsilonExpr, Formula]]:
    if isinstance(c, CondImp) and c.ante == TRUE:
        return c.eps, c.cons
    return None


def conclusion_bound(c: Conditional) -> EpsilonExpr:
    if isinstance(c, Lift):
        return ZERO
    if isinstance(c, CondImp):
        return c.eps
    raise LogicError("compound conditional has no single bound")


def erase(c: Conditional) -> Formula:
    """Strip belief operators, yielding a plain trace formula."""
    if isinstance(c, Lift):
        return c.formula
    if isinstance(c, CondImp):
        if c.ante == TRUE:
            return c.cons
        return Imp(c.ante, c.cons)
    if isinstance(c, CAnd):
        return And(erase(c.left), erase(c.right))
    if isinstance(c, CNot):
        return Not(erase(c.sub))
    if isinstance(c, CForall):
        return Forall(c.var, erase(c.body))
    raise LogicError(f"not a conditional formula: {c!r}")


# ---------------------------------------------------------------------------
# Free variables and substitution
# ---------------------------------------------------------------------------

def formula_fv(f: Formula) -> set:
    if isinstance(f, TrueC):
        return set()
    if isinstance(f, Pred):
        out: set = set()
        for a in f.args:
            out |= term_vars(a)
        return out
    if isinstance(f, Before):
        return formula_fv(f.first) | formula_fv(f.second)
    if isinstance(f, Eq):
        return term_vars(f.left) | term_vars(f.right)
    if isinstance(f, StartF):
        return term_vars(f.thread)
    if isinstance(f, ContainsF):
        return term_vars(f.part) | term_vars(f.whole)
    if isinstance(f, Honest):
        return term_vars(f.principal)
    if isinstance(f, And):
        return formula_fv(f.left) | formula_fv(f.right)
    if isinstance(f, Not):
        return formula_fv(f.sub)
    if isinstance(f, Forall):
        return formula_fv(f.body) - {f.var}
    if isinstance(f, Modal):
        binders = set(program_binders(f.program))
        prog_fv: set = set()
        bound: set = set()
        for s in statements(f.program):
            prog_fv |= term_vars(s.arg) - bound
            bound.add(s.binder)
            bound.update(pattern_vars(s.pattern))
        return (formula_fv(f.pre) | term_vars(f.thread)
                | prog_fv | (formula_fv(f.post) - binders))
    raise LogicError(f"not a formula: {f!r}")


def subst_formula(f: Formula, mapping: Dict[str, Term]) -> Formula:
    """Capture-avoiding substitution.  Forall binders are renamed when they
    would capture; program binders are expected not to collide with the
    substituted terms (raises otherwise)."""
    mapping = {k: v for k, v in mapping.items()}
    if not mapping:
        return f
    if isinstance(f, TrueC):
        return f
    if isinstance(f, Pred):
        return Pred(f.kind, tuple(substitute(a, mapping) for a in f.args))
    if isinstance(f, Before):
        return Before(subst_formula(f.first, mapping), subst_formula(f.second, mapping))
    if isinstance(f, Eq):
        return Eq(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, StartF):
        return StartF(substitute(f.thread, mapping))
    if isinstance(f, ContainsF):
        return ContainsF(substitute(f.part, mapping), substitute(f.whole, mapping))
    if isinstance(f, Honest):
        return Honest(substitute(f.principal, mapping))
    if isinstance(f, And):
        return And(subst_formula(f.left, mapping), subst_formula(f.right, mapping))
    if isinstance(f, Not):
        return Not(subst_formula(f.sub, mapping))
    if isinstance(f, Forall):
        live = {k: v for k, v in mapping.items() if k != f.var}
        if not live:
            return f
        incoming = set()
        for t in live.values():
            incoming |= term_vars(t)
        var, body = f.var, f.body
        if var in incoming:
            fresh = _avoid(var, incoming | formula_fv(body))
            body = subst_formula(body, {var: Var(fresh)})
            var = fresh
        return Forall(var, subst_formula(body, live))
    if isinstance(f, Modal):
        binders = set(program_binders(f.program))
        live = {k: v for k, v in mapping.items() if k not in binders}
        incoming: set = set()
        for t in live.values():
            incoming |= term_vars(t)
        if incoming & binders:
            raise LogicError("substitution would capture a program binder")
        return Modal(
            subst_formula(f.pre, mapping),
            subst_program(f.program, live),
            substitute(f.thread, mapping),
            subst_formula(f.post, live),
        )
    raise LogicError(f"not a formula: {f!r}")


def alpha_normalize(f: Formula, counter: Optional[list] = None) -> Formula:
    """Rename Forall-bound variables to canonical names for structural
    comparison."""
    if counter is None:
        counter = [0]
    if isinstance(f, (TrueC, Pred, Eq, StartF, ContainsF, Honest, Before)):
        return f
    if isinstance(f, And):
        return And(alpha_normalize(f.left, counter), alpha_normalize(f.right, counter))
    if isinstance(f, Not):
        return Not(alpha_normalize(f.sub, counter))
    if isinstance(f, Forall):
        name = f"_q{counter[0]}"
        counter[0] += 1
        body = subst_formula(f.body, {f.var: Var(name)})
        return Forall(name, alpha_normalize(body, counter))
    if isinstance(f, Modal):
        return Modal(
            alpha_normalize(f.pre, counter),
            strip_labels(f.program),
            f.thread,
            alpha_normalize(f.post, counter),
        )
    raise LogicError(f"not a formula: {f!r}")


def strip_labels(p: Program) -> Program:
    """Statement labels are presentation metadata; drop them so programs
    assembled from different sources compare equal."""
    return program_of([
        Stmt("", s.binder, s.pattern, s.action, s.arg, Stop())
        for s in statements(p)
    ])


def alpha_eq(f: Formula, g: Formula) -> bool:
    return alpha_normalize(f) == alpha_normalize(g)


def universal_closure(f: Formula) -> Formula:
    out = f
    for v in sorted(formula_fv(f), reverse=True):
        out = Forall(v, out)
    return out


# ---------------------------------------------------------------------------
# Trace indexing and term lifting
# ---------------------------------------------------------------------------

class TraceIndex:
    """Pre-digested view of a trace for fast predicate lookup."""

    def __init__(self, trace: Trace):
        self.trace = trace
        self.entries: List[tuple] = []
        for s in trace.steps:
            if s.label is not None:
                self.entries.append(s.label.as_tuple())
        self.label_set = set(self.entries)
        self.first_index: Dict[tuple, int] = {}
        for i, e in enumerate(self.entries):
            self.first_index.setdefault(e, i)
        self.threads_acted = {e[0] for e in self.entries}
        self.honest = honest_principals(trace.init)

    def domain(self, extra: Iterable[Value] = ()) -> List[Value]:
        seen: dict = {}
        def add(v: Value) -> None:
            for s in subvalues(v):
                seen.setdefault(value_key(s), s)
        add(UNIT)
        for t, _prog in self.trace.init.threads:
            add(t)
        for e in self.entries:
            add(e[0])
            add(e[2])
            add(e[3])
        for v in extra:
            add(v)
        return [seen[k] for k in sorted(seen)]


def lift_term(t: Term, lam: Dict[str, Value]) -> Value:
    return eval_term(substitute(t, {k: Lit(v) for k, v in lam.items()}))[0]


def formula_values(f) -> List[Value]:
    """Literal values mentioned anywhere in a (conditional) formula."""
    out: List[Value] = []

    def from_term(t: Term) -> None:
        if isinstance(t, Lit):
            out.append(t.value)
        elif isinstance(t, (Proj, VerKey)):
            from_term(t.sub)
        elif isinstance(t, TermTuple):
            for x in t.items:
                from_term(x)

    def walk(g) -> None:
        if isinstance(g, Pred):
            for a in g.args:
                from_term(a)
        elif isinstance(g, Before):
            walk(g.first)
            walk(g.second)
        elif isinstance(g, Eq):
            from_term(g.left)
            from_term(g.right)
        elif isinstance(g, StartF):
            from_term(g.thread)
        elif isinstance(g, ContainsF):
            from_term(g.part)
            from_term(g.whole)
        elif isinstance(g, Honest):
            from_term(g.principal)
        elif isinstance(g, And):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, Not):
            walk(g.sub)
        elif isinstance(g, Forall):
            walk(g.body)
        elif isinstance(g, Modal):
            walk(g.pre)
            from_term(g.thread)
            for s in statements(g.program):
                from_term(s.arg)
            walk(g.post)
        elif isinstance(g, Lift):
            walk(g.formula)
        elif isinstance(g, CondImp):
            walk(g.ante)
            walk(g.cons)
        elif isinstance(g, CAnd):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, CNot):
            walk(g.sub)
        elif isinstance(g, CForall):
            walk(g.body)

    walk(f)
    return out


# ---------------------------------------------------------------------------
# Containment
# ---------------------------------------------------------------------------

def contains(part: Value, whole: Value) -> bool:
    """part is derivable from whole by tuple projection and signature
    opening."""
    return any(part == s for s in subvalues(whole))


# ---------------------------------------------------------------------------
# Satisfaction
# ---------------------------------------------------------------------------

def _pred_label(p: Pred, lam: Dict[str, Value]) -> tuple:
    if p.kind in ("Send",):
        return (lift_term(p.args[0], lam), "send", lift_term(p.args[1], lam), UNIT)
    if p.kind == "Receive":
        return (lift_term(p.args[0], lam), "receive", UNIT, lift_term(p.args[1], lam))
    if p.kind == "New":
        return (lift_term(p.args[0], lam), "new", UNIT, lift_term(p.args[1], lam))
    if p.kind == "Sign":
        return (lift_term(p.args[0], lam), "sign",
                lift_term(p.args[2], lam), lift_term(p.args[1], lam))
    if p.kind == "Verify":
        key = lift_term(p.args[3], lam)
        if isinstance(key, Atom) and key.kind == "principal":
            key = vkey(str(key.payload))
        arg = Tup((lift_term(p.args[1], lam), lift_term(p.args[2], lam), key))
        return (lift_term(p.args[0], lam), "verify", arg, UNIT)
    raise LogicError(f"unknown predicate {p.kind}")


def holds(trace: Trace, lam: Dict[str, Value], f: Formula,
          index: Optional[TraceIndex] = None,
          domain: Optional[List[Value]] = None) -> bool:
    """Satisfaction of a basic formula on a trace under a valuation.  Free
    variables must all be bound by ``lam``."""
    if index is None:
        index = TraceIndex(trace)
    if domain is None:
        domain = index.domain(list(lam.values()) + formula_values(f))
    return _holds(index, lam, f, domain)


def _holds(ix: TraceIndex, lam: Dict[str, Value], f: Formula, domain: List[Value]) -> bool:
    if isinstance(f, TrueC):
        return True
    if isinstance(f, Pred):
        return _pred_label(f, lam) in ix.label_set
    if isinstance(f, Before):
        l1 = _pred_label(f.first, lam)
        l2 = _pred_label(f.second, lam)
        return (l1 in ix.first_index and l2 in ix.first_index
                and ix.first_index[l1] < ix.first_index[l2])
    if isinstance(f, Eq):
        return lift_term(f.left, lam) == lift_term(f.right, lam)
    if isinstance(f, StartF):
        return lift_term(f.thread, lam) not in ix.threads_acted
    if isinstance(f, ContainsF):
        return contains(lift_term(f.part, lam), lift_term(f.whole, lam))
    if isinstance(f, Honest):
        v = lift_term(f.principal, lam)
        return isinstance(v, Atom) and v.kind == "principal" and str(v.payload) in ix.honest
    if isinstance(f, And):
        return _holds(ix, lam, f.left, domain) and _holds(ix, lam, f.right, domain)
    if isinstance(f, Not):
        return not _holds(ix, lam, f.sub, domain)
    if isinstance(f, Forall):
        for v in domain:
            lam2 = dict(lam)
            lam2[f.var] = v
            if not _holds(ix, lam2, f.body, domain):
                return False
        return True
    if isinstance(f, Modal):
        for tau1, tau2, lam2 in match_program(ix.trace, lam, f.program, f.thread):
            if holds(tau1, lam, f.pre):
                if not holds(tau2, lam2, f.post):
                    return False
        return True
    raise LogicError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Program matching
# ---------------------------------------------------------------------------

def _destructure(pat: Pattern, value: Value, out: Dict[str, Value]) -> bool:
    if isinstance(pat, PWild):
        return True
    if isinstance(pat, PVar):
        out[pat.name] = value
        return True
    if isinstance(pat, PTup):
        if not isinstance(value, Tup) or len(value.items) != len(pat.items):
            return False
        return all(_destructure(q, v, out) for q, v in zip(pat.items, value.items))
    raise LogicError(f"not a pattern: {pat!r}")


def match_program(trace: Trace, lam: Dict[str, Value], program: Program,
                  thread: Term) -> List[Tuple[Trace, Trace, Dict[str, Value]]]:
    """All matches of ``[program]_thread`` against the trace.

    A match assigns the program's statements to consecutive actions of the
    thread (no other action of the same thread in between); it yields the
    prefix before the first matched action, the prefix through the last,
    and the valuation extended with binder and pattern bindings.  A
    program with no statements matches vacuously at the trace start.
    """
    stmts = statements(program)
    if not stmts:
        empty = Trace(trace.init, ())
        return [(empty, empty, dict(lam))]
    tv = lift_term(thread, lam)
    thread_positions = [
        i for i, s in enumerate(trace.steps)
        if s.label is not None and s.label.thread == tv
    ]
    out: List[Tuple[Trace, Trace, Dict[str, Value]]] = []
    for k0 in range(len(thread_positions) - len(stmts) + 1):
        lam2 = dict(lam)
        ok = True
        for j, stmt in enumerate(stmts):
            label = trace.steps[thread_positions[k0 + j]].label
            if label.action != stmt.action:
                ok = False
                break
            try:
                want_arg = lift_term(stmt.arg, lam2)
            except EvalError:
                ok = False
                break
            if want_arg != label.arg:
                ok = False
                break
            lam2[stmt.binder] = label.result
            if not _destructure(stmt.pattern, label.result, lam2):
                ok = False
                break
        if ok:
            i_first = thread_positions[k0]
            i_last = thread_positions[k0 + len(stmts) - 1]
            tau1 = Trace(trace.init, trace.steps[:i_first])
            tau2 = Trace(trace.init, trace.steps[: i_last + 1])
            out.append((tau1, tau2, lam2))
    return out


# ---------------------------------------------------------------------------
# Probability on trees
# ---------------------------------------------------------------------------

def prob(f: Formula, tree: ExecTree, lam: Optional[Dict[str, Value]] = None) -> Fraction:
    """Probability of a basic formula on an execution tree.

    Computed both as the measure of the satisfying trace set and by the
    inductive sum over the tree; the two are asserted equal.
    """
    lam = dict(lam or {})
    mu = Fraction(0)
    for t in traces(tree):
        if holds(t, lam, f):
            mu += trace_prob(t)

    def inductive(prefix: Trace, node: ExecTree) -> Fraction:
        if node.is_leaf:
            return Fraction(1) if holds(prefix, lam, f) else Fraction(0)
        total = Fraction(0)
        for step, sub in node.branches:
            total += step.prob * inductive(prefix.extend(step), sub)
        return total

    pr = inductive(Trace(tree.config, ()), tree)
    if pr != mu:
        raise LogicError(f"inductive probability {pr} disagrees with trace measure {mu}")
    return mu


def measure(f: Formula, tree: ExecTree, lam: Optional[Dict[str, Value]] = None) -> Fraction:
    """Measure of the satisfying trace set (no cross-check)."""
    lam = dict(lam or {})
    mu = Fraction(0)
    for t in traces(tree):
        if holds(t, lam, f):
            mu += trace_prob(t)
    return mu


def tree_domain(tree: ExecTree, extra: Iterable[Value] = ()) -> List[Value]:
    seen: dict = {}
    for t in traces(tree):
        for v in TraceIndex(t).domain(extra):
            seen.setdefault(value_key(v), v)
    return [seen[k] for k in sorted(seen)]


def _close_open(f: Formula, lam: Dict[str, Value]) -> Formula:
    """Universally close the free variables a valuation leaves unbound;
    open formulas are read as holding for every instantiation."""
    out = f
    for v in sorted(formula_fv(f) - set(lam), reverse=True):
        out = Forall(v, out)
    return out


def check_conditional(c: Conditional, tree: ExecTree,
                      eps_value: Callable[[EpsilonExpr], Fraction],
                      lam: Optional[Dict[str, Value]] = None) -> bool:
    """Satisfaction of a conditional formula on an execution tree.

    ``eps_value`` evaluates bound expressions to exact rationals at the
    ambient parameters.
    """
    lam = dict(lam or {})
    if isinstance(c, Lift):
        f = _close_open(c.formula, lam)
        return all(holds(t, lam, f) for t in traces(tree))
    if isinstance(c, CondImp):
        ante = _close_open(c.ante, lam)
        cons = _close_open(c.cons, lam)
        mu_theta = Fraction(0)
        mu_both = Fraction(0)
        for t in traces(tree):
            p = trace_prob(t)
            if holds(t, lam, ante):
                mu_theta += p
                if holds(t, lam, cons):
                    mu_both += p
        if mu_theta == 0:
            return True
        return Fraction(mu_both, mu_theta) >= 1 - eps_value(c.eps)
    if isinstance(c, CAnd):
        return (check_conditional(c.left, tree, eps_value, lam)
                and check_conditional(c.right, tree, eps_value, lam))
    if isinstance(c, CNot):
        return not check_conditional(c.sub, tree, eps_value, lam)
    if isinstance(c, CForall):
        for v in tree_domain(tree, list(lam.values())):
            lam2 = dict(lam)
            lam2[c.var] = v
            if not check_conditional(c.body, tree, eps_value, lam2):
                return False
        return True
    raise LogicError(f"not a conditional formula: {c!r}")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

class FormulaParser:
    """Recursive-descent parser for basic and conditional formulas.

    Modal programs may be written inline (``{ ... stop }``), or as role
    references ``#Role``, ``#Role(args)``, ``#Role:i..j`` when a protocol
    is supplied for resolution.
    """

    def __init__(self, ts: TokenStream, protocol: Optional[Protocol] = None):
        self.ts = ts
        self.protocol = protocol

    # -- conditional layer ---------------------------------------------------

    def conditional(self) -> Conditional:
        t = self.ts.peek()
        if t.kind == "IDENT" and t.text == "B" and self.ts.peek(1).text == "{":
            self.ts.next()
            self.ts.expect("SYM", "{")
            eps = parse_epsilon_tokens(self.ts)
            self.ts.expect("SYM", "}")
            return Belief(eps, self.formula())
        f = self.formula()
        if self.ts.peek().text == "->":
            self.ts.next()
            self.ts.expect("SYM", "{")
            eps = parse_epsilon_tokens(self.ts)
            self.ts.expect("SYM", "}")
            g = self.formula()
            return CondImp(f, eps, g)
        return Lift(f)

    # -- basic layer -----------------------------------------------------------

    def formula(self) -> Formula:
        t = self.ts.peek()
        if t.kind == "IDENT" and t.text in ("forall", "exists"):
            self.ts.next()
            var = self.ts.expect("IDENT").text
            self.ts.expect("SYM", ".")
            body = self.formula()
            return Forall(var, body) if t.text == "forall" else Exists(var, body)
        return self._implication()

    def _implication(self) -> Formula:
        left = self._disjunction()
        if self.ts.peek().text == "=>":
            self.ts.next()
            return Imp(left, self.formula())
        return left

    def _disjunction(self) -> Formula:
        left = self._conjunction()
        while self.ts.peek().text == "\\/":
            self.ts.next()
            left = Or(left, self._conjunction())
        return left

    def _conjunction(self) -> Formula:
        left = self._unary()
        while self.ts.peek().text == "/\\":
            self.ts.next()
            left = And(left, self._unary())
        return left

    def _unary(self) -> Formula:
        if self.ts.peek().text == "~":
            self.ts.next()
            return Not(self._unary())
        atom = self._atom()
        nxt = self.ts.peek()
        if nxt.kind == "SYM" and nxt.text == "<":
            if not isinstance(atom, Pred):
                raise LogicError("ordering applies to action predicates only")
            self.ts.next()
            rhs = self._atom()
            if not isinstance(rhs, Pred):
                raise LogicError("ordering applies to action predicates only")
            return Before(atom, rhs)
        if nxt.kind == "SYM" and nxt.text == "[":
            self.ts.next()
            program = self._program_ref()
            closer = self.ts.next()
            if not (closer.kind == "SYM" and closer.text == "]_"):
                raise LogicError(f"line {closer.line}: expected ']_' after modal program")
            thread = parse_term(self.ts)
            if isinstance(program, tuple):
                program = self._resolve_role(program, thread)
            post = self._unary()
            return Modal(atom, program, thread, post)
        return atom

    def _atom(self) -> Formula:
        t = self.ts.peek()
        if t.kind == "SYM" and t.text == "(":
            self.ts.next()
            f = self.formula()
            self.ts.expect("SYM", ")")
            return f
        if t.kind == "IDENT":
            name = t.text
            if name == "true":
                self.ts.next()
                return TRUE
            if name == "false":
                self.ts.next()
                return Not(TRUE)
            follows_paren = self.ts.peek(1).text == "("
            if follows_paren and name in PRED_ARITY:
                self.ts.next()
                args = self._args(PRED_ARITY[name])
                return Pred(name, tuple(args))
            if follows_paren and name == "Start":
                self.ts.next()
                (a,) = self._args(1)
                return StartF(a)
            if follows_paren and name == "Contains":
                self.ts.next()
                a, b = self._args(2)
                return ContainsF(a, b)
            if follows_paren and name == "Honest":
                self.ts.next()
                (a,) = self._args(1)
                return Honest(a)
            if follows_paren and name == "Fresh":
                self.ts.next()
                a, b = self._args(2)
                return fresh_formula(a, b)
            if follows_paren and name == "FirstSend":
                self.ts.next()
                a, b, c = self._args(3)
                return firstsend_formula(a, b, c)
        # fall through: term = term
        left = parse_term(self.ts)
        self.ts.expect("SYM", "=")
        right = parse_term(self.ts)
        return Eq(left, right)

    def _args(self, n: int) -> List[Term]:
        self.ts.expect("SYM", "(")
        args = [parse_term(self.ts)]
        while self.ts.accept("SYM", ","):
            args.append(parse_term(self.ts))
        self.ts.expect("SYM", ")")
        if len(args) != n:
            raise LogicError(f"expected {n} argument(s), got {len(args)}")
        return args

    # -- modal programs --------------------------------------------------------

    def _program_ref(self):
        t = self.ts.peek()
        if t.kind == "SYM" and t.text == "{":
            return parse_inline_program(self.ts)
        if t.kind == "SYM" and t.text == "#":
            self.ts.next()
            name = self.ts.expect("IDENT").text
            args: List[Term] = []
            has_args = False
            if self.ts.peek().text == "(":
                has_args = True
                self.ts.next()
                if self.ts.peek().text != ")":
                    args.append(parse_term(self.ts))
                    while self.ts.accept("SYM", ","):
                        args.append(parse_term(self.ts))
                self.ts.expect("SYM", ")")
            lo = hi = None
            if self.ts.peek().text == ":":
                self.ts.next()
                lo = int(self.ts.expect("INT").text)
                self.ts.expect("SYM", "..")
                hi = int(self.ts.expect("INT").text)
            return (name, args, has_args, lo, hi)
        raise LogicError(f"line {t.line}: expected a program reference")

    def _resolve_role(self, ref, thread: Term) -> Program:
        name, args, has_args, lo, hi = ref
        if self.protocol is None:
            raise LogicError("role reference used without a protocol context")
        return role_slice(self.protocol, name, args if has_args else None, lo, hi, thread)


def role_slice(protocol: Protocol, role_name: str, args: Optional[List[Term]],
               lo: Optional[int], hi: Optional[int], thread: Term) -> Program:
    """A role body (or 1-based inclusive slice of it) with parameters
    optionally instantiated and the thread variable replaced by ``thread``."""
    role = protocol.role(role_name)
    bindings: Dict[str, Term] = {role.thread_var: thread}
    if args is not None:
        if len(args) != len(role.params):
            raise LogicError(
                f"role {role_name} takes {len(role.params)} parameter(s), got {len(args)}")
        for formal, actual in zip(role.params, args):
            bindings[formal] = actual
    body = subst_program(role.body, bindings)
    stmts = statements(body)
    if lo is not None:
        if not (1 <= lo <= hi <= len(stmts)):
            raise LogicError(f"bad slice {lo}..{hi} for role {role_name}")
        stmts = stmts[lo - 1 : hi]
    return program_of(stmts)


def parse_formula(src: str, protocol: Optional[Protocol] = None) -> Formula:
    ts = TokenStream(tokenize(src))
    f = FormulaParser(ts, protocol).formula()
    ts.expect("EOF")
    return f


def parse_conditional(src: str, protocol: Optional[Protocol] = None) -> Conditional:
    ts = TokenStream(tokenize(src))
    c = FormulaParser(ts, protocol).conditional()
    ts.expect("EOF")
    return c


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render_formula(f: Formula) -> str:
    imp = split_imp(f)
    if imp is not None:
        return f"({render_formula(imp[0])} => {render_formula(imp[1])})"
    ex = split_exists(f)
    if ex is not None:
        return f"(exists {ex[0]}. {render_formula(ex[1])})"
    if isinstance(f, TrueC):
        return "true"
    if isinstance(f, Pred):
        return f"{f.kind}({', '.join(render_term(a) for a in f.args)})"
    if isinstance(f, Before):
        return f"({render_formula(f.first)} < {render_formula(f.second)})"
    if isinstance(f, Eq):
        return f"({render_term(f.left)} = {render_term(f.right)})"
    if isinstance(f, StartF):
        return f"Start({render_term(f.thread)})"
    if isinstance(f, ContainsF):
        return f"Contains({render_term(f.part)}, {render_term(f.whole)})"
    if isinstance(f, Honest):
        return f"Honest({render_term(f.principal)})"
    if isinstance(f, And):
        return f"({render_formula(f.left)} /\\ {render_formula(f.right)})"
    if isinstance(f, Not):
        return f"~{render_formula(f.sub)}"
    if isinstance(f, Forall):
        return f"(forall {f.var}. {render_formula(f.body)})"
    if isinstance(f, Modal):
        stmts = "; ".join(render_statement(s)[:-1] for s in statements(f.program))
        prog = "{ " + stmts + ("; " if stmts else "") + "stop }"
        return (f"(({render_formula(f.pre)}) [{prog}]_"
                f"{render_term(f.thread)} ({render_formula(f.post)}))")
    raise LogicError(f"not a formula: {f!r}")


def render_conditional(c: Conditional) -> str:
    if isinstance(c, Lift):
        return render_formula(c.formula)
    if isinstance(c, CondImp):
        if c.ante == TRUE:
            return f"B{{{c.eps}}} {render_formula(c.cons)}"
        return f"{render_formula(c.ante)} ->{{{c.eps}}} {render_formula(c.cons)}"
    if isinstance(c, CAnd):
        return f"({render_conditional(c.left)} /\\ {render_conditional(c.right)})"
    if isinstance(c, CNot):
        return f"~{render_conditional(c.sub)}"
    if isinstance(c, CForall):
        return f"(forall {c.var}. {render_conditional(c.body)})"
    raise LogicError(f"not a conditional formula: {c!r}")
