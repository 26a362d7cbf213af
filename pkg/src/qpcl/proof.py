"""Proof scripts and the checking kernel.

A proof script is a line-oriented list of steps:

    step <id> [hyp: <formula>(, <formula>)*] |- <conditional> by RULE(<ids>)[ with x=t, ...]

Comment lines start with ``#``.  Premise ids must be strictly smaller
than the step id, and a step's hypotheses must include every hypothesis
of its premises.  Each rule has a checker that validates the conclusion
(including its bound annotation) against the rule schema and the cited
premises; an accepted script yields a verdict carrying the final step's
symbolic bound.

Rule conventions used by the checkers:

- Axioms stated with an explicit zero belief (AA1, AA2, AA5, AA6,
  COMP1-7, NCOMP, FS1, FS3-5, FSS, B2) conclude ``B{0} ...``.
- Purely first-order axioms (AA3, AA4, START, EQ1, EQ2, PCimp, PCand,
  FO-TAUT) and the Hoare rules (G1-G3, S1) work on lifted (belief-free)
  judgments; B1 with one premise lifts into ``B{0}``, B4 drops back out.
- VER introduces the eVER bound atom and requires an Honest hypothesis
  on a constant principal; FS2 introduces eFS2 and requires the protocol
  to be nonce-preserving.
- PCIMP-B is the derived belief form of PCimp (two belief premises, sum
  bound); PCand with two premises is the matching belief form of the
  PCand axiom.  Only these rule forms accept the existential variant
  (fixed-side posts under an outer exists): there the implication or
  side premise is a belief, so it is closed over the witness variable,
  which is what makes reasoning under the existential sound.
- FSS is a derived FirstSend-introduction axiom: within a program run
  from its start, a nonce sent (or not yet sent) only inside one
  designated message was first sent in that message.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .bounds import EpsilonExpr, ZERO, EVER, EFS2
from .lang import (
    LangError,
    Lit,
    PTup,
    Pattern,
    Program,
    Protocol,
    Proj,
    Role,
    Stmt,
    Term,
    TermTuple,
    TokenStream,
    Var,
    VerKey,
    pattern_term,
    program_of,
    statements,
    subst_program,
    tokenize,
)
from .logic import (
    And,
    Before,
    Belief,
    CondImp,
    Conditional,
    ContainsF,
    Eq,
    Forall,
    Formula,
    FormulaParser,
    Honest,
    Imp,
    Lift,
    Modal,
    Not,
    Pred,
    StartF,
    TRUE,
    TrueC,
    alpha_eq,
    alpha_normalize,
    conj,
    conjuncts,
    formula_fv,
    fresh_formula,
    firstsend_formula,
    render_conditional,
    render_formula,
    split_exists,
    split_imp,
    subst_formula,
)


class ProofError(Exception):
    pass


# ---------------------------------------------------------------------------
# Script representation and parsing
# ---------------------------------------------------------------------------

@dataclass
class ProofStep:
    id: int
    hypotheses: Tuple[Formula, ...]
    conclusion: Conditional
    rule: str
    premises: Tuple[int, ...]
    instantiation: Tuple[Tuple[str, Term], ...] = ()


@dataclass
class Verdict:
    accepted: bool
    bound: Optional[EpsilonExpr]
    diagnostics: List[str] = field(default_factory=list)
    safety_certified: bool = False
    conclusion: Optional[Conditional] = None


def parse_script(text: str, protocol: Protocol) -> List[ProofStep]:
    source = "\n".join(
        "" if line.lstrip().startswith("#") else line
        for line in text.splitlines()
    )
    ts = TokenStream(tokenize(source))
    steps: List[ProofStep] = []
    seen = set()
    while ts.peek().kind != "EOF":
        tok = ts.expect("IDENT")
        if tok.text != "step":
            raise ProofError(f"line {tok.line}: expected 'step', found {tok.text!r}")
        sid = int(ts.expect("INT").text)
        if sid in seen:
            raise ProofError(f"duplicate step id {sid}")
        seen.add(sid)
        hyps: List[Formula] = []
        if ts.peek().kind == "IDENT" and ts.peek().text == "hyp":
            ts.next()
            ts.expect("SYM", ":")
            hyps.append(FormulaParser(ts, protocol).formula())
            while ts.accept("SYM", ","):
                hyps.append(FormulaParser(ts, protocol).formula())
        ts.expect("SYM", "|-")
        conclusion = FormulaParser(ts, protocol).conditional()
        by = ts.expect("IDENT")
        if by.text != "by":
            raise ProofError(f"line {by.line}: expected 'by', found {by.text!r}")
        rule = _parse_rule_name(ts)
        premises: List[int] = []
        if ts.accept("SYM", "("):
            if ts.peek().kind == "INT":
                premises.append(int(ts.next().text))
                while ts.accept("SYM", ","):
                    premises.append(int(ts.expect("INT").text))
            ts.expect("SYM", ")")
        inst: List[Tuple[str, Term]] = []
        if ts.peek().kind == "IDENT" and ts.peek().text == "with":
            ts.next()
            while True:
                name = ts.expect("IDENT").text
                ts.expect("SYM", "=")
                from .lang import parse_term

                inst.append((name, parse_term(ts)))
                if not ts.accept("SYM", ","):
                    break
        steps.append(ProofStep(sid, tuple(hyps), conclusion, rule,
                               tuple(premises), tuple(inst)))
    return steps


def _parse_rule_name(ts: TokenStream) -> str:
    parts = [ts.expect("IDENT").text]
    while ts.peek().kind == "SYM" and ts.peek().text == "-":
        ts.next()
        parts.append(ts.expect("IDENT").text)
    return "-".join(parts)


# ---------------------------------------------------------------------------
# Protocol analyses
# ---------------------------------------------------------------------------

def initial_segments(protocol: Protocol) -> List[Tuple[Role, Program]]:
    """All non-empty statement prefixes of each role body."""
    out: List[Tuple[Role, Program]] = []
    for role in protocol.roles:
        stmts = statements(role.body)
        for k in range(1, len(stmts) + 1):
            out.append((role, program_of(stmts[:k])))
    return out


def _term_reach(t: Term) -> set:
    """Variables syntactically reachable inside a term."""
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, (Proj, VerKey)):
        return _term_reach(t.sub)
    if isinstance(t, TermTuple):
        out: set = set()
        for x in t.items:
            out |= _term_reach(x)
        return out
    return set()


def nonce_preserving(protocol: Protocol) -> Tuple[bool, Optional[Stmt]]:
    """The FS2 side condition: (1) fresh (unsent) nonces never flow into a
    verify argument; (2) after signing a message containing a fresh nonce,
    no further sign happens until that signature is sent.  Returns the
    first violating statement as witness when false."""
    for role in protocol.roles:
        taint: Dict[str, set] = {}  # binder -> new-binders it contains
        unsent: set = set()
        pending_sig: Optional[str] = None
        pending_stmt: Optional[Stmt] = None

        def arg_taint(t: Term) -> set:
            out: set = set()
            for v in _term_reach(t):
                out |= taint.get(v, set())
            return out

        for s in statements(role.body):
            if s.action == "new":
                taint[s.binder] = {s.binder}
                unsent.add(s.binder)
            elif s.action == "verify":
                if arg_taint(s.arg) & unsent:
                    return False, s
            elif s.action == "sign":
                if pending_sig is not None:
                    return False, pending_stmt
                taint[s.binder] = set(arg_taint(s.arg))
                taint[s.binder].add(s.binder)
                if arg_taint(s.arg) & unsent:
                    pending_sig = s.binder
                    pending_stmt = s
            elif s.action == "send":
                unsent -= arg_taint(s.arg)
                if pending_sig is not None and pending_sig in _reach_binders(s.arg, taint):
                    pending_sig = None
                    pending_stmt = None
    return True, None


def _reach_binders(t: Term, taint: Dict[str, set]) -> set:
    out = set(_term_reach(t))
    for v in list(out):
        out |= taint.get(v, set())
    return out


# ---------------------------------------------------------------------------
# Propositional tautology checking
# ---------------------------------------------------------------------------

FO_TAUT_ATOM_LIMIT = 26


def fo_taut(f: Formula, limit: int = FO_TAUT_ATOM_LIMIT) -> bool:
    """Propositional tautology over the formula's atomic skeleton.  Action
    predicates, orderings, equalities, containment, honesty, quantified and
    modal subformulas are all opaque atoms."""
    atoms: Dict[str, int] = {}

    def key(g: Formula) -> str:
        return render_formula(alpha_normalize(g))

    def collect(g: Formula) -> None:
        if isinstance(g, TrueC):
            return
        if isinstance(g, And):
            collect(g.left)
            collect(g.right)
        elif isinstance(g, Not):
            collect(g.sub)
        else:
            k = key(g)
            if k not in atoms:
                atoms[k] = len(atoms)

    collect(f)
    n = len(atoms)
    if n > limit:
        raise ProofError(
            f"tautology check over {n} atoms exceeds the limit of {limit}; split the step")
    rows = 1 << n
    full = (1 << rows) - 1
    cols: List[int] = []
    for i in range(n):
        # Repeating block of 2^i zeros followed by 2^i ones, grown by
        # doubling so each column costs O(log rows) shift/or operations.
        width = 1 << (i + 1)
        col = ((1 << (1 << i)) - 1) << (1 << i)
        while width < rows:
            col |= col << width
            width <<= 1
        cols.append(col & full)

    def truth(g: Formula) -> int:
        if isinstance(g, TrueC):
            return full
        if isinstance(g, And):
            return truth(g.left) & truth(g.right)
        if isinstance(g, Not):
            return full & ~truth(g.sub)
        return cols[atoms[key(g)]]

    return truth(f) == full


# ---------------------------------------------------------------------------
# Schema helpers
# ---------------------------------------------------------------------------

def _need_lift(c: Conditional, what: str = "conclusion") -> Formula:
    if isinstance(c, Lift):
        return c.formula
    raise ProofError(f"{what} must be a plain (lifted) formula")


def _need_belief(c: Conditional, what: str = "conclusion") -> Tuple[EpsilonExpr, Formula]:
    if isinstance(c, CondImp) and c.ante == TRUE:
        return c.eps, c.cons
    raise ProofError(f"{what} must be a belief formula B{{...}}")


def _need_b0(c: Conditional, what: str = "conclusion") -> Formula:
    eps, f = _need_belief(c, what)
    if not eps.is_zero():
        raise ProofError(f"{what} must carry bound 0, found {eps}")
    return f


def _need_modal(f: Formula, what: str = "conclusion") -> Modal:
    if isinstance(f, Modal):
        return f
    raise ProofError(f"{what} must be a modal formula")


def _same_frame(a: Modal, b: Modal, what: str) -> None:
    if not alpha_eq(a.pre, b.pre):
        raise ProofError(f"{what}: modal preconditions differ")
    if alpha_normalize(Modal(TRUE, a.program, a.thread, TRUE)) != \
       alpha_normalize(Modal(TRUE, b.program, b.thread, TRUE)):
        raise ProofError(f"{what}: modal programs or threads differ")


def _result_term(s: Stmt) -> Term:
    if isinstance(s.pattern, PTup):
        return pattern_term(s.pattern)
    return Var(s.binder)


_ACTION_PRED = {"send": "Send", "receive": "Receive", "new": "New",
                "sign": "Sign", "verify": "Verify"}


def stmt_pred(s: Stmt, thread: Term) -> Pred:
    """The action predicate recording statement ``s`` by ``thread``."""
    kind = _ACTION_PRED[s.action]
    if s.action == "send":
        return Pred(kind, (thread, s.arg))
    if s.action in ("receive", "new"):
        return Pred(kind, (thread, _result_term(s)))
    if s.action == "sign":
        return Pred(kind, (thread, _result_term(s), s.arg))
    # verify: argument must be <sig, message, vk(owner)>
    if not (isinstance(s.arg, TermTuple) and len(s.arg.items) == 3
            and isinstance(s.arg.items[2], VerKey)):
        raise ProofError("verify statement argument is not <sig, msg, vk(owner)>")
    sig, msg, key = s.arg.items
    return Pred(kind, (thread, sig, msg, key.sub))


def _stmt_eq_pairs(s: Stmt, p: Pred) -> List[Tuple[Term, Term]]:
    """The (program-term, predicate-term) pairs equated by AA6."""
    if p.kind == "Send":
        return [(s.arg, p.args[1])]
    if p.kind in ("Receive", "New"):
        return [(_result_term(s), p.args[1])]
    if p.kind == "Sign":
        return [(_result_term(s), p.args[1]), (s.arg, p.args[2])]
    if p.kind == "Verify":
        if not (isinstance(s.arg, TermTuple) and len(s.arg.items) == 3
                and isinstance(s.arg.items[2], VerKey)):
            raise ProofError("verify statement argument is not <sig, msg, vk(owner)>")
        sig, msg, key = s.arg.items
        return [(sig, p.args[1]), (msg, p.args[2]), (key.sub, p.args[3])]
    raise ProofError(f"unknown predicate {p.kind}")


def _shape(t: Term):
    """Normalize literal tuples so incompatibility checks see structure."""
    if isinstance(t, Lit):
        v = t.value
        if hasattr(v, "items") and v.kind == "tuple":
            return TermTuple(tuple(Lit(x) for x in v.items))
    return t


def terms_incompatible(a: Term, b: Term) -> bool:
    """True when no valuation can make the two terms denote equal values."""
    a, b = _shape(a), _shape(b)
    if isinstance(a, Lit) and isinstance(b, Lit):
        return a.value != b.value
    if isinstance(a, TermTuple) and isinstance(b, TermTuple):
        if len(a.items) != len(b.items):
            return True
        return any(terms_incompatible(x, y) for x, y in zip(a.items, b.items))
    if isinstance(a, TermTuple) and isinstance(b, Lit):
        return True
    if isinstance(a, Lit) and isinstance(b, TermTuple):
        return True
    if isinstance(a, VerKey) and isinstance(b, TermTuple):
        return True
    if isinstance(a, TermTuple) and isinstance(b, VerKey):
        return True
    if isinstance(a, VerKey) and isinstance(b, VerKey):
        return terms_incompatible(a.sub, b.sub)
    return False


def stmt_cannot_unify(s: Stmt, p: Pred) -> bool:
    """AA5 side condition: no trace valuation labels statement ``s`` with
    predicate ``p``."""
    if _ACTION_PRED[s.action] != p.kind:
        return True
    pairs = _stmt_eq_pairs(s, p)
    return any(terms_incompatible(x, y) for x, y in pairs)


def _find_inst(pattern: Formula, var: str, target: Formula) -> Optional[Term]:
    """Find a term t with pattern[t/var] structurally equal to target, by
    parallel walk.  Returns None when var does not occur."""
    found: List[Term] = []

    def fail():
        raise ProofError("instantiation mismatch")

    def walk_term(tp: Term, tq: Term) -> None:
        if isinstance(tp, Var) and tp.name == var:
            found.append(tq)
            return
        if type(tp) is not type(tq):
            fail()
        if isinstance(tp, Var):
            if tp.name != tq.name:
                fail()
        elif isinstance(tp, Lit):
            if tp.value != tq.value:
                fail()
        elif isinstance(tp, (Proj,)):
            if tp.index != tq.index:
                fail()
            walk_term(tp.sub, tq.sub)
        elif isinstance(tp, VerKey):
            walk_term(tp.sub, tq.sub)
        elif isinstance(tp, TermTuple):
            if len(tp.items) != len(tq.items):
                fail()
            for x, y in zip(tp.items, tq.items):
                walk_term(x, y)
        else:
            fail()

    def walk(p: Formula, q: Formula) -> None:
        if type(p) is not type(q):
            fail()
        if isinstance(p, TrueC):
            return
        if isinstance(p, Pred):
            if p.kind != q.kind or len(p.args) != len(q.args):
                fail()
            for x, y in zip(p.args, q.args):
                walk_term(x, y)
        elif isinstance(p, Before):
            walk(p.first, q.first)
            walk(p.second, q.second)
        elif isinstance(p, Eq):
            walk_term(p.left, q.left)
            walk_term(p.right, q.right)
        elif isinstance(p, StartF):
            walk_term(p.thread, q.thread)
        elif isinstance(p, ContainsF):
            walk_term(p.part, q.part)
            walk_term(p.whole, q.whole)
        elif isinstance(p, Honest):
            walk_term(p.principal, q.principal)
        elif isinstance(p, And):
            walk(p.left, q.left)
            walk(p.right, q.right)
        elif isinstance(p, Not):
            walk(p.sub, q.sub)
        elif isinstance(p, Forall):
            body_q = q.body
            if p.var != q.var:
                body_q = subst_formula(q.body, {q.var: Var(p.var)})
            walk(p.body, body_q)
        elif isinstance(p, Modal):
            walk(p.pre, q.pre)
            walk_term(p.thread, q.thread)
            sp, sq = statements(p.program), statements(q.program)
            if len(sp) != len(sq):
                fail()
            for a, b in zip(sp, sq):
                if a.action != b.action or a.binder != b.binder or a.pattern != b.pattern:
                    fail()
                walk_term(a.arg, b.arg)
            walk(p.post, q.post)
        else:
            fail()

    walk(pattern, target)
    if not found:
        return None
    first = found[0]
    for t in found[1:]:
        if alpha_normalize(Eq(first, t)) != alpha_normalize(Eq(first, first)) and t != first:
            if t != first:
                raise ProofError("inconsistent instantiation candidates")
    return first


# ---------------------------------------------------------------------------
# Rule checkers
# ---------------------------------------------------------------------------

class CheckContext:
    def __init__(self, protocol: Protocol):
        self.protocol = protocol
        self._np: Optional[Tuple[bool, Optional[Stmt]]] = None

    def nonce_preserving(self) -> Tuple[bool, Optional[Stmt]]:
        if self._np is None:
            self._np = nonce_preserving(self.protocol)
        return self._np


Checker = Callable[[ProofStep, List[ProofStep], CheckContext], None]
RULES: Dict[str, Checker] = {}


def rule(name: str):
    def deco(fn: Checker):
        RULES[name] = fn
        return fn
    return deco


def _arity(step: ProofStep, prems: List[ProofStep], n) -> None:
    if isinstance(n, int):
        ok = len(prems) == n
    else:
        ok = len(prems) in n
    if not ok:
        raise ProofError(f"rule {step.rule} given {len(prems)} premise(s)")


@rule("HYP")
def _r_hyp(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_lift(step.conclusion)
    if not any(alpha_eq(f, h) for h in step.hypotheses):
        raise ProofError("conclusion is not among the step's hypotheses")


@rule("VER")
def _r_ver(step, prems, ctx):
    _arity(step, prems, 0)
    eps, f = _need_belief(step.conclusion)
    if eps != EVER:
        raise ProofError(f"VER bound must be eVER, found {eps}")
    imp = split_imp(f)
    if imp is None:
        raise ProofError("VER conclusion is not an implication")
    ver, rhs = imp
    if not (isinstance(ver, Pred) and ver.kind == "Verify"):
        raise ProofError("VER antecedent must be a Verify predicate")
    y, s, m, b = ver.args
    if not (isinstance(b, Lit) and b.value.kind == "principal"):
        raise ProofError("VER requires a constant principal as the key owner")
    if not any(alpha_eq(h, Honest(b)) for h in step.hypotheses):
        raise ProofError("VER requires an Honest hypothesis on the key owner")
    ex = split_exists(rhs)
    if ex is None:
        raise ProofError("VER consequent must be existential")
    iv, body = ex
    expected = Before(Pred("Sign", (TermTuple((b, Var(iv))), s, m)), ver)
    if not alpha_eq(body, expected):
        raise ProofError("VER consequent does not match the schema")


@rule("FS2")
def _r_fs2(step, prems, ctx):
    _arity(step, prems, 0)
    ok, witness = ctx.nonce_preserving()
    if not ok:
        raise ProofError(
            f"FS2 requires a nonce-preserving protocol; violating statement {witness.label!r}")
    eps, f = _need_belief(step.conclusion)
    if eps != EFS2:
        raise ProofError(f"FS2 bound must be eFS2, found {eps}")
    imp = split_imp(f)
    if imp is None:
        raise ProofError("FS2 conclusion is not an implication")
    ante, order = imp
    if not (isinstance(order, Before)
            and order.first.kind == "Send" and order.second.kind == "Receive"):
        raise ProofError("FS2 consequent must order a Send before a Receive")
    x, m = order.first.args
    y, m2 = order.second.args
    if not (isinstance(ante, And) and isinstance(ante.right, ContainsF)):
        raise ProofError("FS2 antecedent must end with a Contains conjunct")
    n = ante.right.part
    expected = And(And(firstsend_formula(x, n, m), Pred("Receive", (y, m2))),
                   ContainsF(n, m2))
    if not alpha_eq(ante, expected):
        raise ProofError("FS2 antecedent does not match the schema")


@rule("HON")
def _r_hon(step, prems, ctx):
    phi = _need_lift(step.conclusion)
    segments = initial_segments(ctx.protocol)
    candidates = sorted(formula_fv(phi)) or ["I"]
    last_error = "no premises"
    for z in candidates:
        try:
            expected = [Forall(z, Imp(StartF(Var(z)), phi))]
            for role, prefix in segments:
                body = subst_program(prefix, {role.thread_var: Var(z)})
                expected.append(Forall(z, Modal(StartF(Var(z)), body, Var(z), phi)))
            remaining = list(expected)
            for p in prems:
                pf = _need_lift(p.conclusion, f"step {p.id}")
                hit = next((i for i, e in enumerate(remaining) if alpha_eq(pf, e)), None)
                if hit is None:
                    raise ProofError(f"premise step {p.id} matches no HON obligation")
                remaining.pop(hit)
            if remaining:
                raise ProofError(
                    f"HON is missing {len(remaining)} obligation(s), e.g. "
                    f"{render_formula(remaining[0])}")
            return
        except ProofError as e:
            last_error = str(e)
    raise ProofError(f"HON obligations not covered: {last_error}")


@rule("PCup")
def _r_pcup(step, prems, ctx):
    _arity(step, prems, 1)
    e1, f1 = _need_belief(prems[0].conclusion, "premise")
    eps, f = _need_belief(step.conclusion)
    m = _need_modal(f)
    if eps != e1:
        raise ProofError("PCup preserves the premise bound")
    if not alpha_eq(m.post, f1):
        raise ProofError("PCup conclusion's postcondition must equal the premise")


@rule("PCimp")
def _r_pcimp(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_lift(step.conclusion)
    imp = split_imp(f)
    if imp is None or not isinstance(imp[0], And):
        raise ProofError("PCimp must be ((theta[P]_X(phi=>psi)) /\\ (theta[P]_X phi)) => theta[P]_X psi")
    m1 = _need_modal(imp[0].left, "PCimp first conjunct")
    m2 = _need_modal(imp[0].right, "PCimp second conjunct")
    m3 = _need_modal(imp[1], "PCimp consequent")
    _same_frame(m1, m2, "PCimp")
    _same_frame(m1, m3, "PCimp")
    _check_imp_posts(m1.post, m2.post, m3.post, "PCimp", allow_exists=False)


def _check_imp_posts(imp_post: Formula, phi_post: Formula, psi_post: Formula,
                     what: str, allow_exists: bool) -> None:
    """Plain: imp_post = phi=>psi, phi_post = phi, psi_post = psi.  The
    existential variant (rule forms only, where the implication premise is a
    belief and hence closed over its free variables): phi_post = exists x.phi,
    psi_post = exists x.psi."""
    ip = split_imp(imp_post)
    if ip is None:
        raise ProofError(f"{what}: expected an implication postcondition")
    phi, psi = ip
    if allow_exists:
        ex_phi = split_exists(phi_post)
        ex_psi = split_exists(psi_post)
        if ex_phi is not None and ex_psi is not None:
            xs, phi_body = ex_phi
            xt, psi_body = ex_psi
            if xs != xt:
                phi_body = subst_formula(phi_body, {xs: Var(xt)})
            if alpha_eq(phi, phi_body) and alpha_eq(psi, psi_body):
                return
    if alpha_eq(phi, phi_post) and alpha_eq(psi, psi_post):
        return
    raise ProofError(f"{what}: postconditions do not fit the schema")


@rule("PCand")
def _r_pcand(step, prems, ctx):
    if not prems:
        f = _need_lift(step.conclusion)
        imp = split_imp(f)
        if imp is None or not isinstance(imp[0], And):
            raise ProofError(
                "PCand must be ((theta[P]_X a) /\\ (theta[P]_X b)) => theta[P]_X (a /\\ b)")
        m1 = _need_modal(imp[0].left, "PCand first conjunct")
        m2 = _need_modal(imp[0].right, "PCand second conjunct")
        m3 = _need_modal(imp[1], "PCand consequent")
        _same_frame(m1, m2, "PCand")
        _same_frame(m1, m3, "PCand")
        _check_and_posts(m1.post, m2.post, m3.post, "PCand", allow_exists=False)
        return
    # rule form: two belief premises over one frame, bounds add up
    _arity(step, prems, 2)
    e1, f1 = _need_belief(prems[0].conclusion, "first premise")
    e2, f2 = _need_belief(prems[1].conclusion, "second premise")
    eps, f = _need_belief(step.conclusion)
    m1 = _need_modal(f1, "first premise")
    m2 = _need_modal(f2, "second premise")
    m3 = _need_modal(f)
    _same_frame(m1, m2, "PCand")
    _same_frame(m1, m3, "PCand")
    if eps != e1 + e2:
        raise ProofError(f"PCand bound must be the premise sum, found {eps}")
    _check_and_posts(m1.post, m2.post, m3.post, "PCand", allow_exists=True)


def _check_and_posts(a_post: Formula, b_post: Formula, c_post: Formula,
                     what: str, allow_exists: bool) -> None:
    if isinstance(c_post, And) and alpha_eq(c_post.left, a_post) \
            and alpha_eq(c_post.right, b_post):
        return
    if allow_exists:
        ex_a = split_exists(a_post)
        ex_c = split_exists(c_post)
        if ex_a is not None and ex_c is not None:
            xa, body_a = ex_a
            xc, body_c = ex_c
            if xa != xc:
                body_a = subst_formula(body_a, {xa: Var(xc)})
            if isinstance(body_c, And) and alpha_eq(body_c.left, body_a) \
                    and alpha_eq(body_c.right, b_post):
                return
    raise ProofError(f"{what}: postconditions do not fit the schema")


@rule("PCIMP-B")
def _r_pcimp_b(step, prems, ctx):
    _arity(step, prems, 2)
    e1, f1 = _need_belief(prems[0].conclusion, "first premise")
    e2, f2 = _need_belief(prems[1].conclusion, "second premise")
    eps, f = _need_belief(step.conclusion)
    m1 = _need_modal(f1, "first premise")
    m2 = _need_modal(f2, "second premise")
    m3 = _need_modal(f)
    _same_frame(m1, m2, "PCIMP-B")
    _same_frame(m1, m3, "PCIMP-B")
    if eps != e1 + e2:
        raise ProofError(f"PCIMP-B bound must be the premise sum, found {eps}")
    _check_imp_posts(m1.post, m2.post, m3.post, "PCIMP-B", allow_exists=True)


@rule("G1")
def _r_g1(step, prems, ctx):
    if not prems:
        raise ProofError("G1 needs at least one premise")
    modals = []
    for p in prems:
        modals.append(_need_modal(_need_lift(p.conclusion, f"step {p.id}"), f"step {p.id}"))
    m = _need_modal(_need_lift(step.conclusion))
    for other in modals:
        _same_frame(m, other, "G1")
    want = []
    for other in modals:
        want.extend(conjuncts(other.post))
    got = conjuncts(m.post)
    if len(want) != len(got) or not all(alpha_eq(a, b) for a, b in zip(want, got)):
        raise ProofError("G1 conclusion's postcondition is not the premise conjunction")


@rule("G2")
def _r_g2(step, prems, ctx):
    _arity(step, prems, 2)
    m1 = _need_modal(_need_lift(prems[0].conclusion, "premise"), "premise")
    m2 = _need_modal(_need_lift(prems[1].conclusion, "premise"), "premise")
    m = _need_modal(_need_lift(step.conclusion))
    _same_frame(Modal(TRUE, m.program, m.thread, TRUE),
                Modal(TRUE, m1.program, m1.thread, TRUE), "G2")
    _same_frame(Modal(TRUE, m.program, m.thread, TRUE),
                Modal(TRUE, m2.program, m2.thread, TRUE), "G2")
    if not (alpha_eq(m.post, m1.post) and alpha_eq(m.post, m2.post)):
        raise ProofError("G2 postconditions must agree")
    from .logic import Or

    if not alpha_eq(m.pre, Or(m1.pre, m2.pre)):
        raise ProofError("G2 precondition must be the premise disjunction")


@rule("G3")
def _r_g3(step, prems, ctx):
    _arity(step, prems, 3)
    imp1 = split_imp(_need_lift(prems[0].conclusion, "first premise"))
    mp = _need_modal(_need_lift(prems[1].conclusion, "second premise"), "second premise")
    imp2 = split_imp(_need_lift(prems[2].conclusion, "third premise"))
    if imp1 is None or imp2 is None:
        raise ProofError("G3 side premises must be implications")
    m = _need_modal(_need_lift(step.conclusion))
    if alpha_normalize(Modal(TRUE, m.program, m.thread, TRUE)) != \
       alpha_normalize(Modal(TRUE, mp.program, mp.thread, TRUE)):
        raise ProofError("G3: modal programs or threads differ")
    if not (alpha_eq(imp1[0], m.pre) and alpha_eq(imp1[1], mp.pre)
            and alpha_eq(imp2[0], mp.post) and alpha_eq(imp2[1], m.post)):
        raise ProofError("G3 premises do not fit the conclusion")


@rule("S1")
def _r_s1(step, prems, ctx):
    _arity(step, prems, 2)
    m1 = _need_modal(_need_lift(prems[0].conclusion, "first premise"), "first premise")
    m2 = _need_modal(_need_lift(prems[1].conclusion, "second premise"), "second premise")
    m = _need_modal(_need_lift(step.conclusion))
    if not alpha_eq(m1.post, m2.pre):
        raise ProofError("S1: first postcondition must equal second precondition")
    if alpha_normalize(Eq(m.thread, m.thread)) != alpha_normalize(Eq(m.thread, m1.thread)):
        pass
    if not (m.thread == m1.thread == m2.thread):
        raise ProofError("S1 threads must agree")
    combined = program_of(statements(m1.program) + statements(m2.program))
    if alpha_normalize(Modal(TRUE, m.program, m.thread, TRUE)) != \
       alpha_normalize(Modal(TRUE, combined, m.thread, TRUE)):
        raise ProofError("S1 conclusion program must be the premise concatenation")
    if not (alpha_eq(m.pre, m1.pre) and alpha_eq(m.post, m2.post)):
        raise ProofError("S1 pre/post conditions do not fit")


@rule("B1")
def _r_b1(step, prems, ctx):
    if len(prems) == 1:
        f1 = _need_lift(prems[0].conclusion, "premise")
        eps, f = _need_belief(step.conclusion)
        if not eps.is_zero():
            raise ProofError("lifting into belief carries bound 0")
        if not alpha_eq(f, f1):
            raise ProofError("B1 conclusion must equal the lifted premise")
        return
    _arity(step, prems, 2)
    imp = split_imp(_need_lift(prems[0].conclusion, "first premise"))
    if imp is None:
        raise ProofError("B1 first premise must be an implication")
    e2, f2 = _need_belief(prems[1].conclusion, "second premise")
    eps, f = _need_belief(step.conclusion)
    if eps != e2:
        raise ProofError("B1 preserves the belief bound")
    if not (alpha_eq(imp[0], f2) and alpha_eq(imp[1], f)):
        raise ProofError("B1 premises do not fit the conclusion")


@rule("B2")
def _r_b2(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_b0(step.conclusion)
    if f != TRUE:
        raise ProofError("B2 concludes B{0} true")


@rule("B3")
def _r_b3(step, prems, ctx):
    _arity(step, prems, 2)
    e1, f1 = _need_belief(prems[0].conclusion, "first premise")
    e2, f2 = _need_belief(prems[1].conclusion, "second premise")
    eps, f = _need_belief(step.conclusion)
    if eps != e1 + e2:
        raise ProofError(f"B3 bound must be the premise sum, found {eps}")
    if not (isinstance(f, And) and alpha_eq(f.left, f1) and alpha_eq(f.right, f2)):
        raise ProofError("B3 conclusion must conjoin the premises in order")


@rule("B4")
def _r_b4(step, prems, ctx):
    _arity(step, prems, 1)
    f1 = _need_b0(prems[0].conclusion, "premise")
    f = _need_lift(step.conclusion)
    if not alpha_eq(f, f1):
        raise ProofError("B4 conclusion must equal the premise's content")


@rule("WEAKEN")
def _r_weaken(step, prems, ctx):
    _arity(step, prems, 1)
    p = prems[0].conclusion
    c = step.conclusion
    if not (isinstance(p, CondImp) and isinstance(c, CondImp)):
        raise ProofError("WEAKEN applies to conditional formulas")
    if not (alpha_eq(p.ante, c.ante) and alpha_eq(p.cons, c.cons)):
        raise ProofError("WEAKEN must preserve the formula")
    if not c.eps.dominates(p.eps):
        raise ProofError(f"WEAKEN target bound {c.eps} does not dominate {p.eps}")


@rule("FO-TAUT")
def _r_fo_taut(step, prems, ctx):
    f = _need_lift(step.conclusion)
    if prems:
        ante = conj([_need_lift(p.conclusion, f"step {p.id}") for p in prems])
        goal = Imp(ante, f)
    else:
        goal = f
    if not fo_taut(goal):
        raise ProofError("not a tautological consequence of the cited premises")


@rule("FORALL-INTRO")
def _r_forall_intro(step, prems, ctx):
    _arity(step, prems, 1)
    f = _need_lift(step.conclusion)
    if not isinstance(f, Forall):
        raise ProofError("FORALL-INTRO concludes a universal formula")
    p = _need_lift(prems[0].conclusion, "premise")
    if not alpha_eq(f.body, p):
        raise ProofError("FORALL-INTRO body must equal the premise")
    for h in step.hypotheses:
        if f.var in formula_fv(h):
            raise ProofError(f"variable {f.var} is free in a hypothesis")


@rule("FORALL-ELIM")
def _r_forall_elim(step, prems, ctx):
    _arity(step, prems, 1)
    p = _need_lift(prems[0].conclusion, "premise")
    if not isinstance(p, Forall):
        raise ProofError("FORALL-ELIM premise must be universal")
    f = _need_lift(step.conclusion)
    inst = dict(step.instantiation)
    if p.var in inst:
        t = inst[p.var]
    else:
        t = _find_inst(p.body, p.var, f)
        if t is None:
            t = Var(p.var)
    if not alpha_eq(subst_formula(p.body, {p.var: t}), f):
        raise ProofError("FORALL-ELIM conclusion is not an instance of the premise")


@rule("EXISTS-INTRO")
def _r_exists_intro(step, prems, ctx):
    _arity(step, prems, 1)
    p = _need_lift(prems[0].conclusion, "premise")
    f = _need_lift(step.conclusion)
    ex = split_exists(f)
    if ex is None:
        raise ProofError("EXISTS-INTRO concludes an existential formula")
    var, body = ex
    inst = dict(step.instantiation)
    if var in inst:
        t = inst[var]
    else:
        t = _find_inst(body, var, p)
        if t is None:
            t = Var(var)
    if not alpha_eq(subst_formula(body, {var: t}), p):
        raise ProofError("EXISTS-INTRO premise is not an instance of the body")


# -- modal axioms ------------------------------------------------------------

def _axiom_modal(step, pre_required=None) -> Modal:
    f = _need_b0(step.conclusion)
    m = _need_modal(f)
    if pre_required is not None and not alpha_eq(m.pre, pre_required):
        raise ProofError("axiom precondition does not match the schema")
    return m


@rule("AA1")
def _r_aa1(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step, TRUE)
    if not isinstance(m.post, Pred):
        raise ProofError("AA1 concludes an action predicate")
    for s in statements(m.program):
        if stmt_pred(s, m.thread) == m.post:
            return
    raise ProofError("AA1 predicate matches no statement of the program")


@rule("AA2")
def _r_aa2(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step, TRUE)
    if not isinstance(m.post, Before):
        raise ProofError("AA2 concludes an ordering")
    stmts = statements(m.program)
    first = [i for i, s in enumerate(stmts) if stmt_pred(s, m.thread) == m.post.first]
    second = [j for j, s in enumerate(stmts) if stmt_pred(s, m.thread) == m.post.second]
    if not any(i < j for i in first for j in second):
        raise ProofError("AA2 ordering does not follow the program order")


@rule("AA3")
def _r_aa3(step, prems, ctx):
    _arity(step, prems, 0)
    _aa34(step, which=0)


@rule("AA4")
def _r_aa4(step, prems, ctx):
    _arity(step, prems, 0)
    _aa34(step, which=1)


def _aa34(step, which: int):
    f = _need_lift(step.conclusion)
    imp = split_imp(f)
    if imp is None or not isinstance(imp[0], Before):
        raise ProofError("expected (p1 < p2) => p")
    want = (imp[0].first, imp[0].second)[which]
    if imp[1] != want:
        raise ProofError("conclusion predicate must be the ordered one")


@rule("AA5")
def _r_aa5(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step)
    if not (isinstance(m.pre, Not) and isinstance(m.pre.sub, Pred)):
        raise ProofError("AA5 precondition must be a negated action predicate")
    if not alpha_eq(m.post, m.pre):
        raise ProofError("AA5 must preserve the negated predicate")
    p = m.pre.sub
    for s in statements(m.program):
        if not stmt_cannot_unify(s, p):
            raise ProofError(
                f"statement {s.label or s.action!r} can unify with the predicate")


@rule("AA6")
def _r_aa6(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step)
    if not (isinstance(m.pre, Not) and isinstance(m.pre.sub, Pred)):
        raise ProofError("AA6 precondition must be a negated action predicate")
    p = m.pre.sub
    candidates = [s for s in statements(m.program) if not stmt_cannot_unify(s, p)]
    if len(candidates) != 1:
        raise ProofError(
            f"AA6 needs exactly one statement able to unify with the predicate, "
            f"found {len(candidates)}")
    s = candidates[0]
    pairs = _stmt_eq_pairs(s, p)
    expected = Imp(p, conj([Eq(a, b) for a, b in pairs]))
    if not alpha_eq(m.post, expected):
        raise ProofError("AA6 postcondition does not match the schema")


@rule("START")
def _r_start(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_lift(step.conclusion)
    imp = split_imp(f)
    if imp is None or not isinstance(imp[0], StartF):
        raise ProofError("START must be Start(I) => ~pred")
    if not (isinstance(imp[1], Not) and isinstance(imp[1].sub, Pred)):
        raise ProofError("START consequent must be a negated action predicate")
    if imp[1].sub.args[0] != imp[0].thread:
        raise ProofError("START predicate thread must match Start's thread")


@rule("COMP1")
def _r_comp1(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_b0(step.conclusion)
    if not (isinstance(f, ContainsF) and f.part == f.whole):
        raise ProofError("COMP1 concludes Contains(m, m)")


@rule("COMP2")
def _r_comp2(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_b0(step.conclusion)
    imp = split_imp(f)
    if imp is None or not isinstance(imp[0], And):
        raise ProofError("COMP2 shape mismatch")
    c1, c2, c3 = imp[0].left, imp[0].right, imp[1]
    if not all(isinstance(c, ContainsF) for c in (c1, c2, c3)):
        raise ProofError("COMP2 shape mismatch")
    if not (c1.whole == c2.part and c3.part == c1.part and c3.whole == c2.whole):
        raise ProofError("COMP2 transitivity shape mismatch")


def _comp_tuple(step):
    f = _need_b0(step.conclusion)
    imp = split_imp(f)
    if imp is None or not (isinstance(imp[0], ContainsF) and isinstance(imp[1], ContainsF)):
        raise ProofError("expected Contains(n, mi) => Contains(n, <...>)")
    src, dst = imp
    if src.part != dst.part:
        raise ProofError("contained term must be preserved")
    if not (isinstance(dst.whole, TermTuple) and src.whole in dst.whole.items):
        raise ProofError("target must be a tuple having the source as a component")


@rule("COMP3")
def _r_comp3(step, prems, ctx):
    _arity(step, prems, 0)
    _comp_tuple(step)


@rule("COMP4")
def _r_comp4(step, prems, ctx):
    _arity(step, prems, 0)
    _comp_tuple(step)


@rule("COMP5")
def _r_comp5(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step)
    if not (isinstance(m.pre, ContainsF) and alpha_eq(m.post, m.pre)):
        raise ProofError("COMP5 must carry a Contains fact over a program")


@rule("COMP6")
def _r_comp6(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step, TRUE)
    stmts = statements(m.program)
    if len(stmts) != 1 or stmts[0].action != "sign":
        raise ProofError("COMP6 applies to a single sign statement")
    s = stmts[0]
    if m.post != ContainsF(s.arg, _result_term(s)):
        raise ProofError("COMP6 concludes Contains(message, signature)")


@rule("COMP7")
def _r_comp7(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step, TRUE)
    stmts = statements(m.program)
    if len(stmts) != 1 or stmts[0].action != "verify":
        raise ProofError("COMP7 applies to a single verify statement")
    arg = stmts[0].arg
    if not (isinstance(arg, TermTuple) and len(arg.items) == 3):
        raise ProofError("COMP7 verify argument must be a triple")
    if m.post != ContainsF(arg.items[0], arg.items[1]):
        raise ProofError("COMP7 concludes Contains(sig, msg)")


@rule("NCOMP")
def _r_ncomp(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_b0(step.conclusion)
    if not (isinstance(f, Not) and isinstance(f.sub, ContainsF)):
        raise ProofError("NCOMP concludes ~Contains(m, m')")
    a, b = f.sub.part, f.sub.whole
    if not (isinstance(a, Lit) and isinstance(b, Lit)
            and a.value.kind != "tuple" and b.value.kind != "tuple"):
        raise ProofError("NCOMP requires atomic literal terms")
    if a.value == b.value:
        raise ProofError("NCOMP requires distinct atoms")


def _match_fresh(f: Formula) -> Tuple[Term, Term]:
    """Recognize the Fresh(I, n) expansion; returns (thread, nonce)."""
    if isinstance(f, And) and isinstance(f.left, Pred) and f.left.kind == "New":
        thread, n = f.left.args
        if alpha_eq(f, fresh_formula(thread, n)):
            return thread, n
    raise ProofError("formula is not a Fresh(I, n) expansion")


@rule("FS1")
def _r_fs1(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step, TRUE)
    stmts = statements(m.program)
    if len(stmts) != 1 or stmts[0].action != "new":
        raise ProofError("FS1 applies to a single new statement")
    expected = fresh_formula(m.thread, _result_term(stmts[0]))
    if not alpha_eq(m.post, expected):
        raise ProofError("FS1 concludes Fresh(I, n)")


@rule("FS3")
def _r_fs3(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step)
    thread, n = _match_fresh(m.pre)
    if not alpha_eq(m.post, m.pre):
        raise ProofError("FS3 must preserve the Fresh fact")
    if thread != m.thread:
        raise ProofError("FS3 Fresh thread must be the modal thread")
    if any(s.action == "send" for s in statements(m.program)):
        raise ProofError("FS3 program must contain no send statements")


@rule("FS4")
def _r_fs4(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step)
    thread, n = _match_fresh(m.pre)
    stmts = statements(m.program)
    if len(stmts) != 1 or stmts[0].action != "send":
        raise ProofError("FS4 applies to a single send statement")
    expected = Imp(Not(ContainsF(n, stmts[0].arg)), m.pre)
    if not alpha_eq(m.post, expected):
        raise ProofError("FS4 postcondition does not match the schema")


@rule("FS5")
def _r_fs5(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step)
    thread, n = _match_fresh(m.pre)
    if thread != m.thread:
        raise ProofError("FS5 Fresh thread must be the modal thread")
    stmts = statements(m.program)
    if len(stmts) != 1 or stmts[0].action != "send":
        raise ProofError("FS5 applies to a single send statement")
    msg = stmts[0].arg
    expected = Imp(ContainsF(n, msg), firstsend_formula(m.thread, n, msg))
    if not alpha_eq(m.post, expected):
        raise ProofError("FS5 postcondition does not match the schema")


@rule("FSS")
def _r_fss(step, prems, ctx):
    _arity(step, prems, 0)
    m = _axiom_modal(step)
    if not (isinstance(m.pre, StartF) and m.pre.thread == m.thread):
        raise ProofError("FSS requires precondition Start on the modal thread")
    stmts = statements(m.program)
    # locate the FirstSend arguments from the conclusion
    post = m.post
    if not (isinstance(post, And) and isinstance(post.left, ContainsF)):
        raise ProofError("FSS concludes a FirstSend expansion")
    n, msg = post.left.part, post.left.whole
    if not alpha_eq(post, firstsend_formula(m.thread, n, msg)):
        raise ProofError("FSS concludes FirstSend(I, n, m)")
    new_idx = [i for i, s in enumerate(stmts)
               if s.action == "new" and _result_term(s) == n]
    if not new_idx:
        raise ProofError("FSS: the nonce is not generated by the program")
    if n not in _subterms(msg):
        raise ProofError("FSS: the message does not syntactically contain the nonce")
    sends = [i for i, s in enumerate(stmts) if s.action == "send"]
    if sends:
        first_send = stmts[sends[0]]
        if first_send.arg != msg:
            raise ProofError("FSS: the program's first send must be of the message")
        if sends[0] < new_idx[0]:
            raise ProofError("FSS: the nonce must be generated before the send")


def _subterms(t: Term) -> List[Term]:
    out = [t]
    if isinstance(t, (Proj, VerKey)):
        out.extend(_subterms(t.sub))
    elif isinstance(t, TermTuple):
        for x in t.items:
            out.extend(_subterms(x))
    return out


@rule("EQ1")
def _r_eq1(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_lift(step.conclusion)
    imp = split_imp(f)
    if imp is None or not isinstance(imp[0], Eq):
        raise ProofError("EQ1 must be <..> = <..> => componentwise equalities")
    l, r = imp[0].left, imp[0].right
    if not (isinstance(l, TermTuple) and isinstance(r, TermTuple)
            and len(l.items) == len(r.items)):
        raise ProofError("EQ1 applies to equal-arity tuples")
    expected = conj([Eq(a, b) for a, b in zip(l.items, r.items)])
    if conjuncts(imp[1]) != conjuncts(expected):
        raise ProofError("EQ1 consequent must equate components in order")


@rule("EQ2")
def _r_eq2(step, prems, ctx):
    _arity(step, prems, 0)
    f = _need_lift(step.conclusion)
    imp = split_imp(f)
    if imp is None or not (isinstance(imp[0], And) and isinstance(imp[0].right, Eq)):
        raise ProofError("EQ2 must be phi /\\ (x = t) => phi[t/x]")
    phi, eq = imp[0].left, imp[0].right
    psi = imp[1]
    options = []
    if isinstance(eq.left, Var):
        options.append((eq.left.name, eq.right))
    if isinstance(eq.right, Var):
        options.append((eq.right.name, eq.left))
    for var, t in options:
        try:
            if alpha_eq(subst_formula(phi, {var: t}), psi):
                return
        except Exception:
            continue
    raise ProofError("EQ2 consequent is not the substituted formula")


# ---------------------------------------------------------------------------
# The checking loop
# ---------------------------------------------------------------------------

def check_proof(steps: List[ProofStep], protocol: Protocol) -> Verdict:
    ctx = CheckContext(protocol)
    by_id: Dict[int, ProofStep] = {}
    diagnostics: List[str] = []
    ok_ids = set()
    for step in steps:
        problems: List[str] = []
        prems: List[ProofStep] = []
        for pid in step.premises:
            if pid >= step.id:
                problems.append(f"premise {pid} is not an earlier step")
            elif pid not in by_id:
                problems.append(f"premise {pid} does not exist")
            else:
                prems.append(by_id[pid])
                if pid not in ok_ids:
                    problems.append(f"premise {pid} was rejected")
        if not problems:
            hyp_keys = {render_formula(alpha_normalize(h)) for h in step.hypotheses}
            for p in prems:
                for h in p.hypotheses:
                    if render_formula(alpha_normalize(h)) not in hyp_keys:
                        problems.append(
                            f"hypothesis of premise {p.id} is not carried by this step")
        if not problems:
            checker = RULES.get(step.rule)
            if checker is None:
                problems.append(f"unknown rule {step.rule!r}")
            else:
                try:
                    checker(step, prems, ctx)
                except ProofError as e:
                    problems.append(str(e))
                except (LangError, Exception) as e:  # noqa: BLE001
                    problems.append(f"{type(e).__name__}: {e}")
        if problems:
            diagnostics.append(f"step {step.id} ({step.rule}): " + "; ".join(problems))
        else:
            ok_ids.add(step.id)
        by_id[step.id] = step
    accepted = not diagnostics and bool(steps)
    if not steps:
        diagnostics.append("empty proof script")
    bound = None
    conclusion = None
    if accepted:
        final = steps[-1]
        conclusion = final.conclusion
        try:
            from .logic import conclusion_bound

            bound = conclusion_bound(final.conclusion)
        except Exception as e:  # noqa: BLE001
            accepted = False
            diagnostics.append(f"final step {final.id}: {e}")
    return Verdict(
        accepted=accepted,
        bound=bound,
        diagnostics=diagnostics,
        safety_certified=accepted,
        conclusion=conclusion,
    )


def check_axiom_instance(rule_name: str, conclusion: Conditional,
                         instantiation: Tuple[Tuple[str, Term], ...],
                         protocol: Protocol,
                         hypotheses: Tuple[Formula, ...] = ()) -> bool:
    """Check one premise-free rule instance against its schema."""
    checker = RULES.get(rule_name)
    if checker is None:
        raise ProofError(f"unknown rule {rule_name!r}")
    step = ProofStep(1, tuple(hypotheses), conclusion, rule_name, (),
                     tuple(instantiation))
    try:
        checker(step, [], CheckContext(protocol))
    except ProofError:
        return False
    return True


def check_proof_text(text: str, protocol: Protocol) -> Verdict:
    try:
        steps = parse_script(text, protocol)
    except (ProofError, LangError) as e:
        return Verdict(False, None, [f"parse error: {e}"], False, None)
    return check_proof(steps, protocol)
