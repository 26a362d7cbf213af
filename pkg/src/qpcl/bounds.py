"""Symbolic error bounds and their concrete evaluation.

Proof conclusions carry bound expressions that are non-negative integer
combinations of two atoms: ``eVER`` (signature-forgery error) and
``eFS2`` (nonce-prediction error).  Sums of such expressions just add
the coefficients, so ``eVER + eFS2 + eFS2`` and ``eVER + 2*eFS2`` are
the same expression.

Concrete evaluation plugs in a security parameter, a runtime budget,
query counts, and a table of primitive advantage functions:

    eps_ver = ufcma(eta, tb + delta_s, q_sign)         delta_s = q_sign^2 * eta
    eps_fs2 = prg(eta, tb + delta_r, q_new) + l * q_recv * 2^-eta
                                                       delta_r = q_recv^2 * eta

where ``l`` bounds the number of nonce positions an adversary can probe
per received message.  A coarser variant of the guessing term,
``l * q_recv / (eta * 2^eta)``, is also available; it is smaller by a
factor of eta and is kept for comparison only.

Primitive advantage functions are either named toys (``ufcma_linear``,
``prg_zero``, ``prg_linear``) or small closed-form expressions over
``eta``, ``time``, ``q``, rational constants, and ``2^eta`` / ``2^-eta``.
All arithmetic is exact (fractions.Fraction); evaluated bounds are
clamped to [0, 1].
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Optional


class BoundError(Exception):
    pass


# ---------------------------------------------------------------------------
# Symbolic expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class EpsilonExpr:
    """Non-negative integer combination of the bound atoms."""
    ver: int = 0
    fs2: int = 0

    def __post_init__(self):
        if self.ver < 0 or self.fs2 < 0:
            raise BoundError("bound coefficients must be non-negative")

    def __add__(self, other: "EpsilonExpr") -> "EpsilonExpr":
        return EpsilonExpr(self.ver + other.ver, self.fs2 + other.fs2)

    def dominates(self, other: "EpsilonExpr") -> bool:
        """True when this expression is at least as large, coefficientwise."""
        return self.ver >= other.ver and self.fs2 >= other.fs2

    def is_zero(self) -> bool:
        return self.ver == 0 and self.fs2 == 0

    def __str__(self) -> str:
        parts = []
        for coeff, name in ((self.ver, "eVER"), (self.fs2, "eFS2")):
            if coeff == 1:
                parts.append(name)
            elif coeff > 1:
                parts.append(f"{coeff}*{name}")
        return " + ".join(parts) if parts else "0"


ZERO = EpsilonExpr()
EVER = EpsilonExpr(ver=1)
EFS2 = EpsilonExpr(fs2=1)

_ATOMS = {"eVER": EVER, "eFS2": EFS2}


def parse_epsilon_tokens(ts) -> EpsilonExpr:
    """Parse a bound expression from a language token stream."""
    total = _eps_term(ts)
    while ts.accept("SYM", "+"):
        total = total + _eps_term(ts)
    return total


def _eps_term(ts) -> EpsilonExpr:
    t = ts.peek()
    if t.kind == "INT":
        ts.next()
        n = int(t.text)
        if ts.accept("SYM", "*"):
            name = ts.expect("IDENT").text
            if name not in _ATOMS:
                raise BoundError(f"unknown bound atom {name!r}")
            base = _ATOMS[name]
            return EpsilonExpr(base.ver * n, base.fs2 * n)
        if n != 0:
            raise BoundError("bare integers other than 0 are not bound expressions")
        return ZERO
    if t.kind == "IDENT" and t.text in _ATOMS:
        ts.next()
        return _ATOMS[t.text]
    raise BoundError(f"line {t.line}: expected a bound expression, found {t.text!r}")


def parse_epsilon(src: str) -> EpsilonExpr:
    from .lang import TokenStream, tokenize

    ts = TokenStream(tokenize(src))
    e = parse_epsilon_tokens(ts)
    ts.expect("EOF")
    return e


# ---------------------------------------------------------------------------
# Primitive advantage functions
# ---------------------------------------------------------------------------

AdvantageFn = Callable[[int, Fraction, int], Fraction]  # (eta, time, q) -> advantage


def _ufcma_linear(eta: int, time: Fraction, q: int) -> Fraction:
    return Fraction(q, 2**eta)


def _prg_zero(eta: int, time: Fraction, q: int) -> Fraction:
    return Fraction(0)


def _prg_linear(eta: int, time: Fraction, q: int) -> Fraction:
    return Fraction(q, 2**eta)


NAMED_BOUNDS: Dict[str, AdvantageFn] = {
    "ufcma_linear": _ufcma_linear,
    "prg_zero": _prg_zero,
    "prg_linear": _prg_linear,
}


_EXPR_TOKEN = re.compile(r"\s*(\d+|[A-Za-z_][A-Za-z_0-9]*|\^|[-+*/()])")


def _expr_tokens(src: str):
    pos = 0
    out = []
    while pos < len(src):
        m = _EXPR_TOKEN.match(src, pos)
        if not m:
            raise BoundError(f"bad character in bound expression: {src[pos:]!r}")
        out.append(m.group(1))
        pos = m.end()
    out.append("<eof>")
    return out


class _ExprParser:
    """expr := term (('+'|'-') term)* ; term := pow (('*'|'/') pow)* ;
    pow := atom ('^' ['-'] atom)? ; atom := INT | eta | time | q | '(' expr ')'."""

    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def parse(self):
        node = self.expr()
        if self.peek() != "<eof>":
            raise BoundError(f"trailing input in bound expression: {self.peek()!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.next()
            rhs = self.term()
            node = (op, node, rhs)
        return node

    def term(self):
        node = self.pow()
        while self.peek() in ("*", "/"):
            op = self.next()
            rhs = self.pow()
            node = (op, node, rhs)
        return node

    def pow(self):
        node = self.atom()
        if self.peek() == "^":
            self.next()
            neg = False
            if self.peek() == "-":
                self.next()
                neg = True
            rhs = self.atom()
            node = ("^", node, ("neg", rhs) if neg else rhs)
        return node

    def atom(self):
        t = self.next()
        if t == "(":
            node = self.expr()
            if self.next() != ")":
                raise BoundError("unbalanced parentheses in bound expression")
            return node
        if t.isdigit():
            return ("num", int(t))
        if t in ("eta", "time", "q"):
            return ("var", t)
        raise BoundError(f"unexpected token in bound expression: {t!r}")


def _expr_eval(node, env: Dict[str, Fraction]) -> Fraction:
    tag = node[0]
    if tag == "num":
        return Fraction(node[1])
    if tag == "var":
        return env[node[1]]
    if tag == "neg":
        return -_expr_eval(node[1], env)
    a = _expr_eval(node[1], env)
    b = _expr_eval(node[2], env)
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    if tag == "*":
        return a * b
    if tag == "/":
        if b == 0:
            raise BoundError("division by zero in bound expression")
        return a / b
    if tag == "^":
        if b.denominator != 1:
            raise BoundError("exponents must be integers")
        return a ** int(b)
    raise BoundError(f"bad expression node {node!r}")


def advantage_from_expr(src: str) -> AdvantageFn:
    """Compile a closed-form advantage expression into a function."""
    tree = _ExprParser(_expr_tokens(src)).parse()

    def fn(eta: int, time: Fraction, q: int) -> Fraction:
        env = {"eta": Fraction(eta), "time": Fraction(time), "q": Fraction(q)}
        return _expr_eval(tree, env)

    return fn


def resolve_advantage(spec: str) -> AdvantageFn:
    spec = spec.strip()
    if spec in NAMED_BOUNDS:
        return NAMED_BOUNDS[spec]
    return advantage_from_expr(spec)


@dataclass
class BoundTable:
    """Primitive advantage functions for the two reductions."""
    ufcma: AdvantageFn = _ufcma_linear
    prg: AdvantageFn = _prg_linear
    ufcma_spec: str = "ufcma_linear"
    prg_spec: str = "prg_linear"


def parse_bound_table(text: str) -> BoundTable:
    """Parse ``name = spec`` lines (``#`` comments, blank lines ignored)."""
    table = BoundTable()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BoundError(f"line {lineno}: expected 'name = spec'")
        name, spec = (s.strip() for s in line.split("=", 1))
        if name == "ufcma":
            table.ufcma = resolve_advantage(spec)
            table.ufcma_spec = spec
        elif name == "prg":
            table.prg = resolve_advantage(spec)
            table.prg_spec = spec
        else:
            raise BoundError(f"line {lineno}: unknown primitive {name!r}")
    return table


# ---------------------------------------------------------------------------
# Concrete evaluation
# ---------------------------------------------------------------------------

@dataclass
class BoundParams:
    """Everything needed to turn a symbolic bound into a number."""
    eta: int
    tb: Fraction
    q_sign: int
    q_new: int
    q_recv: int
    l: int
    table: BoundTable = field(default_factory=BoundTable)
    guess_variant: str = "canonical"  # or "coarse"


def _clamp(x: Fraction) -> Fraction:
    if x < 0:
        return Fraction(0)
    if x > 1:
        return Fraction(1)
    return x


def eps_ver(p: BoundParams) -> Fraction:
    delta = Fraction(p.q_sign**2 * p.eta)
    return _clamp(p.table.ufcma(p.eta, p.tb + delta, p.q_sign))


def guess_term(p: BoundParams) -> Fraction:
    if p.guess_variant == "canonical":
        return Fraction(p.l * p.q_recv, 2**p.eta)
    if p.guess_variant == "coarse":
        return Fraction(p.l * p.q_recv, p.eta * 2**p.eta)
    raise BoundError(f"unknown guess variant {p.guess_variant!r}")


def eps_fs2(p: BoundParams) -> Fraction:
    delta = Fraction(p.q_recv**2 * p.eta)
    return _clamp(p.table.prg(p.eta, p.tb + delta, p.q_new) + guess_term(p))


def eval_epsilon(e: EpsilonExpr, p: BoundParams) -> Fraction:
    return _clamp(e.ver * eps_ver(p) + e.fs2 * eps_fs2(p))


# ---------------------------------------------------------------------------
# Action counting
# ---------------------------------------------------------------------------

def count_actions(protocol, instances_per_role: Dict[str, int]) -> Dict[str, int]:
    """Total sign / new / receive statements across the given numbers of
    sessions of each role."""
    from .lang import statements

    totals = {"sign": 0, "new": 0, "receive": 0, "send": 0, "verify": 0}
    for role in protocol.roles:
        n = instances_per_role.get(role.name, 0)
        for s in statements(role.body):
            totals[s.action] += n
    return totals
