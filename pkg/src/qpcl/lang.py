"""Protocol language core.

Values are the bitstring-like data protocol threads exchange: atoms
(principal names, nonces, string constants, session ids, verification
keys), signature records, and tuples.  Terms are the syntactic layer
evaluated against those values.  Programs are straight-line sequences of
labelled action statements ending in ``stop``.  Roles bundle a program
with its static parameters and a thread variable; a protocol is a named
list of roles.

The concrete DSL accepted by :func:`parse_protocol` looks like::

    protocol CR {
      role Init(Y) as A {
        m <- new;
        _ <- send <Y, m>;
        <<y, s>, N1> <- receive;
        _ <- verify <s, <"Resp", y, m, pi 1(A)>, vk(Y)>;
        r <- sign <"Init", y, m, Y>;
        _ <- send <Y, r>;
        stop
      }
      ...
    }

Tuple patterns get a fresh binder variable for the whole result; the
pattern variables stay in scope for later statements and are bound by
destructuring when the statement executes.  Statement labels default to
``RoleName:index`` and binder names are made globally unique.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


class LangError(Exception):
    """Raised for lexical, syntactic, or semantic protocol errors."""


class EvalError(Exception):
    """Raised when a term cannot be evaluated to a value."""


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    """An atomic value: kind is one of principal / nonce / const / session /
    vkey; payload is a name, an integer, or a string constant."""

    kind: str
    payload: Union[str, int]

    def __repr__(self) -> str:
        return f"Atom({self.kind!r}, {self.payload!r})"


@dataclass(frozen=True)
class Sig:
    """A signature record: signer principal, signed message, and a tag."""

    signer: Atom
    message: "Value"
    tag: bytes

    @property
    def kind(self) -> str:
        return "signature"


@dataclass(frozen=True)
class Tup:
    items: tuple

    @property
    def kind(self) -> str:
        return "tuple"


Value = Union[Atom, Sig, Tup]

#: The null tuple, written ``<>`` and pronounced "diamond".
UNIT: Value = Tup(())


def principal(name: str) -> Atom:
    return Atom("principal", name)


def nonce(value: int) -> Atom:
    return Atom("nonce", value)


def const(text: str) -> Atom:
    return Atom("const", text)


def session(index: int) -> Atom:
    return Atom("session", index)


def vkey(name: str) -> Atom:
    return Atom("vkey", name)


def thread_id(principal_name: str, session_index: int) -> Tup:
    """Thread identifiers are 2-tuples of a principal atom and a session
    atom; ``pi 1`` of a thread id is the owning principal."""
    return Tup((principal(principal_name), session(session_index)))


def make_signature(signer: Atom, message: Value, eta: int) -> Sig:
    """Deterministic toy signature: the tag is a truncated digest of the
    signer and rendered message, so re-signing the same message yields an
    identical value."""
    digest = hashlib.sha256(
        (signer.payload if isinstance(signer.payload, str) else str(signer.payload)).encode()
        + b"\x00"
        + render_value(message).encode()
    ).digest()
    nbytes = max(1, (eta + 7) // 8)
    return Sig(signer=signer, message=message, tag=digest[:nbytes])


def render_value(v: Value) -> str:
    if isinstance(v, Atom):
        if v.kind == "principal":
            return str(v.payload)
        if v.kind == "const":
            return f'"{v.payload}"'
        if v.kind == "nonce":
            return f"n:{v.payload:x}"
        if v.kind == "session":
            return f"#{v.payload}"
        if v.kind == "vkey":
            return f"vk({v.payload})"
        raise LangError(f"unknown atom kind {v.kind}")
    if isinstance(v, Sig):
        return f"sig[{v.signer.payload}]({render_value(v.message)}){v.tag.hex()}"
    if isinstance(v, Tup):
        return "<" + ", ".join(render_value(x) for x in v.items) + ">"
    raise LangError(f"not a value: {v!r}")


def value_key(v: Value):
    """Canonical sort key so collections of values can be ordered
    deterministically."""
    if isinstance(v, Atom):
        return (0, v.kind, str(v.payload))
    if isinstance(v, Sig):
        return (1, value_key(v.signer), value_key(v.message), v.tag)
    return (2, tuple(value_key(x) for x in v.items))


def subvalues(v: Value) -> Iterator[Value]:
    """All subvalues of v, including v itself.  Tuples open up into their
    components and signatures expose the signed message."""
    yield v
    if isinstance(v, Tup):
        for x in v.items:
            yield from subvalues(x)
    elif isinstance(v, Sig):
        yield v.signer
        yield from subvalues(v.message)


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class VerKey:
    sub: "Term"


@dataclass(frozen=True)
class TermTuple:
    items: tuple


@dataclass(frozen=True)
class Proj:
    index: int  # 1-based
    sub: "Term"


Term = Union[Var, Lit, VerKey, TermTuple, Proj]


def term_vars(t: Term) -> set:
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, Lit):
        return set()
    if isinstance(t, VerKey):
        return term_vars(t.sub)
    if isinstance(t, Proj):
        return term_vars(t.sub)
    if isinstance(t, TermTuple):
        out: set = set()
        for x in t.items:
            out |= term_vars(x)
        return out
    raise LangError(f"not a term: {t!r}")


def eval_term(t: Term) -> tuple:
    """Evaluate a closed term.  Returns ``(value, cost)`` where cost is the
    number of value-constructing nodes visited; projections are free index
    lookups and contribute no cost of their own."""
    if isinstance(t, Var):
        raise EvalError(f"unbound variable {t.name!r}")
    if isinstance(t, Lit):
        return t.value, 1
    if isinstance(t, VerKey):
        v, c = eval_term(t.sub)
        if not (isinstance(v, Atom) and v.kind == "principal"):
            raise EvalError(f"vk applied to non-principal {render_value(v)}")
        return vkey(str(v.payload)), c + 1
    if isinstance(t, TermTuple):
        vals = []
        cost = 1
        for x in t.items:
            v, c = eval_term(x)
            vals.append(v)
            cost += c
        return Tup(tuple(vals)), cost
    if isinstance(t, Proj):
        v, c = eval_term(t.sub)
        if not isinstance(v, Tup) or not (1 <= t.index <= len(v.items)):
            raise EvalError(f"projection pi {t.index} undefined on {render_value(v)}")
        return v.items[t.index - 1], c
    raise LangError(f"not a term: {t!r}")


def substitute(t: Term, bindings: dict) -> Term:
    """Substitute terms for variables.  Bindings map variable names to
    Terms (plain Values are wrapped in Lit)."""
    if isinstance(t, Var):
        if t.name in bindings:
            b = bindings[t.name]
            return Lit(b) if not isinstance(b, (Var, Lit, VerKey, TermTuple, Proj)) else b
        return t
    if isinstance(t, Lit):
        return t
    if isinstance(t, VerKey):
        return VerKey(substitute(t.sub, bindings))
    if isinstance(t, Proj):
        return Proj(t.index, substitute(t.sub, bindings))
    if isinstance(t, TermTuple):
        return TermTuple(tuple(substitute(x, bindings) for x in t.items))
    raise LangError(f"not a term: {t!r}")


def render_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Lit):
        v = t.value
        if isinstance(v, Atom) and v.kind == "principal":
            return f"principal({v.payload})"
        if isinstance(v, Atom) and v.kind == "const":
            return f'"{v.payload}"'
        return render_value(v)
    if isinstance(t, VerKey):
        return f"vk({render_term(t.sub)})"
    if isinstance(t, Proj):
        return f"pi {t.index}({render_term(t.sub)})"
    if isinstance(t, TermTuple):
        return "<" + ", ".join(render_term(x) for x in t.items) + ">"
    raise LangError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# Patterns and programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PWild:
    pass


@dataclass(frozen=True)
class PTup:
    items: tuple


Pattern = Union[PVar, PWild, PTup]

ACTIONS = ("new", "send", "receive", "sign", "verify")

#: Reactions each action may legitimately receive, per the action table.
PERMITTED_REACTIONS = {
    "new": ("ret",),
    "send": ("ret_unit",),
    "receive": ("ret", "wait"),
    "sign": ("ret",),
    "verify": ("ret_unit", "abort"),
}


def pattern_vars(p: Pattern) -> list:
    if isinstance(p, PVar):
        return [p.name]
    if isinstance(p, PWild):
        return []
    out = []
    for q in p.items:
        out.extend(pattern_vars(q))
    return out


def render_pattern(p: Pattern) -> str:
    if isinstance(p, PVar):
        return p.name
    if isinstance(p, PWild):
        return "_"
    return "<" + ", ".join(render_pattern(q) for q in p.items) + ">"


def pattern_term(p: Pattern, wild_name: str = "_") -> Term:
    """The pattern read back as a term; wildcards become a throwaway var."""
    if isinstance(p, PVar):
        return Var(p.name)
    if isinstance(p, PWild):
        return Var(wild_name)
    return TermTuple(tuple(pattern_term(q) for q in p.items))


def pattern_projections(p: Pattern, base: Term) -> dict:
    """Map each pattern variable to the projection of ``base`` selecting it."""
    out: dict = {}
    if isinstance(p, PVar):
        out[p.name] = base
    elif isinstance(p, PTup):
        for i, q in enumerate(p.items, start=1):
            out.update(pattern_projections(q, Proj(i, base)))
    return out


def destructure(p: Pattern, v: Value) -> Optional[dict]:
    """Bind pattern variables against a value; None on shape mismatch."""
    if isinstance(p, PWild):
        return {}
    if isinstance(p, PVar):
        return {p.name: v}
    if not (isinstance(v, Tup) and len(v.items) == len(p.items)):
        return None
    out: dict = {}
    for q, item in zip(p.items, v.items):
        sub = destructure(q, item)
        if sub is None:
            return None
        out.update(sub)
    return out


@dataclass(frozen=True)
class Stop:
    pass


@dataclass(frozen=True)
class Stmt:
    label: str
    binder: str
    pattern: Pattern
    action: str
    arg: Term
    rest: "Program"


Program = Union[Stop, Stmt]

STOP: Program = Stop()


def statements(p: Program) -> list:
    out = []
    while isinstance(p, Stmt):
        out.append(p)
        p = p.rest
    return out


def program_of(stmts: list) -> Program:
    prog: Program = STOP
    for s in reversed(stmts):
        prog = Stmt(s.label, s.binder, s.pattern, s.action, s.arg, prog)
    return prog


def program_binders(p: Program) -> list:
    """Binder and pattern variable names introduced by a program, in order."""
    out = []
    for s in statements(p):
        out.append(s.binder)
        for name in pattern_vars(s.pattern):
            if name != s.binder:
                out.append(name)
    return out


def subst_program(p: Program, bindings: dict) -> Program:
    """Substitute into statement argument terms.  Binders shadow."""
    if isinstance(p, Stop):
        return p
    live = {k: v for k, v in bindings.items()}
    arg = substitute(p.arg, live)
    for name in [p.binder] + pattern_vars(p.pattern):
        live.pop(name, None)
    return Stmt(p.label, p.binder, p.pattern, p.action, arg, subst_program(p.rest, live))


def program_free_vars(p: Program) -> set:
    fv: set = set()
    bound: set = set()
    for s in statements(p):
        fv |= term_vars(s.arg) - bound
        bound.add(s.binder)
        bound.update(pattern_vars(s.pattern))
    return fv


# ---------------------------------------------------------------------------
# Roles and protocols
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Role:
    name: str
    params: tuple
    thread_var: str
    body: Program


@dataclass(frozen=True)
class Protocol:
    name: str
    roles: tuple

    def role(self, name: str) -> Role:
        for r in self.roles:
            if r.name == name:
                return r
        raise LangError(f"no role named {name!r}")


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_KEYWORDS = {
    "protocol", "role", "as", "stop",
    "new", "send", "receive", "sign", "verify",
    "pi", "vk", "principal",
}

_SYMBOLS = [
    "<-", "->", "/\\", "\\/", "=>", "..", "]_",
    "<", ">", "(", ")", "{", "}", "[", "]",
    ",", ";", ":", "=", "~", "#", "_", ".", "|-", "+", "*", "-",
]


@dataclass
class Token:
    kind: str  # IDENT, INT, STRING, KW, SYM, EOF
    text: str
    pos: int
    line: int


def tokenize(src: str) -> list:
    toks = []
    i, n = 0, len(src)
    line = 1
    while i < n:
        c = src[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            continue
        if c == "%":  # comment to end of line
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c == '"':
            j = i + 1
            while j < n and src[j] != '"':
                if src[j] == "\n":
                    raise LangError(f"line {line}: unterminated string")
                j += 1
            if j >= n:
                raise LangError(f"line {line}: unterminated string")
            toks.append(Token("STRING", src[i + 1 : j], i, line))
            i = j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Token("INT", src[i:j], i, line))
            i = j
            continue
        if c.isalpha():
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            toks.append(Token("KW" if word in _KEYWORDS else "IDENT", word, i, line))
            i = j
            continue
        matched = False
        for sym in _SYMBOLS:
            if src.startswith(sym, i):
                toks.append(Token("SYM", sym, i, line))
                i += len(sym)
                matched = True
                break
        if not matched:
            raise LangError(f"line {line}: unexpected character {c!r}")
    toks.append(Token("EOF", "", n, line))
    return toks


class TokenStream:
    def __init__(self, tokens: list):
        self.tokens = tokens
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            raise LangError(f"line {t.line}: expected {want!r}, found {t.text!r}")
        return self.next()

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        t = self.peek()
        if t.kind == kind and (text is None or t.text == text):
            return self.next()
        return None


# ---------------------------------------------------------------------------
# Term and pattern parsing (shared with the formula language)
# ---------------------------------------------------------------------------

def parse_term(ts: TokenStream) -> Term:
    t = ts.peek()
    if t.kind == "IDENT":
        ts.next()
        return Var(t.text)
    if t.kind == "STRING":
        ts.next()
        return Lit(const(t.text))
    if t.kind == "SYM" and t.text == "<":
        ts.next()
        items = [parse_term(ts)]
        while ts.accept("SYM", ","):
            items.append(parse_term(ts))
        ts.expect("SYM", ">")
        return TermTuple(tuple(items))
    if t.kind == "KW" and t.text == "pi":
        ts.next()
        idx = int(ts.expect("INT").text)
        ts.expect("SYM", "(")
        sub = parse_term(ts)
        ts.expect("SYM", ")")
        return Proj(idx, sub)
    if t.kind == "KW" and t.text == "vk":
        ts.next()
        ts.expect("SYM", "(")
        sub = parse_term(ts)
        ts.expect("SYM", ")")
        return VerKey(sub)
    if t.kind == "KW" and t.text == "principal":
        ts.next()
        ts.expect("SYM", "(")
        name = ts.expect("IDENT").text
        ts.expect("SYM", ")")
        return Lit(principal(name))
    raise LangError(f"line {t.line}: expected a term, found {t.text!r}")


def parse_pattern(ts: TokenStream) -> Pattern:
    t = ts.peek()
    if t.kind == "SYM" and t.text == "_":
        ts.next()
        return PWild()
    if t.kind == "IDENT":
        ts.next()
        return PVar(t.text)
    if t.kind == "SYM" and t.text == "<":
        ts.next()
        items = [parse_pattern(ts)]
        while ts.accept("SYM", ","):
            items.append(parse_pattern(ts))
        ts.expect("SYM", ">")
        return PTup(tuple(items))
    raise LangError(f"line {t.line}: expected a pattern, found {t.text!r}")


# ---------------------------------------------------------------------------
# Program / role / protocol parsing
# ---------------------------------------------------------------------------

def parse_statements(ts: TokenStream, role_name: str, fresh: "_FreshNames",
                     check_scope: bool = True,
                     scope: Optional[set] = None) -> list:
    """Parse ``stmt* stop``.  Returns raw statements (pattern binders are
    desugared here)."""
    stmts = []
    in_scope = set(scope or set())
    index = 0
    while True:
        if ts.accept("KW", "stop"):
            break
        index += 1
        label = f"{role_name}:{index}"
        if ts.peek().kind == "IDENT" and ts.peek(1).kind == "SYM" and ts.peek(1).text == ":":
            # `name:` or the two-part default form `Role:index:`.
            if (ts.peek(2).kind == "INT" and ts.peek(3).kind == "SYM"
                    and ts.peek(3).text == ":"):
                stem = ts.next().text
                ts.next()
                label = f"{stem}:{ts.next().text}"
                ts.next()
            else:
                label = ts.next().text
                ts.next()
        pat: Pattern = PWild()
        saved = ts.pos
        try:
            maybe = parse_pattern(ts)
            ts.expect("SYM", "<-")
            pat = maybe
        except LangError:
            ts.pos = saved
        action_tok = ts.peek()
        if not (action_tok.kind == "KW" and action_tok.text in ACTIONS):
            raise LangError(f"line {action_tok.line}: expected an action, found {action_tok.text!r}")
        ts.next()
        action = action_tok.text
        if action in ("new", "receive"):
            arg: Term = Lit(UNIT)
        else:
            arg = parse_term(ts)
        ts.expect("SYM", ";")
        if check_scope:
            missing = term_vars(arg) - in_scope
            if missing:
                raise LangError(
                    f"role {role_name}: free variable(s) {sorted(missing)} in statement {label}")
        # Desugar: tuple patterns get a fresh binder plus projections in the
        # continuation; wildcards get a throwaway binder.
        if isinstance(pat, PVar):
            binder = fresh.claim(pat.name, role_name)
            if binder != pat.name:
                pat = PVar(binder)
        elif isinstance(pat, PWild):
            binder = fresh.make(f"_{role_name}_{index}")
        else:
            binder = fresh.make(f"v_{role_name}_{index}")
            renamed = []
            for name in pattern_vars(pat):
                new_name = fresh.claim(name, role_name)
                if new_name != name:
                    renamed.append((name, new_name))
            if renamed:
                pat = _rename_pattern(pat, dict(renamed))
        for name in [binder] + pattern_vars(pat):
            in_scope.add(name)
        stmts.append(Stmt(label, binder, pat, action, arg, STOP))
    return stmts


def _rename_pattern(p: Pattern, mapping: dict) -> Pattern:
    if isinstance(p, PVar):
        return PVar(mapping.get(p.name, p.name))
    if isinstance(p, PWild):
        return p
    return PTup(tuple(_rename_pattern(q, mapping) for q in p.items))


class _FreshNames:
    """Tracks binder names so every binder in a protocol is unique."""

    def __init__(self) -> None:
        self.used: set = set()

    def claim(self, name: str, qualifier: str) -> str:
        if name not in self.used:
            self.used.add(name)
            return name
        candidate = f"{name}_{qualifier}"
        k = 1
        while candidate in self.used:
            k += 1
            candidate = f"{name}_{qualifier}{k}"
        self.used.add(candidate)
        return candidate

    def make(self, stem: str) -> str:
        return self.claim(stem, "x")


def parse_protocol(src: str) -> Protocol:
    ts = TokenStream(tokenize(src))
    ts.expect("KW", "protocol")
    name = ts.expect("IDENT").text
    ts.expect("SYM", "{")
    roles = []
    seen_names: set = set()
    seen_labels: set = set()
    fresh = _FreshNames()
    while not ts.accept("SYM", "}"):
        ts.expect("KW", "role")
        rname = ts.expect("IDENT").text
        if rname in seen_names:
            raise LangError(f"duplicate role name {rname!r}")
        seen_names.add(rname)
        ts.expect("SYM", "(")
        params = []
        if ts.peek().kind == "IDENT":
            params.append(ts.next().text)
            while ts.accept("SYM", ","):
                params.append(ts.expect("IDENT").text)
        ts.expect("SYM", ")")
        ts.expect("KW", "as")
        tvar = ts.expect("IDENT").text
        for p in params + [tvar]:
            fresh.used.add(p)
        ts.expect("SYM", "{")
        scope = set(params) | {tvar}
        stmts = parse_statements(ts, rname, fresh, check_scope=True, scope=scope)
        ts.expect("SYM", "}")
        for s in stmts:
            if s.label in seen_labels:
                raise LangError(f"duplicate statement label {s.label!r}")
            seen_labels.add(s.label)
        roles.append(Role(rname, tuple(params), tvar, program_of(stmts)))
    ts.expect("EOF")
    return Protocol(name, tuple(roles))


def parse_inline_program(ts: TokenStream) -> Program:
    """Parse ``{ stmt* stop }`` with no scoping checks; used inside formulas."""
    ts.expect("SYM", "{")
    stmts = parse_statements(ts, "inline", _FreshNames(), check_scope=False)
    ts.expect("SYM", "}")
    return program_of(stmts)


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

def render_statement(s: Stmt) -> str:
    lhs = render_pattern(s.pattern)
    arg = "" if s.action in ("new", "receive") else " " + render_term(s.arg)
    return f"{s.label}: {lhs} <- {s.action}{arg};"


def render_program(p: Program, indent: str = "    ") -> str:
    lines = [indent + render_statement(s) for s in statements(p)]
    lines.append(indent + "stop")
    return "\n".join(lines)


def render_protocol(proto: Protocol) -> str:
    parts = [f"protocol {proto.name} {{"]
    for r in proto.roles:
        params = ", ".join(r.params)
        parts.append(f"  role {r.name}({params}) as {r.thread_var} {{")
        parts.append(render_program(r.body))
        parts.append("  }")
    parts.append("}")
    return "\n".join(parts)
