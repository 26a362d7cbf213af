"""Built-in primitive implementations and adversaries.

Protocol-side toys:

* ``counter`` nonce generator: deterministic counter modulo 2^eta.
* ``uniform`` nonce generator: a 2^eta-way uniform branch (exhaustive
  random mode; keep eta tiny).
* ``constant`` nonce generator: always the same nonce.
* toy ``sign``: deterministic signature records with a truncated digest
  tag; toy ``verify``: accepts exactly a signature record by the claimed
  signer over the claimed message.  ``accept_any`` verify accepts
  everything and exists to demonstrate the VER monitor.

Adversaries (send / receive / scheduler over the shared ``('a',)`` cell):

* ``faithful``: a FIFO wire routing messages by recipient principal.
* ``dropper(p)``: faithful, but each send is lost with probability p.
* ``replayer``: never consumes messages, repeatedly delivering the oldest
  matching one.
* ``signature-guesser``: fabricates a signature record over a constant
  message and delivers it.
* ``nonce-guesser``: delivers a fixed guessed nonce.

All adversary state is kept in immutable tuples so configurations hash
and compare structurally.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .lang import (
    Atom,
    Sig,
    Tup,
    UNIT,
    Value,
    const,
    make_signature,
    nonce,
    principal,
    render_value,
    value_key,
)
from .runtime import (
    Abort,
    Implementation,
    Outcome,
    Ret,
    Setup,
    Switch,
    Wait,
)

ONE = Fraction(1)


def _thread_principal(thread: Value) -> Atom:
    return thread.items[0]


# ---------------------------------------------------------------------------
# Nonce generators (per-thread 'p' cells)
# ---------------------------------------------------------------------------

def thread_seed(thread: Value, offset: int = 0) -> int:
    """Deterministic per-thread seed so counter generators on different
    threads start at different nonces."""
    pname = str(_thread_principal(thread).payload)
    sess = thread.items[1].payload
    return sum(ord(c) for c in pname) * 17 + 5 * int(sess) + offset


class CounterNew(Implementation):
    """nonce_k = (seed + k) mod 2^eta; deterministic and collision-prone on
    purpose only when more nonces than 2^eta are drawn."""

    def __init__(self, eta: int, seed: int = 0):
        self.eta = eta
        self.seed = seed

    def initial_state(self):
        return self.seed

    def outcomes(self, state, value):
        k = state % (2 ** self.eta)
        return (Outcome(ONE, 1, state + 1, Ret(nonce(k))),)


class UniformNew(Implementation):
    def __init__(self, eta: int):
        self.eta = eta

    def initial_state(self):
        return 0

    def outcomes(self, state, value):
        n = 2 ** self.eta
        p = Fraction(1, n)
        return tuple(Outcome(p, 1, state + 1, Ret(nonce(k))) for k in range(n))


class ConstantNew(Implementation):
    def __init__(self, eta: int, payload: int = 0):
        self.payload = payload % (2 ** eta)

    def initial_state(self):
        return 0

    def outcomes(self, state, value):
        return (Outcome(ONE, 1, state + 1, Ret(nonce(self.payload))),)


# ---------------------------------------------------------------------------
# Signing primitives (per-principal 's' cells)
# ---------------------------------------------------------------------------

class ToySign(Implementation):
    def __init__(self, principal_name: str, eta: int):
        self.signer = principal(principal_name)
        self.eta = eta

    def initial_state(self):
        return 0

    def outcomes(self, state, value):
        sig = make_signature(self.signer, value, self.eta)
        return (Outcome(ONE, 1, state + 1, Ret(sig)),)


class ToyVerify(Implementation):
    """Structural check: input <sig, message, vk(name)>; accept when sig is
    a signature record by that name over that message."""

    def initial_state(self):
        return 0

    def outcomes(self, state, value):
        ok = False
        if isinstance(value, Tup) and len(value.items) == 3:
            sig, msg, key = value.items
            ok = (
                isinstance(sig, Sig)
                and isinstance(key, Atom)
                and key.kind == "vkey"
                and sig.signer.payload == key.payload
                and sig.message == msg
            )
        reaction = Ret(UNIT) if ok else Abort()
        return (Outcome(ONE, 1, state, reaction),)


class AcceptAnyVerify(Implementation):
    def initial_state(self):
        return 0

    def outcomes(self, state, value):
        return (Outcome(ONE, 1, state, Ret(UNIT)),)


# ---------------------------------------------------------------------------
# Adversaries
# ---------------------------------------------------------------------------

class _PerThread:
    """Adapter exposing an adversary bundle method as an Implementation for
    one fixed thread."""

    def __init__(self, fn, thread):
        self.fn = fn
        self.thread = thread

    def initial_state(self):
        raise NotImplementedError("adversary state lives in the shared cell")

    def outcomes(self, state, value):
        return self.fn(state, self.thread, value)


class _SchedulerAdapter:
    def __init__(self, fn):
        self.fn = fn

    def outcomes(self, state, value):
        return self.fn(state, value)


class AdversaryBundle:
    """Base class; subclasses implement on_send / on_receive / on_schedule
    over an immutable shared state."""

    name = "adversary"

    def initial_state(self):
        raise NotImplementedError

    def send(self, thread):
        return _PerThread(self.on_send, thread)

    def receive(self, thread):
        return _PerThread(self.on_receive, thread)

    def scheduler(self):
        return _SchedulerAdapter(self.on_schedule)

    # -- defaults ----------------------------------------------------------

    def on_schedule(self, state, waiting_ids: Tup):
        """Round-robin over the (sorted) waiting list, driven by a counter
        kept as the last component of the state tuple."""
        body, counter = state[:-1], state[-1]
        ids = waiting_ids.items
        target = ids[counter % len(ids)]
        return (Outcome(ONE, 1, body + (counter + 1,), Switch(target)),)


@dataclass(frozen=True)
class _WireMsg:
    recipient: str
    message: Value
    sender: str


def _split_send(thread, value):
    if not (isinstance(value, Tup) and len(value.items) == 2
            and isinstance(value.items[0], Atom) and value.items[0].kind == "principal"):
        # Unroutable sends are swallowed: the wire needs a recipient.
        return None
    recipient = str(value.items[0].payload)
    return _WireMsg(recipient, value.items[1], str(_thread_principal(thread).payload))


class FaithfulWire(AdversaryBundle):
    """FIFO queue keyed by recipient.  State: (pending tuple, rr counter)."""

    name = "faithful"

    def initial_state(self):
        return ((), 0)

    def on_send(self, state, thread, value):
        pending, ctr = state
        msg = _split_send(thread, value)
        if msg is not None:
            pending = pending + (msg,)
        return (Outcome(ONE, 1, (pending, ctr), Ret(UNIT)),)

    def on_receive(self, state, thread, value):
        pending, ctr = state
        me = str(_thread_principal(thread).payload)
        for i, m in enumerate(pending):
            if m.recipient == me:
                rest = pending[:i] + pending[i + 1 :]
                reply = Tup((m.message, principal(m.sender)))
                return (Outcome(ONE, 1, (rest, ctr), Ret(reply)),)
        return (Outcome(ONE, 1, (pending, ctr), Wait()),)


class Dropper(FaithfulWire):
    name = "dropper"

    def __init__(self, p_drop: Fraction):
        if not (0 < p_drop < 1):
            raise ValueError("drop probability must be strictly between 0 and 1")
        self.p_drop = Fraction(p_drop)

    def on_send(self, state, thread, value):
        pending, ctr = state
        msg = _split_send(thread, value)
        if msg is None:
            return (Outcome(ONE, 1, state, Ret(UNIT)),)
        kept = (Outcome(1 - self.p_drop, 1, (pending + (msg,), ctr), Ret(UNIT)))
        dropped = (Outcome(self.p_drop, 1, (pending, ctr), Ret(UNIT)))
        return (kept, dropped)


class Replayer(AdversaryBundle):
    """Keeps every message ever sent and re-delivers the oldest match on
    each receive, never consuming anything."""

    name = "replayer"

    def initial_state(self):
        return ((), 0)

    def on_send(self, state, thread, value):
        log, ctr = state
        msg = _split_send(thread, value)
        if msg is not None:
            log = log + (msg,)
        return (Outcome(ONE, 1, (log, ctr), Ret(UNIT)),)

    def on_receive(self, state, thread, value):
        log, ctr = state
        me = str(_thread_principal(thread).payload)
        for m in log:
            if m.recipient == me:
                reply = Tup((m.message, principal(m.sender)))
                return (Outcome(ONE, 1, (log, ctr), Ret(reply)),)
        return (Outcome(ONE, 1, (log, ctr), Wait()),)


class SignatureGuesser(AdversaryBundle):
    """Delivers <<sig, msg>, claimed-sender> where sig is a fabricated
    signature record by ``target`` over the constant ``message``."""

    name = "signature-guesser"

    def __init__(self, target: str, message: str, eta: int):
        self.target = target
        self.message = const(message)
        self.eta = eta

    def initial_state(self):
        return (0,)

    def on_send(self, state, thread, value):
        return (Outcome(ONE, 1, state, Ret(UNIT)),)

    def on_receive(self, state, thread, value):
        sig = make_signature(principal(self.target), self.message, self.eta)
        reply = Tup((Tup((sig, self.message)), principal(self.target)))
        return (Outcome(ONE, 1, state, Ret(reply)),)


class NonceGuesser(AdversaryBundle):
    """Delivers a fixed guessed nonce as the message on every receive."""

    name = "nonce-guesser"

    def __init__(self, guess: int, eta: int, claimed: str = "Eve"):
        self.guess = guess % (2 ** eta)
        self.claimed = claimed

    def initial_state(self):
        return (0,)

    def on_send(self, state, thread, value):
        return (Outcome(ONE, 1, state, Ret(UNIT)),)

    def on_receive(self, state, thread, value):
        reply = Tup((nonce(self.guess), principal(self.claimed)))
        return (Outcome(ONE, 1, state, Ret(reply)),)


# ---------------------------------------------------------------------------
# Setup assembly
# ---------------------------------------------------------------------------

NEW_IMPLS = {
    "counter": lambda eta, opts: (
        lambda thread: CounterNew(eta, thread_seed(thread, int(opts.get("seed", 0))))),
    "uniform": lambda eta, opts: (lambda thread: UniformNew(eta)),
    "constant": lambda eta, opts: (lambda thread: ConstantNew(eta, int(opts.get("payload", 0)))),
}

VERIFY_IMPLS = {
    "toy": lambda eta: (lambda pname: ToyVerify()),
    "accept_any": lambda eta: (lambda pname: AcceptAnyVerify()),
}


def make_setup(adversary: AdversaryBundle, eta: int,
               new_kind: str = "counter", new_opts: dict | None = None,
               verify_kind: str = "toy") -> Setup:
    new_opts = new_opts or {}
    if new_kind not in NEW_IMPLS:
        raise ValueError(f"unknown nonce generator {new_kind!r}")
    if verify_kind not in VERIFY_IMPLS:
        raise ValueError(f"unknown verify implementation {verify_kind!r}")
    return Setup(
        adversary=adversary,
        new_impl=NEW_IMPLS[new_kind](eta, new_opts),
        sign_impl=lambda pname: ToySign(pname, eta),
        verify_impl=VERIFY_IMPLS[verify_kind](eta),
    )


def make_adversary(name: str, eta: int, opts: dict | None = None) -> AdversaryBundle:
    opts = opts or {}
    if name == "faithful":
        return FaithfulWire()
    if name == "dropper":
        return Dropper(Fraction(opts.get("p", "1/2")))
    if name == "replayer":
        return Replayer()
    if name == "signature-guesser":
        return SignatureGuesser(opts.get("target", "B"), opts.get("message", "forged"), eta)
    if name == "nonce-guesser":
        return NonceGuesser(int(opts.get("guess", 0)), eta, opts.get("claimed", "Eve"))
    raise ValueError(f"unknown adversary {name!r}")
