#!/usr/bin/env python3
"""Generate corpus/cr.qpclproof, the matching-conversations proof for CR.

The script derives, for the challenge-response protocol in corpus/cr.qpcl
and under the single hypothesis Honest(principal(B)), the belief

    B{eVER + 2*eFS2} Start(A) [#Init(principal(B))]_ A exists i. (...)

stating that when an initiator thread A talking to the honest principal B
completes its role, some responder session i of B received A's challenge,
signed and first-sent its response nonce, and the four message events
interleave in matching-conversation order.

Outline: the VER axiom turns the initiator's verify into an existential
Sign fact; the HON rule establishes a role invariant tying any "Resp"
signature to the signer's receive, first-send, and local ordering; two
FS2 instances order the nonce exchanges across threads; PCand/PCIMP-B
steps merge everything under the existential inside the modal.

Run from the repository root:  python3 tools/gen_cr_proof.py
"""

import io
import os
import sys

HYP = "Honest(principal(B))"

# -- formula templates -------------------------------------------------------

IB = "<principal(B), i>"
RESP_A = '<"Resp", y, m, pi 1(A)>'          # what the initiator verifies
VERIFY = f"Verify(A, s, {RESP_A}, principal(B))"
SIGN_I = f"Sign({IB}, s, {RESP_A})"

RECV_IB = f"Receive({IB}, <m, pi 1(A)>)"
SEND_A1 = "Send(A, <principal(B), m>)"
SEND_IB = f"Send({IB}, <pi 1(A), <y, s>>)"
RECV_A = "Receive(A, <<y, s>, N1>)"
FS_A = "FirstSend(A, m, <principal(B), m>)"
FS_IB = f"FirstSend({IB}, y, <pi 1(A), <y, s>>)"
C1 = "Contains(m, <m, pi 1(A)>)"
C2 = "Contains(y, <<y, s>, N1>)"

FRAME = "Start(A) [#Init(principal(B))]_ A"


def inv(Z, s1, y1, m1, W1):
    """The HON invariant: a "Resp" signature implies the signer received
    the challenge, first-sent its nonce, and did so in order."""
    sg = f'Sign({Z}, s1x, <"Resp", y1x, m1x, W1x>)'
    recv = f"Receive({Z}, <m1x, W1x>)"
    fs = f"FirstSend({Z}, y1x, <W1x, <y1x, s1x>>)"
    snd = f"Send({Z}, <W1x, <y1x, s1x>>)"
    body = f"{sg} => ({recv} /\\ {fs} /\\ ({snd} => ({recv} < {snd})))"
    return (body.replace("s1x", s1).replace("y1x", y1)
                .replace("m1x", m1).replace("W1x", W1))


INV = inv("Z", "s1", "y1", "m1", "W1")
SG = 'Sign(Z, s1, <"Resp", y1, m1, W1>)'
SENDP = "Send(Z, <W1, <y1, s1>>)"


class Script:
    def __init__(self):
        self.lines = []
        self.next_id = 1

    def comment(self, text=""):
        self.lines.append(f"# {text}" if text else "#")

    def step(self, concl, rule, prems=(), with_=None):
        sid = self.next_id
        self.next_id += 1
        cite = f"({', '.join(str(p) for p in prems)})" if prems else "()"
        line = f"step {sid} hyp: {HYP} |- {concl} by {rule}{cite}"
        if with_:
            line += " with " + ", ".join(f"{v} = {t}" for v, t in with_)
        self.lines.append(line)
        return sid

    def text(self):
        return "\n".join(self.lines) + "\n"


def hon_prefix(sc, role, k, start_to_nsign, nsign_to_inv):
    """A prefix with no unifiable sign: carry the negated Sign through."""
    a = sc.step(f"B{{0}} (~{SG}) [#{role}:1..{k}]_ Z (~{SG})", "AA5")
    b = sc.step(f"(~{SG}) [#{role}:1..{k}]_ Z (~{SG})", "B4", [a])
    d = sc.step(f"Start(Z) [#{role}:1..{k}]_ Z ({INV})", "G3",
                [start_to_nsign, b, nsign_to_inv])
    return sc.step(f"forall Z. (Start(Z) [#{role}:1..{k}]_ Z ({INV}))",
                   "FORALL-INTRO", [d])


def resp_sign_prefix(sc, k, shared):
    """A Resp prefix covering the sign statement (k >= 3)."""
    eqs = '(t = s1 /\\ <"Resp", n, x, W> = <"Resp", y1, m1, W1>)'
    sig_post = f"({SG} => {eqs})"
    recv = "Receive(Z, <x, W>)"
    fs = "FirstSend(Z, n, <W, <n, t>>)"
    ord_raw = f"({recv} < Send(Z, <W, <n, t>>))"

    a1 = sc.step(f"B{{0}} (~{SG}) [#Resp:1..{k}]_ Z {sig_post}", "AA6")
    a2 = sc.step(f"(~{SG}) [#Resp:1..{k}]_ Z {sig_post}", "B4", [a1])
    a3 = sc.step(f"Start(Z) [#Resp:1..{k}]_ Z {sig_post}", "G3",
                 [shared["start_nsign"], a2, shared["id_sig"]])

    b1 = sc.step(f"B{{0}} true [#Resp:1..{k}]_ Z {recv}", "AA1")
    b2 = sc.step(f"true [#Resp:1..{k}]_ Z {recv}", "B4", [b1])
    b3 = sc.step(f"Start(Z) [#Resp:1..{k}]_ Z {recv}", "G3",
                 [shared["start_true"], b2, shared["id_recv"]])

    c1 = sc.step(f"B{{0}} Start(Z) [#Resp:1..{k}]_ Z {fs}", "FSS")
    c2 = sc.step(f"Start(Z) [#Resp:1..{k}]_ Z {fs}", "B4", [c1])

    if k == 3:
        ordf = f"(~{SENDP})"
        d1 = sc.step(f"B{{0}} {ordf} [#Resp:1..{k}]_ Z {ordf}", "AA5")
        d2 = sc.step(f"{ordf} [#Resp:1..{k}]_ Z {ordf}", "B4", [d1])
        id_ord = sc.step(f"{ordf} => {ordf}", "FO-TAUT")
        d3 = sc.step(f"Start(Z) [#Resp:1..{k}]_ Z {ordf}", "G3",
                     [shared["start_nsend"], d2, id_ord])
    else:
        ordf = ord_raw
        d1 = sc.step(f"B{{0}} true [#Resp:1..{k}]_ Z {ordf}", "AA2")
        d2 = sc.step(f"true [#Resp:1..{k}]_ Z {ordf}", "B4", [d1])
        id_ord = sc.step(f"{ordf} => {ordf}", "FO-TAUT")
        d3 = sc.step(f"Start(Z) [#Resp:1..{k}]_ Z {ordf}", "G3",
                     [shared["start_true"], d2, id_ord])

    raw = f"({sig_post} /\\ {recv} /\\ {fs} /\\ {ordf})"
    g = sc.step(f"Start(Z) [#Resp:1..{k}]_ Z {raw}", "G1", [a3, b3, c2, d3])

    taut_prems = [shared["eq1"], shared["q_recv1"], shared["q_recv2"],
                  shared["q_fs1"], shared["q_fs2"], shared["q_fs3"]]
    if k >= 4:
        taut_prems += shared["q_ord"]
    m = sc.step(f"({raw}) => ({INV})", "FO-TAUT", taut_prems)
    d = sc.step(f"Start(Z) [#Resp:1..{k}]_ Z ({INV})", "G3",
                [shared["start_id"], g, m])
    return sc.step(f"forall Z. (Start(Z) [#Resp:1..{k}]_ Z ({INV}))",
                   "FORALL-INTRO", [d])


def main():
    sc = Script()
    sc.comment("Matching-conversations proof for the CR protocol.")
    sc.comment(f"Hypothesis: {HYP}.")
    sc.comment("Generated by tools/gen_cr_proof.py; edit that script, not this file.")
    sc.comment()

    sc.comment("-- shared first-order lemmas --")
    start_nsign = sc.step(f"Start(Z) => (~{SG})", "START")
    start_nsend = sc.step(f"Start(Z) => (~{SENDP})", "START")
    start_true = sc.step("Start(Z) => true", "FO-TAUT")
    start_id = sc.step("Start(Z) => Start(Z)", "FO-TAUT")
    nsign_to_inv = sc.step(f"(~{SG}) => ({INV})", "FO-TAUT")

    eqs = '(t = s1 /\\ <"Resp", n, x, W> = <"Resp", y1, m1, W1>)'
    id_sig = sc.step(f"({SG} => {eqs}) => ({SG} => {eqs})", "FO-TAUT")
    id_recv = sc.step("Receive(Z, <x, W>) => Receive(Z, <x, W>)", "FO-TAUT")

    sc.comment("-- equality reasoning for the signed components --")
    eq1 = sc.step('(<"Resp", n, x, W> = <"Resp", y1, m1, W1>) => '
                  '("Resp" = "Resp" /\\ n = y1 /\\ x = m1 /\\ W = W1)', "EQ1")
    q_recv1 = sc.step("(Receive(Z, <x, W>) /\\ x = m1) => Receive(Z, <m1, W>)", "EQ2")
    q_recv2 = sc.step("(Receive(Z, <m1, W>) /\\ W = W1) => Receive(Z, <m1, W1>)", "EQ2")
    q_fs1 = sc.step("(FirstSend(Z, n, <W, <n, t>>) /\\ n = y1) => "
                    "FirstSend(Z, y1, <W, <y1, t>>)", "EQ2")
    q_fs2 = sc.step("(FirstSend(Z, y1, <W, <y1, t>>) /\\ W = W1) => "
                    "FirstSend(Z, y1, <W1, <y1, t>>)", "EQ2")
    q_fs3 = sc.step("(FirstSend(Z, y1, <W1, <y1, t>>) /\\ t = s1) => "
                    "FirstSend(Z, y1, <W1, <y1, s1>>)", "EQ2")
    q_ord = [
        sc.step("((Receive(Z, <x, W>) < Send(Z, <W, <n, t>>)) /\\ x = m1) => "
                "(Receive(Z, <m1, W>) < Send(Z, <W, <n, t>>))", "EQ2"),
        sc.step("((Receive(Z, <m1, W>) < Send(Z, <W, <n, t>>)) /\\ W = W1) => "
                "(Receive(Z, <m1, W1>) < Send(Z, <W1, <n, t>>))", "EQ2"),
        sc.step("((Receive(Z, <m1, W1>) < Send(Z, <W1, <n, t>>)) /\\ n = y1) => "
                "(Receive(Z, <m1, W1>) < Send(Z, <W1, <y1, t>>))", "EQ2"),
        sc.step("((Receive(Z, <m1, W1>) < Send(Z, <W1, <y1, t>>)) /\\ t = s1) => "
                "(Receive(Z, <m1, W1>) < Send(Z, <W1, <y1, s1>>))", "EQ2"),
    ]
    shared = dict(start_nsign=start_nsign, start_nsend=start_nsend,
                  start_true=start_true, start_id=start_id,
                  id_sig=id_sig, id_recv=id_recv,
                  eq1=eq1, q_recv1=q_recv1, q_recv2=q_recv2,
                  q_fs1=q_fs1, q_fs2=q_fs2, q_fs3=q_fs3, q_ord=q_ord)

    sc.comment("-- HON obligations: base case --")
    base_imp = sc.step(f"Start(Z) => ({INV})", "FO-TAUT", [start_nsign])
    base = sc.step(f"forall Z. (Start(Z) => ({INV}))", "FORALL-INTRO", [base_imp])

    hon_prems = [base]
    sc.comment("-- HON obligations: Init prefixes (no unifiable sign) --")
    for k in range(1, 7):
        hon_prems.append(hon_prefix(sc, "Init", k, start_nsign, nsign_to_inv))
    sc.comment("-- HON obligations: Resp prefixes before its sign --")
    for k in (1, 2):
        hon_prems.append(hon_prefix(sc, "Resp", k, start_nsign, nsign_to_inv))
    sc.comment("-- HON obligations: Resp prefixes covering the sign --")
    for k in (3, 4, 5, 6):
        hon_prems.append(resp_sign_prefix(sc, k, shared))

    sc.comment("-- the invariant, and its instantiation at B's session --")
    hon = sc.step(f"({INV})", "HON", hon_prems)
    cur = hon
    for var, val in _ELIM_ORDER:
        closed = sc.step(f"forall {var}. ({_cur_inv(var)})",
                         "FORALL-INTRO", [cur])
        cur = sc.step(f"({_next_inv(var)})", "FORALL-ELIM", [closed],
                      with_=[(var, val)])
    inv_inst = cur

    sc.comment("-- the initiator's verify, through the VER axiom --")
    v1 = sc.step(f"B{{0}} true [#Init(principal(B))]_ A {VERIFY}", "AA1")
    v2 = sc.step(f"true [#Init(principal(B))]_ A {VERIFY}", "B4", [v1])
    stA = sc.step("Start(A) => true", "FO-TAUT")
    idV = sc.step(f"{VERIFY} => {VERIFY}", "FO-TAUT")
    v3 = sc.step(f"{FRAME} {VERIFY}", "G3", [stA, v2, idV])
    v4 = sc.step(f"B{{0}} {FRAME} {VERIFY}", "B1", [v3])
    v5 = sc.step(f"B{{eVER}} {VERIFY} => exists i. ({SIGN_I} < {VERIFY})", "VER")
    v6 = sc.step(f"B{{eVER}} {FRAME} ({VERIFY} => exists i. ({SIGN_I} < {VERIFY}))",
                 "PCup", [v5])
    ex0 = f"(exists i. ({SIGN_I} < {VERIFY}))"
    v7 = sc.step(f"B{{eVER}} {FRAME} {ex0}", "PCIMP-B", [v6, v4])

    sc.comment("-- session-independent facts inside the initiator's run --")
    g1a = sc.step(f"B{{0}} Start(A) [#Init(principal(B))]_ A {FS_A}", "FSS")

    g2a = sc.step(f"B{{0}} true [#Init(principal(B))]_ A {RECV_A}", "AA1")
    g2b = sc.step(f"true [#Init(principal(B))]_ A {RECV_A}", "B4", [g2a])
    idR = sc.step(f"{RECV_A} => {RECV_A}", "FO-TAUT")
    g2c = sc.step(f"{FRAME} {RECV_A}", "G3", [stA, g2b, idR])
    g2 = sc.step(f"B{{0}} {FRAME} {RECV_A}", "B1", [g2c])

    sc.comment("-- containment facts for the two FS2 instances --")
    h1a = sc.step("B{0} Contains(m, m)", "COMP1")
    h1b = sc.step("Contains(m, m)", "B4", [h1a])
    h1c = sc.step(f"B{{0}} Contains(m, m) => {C1}", "COMP3")
    h1d = sc.step(f"Contains(m, m) => {C1}", "B4", [h1c])
    h1 = sc.step(C1, "FO-TAUT", [h1b, h1d])
    h2a = sc.step("B{0} Contains(y, y)", "COMP1")
    h2b = sc.step("Contains(y, y)", "B4", [h2a])
    h2c = sc.step("B{0} Contains(y, y) => Contains(y, <y, s>)", "COMP3")
    h2d = sc.step("Contains(y, y) => Contains(y, <y, s>)", "B4", [h2c])
    h2e = sc.step(f"B{{0}} Contains(y, <y, s>) => {C2}", "COMP3")
    h2f = sc.step(f"Contains(y, <y, s>) => {C2}", "B4", [h2e])
    h2 = sc.step(C2, "FO-TAUT", [h2b, h2d, h2f])

    mN = sc.step("B{0} true [#Init(principal(B))]_ A New(A, m)", "AA1")
    mN2 = sc.step("true [#Init(principal(B))]_ A New(A, m)", "B4", [mN])
    j1i = sc.step(f"New(A, m) => {C1}", "FO-TAUT", [h1])
    j1c = sc.step(f"{FRAME} {C1}", "G3", [stA, mN2, j1i])
    j1 = sc.step(f"B{{0}} {FRAME} {C1}", "B1", [j1c])
    j2i = sc.step(f"New(A, m) => {C2}", "FO-TAUT", [h2])
    j2c = sc.step(f"{FRAME} {C2}", "G3", [stA, mN2, j2i])
    j2 = sc.step(f"B{{0}} {FRAME} {C2}", "B1", [j2c])

    sc.comment("-- the invariant instance, pushed into the modal --")
    k1 = sc.step(f"B{{0}} ({_final_inv()})", "B1", [inv_inst])
    k2 = sc.step(f"B{{0}} {FRAME} ({_final_inv()})", "PCup", [k1])

    sc.comment("-- the two FS2 instances, pushed into the modal --")
    fs2a = sc.step(f"B{{eFS2}} ({FS_A} /\\ {RECV_IB} /\\ {C1}) => "
                   f"({SEND_A1} < {RECV_IB})", "FS2")
    fs2am = sc.step(f"B{{eFS2}} {FRAME} (({FS_A} /\\ {RECV_IB} /\\ {C1}) => "
                    f"({SEND_A1} < {RECV_IB}))", "PCup", [fs2a])
    fs2b = sc.step(f"B{{eFS2}} ({FS_IB} /\\ {RECV_A} /\\ {C2}) => "
                   f"({SEND_IB} < {RECV_A})", "FS2")
    fs2bm = sc.step(f"B{{eFS2}} {FRAME} (({FS_IB} /\\ {RECV_A} /\\ {C2}) => "
                    f"({SEND_IB} < {RECV_A}))", "PCup", [fs2b])

    sc.comment("-- merge everything under the existential --")
    body = f"({SIGN_I} < {VERIFY})"
    bound = "eVER"
    merged = v7
    merge_plan = [
        (k2, f"({_final_inv()})", "0"),
        (g1a, FS_A, "0"),
        (g2, RECV_A, "0"),
        (j1, C1, "0"),
        (j2, C2, "0"),
        (fs2am, f"(({FS_A} /\\ {RECV_IB} /\\ {C1}) => ({SEND_A1} < {RECV_IB}))",
         "eFS2"),
        (fs2bm, f"(({FS_IB} /\\ {RECV_A} /\\ {C2}) => ({SEND_IB} < {RECV_A}))",
         "eFS2"),
    ]
    for prem, conjunct, extra in merge_plan:
        body = f"({body} /\\ {conjunct})"
        bound = _add_bound(bound, extra)
        merged = sc.step(f"B{{{bound}}} {FRAME} (exists i. {body})",
                         "PCand", [merged, prem])

    sc.comment("-- read off the matching conversation --")
    aa3a = sc.step(f"({SIGN_I} < {VERIFY}) => {SIGN_I}", "AA3")
    aa3b = sc.step(f"({SEND_IB} < {RECV_A}) => {SEND_IB}", "AA3")
    goal = (f"({SIGN_I} /\\ {RECV_IB} /\\ ({SEND_A1} < {RECV_IB}) /\\ "
            f"({RECV_IB} < {SEND_IB}) /\\ ({SEND_IB} < {RECV_A}))")
    big = sc.step(f"{body} => {goal}", "FO-TAUT", [aa3a, aa3b])
    bigb = sc.step(f"B{{0}} ({body} => {goal})", "B1", [big])
    bigm = sc.step(f"B{{0}} {FRAME} ({body} => {goal})", "PCup", [bigb])
    sc.step(f"B{{{bound}}} {FRAME} (exists i. {goal})", "PCIMP-B", [bigm, merged])

    out = os.path.join(os.path.dirname(__file__), "..", "corpus", "cr.qpclproof")
    with open(out, "w") as fh:
        fh.write(sc.text())
    print(f"wrote {os.path.normpath(out)} ({sc.next_id - 1} steps)")


# -- helpers for the invariant instantiation chain ---------------------------

_ELIM_ORDER = [("Z", IB), ("s1", "s"), ("y1", "y"), ("m1", "m"),
               ("W1", "pi 1(A)")]


def _inv_at(upto):
    subst = {}
    for var, val in _ELIM_ORDER:
        subst[var] = val if var in upto else var
    return inv(subst["Z"], subst["s1"], subst["y1"], subst["m1"], subst["W1"])


def _cur_inv(var):
    """Invariant with every variable before ``var`` already instantiated."""
    names = [v for v, _ in _ELIM_ORDER]
    return _inv_at(set(names[:names.index(var)]))


def _next_inv(var):
    names = [v for v, _ in _ELIM_ORDER]
    return _inv_at(set(names[:names.index(var) + 1]))


def _final_inv():
    return _inv_at({v for v, _ in _ELIM_ORDER})


def _add_bound(bound, extra):
    if extra == "0":
        return bound
    terms = [t.strip() for t in bound.split("+")]
    counts = {"eVER": 0, "eFS2": 0}
    for t in terms:
        if "*" in t:
            k, name = t.split("*")
            counts[name.strip()] += int(k)
        elif t != "0":
            counts[t] += 1
    counts[extra] += 1
    out = []
    for name in ("eVER", "eFS2"):
        c = counts[name]
        if c == 1:
            out.append(name)
        elif c > 1:
            out.append(f"{c}*{name}")
    return " + ".join(out) if out else "0"


if __name__ == "__main__":
    main()
