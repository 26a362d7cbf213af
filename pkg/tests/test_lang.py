"""Protocol language: values, terms, patterns, parsing, rendering."""

import pytest

from qpcl.lang import (
    EvalError,
    LangError,
    Lit,
    PTup,
    PVar,
    PWild,
    Proj,
    Sig,
    TermTuple,
    Tup,
    UNIT,
    Var,
    VerKey,
    const,
    destructure,
    eval_term,
    make_signature,
    nonce,
    parse_protocol,
    pattern_vars,
    principal,
    program_binders,
    render_protocol,
    render_value,
    session,
    statements,
    subvalues,
    substitute,
    thread_id,
    value_key,
    vkey,
)


def test_parse_cr_shape(cr_protocol):
    assert cr_protocol.name == "CR"
    assert [r.name for r in cr_protocol.roles] == ["Init", "Resp"]
    init = cr_protocol.role("Init")
    assert init.params == ("B",)
    assert init.thread_var == "A"
    assert [s.action for s in statements(init.body)] == [
        "new", "send", "receive", "verify", "sign", "send"]
    resp = cr_protocol.role("Resp")
    assert resp.params == ()
    assert [s.action for s in statements(resp.body)] == [
        "receive", "new", "sign", "send", "receive", "verify"]


def test_render_parse_roundtrip(cr_protocol):
    text = render_protocol(cr_protocol)
    again = parse_protocol(text)
    assert render_protocol(again) == text
    assert again == cr_protocol


def test_comments_and_unknown_role_rejected():
    src = """
    % leading comment
    protocol P {
      role R() as X { n <- new; stop }  % trailing comment
    }
    """
    proto = parse_protocol(src)
    assert proto.role("R").thread_var == "X"
    with pytest.raises(LangError):
        proto.role("Missing")


def test_duplicate_binders_alpha_renamed():
    proto = parse_protocol(
        "protocol P { role R() as X { n <- new; n <- new; stop } }")
    binders = program_binders(proto.role("R").body)
    assert len(binders) == len(set(binders)) == 2
    assert "n" in binders


def test_parse_errors():
    with pytest.raises(LangError):
        parse_protocol("protocol P { role R() as X { n <- new }")  # missing stop
    with pytest.raises(LangError):
        parse_protocol("protocol P { role R() as X { n <- frobnicate; stop } }")


def test_destructure():
    pat = PTup((PTup((PVar("y"), PVar("s"))), PVar("N")))
    v = Tup((Tup((nonce(3), nonce(4))), principal("A")))
    assert destructure(pat, v) == {"y": nonce(3), "s": nonce(4), "N": principal("A")}
    assert destructure(pat, nonce(0)) is None
    assert destructure(pat, Tup((nonce(3), principal("A")))) is None
    assert destructure(PWild(), v) == {}
    assert pattern_vars(pat) == ["y", "s", "N"]


def test_eval_term():
    tid = thread_id("B", 2)
    assert eval_term(Lit(tid))[0] == tid
    assert eval_term(Proj(1, Lit(tid)))[0] == principal("B")
    assert eval_term(Proj(2, Lit(tid)))[0] == session(2)
    assert eval_term(VerKey(Lit(principal("B"))))[0] == vkey("B")
    assert eval_term(TermTuple(()))[0] == UNIT
    with pytest.raises(EvalError):
        eval_term(Var("x"))
    with pytest.raises(EvalError):
        eval_term(Proj(3, Lit(tid)))
    with pytest.raises(EvalError):
        eval_term(VerKey(Lit(nonce(1))))


def test_substitute():
    t = TermTuple((Var("x"), VerKey(Var("y"))))
    out = substitute(t, {"x": nonce(7), "y": Lit(principal("C"))})
    assert eval_term(out)[0] == Tup((nonce(7), vkey("C")))


def test_signatures_deterministic_and_open():
    m = Tup((const("Resp"), nonce(1)))
    s1 = make_signature(principal("B"), m, 8)
    s2 = make_signature(principal("B"), m, 8)
    assert s1 == s2
    assert isinstance(s1, Sig) and s1.kind == "signature"
    # The signed message is visible as a subvalue (signatures do not hide).
    assert any(v == nonce(1) for v in subvalues(s1))
    assert make_signature(principal("C"), m, 8) != s1


def test_value_key_total_order():
    vals = [nonce(2), principal("A"), UNIT, vkey("A"), const("x"),
            Tup((nonce(1), nonce(2))), make_signature(principal("A"), nonce(0), 4)]
    keys = sorted(value_key(v) for v in vals)
    assert len(set(keys)) == len(vals)
    for v in vals:
        assert isinstance(render_value(v), str)


def test_program_binders(cr_protocol):
    init = cr_protocol.role("Init")
    assert "m" in program_binders(init.body)
    assert "r" in program_binders(init.body)
