"""Symbolic bound expressions and their numeric evaluation."""

from fractions import Fraction

import pytest

from qpcl.lang import LangError
from qpcl.bounds import (
    BoundError,
    BoundParams,
    BoundTable,
    EFS2,
    EVER,
    EpsilonExpr,
    ZERO,
    advantage_from_expr,
    count_actions,
    eps_fs2,
    eps_ver,
    eval_epsilon,
    guess_term,
    parse_bound_table,
    parse_epsilon,
)


def test_epsilon_algebra():
    e = EVER + EFS2 + EFS2
    assert e == EpsilonExpr(ver=1, fs2=2)
    assert str(e) == "eVER + 2*eFS2"
    assert str(ZERO) == "0"
    assert e.dominates(EVER) and not EVER.dominates(e)
    assert ZERO.is_zero() and not e.is_zero()
    with pytest.raises(BoundError):
        EpsilonExpr(ver=-1)


def test_parse_epsilon():
    assert parse_epsilon("eVER + 2*eFS2") == EpsilonExpr(ver=1, fs2=2)
    assert parse_epsilon("0") == ZERO
    assert parse_epsilon("3*eVER") == EpsilonExpr(ver=3)
    assert parse_epsilon(str(parse_epsilon("eFS2 + eFS2 + eVER"))) == \
        EpsilonExpr(ver=1, fs2=2)
    for bad in ("eVER - eFS2", "eWHAT", "2*", ""):
        with pytest.raises((BoundError, LangError)):
            parse_epsilon(bad)


def test_bound_table_parsing():
    table = parse_bound_table("# comment\nufcma = q / 2^eta\nprg = 0\n")
    assert table.ufcma(8, Fraction(100), 3) == Fraction(3, 256)
    assert table.prg(8, Fraction(100), 3) == 0
    with pytest.raises(BoundError):
        parse_bound_table("ufcma = q / / 2^eta")
    with pytest.raises(BoundError):
        parse_bound_table("nonsense = q")


def test_advantage_expressions():
    f = advantage_from_expr("(q + time) / 2^eta")
    assert f(4, Fraction(10), 6) == Fraction(1)  # clamped at 1
    assert f(10, Fraction(10), 6) == Fraction(1, 64)


def params(**kw):
    base = dict(eta=8, tb=Fraction(400), q_sign=2, q_new=2, q_recv=3, l=32,
                table=parse_bound_table("ufcma = q / 2^eta\nprg = q / 2^eta\n"))
    base.update(kw)
    return BoundParams(**base)


def test_eps_components():
    p = params()
    assert eps_ver(p) == Fraction(2, 256)
    assert guess_term(p) == Fraction(32 * 3, 256)
    assert eps_fs2(p) == Fraction(2, 256) + Fraction(96, 256)
    assert guess_term(params(guess_variant="coarse")) == Fraction(96, 8 * 256)
    with pytest.raises(BoundError):
        guess_term(params(guess_variant="nope"))


def test_eval_epsilon_clamps():
    p = params(eta=1, l=100)
    v = eval_epsilon(EpsilonExpr(ver=5, fs2=5), p)
    assert v == 1  # clamped into [0, 1]
    assert eval_epsilon(ZERO, p) == 0


def test_count_actions(cr_protocol):
    counts = count_actions(cr_protocol, {"Init": 1, "Resp": 1})
    assert counts == {"new": 2, "send": 3, "receive": 3, "sign": 2, "verify": 2}
    tens = count_actions(cr_protocol, {"Init": 10, "Resp": 10})
    assert tens["sign"] == 20 and tens["receive"] == 30


def test_golden_bound_matches_oracle(cr_protocol):
    # The independently derived reference value shipped in the corpus.
    from pathlib import Path
    lines = {}
    for line in (Path(__file__).parent.parent / "corpus" /
                 "golden_bound.txt").read_text().splitlines():
        if "=" in line and not line.lstrip().startswith("#"):
            k, v = line.split("=", 1)
            lines[k.strip()] = Fraction(v.strip())
    counts = count_actions(cr_protocol, {"Init": 10, "Resp": 10})
    table = parse_bound_table("ufcma = q / 2^eta\nprg = q / 2^eta\n")
    p = BoundParams(eta=128, tb=Fraction(2**40), q_sign=counts["sign"],
                    q_new=counts["new"], q_recv=counts["receive"],
                    l=4 * 128, table=table)
    total = eval_epsilon(EpsilonExpr(ver=1, fs2=2), p)
    assert eps_ver(p) == lines["eps_ver"]
    assert eps_fs2(p) == lines["eps_fs2"]
    assert total == lines["total"] == Fraction(30780, 2**128)
