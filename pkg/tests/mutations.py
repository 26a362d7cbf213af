"""Documented single-edit corpus mutations.

Each entry is (name, target, old, new, why-it-must-be-rejected), where
target is "proof" (edit cr.qpclproof) or "protocol" (edit cr.qpcl and
re-check the unmodified proof against it).  Every mutation must be
rejected with a diagnostic naming the failing step.
"""

PROOF_MUTATIONS = [
    ("weakened final bound",
     "step 180 hyp: Honest(principal(B)) |- B{eVER + 2*eFS2}",
     "step 180 hyp: Honest(principal(B)) |- B{eVER + eFS2}",
     "the final bound must be the exact sum of the premise bounds"),
    ("dropped honesty-rule premise",
     "by HON(19, 23, 27, 31, 35, 39, 43, 47, 51, 67, 83, 99, 115)",
     "by HON(19, 23, 27, 31, 35, 39, 43, 47, 51, 67, 83, 99)",
     "the invariant rule needs one obligation per initial segment"),
    ("swapped implication-rule premises",
     "by PCIMP-B(179, 174)",
     "by PCIMP-B(174, 179)",
     "the modal premise and the side premise are not interchangeable"),
    ("wrong bound atom on the verification axiom",
     "step 133 hyp: Honest(principal(B)) |- B{eVER}",
     "step 133 hyp: Honest(principal(B)) |- B{eFS2}",
     "the verification axiom carries eVER, not eFS2"),
    ("wrong instantiation witness",
     "by FORALL-ELIM(119) with s1 = s",
     "by FORALL-ELIM(119) with s1 = m",
     "the conclusion is not the premise instantiated at that term"),
    ("wrong new-action result",
     "A New(A, m) by AA1()",
     "A New(A, y) by AA1()",
     "the program's first statement binds m, not y"),
    ("dropped hypothesis on the final step",
     "step 180 hyp: Honest(principal(B)) |- B{eVER + 2*eFS2}",
     "step 180 |- B{eVER + 2*eFS2}",
     "a step must carry at least its premises' hypotheses"),
    ("first-send of a non-fresh term",
     "A FirstSend(A, m, <principal(B), m>) by FSS()",
     "A FirstSend(A, y, <principal(B), m>) by FSS()",
     "y is not a new-binder of the program"),
    ("forward premise reference",
     "by PCup(178)",
     "by PCup(180)",
     "premises must be established before they are used"),
    ("non-tautology",
     "step 4 hyp: Honest(principal(B)) |- Start(Z) => Start(Z) by FO-TAUT()",
     "step 4 hyp: Honest(principal(B)) |- Start(Z) => (~Start(Z)) by FO-TAUT()",
     "P => ~P is not a propositional tautology"),
]

PROTOCOL_MUTATIONS = [
    ("responder signs the wrong tag",
     't <- sign <"Resp", n, x, W>;',
     't <- sign <"Init", n, x, W>;',
     "statement matching against the proof's programs breaks"),
    ("responder reply components swapped",
     "_ <- send <W, <n, t>>;",
     "_ <- send <W, <t, n>>;",
     "the first-send obligation no longer matches the sent message"),
]


def apply(text: str, old: str, new: str) -> str:
    assert old in text, f"mutation target not found: {old!r}"
    mutated = text.replace(old, new, 1)
    assert mutated != text
    return mutated
