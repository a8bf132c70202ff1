"""Proof-checker, entailment-engine and script-format tests."""

import random

import pytest

from sepstore.grammar import parse, pretty
from sepstore.logic import (
    REJECTED, RULE_IDS, ProofError, ProofNode, SchemaMismatch, UnknownRule,
    apply_rule, check_proof, dist_step, entail_basic, eq_ac, iff, make_node,
    match_iff, normalize_otimes, parse_script, rejected_rule_info,
    serialize_script, unfold_mu,
)
from sepstore.syntax import (
    And, Emp, Eq, FalseA, Implies, IntLit, Judgement, Mu, Or, PointsTo,
    Quote, RelVar, Skip, Star, Tensor, Triple, TrueA, Var,
)

A = lambda s: parse(s, "assertion")
SKIP = Quote(Skip())


def J(goal, hyps=()):
    return Judgement(hyps=tuple(hyps), goal=goal)


# ---------------------------------------------------------------------------
# the negative registry


@pytest.mark.parametrize("name", sorted(REJECTED))
def test_rejected_rules_raise_with_citation(name):
    node = make_node(name, [], TrueA())
    report = check_proof(node)
    assert not report.ok
    assert REJECTED[name] in report.failures[0][1]
    with pytest.raises(UnknownRule) as exc:
        apply_rule(name, {"P": TrueA()}, [])
    assert exc.value.info == REJECTED[name]
    assert rejected_rule_info(name) == REJECTED[name]


def test_rejected_names_not_registered_as_rules():
    assert not set(REJECTED) & set(RULE_IDS)
    assert rejected_rule_info("Skip") is None


def test_unknown_rule_plain():
    report = check_proof(make_node("NoSuchRule", [], TrueA()))
    assert not report.ok and "unknown rule" in report.failures[0][1]


# ---------------------------------------------------------------------------
# small checked proofs


def test_check_skip_axiom():
    P = A("1 |-> 0 * true")
    node = make_node("Skip", [], Triple(P, SKIP, P))
    assert check_proof(node).ok


def test_check_rejects_wrong_conclusion():
    node = make_node("Skip", [], Triple(A("emp"), SKIP, A("true")))
    report = check_proof(node)
    assert not report.ok


def test_check_never_trusts_stated_conclusions():
    # an inner node with a bogus conclusion must be flagged even when the
    # outer node would accept it as a premise
    bad = make_node("Skip", [], Triple(A("emp"), SKIP, A("false")))
    outer = make_node("AndI", [bad, bad],
                      And(bad.conclusion.goal, bad.conclusion.goal))
    report = check_proof(outer)
    assert not report.ok
    assert all("0" in path for path, _ in report.failures)


def test_check_update_free_seq():
    upd = make_node("Update", [], A("{1 |-> _} '[1] := 5' {1 |-> 5}"))
    assert check_proof(upd).ok
    fr = make_node("Free", [], A("{1 |-> _ * emp} 'free(1)' {emp}"))
    assert check_proof(fr).ok
    seq = make_node(
        "Seq",
        [make_node("Update", [],
                   A("{1 |-> _ * emp} '[1] := 5' {1 |-> 5 * emp}")),
         make_node("Skip", [], A("{1 |-> 5 * emp} 'skip' {1 |-> 5 * emp}"))],
        A("{1 |-> _ * emp} '[1] := 5 ; skip' {1 |-> 5 * emp}"))
    assert check_proof(seq).ok
    # the freed cell must appear as an anonymous points-to
    bad = make_node("Free", [], A("{1 |-> 5 * emp} 'free(1)' {emp}"))
    assert not check_proof(bad).ok


def test_check_hypothesis_discipline():
    h = A("1 = 1")
    hyp = make_node("Hyp", [], h, hyps=(h,))
    # discharging the hypothesis
    impi = make_node("ImpI", [hyp], Implies(h, h))
    assert check_proof(impi).ok
    # a premise with hypotheses the conclusion lacks is rejected
    leak = make_node("AndE1", [make_node("AndI", [hyp, hyp], And(h, h),
                                         hyps=(h,))], h)
    assert not check_proof(leak).ok


# ---------------------------------------------------------------------------
# apply_rule


def test_apply_rule_skip():
    j = apply_rule("Skip", {"P": A("emp")}, [])
    assert j.goal == Triple(Emp(), SKIP, Emp())


def test_apply_rule_conseq():
    p0 = J(Implies(A("1 |-> 0"), A("exists v. 1 |-> v")))
    p1 = J(Implies(A("false"), A("true")))
    j = apply_rule("Conseq", {"e": SKIP}, [p0, p1])
    assert type(j.goal) is Implies
    assert j.goal.left == Triple(A("exists v. 1 |-> v"), SKIP, FalseA())
    assert j.goal.right == Triple(A("1 |-> 0"), SKIP, TrueA())


def test_apply_rule_needs_params_and_premises():
    with pytest.raises(SchemaMismatch):
        apply_rule("Skip", {}, [])
    with pytest.raises(SchemaMismatch):
        apply_rule("Seq", {}, [J(Triple(Emp(), SKIP, Emp()))])


def test_apply_rule_string_params_are_parsed():
    j = apply_rule("Skip", {"P": "1 |-> 0"}, [])
    assert j.goal == Triple(A("1 |-> 0"), SKIP, A("1 |-> 0"))


def test_update_inv_side_conditions():
    pure_phi = A("1 = 1")
    pseudo = A("{emp} 'skip' {false}")
    # pure conjunct: any source value
    apply_rule("UpdateInv", {"e": IntLit(1), "e0": Quote(Skip()),
                             "e1": IntLit(2), "phi": pure_phi}, [])
    # rank-sensitive conjunct: integer source only
    apply_rule("UpdateInv", {"e": IntLit(1), "e0": IntLit(0),
                             "e1": IntLit(2), "phi": pseudo}, [])
    with pytest.raises(ProofError):
        apply_rule("UpdateInv", {"e": IntLit(1), "e0": Quote(Skip()),
                                 "e1": IntLit(2), "phi": pseudo}, [])
    # a spatial conjunct is never accepted
    with pytest.raises(ProofError):
        apply_rule("UpdateInv", {"e": IntLit(1), "e0": IntLit(0),
                                 "e1": IntLit(2), "phi": A("3 |-> 0")}, [])


def test_invariance_requires_pure_conjunct():
    t = Triple(Emp(), SKIP, Emp())
    j = apply_rule("Invariance", {"P": t, "psi": A("x = 1")}, [])
    assert type(j.goal) is Implies
    with pytest.raises(ProofError):
        apply_rule("Invariance", {"P": t,
                                  "psi": A("{emp} 'skip' {emp}")}, [])


def test_out_accepts_composite_conjunct():
    phi = And(Eq(IntLit(1), IntLit(1)), Eq(IntLit(0), IntLit(0)))
    pre = And(phi, A("1 |-> 0"))
    j = apply_rule("Out", {"phi": phi}, [J(Triple(pre, SKIP, TrueA()))])
    assert j.goal == Implies(phi, Triple(A("1 |-> 0"), SKIP, TrueA()))


# ---------------------------------------------------------------------------
# entailment engine


def test_entail_basic_positive():
    X = A("1 |-> 0")
    assert entail_basic(X, X)
    assert entail_basic(And(X, TrueA()), X)
    assert entail_basic(X, Or(X, FalseA()))
    assert entail_basic(FalseA(), X)
    assert entail_basic(Star(X, A("2 |-> 1")), Star(A("2 |-> 1"), X))
    assert entail_basic(Star(Emp(), X), X)      # unit normalization
    assert entail_basic(X, Star(X, Emp()))
    assert entail_basic(A("1 |-> 0"), A("exists v. 1 |-> v"))
    assert entail_basic(A("1 |-> 0 * 2 |-> 1"), A("1 |-> _ * 2 |-> 1"))


def test_entail_basic_negative():
    assert not entail_basic(TrueA(), FalseA())
    assert not entail_basic(A("1 |-> 0"), A("2 |-> 0"))
    assert not entail_basic(A("1 |-> _"), A("1 |-> 0"))
    assert not entail_basic(Emp(), A("1 |-> 0"))


def test_entail_basic_star_unit_under_binders():
    # a unit inside a premise must not shadow the stripped problem in the
    # memo table
    P = A("emp * (1 |-> 0 /\\ true)")
    assert entail_basic(P, A("1 |-> 0"))
    assert entail_basic(Star(Emp(), Star(Emp(), A("1 |-> 0"))), A("1 |-> 0"))


# ---------------------------------------------------------------------------
# recursion and distribution helpers


def test_unfold_mu():
    m = A("mu X. {X} 'skip' {emp}")
    body = unfold_mu(m)
    assert body == Triple(m, SKIP, Emp())
    j = apply_rule("MuUnfold", {"P": m}, [])
    assert match_iff(j.goal) == (m, body)


def test_unfold_mu_with_params():
    m = Mu("X", ("p",),
           Triple(RelVar("X", (Var("p"),)), SKIP, PointsTo(Var("p"),
                                                           IntLit(0))),
           (IntLit(3),))
    body = unfold_mu(m)
    # parameters become the arguments, the bound relvar becomes the
    # recursive assertion re-applied to them
    assert body == Triple(Mu("X", ("p",), m.body, (IntLit(3),)), SKIP,
                          PointsTo(IntLit(3), IntLit(0)))


def test_normalize_otimes_examples():
    t = A("({emp} 'skip' {emp}) (*) 1 |-> 0")
    n = normalize_otimes(t)
    # the extension lands in pre and post, and emp (*) R collapses to emp
    assert n == A("{emp * 1 |-> 0} 'skip' {emp * 1 |-> 0}")
    # atoms absorb the extension
    assert normalize_otimes(A("emp (*) true")) == Emp()
    assert normalize_otimes(A("(1 |-> 0 /\\ emp) (*) true")) \
        == A("1 |-> 0 /\\ emp")


def test_normalize_otimes_idempotent():
    rng = random.Random(3)
    from sepstore.fuzz import assertion as rand_fuzz_asn
    for _ in range(100):
        P = Tensor(rand_fuzz_asn(rng), rand_fuzz_asn(rng, 1))
        n = normalize_otimes(P)
        assert normalize_otimes(n) == n


def test_normalize_otimes_stuck_on_recursion():
    m = A("mu X. {X} 'skip' {emp}")
    t = Tensor(m, TrueA())
    assert type(normalize_otimes(t)) is Tensor
    assert dist_step(m, TrueA()) is None
    assert dist_step(RelVar("X"), TrueA()) is None


# ---------------------------------------------------------------------------
# script format


def test_script_roundtrip():
    upd = make_node("Update", [], A("{1 |-> _} '[1] := 5' {1 |-> 5}"))
    seq = make_node(
        "Seq",
        [make_node("Update", [],
                   A("{1 |-> _ * emp} '[1] := 5' {1 |-> 5 * emp}")),
         make_node("Skip", [],
                   A("{1 |-> 5 * emp} 'skip' {1 |-> 5 * emp}"))],
        A("{1 |-> _ * emp} '[1] := 5 ; skip' {1 |-> 5 * emp}"))
    for node in (upd, seq):
        text = serialize_script(node)
        back = parse_script(text)
        assert back.rule == node.rule
        assert eq_ac(back.conclusion.goal, node.conclusion.goal)
        assert check_proof(back).ok


def test_script_errors():
    from sepstore.logic import ScriptError
    for text in ("", "(rule Skip", "(rule Skip (conclude))",
                 "(rule Skip (param P))", "(what)",
                 '(rule Skip (conclude "emp")) trailing'):
        with pytest.raises(ScriptError):
            parse_script(text)


def test_iff_helpers():
    a, b = A("emp"), A("true")
    assert match_iff(iff(a, b)) == (a, b)
    assert match_iff(And(Implies(a, b), Implies(a, b))) is None
    assert match_iff(a) is None
