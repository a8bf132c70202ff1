"""Unit and property tests for the AST layer."""

import random

from hypothesis import given, settings, strategies as st

from conftest import Names, rand_asn
from sepstore.syntax import (
    And, BinOp, Emp, Eq, Exists, FalseA, Forall, GENERAL, Implies, IntLit,
    Leq, Mu, Or, PointsTo, PSEUDO_PURE, PURE, Quote, RelVar, Skip, Star,
    Tensor, Triple, TrueA, Var, canon_key, classify, conj, contractive_in,
    equal_mod_ac, free_vars, fresh_name, star, star_parts, substitute,
)

SKIP = Quote(Skip())
TRIP = Triple(Emp(), SKIP, Emp())


# ---------------------------------------------------------------------------
# purity classification


def test_classify_pure():
    assert classify(TrueA()) == PURE
    assert classify(Eq(Var("x"), IntLit(1))) == PURE
    assert classify(Leq(IntLit(0), Var("y"))) == PURE
    assert classify(And(Eq(IntLit(1), IntLit(1)), FalseA())) == PURE
    assert classify(Forall("x", Implies(Eq(Var("x"), IntLit(0)),
                                        TrueA()))) == PURE


def test_classify_pseudo_pure():
    assert classify(TRIP) == PSEUDO_PURE
    assert classify(And(TRIP, Eq(IntLit(1), IntLit(1)))) == PSEUDO_PURE
    assert classify(Or(TRIP, TRIP)) == PSEUDO_PURE
    assert classify(Tensor(TRIP, PointsTo(IntLit(1), IntLit(0)))) \
        == PSEUDO_PURE
    # a recursion variable bound by an enclosing mu stays in the class
    m = Mu("X", (), And(TRIP, RelVar("X")), ())
    assert classify(m) == PSEUDO_PURE


def test_classify_general():
    assert classify(Emp()) == GENERAL
    assert classify(PointsTo(IntLit(1), IntLit(0))) == GENERAL
    assert classify(Star(TRIP, TRIP)) == GENERAL
    assert classify(Implies(TRIP, TRIP)) == GENERAL
    # an unbound relation variable could be instantiated with anything
    assert classify(RelVar("X")) == GENERAL
    assert classify(And(TRIP, PointsTo(IntLit(1), IntLit(0)))) == GENERAL


# ---------------------------------------------------------------------------
# contractiveness


def test_contractive_under_triple_and_tensor_right():
    assert contractive_in(Triple(RelVar("X"), SKIP, RelVar("X")), "X")
    assert contractive_in(Tensor(Emp(), RelVar("X")), "X")
    assert contractive_in(Star(TRIP, Triple(RelVar("X"), SKIP, Emp())), "X")


def test_not_contractive_when_exposed():
    assert not contractive_in(RelVar("X"), "X")
    assert not contractive_in(Star(RelVar("X"), Emp()), "X")
    assert not contractive_in(Tensor(RelVar("X"), Emp()), "X")
    assert not contractive_in(Exists("y", And(RelVar("X"), TrueA())), "X")


def test_contractive_shadowed_by_inner_mu():
    inner = Mu("X", (), Star(RelVar("X"), Emp()), ())
    assert contractive_in(inner, "X")


# ---------------------------------------------------------------------------
# free variables


def test_free_vars_quantifier():
    a = Exists("x", Eq(Var("x"), Var("y")))
    fv, frv = free_vars(a)
    assert fv == {"y"} and frv == frozenset()


def test_free_vars_mu():
    m = Mu("X", ("p",), Triple(RelVar("X", (Var("p"),)), SKIP,
                               Eq(Var("p"), Var("q"))), (Var("r"),))
    fv, frv = free_vars(m)
    assert fv == {"q", "r"}
    assert frv == frozenset()
    assert free_vars(RelVar("Y"))[1] == {"Y"}


# ---------------------------------------------------------------------------
# substitution


def test_substitute_simple():
    a = Eq(Var("x"), Var("y"))
    assert substitute(a, {"x": IntLit(3)}) == Eq(IntLit(3), Var("y"))


def test_substitute_respects_binding():
    a = Exists("x", Eq(Var("x"), Var("y")))
    assert substitute(a, {"x": IntLit(3)}) == a


def test_substitute_capture_avoiding():
    a = Exists("x", Eq(Var("x"), Var("y")))
    b = substitute(a, {"y": Var("x")})
    assert type(b) is Exists and b.var != "x"
    assert b.body == Eq(Var(b.var), Var("x"))


def test_substitute_relvar():
    body = Star(RelVar("X", (IntLit(1),)), Emp())
    out = substitute(body, rel_map={"X": (("p",),
                                          PointsTo(Var("p"), IntLit(0)))})
    assert out == Star(PointsTo(IntLit(1), IntLit(0)), Emp())


@settings(max_examples=60)
@given(st.integers(0, 10 ** 6), st.integers(0, 5))
def test_substitution_composition(seed, n):
    """x := e then y := f equals the simultaneous map when y not in e."""
    rng = random.Random(seed)
    a = rand_asn(rng, Names(), depth=2)
    e, f = IntLit(n), IntLit(n + 1)
    seq = substitute(substitute(a, {"x": e}), {"y": f})
    sim = substitute(a, {"x": e, "y": f})
    assert seq == sim


@settings(max_examples=60)
@given(st.integers(0, 10 ** 6))
def test_substitution_free_vars_shrink(seed):
    rng = random.Random(seed)
    a = rand_asn(rng, Names(), depth=2)
    out = substitute(a, {"x": IntLit(7)})
    assert "x" not in free_vars(out)[0]
    assert free_vars(out)[0] <= free_vars(a)[0] - {"x"}


# ---------------------------------------------------------------------------
# equality mod AC, unit law, alpha


def test_equal_mod_ac_star():
    P, Q, R = PointsTo(IntLit(1), IntLit(0)), TrueA(), Emp()
    assert equal_mod_ac(Star(P, Star(Q, R)), Star(Star(R, Q), P))
    assert equal_mod_ac(Star(P, Emp()), P)
    assert not equal_mod_ac(Star(P, Q), And(P, Q))


def test_equal_mod_ac_alpha():
    a = Exists("x", Eq(Var("x"), IntLit(1)))
    b = Exists("z", Eq(Var("z"), IntLit(1)))
    assert equal_mod_ac(a, b)
    assert canon_key(a) == canon_key(b)


def test_equal_mod_ac_distinguishes():
    assert not equal_mod_ac(Forall("x", TrueA()), Exists("x", TrueA()))
    assert not equal_mod_ac(Implies(TrueA(), FalseA()),
                            Implies(FalseA(), TrueA()))


def test_fresh_name():
    assert fresh_name("x", ()) == "x"
    assert fresh_name("x", ("x",)) == "x_1"
    assert fresh_name("x_1", ("x_1", "x_2")) == "x_3"


def test_builders():
    P, Q = TrueA(), Emp()
    assert star() == Emp()
    assert star(P) == P
    assert star(P, Q, P) == Star(Star(P, Q), P)
    assert conj() == TrueA()
    assert conj(P, Q) == And(P, Q)
    assert star_parts(Star(Star(P, Q), P)) == [P, Q, P]
