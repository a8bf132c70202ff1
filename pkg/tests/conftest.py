"""Shared fixtures and random-term generators for the test suite."""

import random

import pytest

from sepstore.fuzz import fuzz_config
from sepstore.semantics import Tester
from sepstore.syntax import (
    And, Assign, BinOp, Diamond, Emp, Eq, EvalAt, Exists, FalseA, Forall,
    Free, If, Implies, IntLit, LetDeref, LetNew, Leq, Mu, Or, PointsTo,
    Quote, RelVar, Seq, Skip, Star, Tensor, Triple, TrueA, Var,
)


@pytest.fixture(scope="session")
def lean_tester():
    """One shared tester on the small fuzz universe; caches carry over."""
    return Tester(fuzz_config())


# ---------------------------------------------------------------------------
# random grammar-representable terms
#
# Binder names are globally unique within a term and disjoint from the
# free-variable alphabet, so parse(pretty(t)) == t holds exactly (the
# parser renames shadowed binders apart).


class Names:
    def __init__(self):
        self.n = 0

    def fresh(self):
        self.n += 1
        return f"b{self.n}"


FREE_NAMES = ("x", "y", "z")


def rand_expr(rng, depth=2):
    roll = rng.random()
    if depth == 0 or roll < 0.4:
        return IntLit(rng.randrange(0, 5))
    if roll < 0.6:
        return Var(rng.choice(FREE_NAMES))
    if roll < 0.9:
        return BinOp(rng.choice("+-*"),
                     rand_expr(rng, depth - 1), rand_expr(rng, depth - 1))
    return Quote(rand_cmd(rng, Names(), depth - 1))


def rand_cmd(rng, names, depth=2):
    roll = rng.random()
    if depth == 0 or roll < 0.2:
        return Skip()
    if roll < 0.35:
        return Assign(rand_expr(rng, 1), rand_expr(rng, 1))
    if roll < 0.45:
        return EvalAt(rand_expr(rng, 1))
    if roll < 0.55:
        return Free(rand_expr(rng, 1))
    if roll < 0.65:
        v = names.fresh()
        return LetDeref(v, rand_expr(rng, 1), rand_cmd(rng, names, depth - 1))
    if roll < 0.75:
        v = names.fresh()
        inits = tuple(rand_expr(rng, 1)
                      for _ in range(rng.randrange(1, 3)))
        return LetNew(v, inits, rand_cmd(rng, names, depth - 1))
    if roll < 0.9:
        return Seq(rand_cmd(rng, names, depth - 1),
                   rand_cmd(rng, names, depth - 1))
    return If(rand_expr(rng, 1), rand_expr(rng, 1),
              rand_cmd(rng, names, depth - 1), rand_cmd(rng, names, depth - 1))


def rand_asn(rng, names=None, depth=3):
    names = names or Names()
    roll = rng.random()
    if depth == 0 or roll < 0.3:
        atom = rng.random()
        if atom < 0.1:
            return TrueA()
        if atom < 0.2:
            return FalseA()
        if atom < 0.3:
            return Emp()
        if atom < 0.55:
            return PointsTo(rand_expr(rng, 1), rand_expr(rng, 1))
        if atom < 0.8:
            return Eq(rand_expr(rng, 1), rand_expr(rng, 1))
        return Leq(rand_expr(rng, 1), rand_expr(rng, 1))
    sub = lambda: rand_asn(rng, names, depth - 1)
    if roll < 0.42:
        return Star(sub(), sub())
    if roll < 0.52:
        return And(sub(), sub())
    if roll < 0.6:
        return Or(sub(), sub())
    if roll < 0.68:
        return Implies(sub(), sub())
    if roll < 0.74:
        return Tensor(sub(), sub())
    if roll < 0.82:
        quant = Forall if rng.random() < 0.5 else Exists
        v = names.fresh()
        return quant(v, rand_asn(rng, names, depth - 1))
    if roll < 0.9:
        return Triple(sub(), rand_expr(rng, 1), sub())
    if roll < 0.95:
        return Diamond(sub())
    # a recursive assertion; the body keeps X under a triple so the term
    # stays formally contractive
    x = f"X{names.fresh()}"
    return Mu(x, (), Triple(Star(RelVar(x), sub()), rand_expr(rng, 1),
                            sub()), ())


def rand_term(rng):
    """A random assertion, command or expression, tagged by kind."""
    roll = rng.random()
    if roll < 0.5:
        return "assertion", rand_asn(rng)
    if roll < 0.8:
        return "program", rand_cmd(rng, Names())
    return "expr", rand_expr(rng)


def term_corpus(seed, n):
    rng = random.Random(seed)
    return [rand_term(rng) for _ in range(n)]
