"""Finite-approximation semantic model.

Worlds are closed assertions; a world's membership function is the
denotation of its invariant, and worlds compose by the syntactic image of
the defining equation for invariant combination.  The membership evaluator
follows the assertion semantics clause by clause over a bounded universe
of heaps, values, worlds and frames described by a TestConfig.  On top of
it sit a bounded semantic-triple tester and an entailment tester: a Fail
verdict is a genuine refutation within the model, a Pass means no
counterexample exists in the configured universe.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

from .grammar import parse, pretty
from .interp import (
    BOT, EMPTY_ENV, EMPTY_HEAP, INF, CodeVal, Done, Env, Fault, Heap,
    HeapValue, IntVal, OutOfFuel, TypeFault, UnboundVariable, eval_expr,
    format_heap, format_value, heap_join, heap_leq, rank, run_codeval,
    tag_raises, truncate,
)
from .syntax import (
    And, Diamond, Emp, Eq, Exists, FalseA, Forall, Implies, Leq, Mu, Or,
    PointsTo, PSEUDO_PURE, PURE, RelVar, Skip, Star, Tensor, Triple, TrueA,
    ValueLit, classify, free_vars, substitute,
)


class UniverseOverflow(Exception):
    pass


@dataclass(frozen=True)
class World:
    """A world, represented by the closed assertion generating it."""

    inv: object  # closed Assertion


EMP_WORLD = World(Emp())


def world_circ(w1: World, w2: World) -> World:
    """Invariant combination: the inner world is extended by the outer
    invariant and separately conjoined with it."""
    return World(Star(Tensor(w1.inv, w2.inv), w2.inv))


# PredEnv: tuple of (relvar name, (params tuple, closed Assertion))
PredEnv = Tuple
EMPTY_PREDENV: PredEnv = ()


@dataclass(frozen=True)
class TestConfig:
    addr_pool: tuple = (1, 2, 3)
    int_pool: tuple = (-1, 0, 1, 2)
    code_pool: tuple = ()       # closed Commands
    tag_max: int = 3
    level_k: int = 3
    world_pool: tuple = (EMP_WORLD,)
    frame_pool: tuple = (Emp(), TrueA())
    fuel: int = 10000
    env_cap: int = 256

    def __post_init__(self):
        if EMP_WORLD not in self.world_pool:
            object.__setattr__(self, "world_pool",
                               (EMP_WORLD,) + tuple(self.world_pool))
        frames = tuple(self.frame_pool)
        for needed in (Emp(), TrueA()):
            if needed not in frames:
                frames += (needed,)
        object.__setattr__(self, "frame_pool", frames)

    def value_pool(self) -> tuple:
        vals = [IntVal(n) for n in sorted(self.int_pool)]
        for c in self.code_pool:
            for t in range(self.tag_max + 1):
                vals.append(CodeVal(c, EMPTY_ENV, t))
        return tuple(vals)


@dataclass(frozen=True)
class Witness:
    kind: str                 # "triple" or "entailment"
    world: object             # World
    frame: Optional[object]   # Assertion or None
    heap: Heap
    outcome: str
    reason: str
    env: Env = EMPTY_ENV
    level: Optional[int] = None

    def to_json(self) -> dict:
        data = {
            "kind": self.kind,
            "world": pretty(self.world.inv),
            "heap": format_heap(self.heap),
            "outcome": self.outcome,
            "reason": self.reason,
        }
        if self.frame is not None:
            data["frame"] = pretty(self.frame)
        if self.level is not None:
            data["level"] = self.level
        if self.env.items:
            data["env"] = {k: format_value(v) for k, v in self.env.items}
        return data


@dataclass(frozen=True)
class Pass:
    samples: int = 0
    inconclusive: int = 0


@dataclass(frozen=True)
class Fail:
    witness: Witness


Verdict = Union[Pass, Fail]


def close_assertion(P, env: Env, rho: PredEnv):
    """Close an assertion over an environment and a predicate environment
    by substituting runtime values and predicate bodies."""
    var_map = {k: ValueLit(v) for k, v in env.items}
    rel_map = dict(rho)
    if not var_map and not rel_map:
        return P
    return substitute(P, var_map, rel_map)


def demote_heap(h: Heap, tag_max: int) -> Heap:
    """Cap untagged closures so that the heap has finite rank."""
    if h.is_bot or rank(h) != INF:
        return h
    import warnings

    warnings.warn("heap contains untagged code; tags demoted to tag_max")
    return truncate(tag_max + 1, h)


class Tester:
    """Bounded membership evaluator and triple/entailment tester."""

    def __init__(self, cfg: TestConfig):
        self.cfg = cfg
        self._member_cache: dict = {}
        self._triple_cache: dict = {}
        self._universe: Optional[list] = None
        self._by_rank: dict = {}
        self._vals: Optional[tuple] = None
        self.inconclusive = 0
        self.samples = 0

    def values(self) -> tuple:
        if self._vals is None:
            self._vals = self.cfg.value_pool()
        return self._vals

    # --- heap universe

    def universe(self) -> list:
        if self._universe is None:
            vals = self.cfg.value_pool()
            heaps = [BOT, EMPTY_HEAP]
            addrs = sorted(self.cfg.addr_pool)
            for size in range(1, len(addrs) + 1):
                for dom in itertools.combinations(addrs, size):
                    for combo in itertools.product(vals, repeat=size):
                        heaps.append(Heap(tuple(zip(dom, combo))))
            self._universe = heaps
        return self._universe

    def universe_up_to_rank(self, n) -> list:
        if n not in self._by_rank:
            self._by_rank[n] = [h for h in self.universe() if rank(h) <= n]
        return self._by_rank[n]

    # --- membership

    def member(self, P, env: Env, rho: PredEnv, w: World, h: Heap) -> bool:
        key = (P, env, rho, w, h)
        hit = self._member_cache.get(key)
        if hit is not None:
            return hit
        # pre-seed to cut cycles defensively; contractiveness should make
        # genuine cycles impossible
        self._member_cache[key] = False
        result = self._member(P, env, rho, w, h)
        self._member_cache[key] = result
        return result

    def _member(self, P, env, rho, w, h) -> bool:
        t = type(P)
        if t is FalseA:
            return h.is_bot
        if t is TrueA:
            return True
        if t is Emp:
            return h.is_bot or h.cells == ()
        if t is Eq or t is Leq:
            if h.is_bot:
                return True
            try:
                a = eval_expr(P.left, env)
                b = eval_expr(P.right, env)
            except (TypeFault, UnboundVariable):
                return False
            if t is Eq:
                return a == b
            return isinstance(a, IntVal) and isinstance(b, IntVal) \
                and a.n <= b.n
        if t is PointsTo:
            if h.is_bot:
                return True
            try:
                a = eval_expr(P.addr, env)
                v = eval_expr(P.value, env)
            except (TypeFault, UnboundVariable):
                return False
            if not isinstance(a, IntVal) or a.n < 1:
                return False
            return heap_leq(h, Heap(((a.n, v),)))
        if t is And:
            return self.member(P.left, env, rho, w, h) \
                and self.member(P.right, env, rho, w, h)
        if t is Or:
            return self.member(P.left, env, rho, w, h) \
                or self.member(P.right, env, rho, w, h)
        if t is Implies:
            r = rank(h)
            if r == INF:
                raise UniverseOverflow("implication on a heap of infinite rank")
            for n in range(int(r) + 1):
                hn = truncate(n, h)
                if self.member(P.left, env, rho, w, hn) \
                        and not self.member(P.right, env, rho, w, hn):
                    return False
            return True
        if t is Forall:
            return all(self.member(P.body, env.bind(P.var, d), rho, w, h)
                       for d in self.values())
        if t is Exists:
            r = rank(h)
            if r == INF:
                raise UniverseOverflow("existential on a heap of infinite rank")
            pool = self.values()
            for n in range(int(r), -1, -1):
                hn = truncate(n, h)
                if not any(self.member(P.body, env.bind(P.var, d), rho, w, hn)
                           for d in pool):
                    return False
            return True
        if t is Star:
            if h.is_bot:
                return self.member(P.left, env, rho, w, h) \
                    and self.member(P.right, env, rho, w, h)
            cells = h.cells
            for mask in range(1 << len(cells)):
                h1 = Heap(tuple(c for i, c in enumerate(cells)
                                if mask >> i & 1))
                h2 = Heap(tuple(c for i, c in enumerate(cells)
                                if not mask >> i & 1))
                if self.member(P.left, env, rho, w, h1) \
                        and self.member(P.right, env, rho, w, h2):
                    return True
            return False
        if t is Triple:
            r = rank(h)
            if r == INF:
                raise UniverseOverflow("triple on a heap of infinite rank")
            if r == 0:
                return True
            try:
                code = eval_expr(P.code, env)
            except (TypeFault, UnboundVariable):
                return False
            if not isinstance(code, CodeVal):
                return False
            verdict = self.sem_triple_at(int(r) - 1, w, P.pre, code, P.post,
                                         env, rho)
            return isinstance(verdict, Pass)
        if t is Tensor:
            wr = World(close_assertion(P.right, env, rho))
            return self.member(P.left, env, rho, world_circ(wr, w), h)
        if t is RelVar:
            for name, (params, body) in rho:
                if name == P.name:
                    try:
                        vals = [eval_expr(e, env) for e in P.args]
                    except (TypeFault, UnboundVariable):
                        return False
                    inst = substitute(
                        body, {p: ValueLit(v) for p, v in zip(params, vals)})
                    return self.member(inst, env, rho, w, h)
            raise UnboundVariable(f"relation variable {P.name}")
        if t is Mu:
            r = rank(h)
            if r == INF:
                raise UniverseOverflow("mu on a heap of infinite rank")
            unfolded = mu_approximation(P, int(r) + 1)
            return self.member(unfolded, env, rho, w, h)
        if t is Diamond:
            return self._member_diamond(P.body, env, rho, w, h)
        raise TypeError(f"not an assertion: {P!r}")

    def _member_diamond(self, body, env, rho, w, h) -> bool:
        k = rank(h)
        if k == INF:
            return self.member(body, env, rho, w, h)
        k = int(k)
        if classify(body) in (PURE, PSEUDO_PURE):
            # the body's truth depends only on the rank, so "one level up"
            # is evaluated on a representative heap of rank k+1; the
            # projection-witness search below would be empty on heaps
            # without top-tag code, belying the level-shift reading
            rep = Heap(((1, CodeVal(Skip(), EMPTY_ENV, k)),))
            return self.member(body, env, rho, w, rep)
        if h.is_bot:
            # any rank-1 heap projects to Bot at level 0
            return any(self.member(body, env, rho, w, g)
                       for g in self.universe() if rank(g) == 1)
        raisable = [i for i, (_, v) in enumerate(h.cells)
                    if isinstance(v, CodeVal) and v.tag == k - 1]
        if not raisable:
            return False
        cells = list(h.cells)
        for size in range(1, len(raisable) + 1):
            for chosen in itertools.combinations(raisable, size):
                new_cells = list(cells)
                for i in chosen:
                    a, v = new_cells[i]
                    new_cells[i] = (a, CodeVal(v.body, v.captured, k))
                if self.member(body, env, rho, w, Heap(tuple(new_cells))):
                    return True
        return False

    # --- semantic triples

    def _member3(self, P, w: World, frame, g: Heap) -> bool:
        """g in  [[P]]w * (world invariant at the unit world) * frame."""
        inv = w.inv
        if g.is_bot:
            return (self.member(P, EMPTY_ENV, EMPTY_PREDENV, w, g)
                    and self.member(inv, EMPTY_ENV, EMPTY_PREDENV,
                                    EMP_WORLD, g)
                    and self.member(frame, EMPTY_ENV, EMPTY_PREDENV,
                                    EMP_WORLD, g))
        cells = g.cells
        for assign in itertools.product(range(3), repeat=len(cells)):
            parts = ([], [], [])
            for which, cell in zip(assign, cells):
                parts[which].append(cell)
            g1, g2, g3 = (Heap(tuple(p)) for p in parts)
            if self.member(P, EMPTY_ENV, EMPTY_PREDENV, w, g1) \
                    and self.member(inv, EMPTY_ENV, EMPTY_PREDENV,
                                    EMP_WORLD, g2) \
                    and self.member(frame, EMPTY_ENV, EMPTY_PREDENV,
                                    EMP_WORLD, g3):
                return True
        return False

    def _dcl_member3(self, P, w: World, frame, h: Heap) -> bool:
        """Downward-closure membership: some tag-raised candidate above h
        lies in the target set."""
        for g in tag_raises(h, max(self.cfg.tag_max, self.cfg.level_k)):
            if self._member3(P, w, frame, g):
                return True
        return False

    def sem_triple_at(self, k: int, w: World, pre, code: HeapValue, post,
                      env: Env = EMPTY_ENV,
                      rho: PredEnv = EMPTY_PREDENV) -> Verdict:
        key = ("triple", k, w, pre, post, code, env, rho)
        hit = self._triple_cache.get(key)
        if hit is not None:
            return hit
        # while a triple instance is being computed, treat recursive
        # occurrences at the same level as passing (they are re-examined
        # at strictly smaller rank by contractiveness)
        self._triple_cache[key] = Pass()
        verdict = self._sem_triple_at(k, w, pre, code, post, env, rho)
        self._triple_cache[key] = verdict
        return verdict

    def _sem_triple_at(self, k, w, pre, code, post, env, rho) -> Verdict:
        if not isinstance(code, CodeVal):
            return Fail(Witness("triple", w, None, BOT, "non-code",
                                "the evaluated expression is not code",
                                env, k))
        pre_c = close_assertion(pre, env, rho)
        post_c = close_assertion(post, env, rho)
        samples = 0
        inconclusive = 0
        for frame in self.cfg.frame_pool:
            for n in range(k + 1):
                for g in self.universe_up_to_rank(n):
                    if not self._member3(pre_c, w, frame, g):
                        continue
                    samples += 1
                    self.samples += 1
                    out = run_codeval(code, g, self.cfg.fuel)
                    if isinstance(out, Fault):
                        return Fail(Witness(
                            "triple", w, frame, g, "fault", out.reason,
                            env, n))
                    if isinstance(out, OutOfFuel):
                        inconclusive += 1
                        self.inconclusive += 1
                        continue
                    h2 = truncate(n, out.heap)
                    if not self._dcl_member3(post_c, w, frame, h2):
                        return Fail(Witness(
                            "triple", w, frame, g, "post-violation",
                            f"result heap [{format_heap(h2)}] is outside "
                            f"the postcondition", env, n))
        return Pass(samples, inconclusive)

    # --- entry points

    def _env_samples(self, fvs):
        fvs = sorted(fvs)
        if not fvs:
            return [EMPTY_ENV]
        pool = self.values()
        combos = itertools.product(pool, repeat=len(fvs))
        out = []
        for combo in itertools.islice(combos, self.cfg.env_cap):
            out.append(Env(tuple(zip(fvs, combo))))
        return out

    def test_triple(self, P, e, Q) -> Verdict:
        fvs = free_vars(P)[0] | free_vars(e)[0] | free_vars(Q)[0]
        total = Pass(0, 0)
        for env in self._env_samples(fvs):
            try:
                code = eval_expr(e, env)
            except (TypeFault, UnboundVariable) as exc:
                return Fail(Witness("triple", EMP_WORLD, None, BOT,
                                    "bad-code", str(exc), env))
            for w in self.cfg.world_pool:
                verdict = self.sem_triple_at(self.cfg.level_k, w, P, code,
                                             Q, env)
                if isinstance(verdict, Fail):
                    return verdict
                total = Pass(total.samples + verdict.samples,
                             total.inconclusive + verdict.inconclusive)
        return total

    def test_entailment(self, P, Q) -> Verdict:
        goal = Implies(P, Q)
        fvs = free_vars(goal)[0]
        samples = 0
        base_inconclusive = self.inconclusive
        for env in self._env_samples(fvs):
            for w in self.cfg.world_pool:
                for h in self.universe():
                    samples += 1
                    if not self.member(goal, env, EMPTY_PREDENV, w, h):
                        return Fail(Witness(
                            "entailment", w, None, h, "implication-violation",
                            "heap satisfies the left side but not the right",
                            env))
        return Pass(samples, self.inconclusive - base_inconclusive)

    def replay(self, witness: Witness, goal_kind: str, P, extra=None) -> bool:
        """Re-examine a Fail witness; True iff the failure reproduces."""
        if witness.kind == "entailment":
            return not self.member(P, witness.env, EMPTY_PREDENV,
                                   witness.world, witness.heap)
        pre, e, post = P, extra[0], extra[1]
        try:
            code = eval_expr(e, witness.env)
        except (TypeFault, UnboundVariable):
            return True
        if not isinstance(code, CodeVal):
            return True
        pre_c = close_assertion(pre, witness.env, EMPTY_PREDENV)
        post_c = close_assertion(post, witness.env, EMPTY_PREDENV)
        g = witness.heap
        frame = witness.frame if witness.frame is not None else Emp()
        n = witness.level if witness.level is not None else self.cfg.level_k
        if not self._member3(pre_c, witness.world, frame, g):
            return False
        out = run_codeval(code, g, self.cfg.fuel)
        if isinstance(out, Fault):
            return True
        if isinstance(out, OutOfFuel):
            return False
        return not self._dcl_member3(post_c, witness.world, frame,
                                     truncate(n, out.heap))


def mu_approximation(mu: Mu, depth: int):
    """Unfold a recursive assertion `depth` times; residual occurrences of
    the bound relation variable become false."""
    approx = FalseA()
    for _ in range(depth):
        approx = substitute(mu.body,
                            rel_map={mu.relvar: (mu.params, approx)})
    if mu.params:
        approx = substitute(approx,
                            dict(zip(mu.params, mu.args)))
    return approx
