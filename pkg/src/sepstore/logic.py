"""Proof-script checker for the assertion logic.

A proof is a tree of nodes, each naming a rule, an instantiation, premise
subtrees and a stated conclusion (hypotheses + goal).  Checking validates
every node against its rule schema — conclusions are never trusted.  The
kernel consists of the separation/heap rules, the invariant-distribution
axioms, the recursion rules and an intuitionistic natural-deduction layer;
derived rules are macro-expanded into kernel derivations and re-checked.
A small decidable entailment engine (entail_basic) discharges the obvious
implication premises, and a negative registry rejects known-unsound rule
names with an explanation.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

from .grammar import parse, pretty
from .interp import EMPTY_ENV, IntVal, TypeFault, UnboundVariable, eval_expr
from .syntax import (
    And, Assign, BinOp, Diamond, Emp, Eq, EvalAt, Exists, FalseA, Forall,
    Free, If, Implies, IntLit, Judgement, LetDeref, LetNew, Leq, Mu, Or,
    PointsTo, PSEUDO_PURE, PURE, Quote, RelVar, Seq, Skip, Star, Tensor,
    Triple, TrueA, ValueLit, Var, canon_key, classify, conj, contractive_in,
    equal_mod_ac, free_vars, fresh_name, star, star_parts, substitute,
)


# ---------------------------------------------------------------------------
# errors and report


class ProofError(Exception):
    pass


class UnknownRule(ProofError):
    def __init__(self, name, info=None):
        self.name = name
        self.info = info
        msg = f"unknown rule {name!r}"
        if info:
            msg = f"rule {name!r} is rejected: {info}"
        super().__init__(msg)


class SchemaMismatch(ProofError):
    pass


class SideConditionViolation(ProofError):
    pass


class ScriptError(ProofError):
    pass


@dataclass(frozen=True)
class ProofNode:
    rule: str
    params: tuple = ()        # of (key, value); value is a raw string or AST
    premises: tuple = ()      # of ProofNode
    conclusion: Judgement = Judgement()

    def param_values(self, key):
        return tuple(v for k, v in self.params if k == key)


@dataclass
class CheckReport:
    ok: bool
    failures: list = field(default_factory=list)   # of (path, message)
    stats: Counter = field(default_factory=Counter)

    def render(self) -> str:
        lines = []
        if self.ok:
            lines.append("OK")
        else:
            lines.append("REJECTED")
            for path, msg in self.failures:
                lines.append(f"  at {path}: {msg}")
        used = ", ".join(f"{r}={n}" for r, n in sorted(self.stats.items()))
        lines.append(f"rules used: {used or 'none'}")
        return "\n".join(lines)


def make_node(rule, premises=(), conclude=None, hyps=(), **params) -> ProofNode:
    """Programmatic node builder; `conclude` is the goal assertion."""
    items = []
    for k, v in params.items():
        if isinstance(v, (tuple, list)):
            items.extend((k, x) for x in v)
        elif v is not None:
            items.append((k, v))
    return ProofNode(rule, tuple(items), tuple(premises),
                     Judgement(hyps=tuple(hyps), goal=conclude))


# ---------------------------------------------------------------------------
# negative registry

REJECTED = {
    "DeepFrameAxiom":
        "the assertion-level deep frame axiom {P}e{Q} => ({P}e{Q})(*)R is "
        "unsound: applying it selectively to one of two copies of a stored "
        "command builds a proof for a program that always faults (see the "
        "`counterexamples` subcommand, entry deep-frame)",
    "In":
        "folding a pseudo-pure hypothesis back into a precondition is "
        "unsound: together with recursive assertions it derives "
        "{emp}'skip'{false} from the valid implication emp => "
        "mu X.{X}'skip'{false} (entry in-rule)",
    "In-T":
        "the nested-triple instance of the folding rule fails for the same "
        "reason as In: the hypothesis must hold one rank higher than the "
        "conclusion provides (entry in-rule)",
    "DiamondIn":
        "even with the rank-shift modality <> on the hypothesis the folding "
        "direction fails: separating conjunction does not preserve rank, so "
        "the shifted hypothesis cannot be re-established for subheaps",
    "Conj":
        "conjoining two triples about the same code into a triple with "
        "conjoined pre/postconditions is unsound without restricting the "
        "assertions to precise ones; no such restriction is implemented",
    "DoubleNegationElim":
        "the assertion logic is intuitionistic: eliminating double negation "
        "together with the invariant-extension frame rule makes the logic "
        "inconsistent",
    "InvarianceNonPure":
        "invariance with a merely pseudo-pure conjunct is unsound: the "
        "conjunct can hold at the call rank yet fail at the smaller ranks "
        "the triple quantifies over (entry invariance, tag-mismatch witness)",
    "InvarianceR":
        "the restricted entailment form of non-pure invariance fails too: "
        "e|->e0 * (e1|->e0 /\\ phi) => (e|->e0 /\\ phi) * (e1|->e0 /\\ phi) "
        "has a tag-mismatch countermodel (entry invariance)",
}


def rejected_rule_info(name: str):
    """Explanation for a known-unsound rule name, or None."""
    return REJECTED.get(name)


# ---------------------------------------------------------------------------
# small assertion utilities


def eq_ac(a, b) -> bool:
    return equal_mod_ac(a, b)


def iff(a, b):
    return And(Implies(a, b), Implies(b, a))


def match_iff(goal):
    """Decompose And(A=>B, B=>A) into (A, B); None if not that shape."""
    if type(goal) is not And:
        return None
    l, r = goal.left, goal.right
    if type(l) is not Implies or type(r) is not Implies:
        return None
    if eq_ac(l.left, r.right) and eq_ac(l.right, r.left):
        return l.left, l.right
    return None


def and_parts(P) -> list:
    out = []

    def go(a):
        if type(a) is And:
            go(a.left)
            go(a.right)
        else:
            out.append(a)

    go(P)
    return out


def parts_remove(parts, target):
    """Remove one part equal (mod AC) to target; None if absent."""
    key = canon_key(target)
    for i, p in enumerate(parts):
        if canon_key(p) == key:
            return parts[:i] + parts[i + 1:]
    return None


def _conj_remove(parts, phi):
    """Remove phi from a flattened conjunction, part by part when phi is
    itself a conjunction; None if absent."""
    rest = parts_remove(parts, phi)
    if rest is not None:
        return rest
    if type(phi) is And:
        return parts_diff(parts, and_parts(phi))
    return None


def parts_diff(parts, to_remove):
    """Multiset difference; None if some element of to_remove is absent."""
    rest = list(parts)
    for t in to_remove:
        rest2 = parts_remove(rest, t)
        if rest2 is None:
            return None
        rest = rest2
    return rest


def pt_wild(e):
    """The anonymous points-to e |-> _ in desugared form."""
    z = fresh_name("v", free_vars(e)[0])
    return Exists(z, PointsTo(e, Var(z)))


def is_pt_wild(part):
    """The address e if part is (a renaming of) e |-> _, else None."""
    if type(part) is Exists and type(part.body) is PointsTo:
        p = part.body
        if type(p.value) is Var and p.value.name == part.var \
                and part.var not in free_vars(p.addr)[0]:
            return p.addr
    return None


def part_addr(part):
    """Canonical address key of a part that pins down one heap cell."""
    if type(part) is PointsTo:
        return canon_key(part.addr)
    e = is_pt_wild(part)
    if e is not None:
        return canon_key(e)
    if type(part) is Exists:
        for a in and_parts(part.body):
            if type(a) is PointsTo and part.var not in free_vars(a.addr)[0]:
                return canon_key(a.addr)
        return None
    if type(part) is And:
        for a in and_parts(part):
            if type(a) is PointsTo:
                return canon_key(a.addr)
    return None


def foralls(xs, body):
    for x in reversed(tuple(xs)):
        body = Forall(x, body)
    return body


def unfold_mu(m: Mu):
    """One unfolding: the body with the bound relation variable replaced
    by the recursive assertion and parameters by the arguments."""
    generic = Mu(m.relvar, m.params, m.body,
                 tuple(Var(p) for p in m.params))
    body = substitute(m.body, rel_map={m.relvar: (m.params, generic)})
    if m.params:
        body = substitute(body, dict(zip(m.params, m.args)))
    return body


# ---------------------------------------------------------------------------
# distribution of invariant extension

_ATOM_TYPES = (TrueA, FalseA, Emp, Eq, Leq, PointsTo)
_BIN_TYPES = (Implies, And, Or, Star)


def circ(P, R):
    """Invariant combination (P (*) R) * R."""
    return Star(Tensor(P, R), R)


def dist_step(L, R):
    """One outward-to-inward rewrite of L (*) R; None if stuck."""
    t = type(L)
    if t is Triple:
        return Triple(circ(L.pre, R), L.code, circ(L.post, R))
    if t is Tensor:
        return Tensor(L.left, circ(L.right, R))
    if t in (Forall, Exists):
        x, body = L.var, L.body
        if x in free_vars(R)[0]:
            x2 = fresh_name(x, free_vars(R)[0] | free_vars(body)[0] | {x})
            body = substitute(body, {x: Var(x2)})
            x = x2
        return t(x, Tensor(body, R))
    if t in _BIN_TYPES:
        return t(Tensor(L.left, R), Tensor(L.right, R))
    if t in _ATOM_TYPES:
        return L
    return None  # Mu, RelVar, Diamond: stuck until unfolded


def normalize_otimes(P):
    """Push every invariant extension inward as far as the distribution
    axioms allow; extensions over recursive assertions, relation variables
    and the rank modality are left in place."""
    t = type(P)
    if t is Tensor:
        left = normalize_otimes(P.left)
        right = normalize_otimes(P.right)
        step = dist_step(left, right)
        if step is None:
            return Tensor(left, right)
        return normalize_otimes(step)
    if t in (Forall, Exists):
        return t(P.var, normalize_otimes(P.body))
    if t in _BIN_TYPES:
        return t(normalize_otimes(P.left), normalize_otimes(P.right))
    if t is Triple:
        return Triple(normalize_otimes(P.pre), P.code,
                      normalize_otimes(P.post))
    if t is Mu:
        return Mu(P.relvar, P.params, normalize_otimes(P.body), P.args)
    if t is Diamond:
        return Diamond(normalize_otimes(P.body))
    return P


def circ_n(P, R):
    """Invariant combination with the extension already distributed."""
    return Star(normalize_otimes(Tensor(P, R)), R)


# ---------------------------------------------------------------------------
# ground evaluation


def ground_truth(A):
    """Truth value of a closed pure assertion; None when undecided."""
    t = type(A)
    if t is TrueA:
        return True
    if t is FalseA:
        return False
    if t in (Eq, Leq):
        try:
            a = eval_expr(A.left, EMPTY_ENV)
            b = eval_expr(A.right, EMPTY_ENV)
        except (TypeFault, UnboundVariable):
            return None
        if t is Eq:
            return a == b
        if isinstance(a, IntVal) and isinstance(b, IntVal):
            return a.n <= b.n
        return None
    if t is And:
        l, r = ground_truth(A.left), ground_truth(A.right)
        if l is False or r is False:
            return False
        if l is True and r is True:
            return True
        return None
    if t is Or:
        l, r = ground_truth(A.left), ground_truth(A.right)
        if l is True or r is True:
            return True
        if l is False and r is False:
            return False
        return None
    if t is Implies:
        l, r = ground_truth(A.left), ground_truth(A.right)
        if l is False or r is True:
            return True
        if l is True and r is False:
            return False
        return None
    return None


# ---------------------------------------------------------------------------
# decidable entailment fragment


def prenex(P):
    """Pull existentials out of star- and and-components (an equivalence,
    since the binders do not occur in the siblings)."""
    t = type(P)
    if t in (Star, And):
        left, right = prenex(P.left), prenex(P.right)
        binders = []

        def strip(side, other):
            while type(side) is Exists:
                x = side.var
                if x in free_vars(other)[0] or x in binders:
                    x2 = fresh_name(x, free_vars(other)[0]
                                    | free_vars(side.body)[0]
                                    | set(binders) | {x})
                    side = Exists(x2, substitute(side.body, {x: Var(x2)}))
                    continue
                binders.append(x)
                side = side.body
            return side

        left = strip(left, right)
        right = strip(right, left)
        core = t(left, right)
        for x in reversed(binders):
            core = Exists(x, core)
        return core
    if t is Exists:
        return Exists(P.var, prenex(P.body))
    return P


def _collect_exprs(ast, out, seen):
    """Sub-expressions usable as quantifier witnesses."""
    t = type(ast)
    if t in (IntLit, Var, BinOp, Quote):
        k = canon_key(ast)
        if k not in seen:
            seen.add(k)
            out.append(ast)
        if t is BinOp:
            _collect_exprs(ast.left, out, seen)
            _collect_exprs(ast.right, out, seen)
        return
    fields = getattr(t, "__dataclass_fields__", None)
    if not fields:
        return
    for name in fields:
        child = getattr(ast, name)
        if hasattr(type(child), "__dataclass_fields__"):
            _collect_exprs(child, out, seen)
        elif isinstance(child, tuple):
            for c in child:
                if hasattr(type(c), "__dataclass_fields__"):
                    _collect_exprs(c, out, seen)


def lhs_absurd(P) -> bool:
    """Whether P is unsatisfiable by the star laws and ground facts."""
    if ground_truth(P) is False:
        return True
    t = type(P)
    if t is And:
        return any(lhs_absurd(p) for p in and_parts(P))
    if t is Star:
        parts = star_parts(P)
        if any(lhs_absurd(p) for p in parts):
            return True
        addrs = [a for a in (part_addr(p) for p in parts) if a is not None]
        return len(addrs) != len(set(addrs))
    if t is Exists:
        return lhs_absurd(P.body)
    return False


def _unfold_first_mu(P):
    """One unfolding step applied to P itself or to its first mu star-part;
    None when there is nothing to unfold."""
    if type(P) is Mu:
        return normalize_otimes(unfold_mu(P))
    if type(P) is Star:
        parts = star_parts(P)
        for i, p in enumerate(parts):
            if type(p) is Mu:
                opened = normalize_otimes(unfold_mu(p))
                return star(*parts[:i], opened, *parts[i + 1:])
    return None


def _strip_units(a):
    """Remove emp units under * everywhere; keeps the memo key of an
    entailment problem in step with its structure."""
    t = type(a)
    if t is Star:
        left, right = _strip_units(a.left), _strip_units(a.right)
        if type(left) is Emp:
            return right
        if type(right) is Emp:
            return left
        return Star(left, right)
    if t is And:
        return And(_strip_units(a.left), _strip_units(a.right))
    if t is Or:
        return Or(_strip_units(a.left), _strip_units(a.right))
    if t is Implies:
        return Implies(_strip_units(a.left), _strip_units(a.right))
    if t is Tensor:
        return Tensor(_strip_units(a.left), _strip_units(a.right))
    if t is Forall:
        return Forall(a.var, _strip_units(a.body))
    if t is Exists:
        return Exists(a.var, _strip_units(a.body))
    if t is Triple:
        return Triple(_strip_units(a.pre), a.code, _strip_units(a.post))
    if t is Mu:
        return Mu(a.relvar, a.params, _strip_units(a.body), a.args)
    if t is Diamond:
        return Diamond(_strip_units(a.body))
    return a


class _Entailer:
    MAX_DEPTH = 60
    MAX_WITNESSES = 24

    def __init__(self, budget):
        self.budget = budget
        self.memo = {}

    def run(self, P, Q) -> bool:
        return self.ent(normalize_otimes(P), normalize_otimes(Q),
                        self.budget, 0)

    def ent(self, P, Q, mu, depth) -> bool:
        if depth > self.MAX_DEPTH:
            return False
        P, Q = _strip_units(P), _strip_units(Q)
        key = (canon_key(P), canon_key(Q), mu)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.memo[key] = False  # cut cycles pessimistically
        result = self._ent(P, Q, mu, depth + 1)
        self.memo[key] = result
        return result

    def _ent(self, P, Q, mu, d) -> bool:
        if eq_ac(P, Q):
            return True
        if type(Q) is TrueA or type(P) is FalseA:
            return True
        if ground_truth(Q) is True:
            return True
        if lhs_absurd(P):
            return True

        P2, Q2 = prenex(P), prenex(Q)
        if canon_key(P2) != canon_key(P) or canon_key(Q2) != canon_key(Q):
            return self.ent(P2, Q2, mu, d)

        if type(P) is Or:
            return self.ent(P.left, Q, mu, d) and self.ent(P.right, Q, mu, d)
        if type(Q) is And:
            return self.ent(P, Q.left, mu, d) and self.ent(P, Q.right, mu, d)

        if type(P) is And:
            parts = and_parts(P)
            if any(self.ent(p, Q, mu, d) for p in parts):
                return True
            # propagate equalities on variables
            for p in parts:
                if type(p) is Eq:
                    for x, e in ((p.left, p.right), (p.right, p.left)):
                        if type(x) is Var \
                                and x.name not in free_vars(e)[0]:
                            sub = {x.name: e}
                            P3 = substitute(P, sub)
                            Q3 = substitute(Q, sub)
                            if canon_key(P3) != canon_key(P) \
                                    and self.ent(P3, Q3, mu, d):
                                return True

        if type(Q) is Or:
            if self.ent(P, Q.left, mu, d) or self.ent(P, Q.right, mu, d):
                return True
        if type(Q) is Implies:
            return self.ent(And(P, Q.left), Q.right, mu, d)

        if type(Q) is Exists:
            if type(P) is Exists:
                z = fresh_name(P.var, free_vars(P)[0] | free_vars(Q)[0]
                               | {P.var, Q.var})
                if self.ent(substitute(P.body, {P.var: Var(z)}),
                            substitute(Q.body, {Q.var: Var(z)}), mu, d):
                    return True
            out, seen = [], set()
            _collect_exprs(P, out, seen)
            _collect_exprs(Q.body, out, seen)
            for w in out[:self.MAX_WITNESSES]:
                if Q.var in free_vars(w)[0]:
                    continue
                if self.ent(P, substitute(Q.body, {Q.var: w}), mu, d):
                    return True
        if type(P) is Exists:
            z = fresh_name(P.var, free_vars(P)[0] | free_vars(Q)[0]
                           | {P.var})
            return self.ent(substitute(P.body, {P.var: Var(z)}), Q, mu, d)

        if type(Q) is Forall:
            z = fresh_name(Q.var, free_vars(P)[0] | free_vars(Q)[0]
                           | {Q.var})
            return self.ent(P, substitute(Q.body, {Q.var: Var(z)}), mu, d)
        if type(P) is Forall:
            out, seen = [], set()
            _collect_exprs(Q, out, seen)
            _collect_exprs(P.body, out, seen)
            for w in out[:self.MAX_WITNESSES]:
                if P.var in free_vars(w)[0]:
                    continue
                if self.ent(substitute(P.body, {P.var: w}), Q, mu, d):
                    return True

        if type(P) is Diamond:
            if self.ent(P.body, Q, mu, d):
                return True

        if mu > 0:
            P3 = _unfold_first_mu(P)
            if P3 is not None and self.ent(P3, Q, mu - 1, d):
                return True
            Q3 = _unfold_first_mu(Q)
            if Q3 is not None and self.ent(P, Q3, mu - 1, d):
                return True

        if type(P) is Triple and type(Q) is Triple \
                and canon_key(P.code) == canon_key(Q.code):
            if self.ent(Q.pre, P.pre, mu, d) \
                    and self.ent(P.post, Q.post, mu, d):
                return True

        if type(P) is Implies and type(Q) is Implies:
            if self.ent(Q.left, P.left, mu, d) \
                    and self.ent(P.right, Q.right, mu, d):
                return True

        if type(P) is PointsTo and type(Q) is PointsTo:
            try:
                if eval_expr(P.addr, EMPTY_ENV) == eval_expr(Q.addr,
                                                             EMPTY_ENV) \
                        and eval_expr(P.value, EMPTY_ENV) == eval_expr(
                            Q.value, EMPTY_ENV):
                    return True
            except (TypeFault, UnboundVariable):
                pass

        if type(P) is Star or type(Q) is Star:
            return self._ent_star(P, Q, mu, d)
        return False

    def _ent_star(self, P, Q, mu, d) -> bool:
        lp = [p for p in star_parts(P) if type(p) is not Emp]
        lq = [q for q in star_parts(Q) if type(q) is not Emp]
        # cancel syntactically equal components first
        for q in list(lq):
            rest = parts_remove(lp, q)
            if rest is not None:
                lp = rest
                lq = parts_remove(lq, q)
        return self._match_star(tuple(lp), tuple(lq), mu, d)

    def _match_star(self, lp, lq, mu, d) -> bool:
        if not lq:
            return all(self.ent(p, Emp(), mu, d) for p in lp)
        if not lp:
            return all(self.ent(Emp(), q, mu, d) for q in lq)
        if len(lp) == 1:
            return self.ent(lp[0], star(*lq), mu, d)
        if len(lq) == 1:
            return self.ent(star(*lp), lq[0], mu, d)
        if len(lp) > 6:
            return False
        q, rest_q = lq[0], lq[1:]
        n = len(lp)
        for mask in range(1 << n):
            group = tuple(lp[i] for i in range(n) if mask >> i & 1)
            other = tuple(lp[i] for i in range(n) if not mask >> i & 1)
            cand = star(*group) if group else Emp()
            if self.ent(cand, q, mu, d) \
                    and self._match_star(other, rest_q, mu, d):
                return True
        return False


def entail_basic(P, Q, budget: int = 3) -> bool:
    """Sound, incomplete entailment check for P => Q.

    Uses equality modulo the star laws, distribution of invariant
    extension, bounded unfolding of recursive assertions, ground
    arithmetic, and the intuitionistic lattice laws.  Never claims an
    invalid entailment; may fail to prove a valid one.
    """
    return _Entailer(budget).run(P, Q)


def equiv_basic(P, Q, budget: int = 2) -> bool:
    if eq_ac(P, Q):
        return True
    e = _Entailer(budget)
    return e.run(P, Q) and e.run(Q, P)


# ---------------------------------------------------------------------------
# parameter access

_ASSERTION_KEYS = {"P", "Q", "R", "S", "A", "B", "P0", "phi", "psi",
                   "template", "inv"}
_EXPR_KEYS = {"e", "e0", "e1", "e2", "witness", "code", "init", "arg"}
_IDENT_KEYS = {"x", "k", "X", "var", "ys"}
_INT_KEYS = {"budget"}


def _parse_param(key, value):
    if not isinstance(value, str):
        return value
    if key in _ASSERTION_KEYS:
        return parse(value, "assertion")
    if key in _EXPR_KEYS:
        return parse(value, "expr")
    if key in _IDENT_KEYS:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", value):
            raise SchemaMismatch(f"parameter {key} must be an identifier, "
                                 f"got {value!r}")
        return value
    if key in _INT_KEYS:
        return int(value)
    raise SchemaMismatch(f"unknown parameter key {key!r}")


class _Params:
    def __init__(self, node: ProofNode):
        self.node = node

    def get(self, key, default=None):
        vals = self.node.param_values(key)
        if not vals:
            return default
        return _parse_param(key, vals[-1])

    def require(self, key):
        v = self.get(key)
        if v is None:
            raise SchemaMismatch(f"rule {self.node.rule} needs parameter "
                                 f"{key!r}")
        return v

    def get_all(self, key):
        return tuple(_parse_param(key, v)
                     for v in self.node.param_values(key))


# ---------------------------------------------------------------------------
# checker helpers


def need(cond, msg):
    if not cond:
        raise SchemaMismatch(msg)


def need_side(cond, msg):
    if not cond:
        raise SideConditionViolation(msg)


def _goal(node):
    return node.conclusion.goal


def _hyps(node):
    return node.conclusion.hyps


def _prem(node, i) -> Judgement:
    need(len(node.premises) > i,
         f"rule {node.rule} needs at least {i + 1} premise(s)")
    return node.premises[i].conclusion


def _need_premises(node, n):
    need(len(node.premises) == n,
         f"rule {node.rule} takes {n} premise(s), got {len(node.premises)}")


def _hyp_subset(sub, sup, extra=()):
    allowed = {canon_key(h) for h in sup} | {canon_key(h) for h in extra}
    return all(canon_key(h) in allowed for h in sub)


def _need_triple(goal, what):
    need(type(goal) is Triple, f"{what} must be a triple, got: "
         f"{pretty(goal)}")
    return goal


def _quoted(goal, cmdtype, what):
    need(type(goal.code) is Quote and type(goal.code.body) is cmdtype,
         f"{what}: the quoted command has the wrong shape")
    return goal.code.body


def _need_iff(goal, rulename):
    pair = match_iff(goal)
    need(pair is not None,
         f"rule {rulename} concludes an equivalence "
         "(written (A => B) /\\ (B => A))")
    return pair


def _fv(ast):
    return free_vars(ast)[0]


# ---------------------------------------------------------------------------
# first-order layer


def _r_Hyp(node):
    _need_premises(node, 0)
    g = canon_key(_goal(node))
    need(any(canon_key(h) == g for h in _hyps(node)),
         "Hyp: the goal is not among the hypotheses")


def _r_ImpI(node):
    _need_premises(node, 1)
    g = _goal(node)
    need(type(g) is Implies, "ImpI concludes an implication")
    p = _prem(node, 0)
    need(eq_ac(p.goal, g.right), "ImpI: premise goal differs from the "
         "consequent")
    need(_hyp_subset(p.hyps, _hyps(node), (g.left,)),
         "ImpI: premise hypotheses exceed conclusion hypotheses plus the "
         "antecedent")


def _r_ImpE(node):
    _need_premises(node, 2)
    p0, p1 = _prem(node, 0), _prem(node, 1)
    need(type(p0.goal) is Implies, "ImpE: first premise must be an "
         "implication")
    need(eq_ac(p1.goal, p0.goal.left),
         "ImpE: second premise differs from the antecedent")
    need(eq_ac(_goal(node), p0.goal.right),
         "ImpE: conclusion differs from the consequent")


def _r_AndI(node):
    _need_premises(node, 2)
    g = _goal(node)
    need(type(g) is And, "AndI concludes a conjunction")
    need(eq_ac(_prem(node, 0).goal, g.left)
         and eq_ac(_prem(node, 1).goal, g.right),
         "AndI: premises do not match the conjuncts")


def _r_AndE1(node):
    _need_premises(node, 1)
    p = _prem(node, 0)
    need(type(p.goal) is And, "AndE1: premise must be a conjunction")
    need(eq_ac(_goal(node), p.goal.left), "AndE1: conclusion is not the "
         "left conjunct")


def _r_AndE2(node):
    _need_premises(node, 1)
    p = _prem(node, 0)
    need(type(p.goal) is And, "AndE2: premise must be a conjunction")
    need(eq_ac(_goal(node), p.goal.right), "AndE2: conclusion is not the "
         "right conjunct")


def _r_OrI1(node):
    _need_premises(node, 1)
    g = _goal(node)
    need(type(g) is Or, "OrI1 concludes a disjunction")
    need(eq_ac(_prem(node, 0).goal, g.left), "OrI1: premise is not the "
         "left disjunct")


def _r_OrI2(node):
    _need_premises(node, 1)
    g = _goal(node)
    need(type(g) is Or, "OrI2 concludes a disjunction")
    need(eq_ac(_prem(node, 0).goal, g.right), "OrI2: premise is not the "
         "right disjunct")


def _r_OrE(node):
    _need_premises(node, 3)
    p0, p1, p2 = (_prem(node, i) for i in range(3))
    need(type(p0.goal) is Or, "OrE: first premise must be a disjunction")
    g = _goal(node)
    need(eq_ac(p1.goal, g) and eq_ac(p2.goal, g),
         "OrE: branch premises must conclude the goal")
    need(_hyp_subset(p1.hyps, _hyps(node), (p0.goal.left,)),
         "OrE: left branch hypotheses are wrong")
    need(_hyp_subset(p2.hyps, _hyps(node), (p0.goal.right,)),
         "OrE: right branch hypotheses are wrong")


def _r_ForallI(node):
    _need_premises(node, 1)
    g = _goal(node)
    need(type(g) is Forall, "ForallI concludes a universal")
    p = _prem(node, 0)
    need(eq_ac(Forall(g.var, p.goal), g),
         "ForallI: premise goal does not generalise to the conclusion")
    for h in _hyps(node):
        need_side(g.var not in _fv(h),
                  f"ForallI: {g.var} occurs free in a hypothesis")


def _r_ForallE(node):
    _need_premises(node, 1)
    p = _prem(node, 0)
    need(type(p.goal) is Forall, "ForallE: premise must be a universal")
    w = _Params(node).get("witness", Var(p.goal.var))
    need(eq_ac(_goal(node), substitute(p.goal.body, {p.goal.var: w})),
         "ForallE: conclusion is not the instantiated body")


def _r_ExistsI(node):
    _need_premises(node, 1)
    g = _goal(node)
    need(type(g) is Exists, "ExistsI concludes an existential")
    w = _Params(node).require("witness")
    need(eq_ac(_prem(node, 0).goal, substitute(g.body, {g.var: w})),
         "ExistsI: premise is not the body at the witness")


def _r_ExistsE(node):
    _need_premises(node, 2)
    p0, p1 = _prem(node, 0), _prem(node, 1)
    need(type(p0.goal) is Exists, "ExistsE: first premise must be an "
         "existential")
    g = _goal(node)
    need(eq_ac(p1.goal, g), "ExistsE: second premise must conclude the goal")
    x = p0.goal.var
    need(_hyp_subset(p1.hyps, _hyps(node), (p0.goal.body,)),
         "ExistsE: branch hypotheses are wrong")
    need_side(x not in _fv(g), f"ExistsE: {x} occurs free in the goal")
    for h in _hyps(node):
        need_side(x not in _fv(h),
                  f"ExistsE: {x} occurs free in a hypothesis")


def _r_TrueI(node):
    _need_premises(node, 0)
    need(type(_goal(node)) is TrueA, "TrueI concludes true")


def _r_FalseE(node):
    _need_premises(node, 1)
    need(type(_prem(node, 0).goal) is FalseA,
         "FalseE: premise must be false")


def _r_EqRefl(node):
    _need_premises(node, 0)
    g = _goal(node)
    need(type(g) is Eq and canon_key(g.left) == canon_key(g.right),
         "EqRefl concludes e = e")


def _r_EqSubst(node):
    _need_premises(node, 2)
    ps = _Params(node)
    A = ps.require("template")
    x = ps.require("x")
    p0, p1 = _prem(node, 0), _prem(node, 1)
    need(type(p0.goal) is Eq, "EqSubst: first premise must be an equation")
    e1, e2 = p0.goal.left, p0.goal.right
    need(eq_ac(p1.goal, substitute(A, {x: e1})),
         "EqSubst: second premise is not the template at the left side")
    need(eq_ac(_goal(node), substitute(A, {x: e2})),
         "EqSubst: conclusion is not the template at the right side")


def _r_ArithFact(node):
    _need_premises(node, 0)
    need(ground_truth(_goal(node)) is True,
         "ArithFact: goal is not a true closed arithmetic fact")


def _r_Entail(node):
    _need_premises(node, 0)
    g = _goal(node)
    budget = _Params(node).get("budget", 3)
    pair = match_iff(g)
    if pair is not None:
        a, b = pair
        need(entail_basic(a, b, budget) and entail_basic(b, a, budget),
             "Entail: the equivalence is not derivable by the basic "
             "entailment engine")
        return
    need(type(g) is Implies, "Entail concludes an implication")
    need(entail_basic(g.left, g.right, budget),
         "Entail: not derivable by the basic entailment engine")


# ---------------------------------------------------------------------------
# star laws


def _r_star_ac(node):
    _need_premises(node, 0)
    a, b = _need_iff(_goal(node), node.rule)
    need(eq_ac(a, b), f"{node.rule}: the two sides differ beyond "
         "associativity/commutativity/unit")


def _r_StarZero(node):
    _need_premises(node, 0)
    a, b = _need_iff(_goal(node), "StarZero")
    for l, r in ((a, b), (b, a)):
        if type(r) is FalseA and any(type(p) is FalseA
                                     for p in star_parts(l)):
            return
    raise SchemaMismatch("StarZero matches P * false <=> false")


def _r_StarOverlap(node):
    _need_premises(node, 0)
    a, b = _need_iff(_goal(node), "StarOverlap")
    for l, r in ((a, b), (b, a)):
        if type(r) is not FalseA:
            continue
        addrs = [canon_key(p.addr) for p in star_parts(l)
                 if type(p) is PointsTo]
        if len(addrs) != len(set(addrs)):
            return
    raise SchemaMismatch("StarOverlap matches "
                         "(e |-> e1 * e |-> e2) <=> false")


def _r_StarMono(node):
    _need_premises(node, 2)
    p0, p1 = _prem(node, 0), _prem(node, 1)
    need(type(p0.goal) is Implies and type(p1.goal) is Implies,
         "StarMono: premises must be implications")
    g = _goal(node)
    need(type(g) is Implies, "StarMono concludes an implication")
    need(eq_ac(g.left, Star(p0.goal.left, p1.goal.left)),
         "StarMono: antecedent is not the starred premise antecedents")
    need(eq_ac(g.right, Star(p0.goal.right, p1.goal.right)),
         "StarMono: consequent is not the starred premise consequents")


# ---------------------------------------------------------------------------
# command rules


def _r_Skip(node):
    _need_premises(node, 0)
    g = _need_triple(_goal(node), "Skip conclusion")
    _quoted(g, Skip, "Skip")
    need(eq_ac(g.pre, g.post), "Skip: pre- and postcondition must agree")


def _r_Update(node):
    _need_premises(node, 0)
    g = _need_triple(_goal(node), "Update conclusion")
    cmd = _quoted(g, Assign, "Update")
    e, e0 = cmd.target, cmd.source
    pre_parts = star_parts(g.pre)
    post_parts = star_parts(g.post)
    ek = canon_key(e)
    for i, p in enumerate(pre_parts):
        w = is_pt_wild(p)
        if w is None or canon_key(w) != ek:
            continue
        rest_pre = pre_parts[:i] + pre_parts[i + 1:]
        rest_post = parts_remove(post_parts, PointsTo(e, e0))
        if rest_post is not None \
                and eq_ac(star(*rest_pre), star(*rest_post)):
            return
    raise SchemaMismatch("Update matches {e |-> _ * P}'[e] := e0'"
                         "{e |-> e0 * P}")


def _int_valued(e) -> bool:
    """True when e can only evaluate to an integer (or fault)."""
    t = type(e)
    if t is IntLit:
        return True
    if t is BinOp:
        # arithmetic faults on code operands, so the result is an integer
        return True
    if t is ValueLit:
        return isinstance(e.value, IntVal)
    return False


def _r_UpdateInv(node):
    _need_premises(node, 0)
    g = _need_triple(_goal(node), "UpdateInv conclusion")
    cmd = _quoted(g, Assign, "UpdateInv")
    e, e0 = cmd.target, cmd.source
    pre_parts = star_parts(g.pre)
    post_parts = star_parts(g.post)
    need(len(pre_parts) == 2 and len(post_parts) == 2,
         "UpdateInv: pre and post each have exactly two star components")
    ek, e0k = canon_key(e), canon_key(e0)

    def split_cell(part, addr_key):
        # And-parts: one points-to at addr_key with value e0, rest = phi
        aps = and_parts(part)
        for i, a in enumerate(aps):
            if type(a) is PointsTo and canon_key(a.addr) == addr_key \
                    and canon_key(a.value) == e0k:
                phi = conj(*(aps[:i] + aps[i + 1:]))
                return a.addr, phi
        return None

    for pre_wild, pre_inv in (pre_parts, pre_parts[::-1]):
        w = is_pt_wild(pre_wild)
        if w is None or canon_key(w) != ek:
            continue
        for post_upd, post_inv in (post_parts, post_parts[::-1]):
            upd = split_cell(post_upd, ek)
            if upd is None:
                continue
            _, phi1 = upd
            inv = split_cell(post_inv, None) \
                if False else None
            aps = and_parts(post_inv)
            for i, a in enumerate(aps):
                if type(a) is not PointsTo \
                        or canon_key(a.value) != e0k:
                    continue
                phi2 = conj(*(aps[:i] + aps[i + 1:]))
                if canon_key(phi1) != canon_key(phi2):
                    continue
                if not eq_ac(pre_inv, post_inv):
                    continue
                need_side(classify(phi1) in (PURE, PSEUDO_PURE),
                          "UpdateInv: the invariant conjunct must be "
                          "pseudo-pure")
                # a rank-sensitive conjunct survives the write only if the
                # assigned expression cannot store code: the freshly
                # written cell would otherwise outrank the cell the
                # conjunct was established for
                need_side(classify(phi1) == PURE or _int_valued(e0),
                          "UpdateInv: a pseudo-pure (rank-sensitive) "
                          "conjunct needs an integer-valued source "
                          "expression")
                return
    raise SchemaMismatch(
        "UpdateInv matches {e |-> _ * (e1 |-> e0 /\\ phi)}'[e] := e0'"
        "{(e |-> e0 /\\ phi) * (e1 |-> e0 /\\ phi)}")


def _r_Free(node):
    _need_premises(node, 0)
    g = _need_triple(_goal(node), "Free conclusion")
    cmd = _quoted(g, Free, "Free")
    e = cmd.addr
    ek = canon_key(e)
    for i, p in enumerate(star_parts(g.pre)):
        w = is_pt_wild(p)
        if w is not None and canon_key(w) == ek:
            rest = star_parts(g.pre)[:i] + star_parts(g.pre)[i + 1:]
            if eq_ac(star(*rest), g.post):
                return
    raise SchemaMismatch("Free matches {e |-> _ * P}'free(e)'{P}")


def _r_Seq(node):
    _need_premises(node, 2)
    g = _need_triple(_goal(node), "Seq conclusion")
    cmd = _quoted(g, Seq, "Seq")
    t0 = _need_triple(_prem(node, 0).goal, "Seq first premise")
    t1 = _need_triple(_prem(node, 1).goal, "Seq second premise")
    need(type(t0.code) is Quote and type(t1.code) is Quote,
         "Seq: premises must quote the two commands")
    need(canon_key(t0.code.body) == canon_key(cmd.first)
         and canon_key(t1.code.body) == canon_key(cmd.second),
         "Seq: premise commands do not compose to the conclusion command")
    need(eq_ac(t0.pre, g.pre), "Seq: precondition mismatch")
    need(eq_ac(t0.post, t1.pre), "Seq: intermediate assertion mismatch")
    need(eq_ac(t1.post, g.post), "Seq: postcondition mismatch")


def _r_If(node):
    _need_premises(node, 2)
    g = _need_triple(_goal(node), "If conclusion")
    cmd = _quoted(g, If, "If")
    cond = Eq(cmd.lhs, cmd.rhs)
    t0 = _need_triple(_prem(node, 0).goal, "If then-premise")
    t1 = _need_triple(_prem(node, 1).goal, "If else-premise")
    need(type(t0.code) is Quote
         and canon_key(t0.code.body) == canon_key(cmd.then),
         "If: first premise must be about the then-branch")
    need(type(t1.code) is Quote
         and canon_key(t1.code.body) == canon_key(cmd.els),
         "If: second premise must be about the else-branch")
    need(eq_ac(t0.pre, And(g.pre, cond)),
         "If: then-premise precondition must add the guard")
    need(eq_ac(t1.pre, And(g.pre, Implies(cond, FalseA()))),
         "If: else-premise precondition must add the negated guard")
    need(eq_ac(t0.post, g.post) and eq_ac(t1.post, g.post),
         "If: postcondition mismatch")


def _r_Deref(node):
    _need_premises(node, 1)
    g = _need_triple(_goal(node), "Deref conclusion")
    cmd = _quoted(g, LetDeref, "Deref")
    x, e = cmd.var, cmd.addr
    t = _need_triple(_prem(node, 0).goal, "Deref premise")
    need(type(t.code) is Quote
         and canon_key(t.code.body) == canon_key(cmd.body),
         "Deref: premise must be about the let-body")
    need(eq_ac(t.post, g.post), "Deref: postcondition mismatch")
    need(type(g.pre) is Exists, "Deref: precondition must be existential")
    body = substitute(g.pre.body, {g.pre.var: Var(x)})
    need(eq_ac(body, t.pre),
         "Deref: premise precondition is not the opened conclusion "
         "precondition")
    need(any(type(p) is PointsTo and canon_key(p.addr) == canon_key(e)
             and type(p.value) is Var and p.value.name == x
             for p in star_parts(t.pre)),
         "Deref: premise precondition lacks the component e |-> x")
    need_side(x not in _fv(e), f"Deref: {x} occurs free in the address")
    need_side(x not in _fv(g.post),
              f"Deref: {x} occurs free in the postcondition")


def _r_New(node):
    _need_premises(node, 1)
    g = _need_triple(_goal(node), "New conclusion")
    cmd = _quoted(g, LetNew, "New")
    x = cmd.var
    t = _need_triple(_prem(node, 0).goal, "New premise")
    need(type(t.code) is Quote
         and canon_key(t.code.body) == canon_key(cmd.body),
         "New: premise must be about the let-body")
    need(eq_ac(t.post, g.post), "New: postcondition mismatch")
    block = []
    for i, init in enumerate(cmd.inits):
        addr = Var(x) if i == 0 else BinOp("+", Var(x), IntLit(i))
        block.append(PointsTo(addr, init))
    rest = parts_diff(star_parts(t.pre), block)
    need(rest is not None,
         "New: premise precondition lacks the freshly initialised block")
    need(eq_ac(star(*rest), g.pre),
         "New: conclusion precondition differs from the premise minus the "
         "block")
    for part in (g.pre, g.post, *cmd.inits):
        need_side(x not in _fv(part),
                  f"New: {x} occurs free where it must not")


def _find_stored_spec(pre, e, k):
    """Find the star component of `pre` of shape e |-> R[_] (possibly a
    recursive assertion that unfolds to it) and return R[k]."""
    ek = canon_key(e)
    for part in star_parts(pre):
        cands = [part]
        if type(part) is Mu:
            cands.append(normalize_otimes(unfold_mu(part)))
        for c in cands:
            if type(c) is not Exists:
                continue
            k2 = c.var
            aps = and_parts(c.body)
            for i, a in enumerate(aps):
                if type(a) is PointsTo and canon_key(a.addr) == ek \
                        and type(a.value) is Var and a.value.name == k2 \
                        and k2 not in _fv(a.addr):
                    rest = conj(*(aps[:i] + aps[i + 1:]))
                    yield substitute(rest, {k2: Var(k)})


def _r_Eval(node):
    _need_premises(node, 1)
    g = _need_triple(_goal(node), "Eval conclusion")
    cmd = _quoted(g, EvalAt, "Eval")
    e = cmd.addr
    pg = _prem(node, 0).goal
    need(type(pg) is Implies, "Eval: premise must be an implication")
    t = _need_triple(pg.right, "Eval premise consequent")
    need(type(t.code) is Var, "Eval: the premise triple runs a code "
         "variable")
    k = t.code.name
    need_side(k not in _fv(g),
              f"Eval: {k} must be fresh for the conclusion")
    for h in _hyps(node):
        need_side(k not in _fv(h),
                  f"Eval: {k} occurs free in a hypothesis")
    need(equiv_basic(t.pre, g.pre),
         "Eval: premise precondition differs from the conclusion "
         "precondition")
    need(equiv_basic(t.post, g.post),
         "Eval: premise postcondition differs from the conclusion "
         "postcondition")
    for Rk in _find_stored_spec(g.pre, e, k):
        if equiv_basic(Rk, pg.left):
            return
    raise SchemaMismatch(
        "Eval: the precondition has no component e |-> R[_] whose "
        "specification matches the premise antecedent")


# ---------------------------------------------------------------------------
# structural rules on triples


def _r_Conseq(node):
    _need_premises(node, 2)
    g = _goal(node)
    need(type(g) is Implies, "Conseq concludes an implication between "
         "triples")
    t1 = _need_triple(g.left, "Conseq antecedent")
    t2 = _need_triple(g.right, "Conseq consequent")
    need(canon_key(t1.code) == canon_key(t2.code),
         "Conseq: both triples must run the same code")
    p0, p1 = _prem(node, 0).goal, _prem(node, 1).goal
    need(type(p0) is Implies
         and eq_ac(p0.left, t2.pre) and eq_ac(p0.right, t1.pre),
         "Conseq: first premise must be P' => P (strengthening the "
         "precondition)")
    need(type(p1) is Implies
         and eq_ac(p1.left, t1.post) and eq_ac(p1.right, t2.post),
         "Conseq: second premise must be Q => Q' (weakening the "
         "postcondition)")


def _r_Disj(node):
    _need_premises(node, 0)
    g = _goal(node)
    need(type(g) is Implies and type(g.left) is And,
         "Disj concludes (T1 /\\ T2) => T3")
    t1 = _need_triple(g.left.left, "Disj first triple")
    t2 = _need_triple(g.left.right, "Disj second triple")
    t3 = _need_triple(g.right, "Disj conclusion triple")
    need(canon_key(t1.code) == canon_key(t2.code) == canon_key(t3.code),
         "Disj: all triples must run the same code")
    need(eq_ac(t3.pre, Or(t1.pre, t2.pre))
         and eq_ac(t3.post, Or(t1.post, t2.post)),
         "Disj: conclusion must disjoin the pre- and postconditions")


def _r_ExistAux(node):
    _need_premises(node, 0)
    g = _goal(node)
    need(type(g) is Implies and type(g.left) is Forall,
         "ExistAux concludes (forall x. T) => T'")
    x = g.left.var
    t = _need_triple(g.left.body, "ExistAux quantified triple")
    expected = Triple(Exists(x, t.pre), t.code, Exists(x, t.post))
    need(eq_ac(g.right, expected),
         "ExistAux: consequent must existentially close pre and post")
    need_side(x not in _fv(t.code),
              f"ExistAux: {x} occurs free in the code expression")


def _r_Invariance(node):
    _need_premises(node, 0)
    g = _goal(node)
    need(type(g) is Implies, "Invariance concludes an implication between "
         "triples")
    t1 = _need_triple(g.left, "Invariance antecedent")
    t2 = _need_triple(g.right, "Invariance consequent")
    need(canon_key(t1.code) == canon_key(t2.code),
         "Invariance: both triples must run the same code")
    psi = _Params(node).get("psi")
    candidates = [psi] if psi is not None else and_parts(t2.pre)
    for cand in candidates:
        if cand is None:
            continue
        if not eq_ac(t2.pre, And(t1.pre, cand)):
            continue
        if not eq_ac(t2.post, And(t1.post, cand)):
            continue
        need_side(classify(cand) == PURE,
                  "Invariance: the invariant conjunct must be pure")
        return
    raise SchemaMismatch("Invariance matches {P}e{Q} => "
                         "{P /\\ psi}e{Q /\\ psi}")


def _r_TensorFrame(node):
    _need_premises(node, 1)
    g = _goal(node)
    need(type(g) is Tensor, "TensorFrame concludes P (*) R")
    need(eq_ac(g.left, _prem(node, 0).goal),
         "TensorFrame: left operand differs from the premise")
    need(not _hyps(node) and not _prem(node, 0).hyps,
         "TensorFrame applies to theorems only (no open hypotheses)")


def _r_StarFrame(node):
    _need_premises(node, 0)
    g = _goal(node)
    need(type(g) is Implies, "StarFrame concludes an implication between "
         "triples")
    t1 = _need_triple(g.left, "StarFrame antecedent")
    t2 = _need_triple(g.right, "StarFrame consequent")
    need(canon_key(t1.code) == canon_key(t2.code),
         "StarFrame: both triples must run the same code")
    R = _Params(node).get("R")
    if R is None:
        rest = parts_diff(star_parts(t2.pre), star_parts(t1.pre))
        need(rest is not None,
             "StarFrame: consequent precondition must extend the "
             "antecedent's by a frame")
        R = star(*rest)
    need(eq_ac(t2.pre, Star(t1.pre, R))
         and eq_ac(t2.post, Star(t1.post, R)),
         "StarFrame: the same frame must extend pre and post")


def _r_Out(node):
    _need_premises(node, 1)
    g = _goal(node)
    need(type(g) is Implies, "Out concludes phi => {P}e{Q}")
    t2 = _need_triple(g.right, "Out consequent")
    phi = g.left
    t1 = _need_triple(_prem(node, 0).goal, "Out premise")
    need(canon_key(t1.code) == canon_key(t2.code),
         "Out: premise and conclusion must run the same code")
    need(eq_ac(t1.pre, And(phi, t2.pre)),
         "Out: premise precondition must be phi /\\ P")
    need(eq_ac(t1.post, t2.post), "Out: postcondition mismatch")
    need_side(classify(phi) in (PURE, PSEUDO_PURE),
              "Out: the extracted hypothesis must be pseudo-pure")


def _r_DiamondOut(node):
    _need_premises(node, 1)
    g = _goal(node)
    need(type(g) is Implies and type(g.right) is Diamond,
         "DiamondOut concludes phi => <> {P}e{Q}")
    t2 = _need_triple(g.right.body, "DiamondOut consequent")
    phi = g.left
    t1 = _need_triple(_prem(node, 0).goal, "DiamondOut premise")
    need(canon_key(t1.code) == canon_key(t2.code),
         "DiamondOut: premise and conclusion must run the same code")
    need(eq_ac(t1.pre, And(phi, t2.pre)),
         "DiamondOut: premise precondition must be phi /\\ P")
    need(eq_ac(t1.post, t2.post), "DiamondOut: postcondition mismatch")
    need_side(classify(phi) in (PURE, PSEUDO_PURE),
              "DiamondOut: the extracted hypothesis must be pseudo-pure")


def _r_DiamondE(node):
    _need_premises(node, 0)
    g = _goal(node)
    need(type(g) is Implies and type(g.left) is Diamond
         and eq_ac(g.left.body, g.right),
         "DiamondE concludes <> P => P")


# ---------------------------------------------------------------------------
# recursion and distribution


def _r_MuUnfold(node):
    _need_premises(node, 0)
    a, b = _need_iff(_goal(node), "MuUnfold")
    for m, other in ((a, b), (b, a)):
        if type(m) is Mu:
            need_side(contractive_in(m.body, m.relvar),
                      "MuUnfold: body must be contractive in the bound "
                      "relation variable")
            if eq_ac(other, unfold_mu(m)):
                return
    raise SchemaMismatch("MuUnfold matches mu X. P <=> P[X := mu X. P]")


def _r_RUnique(node):
    _need_premises(node, 2)
    ps = _Params(node)
    P = ps.require("P")
    X = ps.require("X")
    need_side(contractive_in(P, X),
              "RUnique: the template must be contractive in the relation "
              "variable")
    pair0 = _need_iff(_prem(node, 0).goal, "RUnique (first premise)")
    pair1 = _need_iff(_prem(node, 1).goal, "RUnique (second premise)")
    goal_pair = _need_iff(_goal(node), "RUnique")
    R, S = goal_pair

    def fixes(pair, fixed):
        a, b = pair
        for lhs, rhs in ((a, b), (b, a)):
            if eq_ac(lhs, fixed) \
                    and eq_ac(rhs, substitute(P, rel_map={X: ((), fixed)})):
                return True
        return False

    need(fixes(pair0, R) and fixes(pair1, S)
         or fixes(pair0, S) and fixes(pair1, R),
         "RUnique: premises must show both sides are fixed points of the "
         "template")


def _dist_rule(node, want):
    _need_premises(node, 0)
    a, b = _need_iff(_goal(node), node.rule)
    for l, r in ((a, b), (b, a)):
        if type(l) is not Tensor:
            continue
        if not want(l.left):
            continue
        step = dist_step(l.left, l.right)
        if step is not None and eq_ac(r, step):
            return
    raise SchemaMismatch(f"{node.rule}: conclusion does not match the "
                         "distribution axiom")


def _r_DistTriple(node):
    _dist_rule(node, lambda L: type(L) is Triple)


def _r_DistTensorTensor(node):
    _dist_rule(node, lambda L: type(L) is Tensor)


def _r_DistQuant(node):
    _dist_rule(node, lambda L: type(L) in (Forall, Exists))


def _r_DistBinOp(node):
    _dist_rule(node, lambda L: type(L) in _BIN_TYPES)


def _r_DistAtom(node):
    _dist_rule(node, lambda L: type(L) in _ATOM_TYPES)


# ---------------------------------------------------------------------------
# derived rules: macro-expanded and re-checked


def _assumed(j: Judgement) -> ProofNode:
    return ProofNode("_assumed", (), (), j)


def _r_assumed(node):
    raise UnknownRule("_assumed")  # never valid in a user script


def _expand_TensorMono(node):
    p = _prem(node, 0)
    g = _goal(node)
    need(type(g) is Implies and type(g.left) is Tensor
         and type(g.right) is Tensor,
         "TensorMono concludes P (*) R => P' (*) R")
    need(eq_ac(g.left.right, g.right.right),
         "TensorMono: the extensions must agree")
    R = g.left.right
    need(type(p.goal) is Implies, "TensorMono: premise must be an "
         "implication")
    imp = p.goal
    n1 = _assumed(p)
    n2 = make_node("TensorFrame", [n1], Tensor(imp, R))
    dist = iff(Tensor(imp, R),
               Implies(Tensor(imp.left, R), Tensor(imp.right, R)))
    n3 = make_node("DistBinOp", [], dist)
    n4 = make_node("AndE1", [n3], dist.left)
    n5 = make_node("ImpE", [n4, n2], dist.left.right)
    return n5


def _spec_cell(e, k, spec):
    """The stored-specification component e |-> spec[_]."""
    return Exists(k, And(PointsTo(e, Var(k)), spec))


def _expand_EvalNonRec1(node):
    ps = _Params(node)
    e, P, Q = ps.require("e"), ps.require("P"), ps.require("Q")
    ys = ps.get_all("ys")
    avoid = _fv(P) | _fv(Q) | _fv(e) | set(ys)
    k = fresh_name("k", avoid)
    Rk = foralls(ys, Triple(P, Var(k), Q))
    spec = _spec_cell(e, k, Rk)
    pre, post = Star(P, spec), Star(Q, spec)
    hyp = (Rk,)
    cur = make_node("Hyp", [], Rk, hyps=hyp)
    goal = Rk
    for y in ys:
        goal = substitute(goal.body, {goal.var: Var(y)})
        cur = make_node("ForallE", [cur], goal, hyps=hyp, witness=Var(y))
    sf = make_node("StarFrame", [],
                   Implies(Triple(P, Var(k), Q),
                           Triple(pre, Var(k), post)), R=spec)
    ie = make_node("ImpE", [sf, cur], Triple(pre, Var(k), post), hyps=hyp)
    ii = make_node("ImpI", [ie], Implies(Rk, Triple(pre, Var(k), post)))
    return make_node("Eval", [ii], Triple(pre, Quote(EvalAt(e)), post))


def _expand_EvalNonRecUpd(node):
    ps = _Params(node)
    e, P, Q = ps.require("e"), ps.require("P"), ps.require("Q")
    ys = ps.get_all("ys")
    avoid = _fv(P) | _fv(Q) | _fv(e) | set(ys)
    k = fresh_name("k", avoid)
    inner_pre = Star(P, pt_wild(e))
    Rk = foralls(ys, Triple(inner_pre, Var(k), Q))
    spec = _spec_cell(e, k, Rk)
    pre = Star(P, spec)
    hyp = (Rk,)
    cur = make_node("Hyp", [], Rk, hyps=hyp)
    goal = Rk
    for y in ys:
        goal = substitute(goal.body, {goal.var: Var(y)})
        cur = make_node("ForallE", [cur], goal, hyps=hyp, witness=Var(y))
    ent1 = make_node("Entail", [], Implies(pre, inner_pre))
    ent2 = make_node("Entail", [], Implies(Q, Q))
    cq = make_node("Conseq", [ent1, ent2],
                   Implies(Triple(inner_pre, Var(k), Q),
                           Triple(pre, Var(k), Q)))
    ie = make_node("ImpE", [cq, cur], Triple(pre, Var(k), Q), hyps=hyp)
    ii = make_node("ImpI", [ie], Implies(Rk, Triple(pre, Var(k), Q)))
    return make_node("Eval", [ii], Triple(pre, Quote(EvalAt(e)), Q))


def _expand_EvalRec(node):
    ps = _Params(node)
    e, P, Q = ps.require("e"), ps.require("P"), ps.require("Q")
    P0 = ps.get("P0", Emp())
    ys = ps.get_all("ys")
    avoid = _fv(P) | _fv(Q) | _fv(P0) | _fv(e) | set(ys)
    k = fresh_name("k", avoid)
    X = fresh_name("X", free_vars(P)[1] | free_vars(Q)[1]
                   | free_vars(P0)[1])
    spec0 = _spec_cell(e, k, foralls(ys, Triple(P, Var(k), Q)))
    R = Mu(X, (), Tensor(Star(spec0, P0), RelVar(X)), ())
    preR, postR = circ_n(P, R), circ_n(Q, R)
    Sk = foralls(ys, Triple(preR, Var(k), postR))
    specS = _spec_cell(e, k, Sk)
    pre_eval = star(normalize_otimes(Tensor(P, R)), specS,
                    normalize_otimes(Tensor(P0, R)))
    hyp = (Sk,)
    # S[k] => {P o R} k {Q o R}
    cur = make_node("Hyp", [], Sk, hyps=hyp)
    goal = Sk
    for y in ys:
        goal = substitute(goal.body, {goal.var: Var(y)})
        cur = make_node("ForallE", [cur], goal, hyps=hyp, witness=Var(y))
    n1 = make_node("ImpI", [cur],
                   Implies(Sk, Triple(preR, Var(k), postR)))
    # {P o R} k {Q o R} => {pre_eval} k {Q o R}
    entA = make_node("Entail", [], Implies(pre_eval, preR))
    entB = make_node("Entail", [], Implies(postR, postR))
    n2 = make_node("Conseq", [entA, entB],
                   Implies(Triple(preR, Var(k), postR),
                           Triple(pre_eval, Var(k), postR)))
    th = make_node("Hyp", [], Sk, hyps=hyp)
    t1 = make_node("ImpE", [n1, th], Triple(preR, Var(k), postR), hyps=hyp)
    t2 = make_node("ImpE", [n2, t1], Triple(pre_eval, Var(k), postR),
                   hyps=hyp)
    t3 = make_node("ImpI", [t2],
                   Implies(Sk, Triple(pre_eval, Var(k), postR)))
    n4 = make_node("Eval", [t3],
                   Triple(pre_eval, Quote(EvalAt(e)), postR))
    entC = make_node("Entail", [], Implies(preR, pre_eval))
    entD = make_node("Entail", [], Implies(postR, postR))
    c2 = make_node("Conseq", [entC, entD],
                   Implies(Triple(pre_eval, Quote(EvalAt(e)), postR),
                           Triple(preR, Quote(EvalAt(e)), postR)))
    return make_node("ImpE", [c2, n4],
                     Triple(preR, Quote(EvalAt(e)), postR))


_MACROS = {
    "TensorMono": _expand_TensorMono,
    "EvalNonRec1": _expand_EvalNonRec1,
    "EvalNonRecUpd": _expand_EvalNonRecUpd,
    "EvalRec": _expand_EvalRec,
}

_MACRO_PREMISES = {"TensorMono": 1, "EvalNonRec1": 0,
                   "EvalNonRecUpd": 0, "EvalRec": 0}


def _check_macro(node, allow):
    want = _MACRO_PREMISES[node.rule]
    _need_premises(node, want)
    expansion = _MACROS[node.rule](node)
    failures = []
    _check_tree(expansion, allow, "expansion", failures, Counter(),
                assumed_ok=True)
    if failures:
        path, msg = failures[0]
        raise SchemaMismatch(
            f"{node.rule}: internal derivation failed at {path}: {msg}")
    need(eq_ac(_goal(node), expansion.conclusion.goal),
         f"{node.rule}: stated conclusion differs from the expanded "
         "derivation's")
    need(_hyp_subset(expansion.conclusion.hyps, _hyps(node)),
         f"{node.rule}: expansion hypotheses exceed the stated ones")


# ---------------------------------------------------------------------------
# debug-only unsound rule (used by the counterexample demonstration)


def _r_In_unsound(node):
    _need_premises(node, 1)
    g = _need_triple(_goal(node), "In conclusion")
    pg = _prem(node, 0).goal
    need(type(pg) is Implies, "In: premise must be phi => {P}e{Q}")
    t = _need_triple(pg.right, "In premise consequent")
    need(canon_key(t.code) == canon_key(g.code),
         "In: premise and conclusion must run the same code")
    need(eq_ac(g.pre, And(pg.left, t.pre)),
         "In: conclusion precondition must be phi /\\ P")
    need(eq_ac(g.post, t.post), "In: postcondition mismatch")
    need_side(classify(pg.left) in (PURE, PSEUDO_PURE),
              "In: the folded hypothesis must be pseudo-pure")


# ---------------------------------------------------------------------------
# dispatch

RULES = {
    # first-order layer
    "Hyp": _r_Hyp, "ImpI": _r_ImpI, "ImpE": _r_ImpE,
    "AndI": _r_AndI, "AndE1": _r_AndE1, "AndE2": _r_AndE2,
    "OrI1": _r_OrI1, "OrI2": _r_OrI2, "OrE": _r_OrE,
    "ForallI": _r_ForallI, "ForallE": _r_ForallE,
    "ExistsI": _r_ExistsI, "ExistsE": _r_ExistsE,
    "TrueI": _r_TrueI, "FalseE": _r_FalseE,
    "EqRefl": _r_EqRefl, "EqSubst": _r_EqSubst, "ArithFact": _r_ArithFact,
    "Entail": _r_Entail,
    # star laws
    "StarAssoc": _r_star_ac, "StarComm": _r_star_ac, "StarUnit": _r_star_ac,
    "StarZero": _r_StarZero, "StarOverlap": _r_StarOverlap,
    "StarMono": _r_StarMono,
    # command rules
    "Skip": _r_Skip, "Update": _r_Update, "UpdateInv": _r_UpdateInv,
    "Free": _r_Free, "Seq": _r_Seq, "If": _r_If, "Deref": _r_Deref,
    "New": _r_New, "Eval": _r_Eval,
    # structural rules
    "Conseq": _r_Conseq, "Disj": _r_Disj, "ExistAux": _r_ExistAux,
    "Invariance": _r_Invariance, "TensorFrame": _r_TensorFrame,
    "StarFrame": _r_StarFrame,
    "Out": _r_Out, "DiamondOut": _r_DiamondOut, "DiamondE": _r_DiamondE,
    # recursion and distribution
    "MuUnfold": _r_MuUnfold, "RUnique": _r_RUnique,
    "DistTriple": _r_DistTriple, "DistTensorTensor": _r_DistTensorTensor,
    "DistQuant": _r_DistQuant, "DistBinOp": _r_DistBinOp,
    "DistAtom": _r_DistAtom,
}

RULE_IDS = tuple(sorted(RULES)) + tuple(sorted(_MACROS))

_NO_HYP_DISCIPLINE = {"ImpI", "OrE", "ExistsE", "TensorFrame"}


def _check_tree(node, allow, path, failures, stats, assumed_ok=False):
    stats[node.rule] += 1
    try:
        if node.rule == "_assumed":
            if not assumed_ok:
                raise UnknownRule("_assumed")
        elif node.rule in _MACROS:
            _check_macro(node, allow)
        elif node.rule in RULES:
            RULES[node.rule](node)
            if node.rule not in _NO_HYP_DISCIPLINE:
                for p in node.premises:
                    if not _hyp_subset(p.conclusion.hyps,
                                       node.conclusion.hyps):
                        raise SchemaMismatch(
                            f"{node.rule}: a premise has hypotheses the "
                            "conclusion lacks")
        elif node.rule == "In" and "In" in allow:
            _r_In_unsound(node)
        elif node.rule in REJECTED:
            raise UnknownRule(node.rule, REJECTED[node.rule])
        else:
            raise UnknownRule(node.rule)
    except ProofError as exc:
        failures.append((path, str(exc)))
    for i, p in enumerate(node.premises):
        _check_tree(p, allow, f"{path}.{i}", failures, stats, assumed_ok)


def check_proof(root: ProofNode, allow_unsound=()) -> CheckReport:
    """Validate a proof tree; every node is checked, nothing is trusted."""
    failures: list = []
    stats: Counter = Counter()
    _check_tree(root, allow_unsound, "0", failures, stats)
    return CheckReport(ok=not failures, failures=failures, stats=stats)


def apply_rule(rule: str, params: dict, premises) -> Judgement:
    """Instantiate a rule: premises are judgements taken as proven; the
    result is the validated conclusion."""
    conclusion = _build_conclusion(rule, params, tuple(premises))
    node = make_node(rule, [_assumed(j) for j in premises],
                     conclusion.goal, hyps=conclusion.hyps, **params)
    failures: list = []
    _check_tree(node, (), "0", failures, Counter(), assumed_ok=True)
    if failures:
        raise SchemaMismatch(f"apply_rule({rule}): {failures[0][1]}")
    return conclusion


def _build_conclusion(rule, params, premises) -> Judgement:
    def pa(key, default=None):
        v = params.get(key, default)
        if v is None:
            raise SchemaMismatch(f"apply_rule({rule}) needs parameter "
                                 f"{key!r}")
        return _parse_param(key, v) if isinstance(v, str) else v

    def goal(g, hyps=()):
        return Judgement(hyps=tuple(hyps), goal=g)

    def prem(i):
        if len(premises) <= i:
            raise SchemaMismatch(f"apply_rule({rule}) needs premise {i}")
        return premises[i]

    if rule == "Skip":
        P = pa("P")
        return goal(Triple(P, Quote(Skip()), P))
    if rule == "Update":
        e, e0, P = pa("e"), pa("e0"), pa("P", Emp())
        return goal(Triple(Star(pt_wild(e), P), Quote(Assign(e, e0)),
                           Star(PointsTo(e, e0), P)))
    if rule == "UpdateInv":
        e, e0, e1, phi = pa("e"), pa("e0"), pa("e1"), pa("phi")
        cell = And(PointsTo(e1, e0), phi)
        return goal(Triple(Star(pt_wild(e), cell), Quote(Assign(e, e0)),
                           Star(And(PointsTo(e, e0), phi), cell)))
    if rule == "Free":
        e, P = pa("e"), pa("P", Emp())
        return goal(Triple(Star(pt_wild(e), P), Quote(Free(e)), P))
    if rule == "Seq":
        t0, t1 = prem(0).goal, prem(1).goal
        return goal(Triple(t0.pre,
                           Quote(Seq(t0.code.body, t1.code.body)), t1.post))
    if rule == "If":
        t0, t1 = prem(0).goal, prem(1).goal
        cond = t0.pre.right  # And(P, e0 = e1)
        return goal(Triple(t0.pre.left,
                           Quote(If(cond.left, cond.right,
                                    t0.code.body, t1.code.body)), t0.post))
    if rule == "Deref":
        t = prem(0).goal
        x, e = pa("x"), pa("e")
        return goal(Triple(Exists(x, t.pre),
                           Quote(LetDeref(x, e, t.code.body)), t.post))
    if rule == "New":
        t = prem(0).goal
        x = pa("x")
        inits = tuple(_parse_param("init", v) if isinstance(v, str) else v
                      for v in params.get("init", ()))
        if not inits:
            raise SchemaMismatch("apply_rule(New) needs init parameters")
        block = [PointsTo(Var(x) if i == 0
                          else BinOp("+", Var(x), IntLit(i)), init)
                 for i, init in enumerate(inits)]
        rest = parts_diff(star_parts(t.pre), block)
        if rest is None:
            raise SchemaMismatch("apply_rule(New): premise lacks the block")
        return goal(Triple(star(*rest),
                           Quote(LetNew(x, inits, t.code.body)), t.post))
    if rule == "Eval":
        e = pa("e")
        t = prem(0).goal.right
        return goal(Triple(t.pre, Quote(EvalAt(e)), t.post))
    if rule == "Conseq":
        p0, p1 = prem(0).goal, prem(1).goal
        e = pa("e")
        return goal(Implies(Triple(p0.right, e, p1.left),
                            Triple(p0.left, e, p1.right)))
    if rule == "Disj":
        t1, t2 = pa("P"), pa("Q")  # the two triples, as assertions
        return goal(Implies(And(t1, t2),
                            Triple(Or(t1.pre, t2.pre), t1.code,
                                   Or(t1.post, t2.post))))
    if rule == "ExistAux":
        t, x = pa("P"), pa("x")
        return goal(Implies(Forall(x, t),
                            Triple(Exists(x, t.pre), t.code,
                                   Exists(x, t.post))))
    if rule == "Invariance":
        t, psi = pa("P"), pa("psi")
        return goal(Implies(t, Triple(And(t.pre, psi), t.code,
                                      And(t.post, psi))))
    if rule == "TensorFrame":
        R = pa("R")
        return goal(Tensor(prem(0).goal, R))
    if rule == "StarFrame":
        t, R = pa("P"), pa("R")
        return goal(Implies(t, Triple(Star(t.pre, R), t.code,
                                      Star(t.post, R))))
    if rule == "StarAssoc":
        P, Q, R = pa("P"), pa("Q"), pa("R")
        return goal(iff(Star(P, Star(Q, R)), Star(Star(P, Q), R)))
    if rule == "StarComm":
        P, Q = pa("P"), pa("Q")
        return goal(iff(Star(P, Q), Star(Q, P)))
    if rule == "StarUnit":
        P = pa("P")
        return goal(iff(Star(P, Emp()), P))
    if rule == "StarZero":
        P = pa("P")
        return goal(iff(Star(P, FalseA()), FalseA()))
    if rule == "StarOverlap":
        e, e1, e2 = pa("e"), pa("e1"), pa("e2")
        return goal(iff(Star(PointsTo(e, e1), PointsTo(e, e2)), FalseA()))
    if rule == "StarMono":
        p0, p1 = prem(0).goal, prem(1).goal
        return goal(Implies(Star(p0.left, p1.left),
                            Star(p0.right, p1.right)))
    if rule == "TensorMono":
        p = prem(0).goal
        R = pa("R")
        return goal(Implies(Tensor(p.left, R), Tensor(p.right, R)))
    if rule == "MuUnfold":
        m = pa("P")
        return goal(iff(m, unfold_mu(m)))
    if rule == "RUnique":
        pair0 = match_iff(prem(0).goal)
        pair1 = match_iff(prem(1).goal)
        if pair0 is None or pair1 is None:
            raise SchemaMismatch("apply_rule(RUnique): premises must be "
                                 "equivalences")
        return goal(iff(pair0[0], pair1[0]))
    if rule in ("DistTriple", "DistTensorTensor", "DistQuant",
                "DistBinOp", "DistAtom"):
        P, R = pa("P"), pa("R")
        step = dist_step(P, R)
        if step is None:
            raise SchemaMismatch(f"apply_rule({rule}): no distribution "
                                 "step applies")
        return goal(iff(Tensor(P, R), step))
    if rule == "Out":
        t = prem(0).goal
        phi = pa("phi")
        rest = _conj_remove(and_parts(t.pre), phi)
        if rest is None:
            raise SchemaMismatch("apply_rule(Out): phi is not a conjunct "
                                 "of the premise precondition")
        return goal(Implies(phi, Triple(conj(*rest), t.code, t.post)))
    if rule == "DiamondOut":
        t = prem(0).goal
        phi = pa("phi")
        rest = _conj_remove(and_parts(t.pre), phi)
        if rest is None:
            raise SchemaMismatch("apply_rule(DiamondOut): phi is not a "
                                 "conjunct of the premise precondition")
        return goal(Implies(phi, Diamond(Triple(conj(*rest), t.code,
                                                t.post))))
    if rule == "DiamondE":
        P = pa("P")
        return goal(Implies(Diamond(P), P))
    if rule == "EvalNonRec1":
        node = make_node(rule, [], TrueA(), **params)
        return goal(_goal(_expand_EvalNonRec1(node)))
    if rule == "EvalNonRecUpd":
        node = make_node(rule, [], TrueA(), **params)
        return goal(_goal(_expand_EvalNonRecUpd(node)))
    if rule == "EvalRec":
        node = make_node(rule, [], TrueA(), **params)
        return goal(_goal(_expand_EvalRec(node)))
    # first-order layer
    if rule == "Hyp":
        A = pa("A")
        return Judgement(hyps=(A,), goal=A)
    if rule == "ImpI":
        A = pa("A")
        p = prem(0)
        hyps = tuple(h for h in p.hyps
                     if canon_key(h) != canon_key(A))
        return Judgement(hyps=hyps, goal=Implies(A, p.goal))
    if rule == "ImpE":
        return goal(prem(0).goal.right,
                    prem(0).hyps + prem(1).hyps)
    if rule == "AndI":
        return goal(And(prem(0).goal, prem(1).goal),
                    prem(0).hyps + prem(1).hyps)
    if rule == "AndE1":
        return goal(prem(0).goal.left, prem(0).hyps)
    if rule == "AndE2":
        return goal(prem(0).goal.right, prem(0).hyps)
    if rule == "OrI1":
        return goal(Or(prem(0).goal, pa("B")), prem(0).hyps)
    if rule == "OrI2":
        return goal(Or(pa("A"), prem(0).goal), prem(0).hyps)
    if rule == "ForallE":
        p = prem(0)
        w = pa("witness", Var(p.goal.var))
        return goal(substitute(p.goal.body, {p.goal.var: w}), p.hyps)
    if rule == "ExistsI":
        A, x, w = pa("template"), pa("x"), pa("witness")
        return goal(Exists(x, A), prem(0).hyps)
    if rule == "TrueI":
        return goal(TrueA())
    if rule == "EqRefl":
        e = pa("e")
        return goal(Eq(e, e))
    if rule == "ArithFact":
        return goal(pa("P"))
    if rule == "Entail":
        return goal(Implies(pa("P"), pa("Q")))
    if rule == "OrE":
        p0, p1, p2 = prem(0), prem(1), prem(2)
        lk, rk = canon_key(p0.goal.left), canon_key(p0.goal.right)
        hyps = p0.hyps \
            + tuple(h for h in p1.hyps if canon_key(h) != lk) \
            + tuple(h for h in p2.hyps if canon_key(h) != rk)
        return goal(p1.goal, hyps)
    if rule == "ForallI":
        x = pa("x")
        p = prem(0)
        return goal(Forall(x, p.goal), p.hyps)
    if rule == "ExistsE":
        p0, p1 = prem(0), prem(1)
        bk = canon_key(p0.goal.body)
        hyps = p0.hyps + tuple(h for h in p1.hyps
                               if canon_key(h) != bk)
        return goal(p1.goal, hyps)
    if rule == "FalseE":
        return goal(pa("P"), prem(0).hyps)
    if rule == "EqSubst":
        A, x = pa("template"), pa("x")
        p0 = prem(0)
        hyps = p0.hyps + prem(1).hyps
        return goal(substitute(A, {x: p0.goal.right}), hyps)
    raise UnknownRule(rule, REJECTED.get(rule))


# ---------------------------------------------------------------------------
# proof-script concrete syntax (S-expressions)

_SEXP_TOKEN = re.compile(r"""
    (?P<ws>\s+|;[^\n]*)
  | (?P<open>\() | (?P<close>\))
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<atom>[^\s()";]+)
""", re.VERBOSE)


def _sexp_tokens(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _SEXP_TOKEN.match(text, pos)
        if not m:
            raise ScriptError(f"bad character at offset {pos}: "
                              f"{text[pos]!r}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        out.append((m.lastgroup, m.group(), m.start()))
    return out


def _sexp_read(tokens, i):
    kind, text, pos = tokens[i]
    if kind == "open":
        items = []
        i += 1
        while i < len(tokens) and tokens[i][0] != "close":
            item, i = _sexp_read(tokens, i)
            items.append(item)
        if i >= len(tokens):
            raise ScriptError(f"unclosed parenthesis opened at {pos}")
        return items, i + 1
    if kind == "close":
        raise ScriptError(f"unexpected ')' at {pos}")
    if kind == "str":
        body = re.sub(r"\\(.)", r"\1", text[1:-1])
        return body, i + 1
    return text, i + 1


def _node_of_sexp(sx) -> ProofNode:
    if not isinstance(sx, list) or len(sx) < 2 or sx[0] != "rule":
        raise ScriptError("each proof node is (rule NAME ...)")
    name = sx[1]
    params: list = []
    premises: list = []
    hyps: list = []
    goal = None
    for item in sx[2:]:
        if not isinstance(item, list) or not item:
            raise ScriptError(f"bad item in rule {name}: {item!r}")
        head = item[0]
        if head == "param":
            if len(item) != 3:
                raise ScriptError("param takes a key and a value")
            params.append((item[1], item[2]))
        elif head == "hyp":
            if len(item) != 2:
                raise ScriptError("hyp takes one assertion")
            hyps.append(parse(item[1], "assertion"))
        elif head == "premise":
            if len(item) != 2:
                raise ScriptError("premise wraps one rule node")
            premises.append(_node_of_sexp(item[1]))
        elif head == "conclude":
            if len(item) != 2:
                raise ScriptError("conclude takes one assertion")
            goal = parse(item[1], "assertion")
        else:
            raise ScriptError(f"unknown item {head!r} in rule {name}")
    if goal is None:
        raise ScriptError(f"rule {name} has no (conclude ...)")
    return ProofNode(name, tuple(params), tuple(premises),
                     Judgement(hyps=tuple(hyps), goal=goal))


def parse_script(text: str) -> ProofNode:
    tokens = _sexp_tokens(text)
    if not tokens:
        raise ScriptError("empty proof script")
    sx, i = _sexp_read(tokens, 0)
    if i != len(tokens):
        raise ScriptError(f"trailing input at offset {tokens[i][2]}")
    return _node_of_sexp(sx)


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _param_str(value) -> str:
    if isinstance(value, str):
        return value
    return pretty(value)


def serialize_script(node: ProofNode, indent: int = 0) -> str:
    pad = "  " * indent
    lines = [f"{pad}(rule {node.rule}"]
    for k, v in node.params:
        lines.append(f'{pad}  (param {k} "{_escape(_param_str(v))}")')
    for h in node.conclusion.hyps:
        lines.append(f'{pad}  (hyp "{_escape(pretty(h))}")')
    for p in node.premises:
        lines.append(f"{pad}  (premise")
        lines.append(serialize_script(p, indent + 2) + ")")
    lines.append(f'{pad}  (conclude "{_escape(pretty(node.conclusion.goal))}"'
                 "))")
    return "\n".join(lines)
