"""Executable model of the heap language.

Heaps map positive addresses to integers or code closures.  A closure
carries a truncation tag t: the stored command behaves as the projection
of its denotation at level t (inputs and outputs truncated at t); tag 0
never terminates, tag INF is the untruncated closure.  Nontermination is
approximated by a fuel budget counting sequencing and eval steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional, Tuple, Union

from . import grammar, syntax
from .syntax import (
    Assign, BinOp, Command, EvalAt, Free, If, IntLit, LetDeref, LetNew,
    Quote, Seq, Skip, ValueLit, Var, free_vars,
)

INF = float("inf")


class UnboundVariable(Exception):
    pass


class TypeFault(Exception):
    pass


# ---------------------------------------------------------------------------
# values, environments, heaps


@dataclass(frozen=True)
class IntVal:
    n: int


@dataclass(frozen=True)
class Env:
    items: tuple = ()  # sorted (name, HeapValue) pairs

    @staticmethod
    def of(mapping) -> "Env":
        return Env(tuple(sorted(mapping.items())))

    def lookup(self, name: str):
        for k, v in self.items:
            if k == name:
                return v
        raise UnboundVariable(name)

    def bind(self, name: str, value) -> "Env":
        rest = tuple((k, v) for k, v in self.items if k != name)
        return Env(tuple(sorted(rest + ((name, value),))))

    def restrict(self, names) -> "Env":
        return Env(tuple((k, v) for k, v in self.items if k in names))

    def to_dict(self):
        return dict(self.items)


EMPTY_ENV = Env()


@dataclass(frozen=True)
class CodeVal:
    body: Command
    captured: Env = EMPTY_ENV
    tag: Union[int, float] = INF  # natural or INF


HeapValue = Union[IntVal, CodeVal]


@dataclass(frozen=True)
class Heap:
    """Bot (cells is None) or a finite map from address to value."""

    cells: Optional[tuple] = ()  # sorted (addr, HeapValue) pairs, or None

    @staticmethod
    def bot() -> "Heap":
        return Heap(None)

    @staticmethod
    def of(mapping) -> "Heap":
        for addr in mapping:
            if addr < 1:
                raise ValueError(f"address {addr} is not positive")
        return Heap(tuple(sorted(mapping.items())))

    @property
    def is_bot(self) -> bool:
        return self.cells is None

    def to_dict(self):
        if self.is_bot:
            raise ValueError("Bot heap has no cells")
        return dict(self.cells)

    def domain(self):
        return frozenset(a for a, _ in self.cells) if not self.is_bot \
            else frozenset()

    def get(self, addr):
        for a, v in self.cells:
            if a == addr:
                return v
        return None


BOT = Heap.bot()
EMPTY_HEAP = Heap(())


# ---------------------------------------------------------------------------
# outcomes


@dataclass(frozen=True)
class Done:
    heap: Heap


@dataclass(frozen=True)
class Fault:
    reason: str = ""

    def __eq__(self, other):
        return isinstance(other, Fault)

    def __hash__(self):
        return hash(Fault)


@dataclass(frozen=True)
class OutOfFuel:
    pass


Outcome = Union[Done, Fault, OutOfFuel]


# ---------------------------------------------------------------------------
# projections, rank, combination, order


def truncate(n: Union[int, float], h: Heap) -> Heap:
    """Projection at level n: level 0 collapses to Bot, level n >= 1 caps
    every stored closure's tag at n - 1."""
    if n == 0:
        return BOT
    if h.is_bot:
        return h
    cells = []
    for a, v in h.cells:
        if isinstance(v, CodeVal) and v.tag > n - 1:
            v = CodeVal(v.body, v.captured, n - 1)
        cells.append((a, v))
    return Heap(tuple(cells))


def rank(h: Heap) -> Union[int, float]:
    """Least n with truncate(n, h) == h."""
    if h.is_bot:
        return 0
    top = 0
    for _, v in h.cells:
        if isinstance(v, CodeVal):
            if v.tag == INF:
                return INF
            top = max(top, v.tag)
    return max(1, 1 + top) if any(isinstance(v, CodeVal)
                                  for _, v in h.cells) else 1


def heap_join(h1: Heap, h2: Heap) -> Heap:
    if h1.is_bot or h2.is_bot:
        return BOT
    d1 = h1.domain()
    if d1 & h2.domain():
        return BOT
    return Heap(tuple(sorted(h1.cells + h2.cells)))


def value_leq(v1: HeapValue, v2: HeapValue) -> bool:
    if isinstance(v1, IntVal):
        return isinstance(v2, IntVal) and v1.n == v2.n
    if not isinstance(v2, CodeVal) or v1.body != v2.body:
        return False
    if v1.tag > v2.tag:
        return False
    e1, e2 = dict(v1.captured.items), dict(v2.captured.items)
    if e1.keys() != e2.keys():
        return False
    return all(value_leq(e1[k], e2[k]) for k in e1)


def heap_leq(h1: Heap, h2: Heap) -> bool:
    """Approximation order: Bot below everything, otherwise equal domains
    with pointwise value approximation (tags may only grow)."""
    if h1.is_bot:
        return True
    if h2.is_bot:
        return False
    d1, d2 = dict(h1.cells), dict(h2.cells)
    if d1.keys() != d2.keys():
        return False
    return all(value_leq(d1[a], d2[a]) for a in d1)


def value_raises(v: HeapValue, tag_max: int):
    """All values above v obtained by raising tags, bounded by tag_max."""
    if isinstance(v, IntVal):
        return [v]
    if v.tag == INF:
        env_opts = [value_raises(x, tag_max) for _, x in v.captured.items]
        names = [k for k, _ in v.captured.items]
        return [CodeVal(v.body, Env(tuple(zip(names, combo))), INF)
                for combo in product(*env_opts)] if names else [v]
    tags = range(int(v.tag), tag_max + 1) if v.tag <= tag_max else [v.tag]
    env_opts = [value_raises(x, tag_max) for _, x in v.captured.items]
    names = [k for k, _ in v.captured.items]
    out = []
    for t in tags:
        for combo in product(*env_opts):
            out.append(CodeVal(v.body, Env(tuple(zip(names, combo))), t))
    return out


def tag_raises(h: Heap, tag_max: int):
    """All heaps above h in heap_leq obtained by raising tags."""
    if h.is_bot:
        return [h]
    opts = [[(a, w) for w in value_raises(v, tag_max)] for a, v in h.cells]
    return [Heap(tuple(combo)) for combo in product(*opts)]


# ---------------------------------------------------------------------------
# evaluation


def eval_expr(e, env: Env) -> HeapValue:
    t = type(e)
    if t is IntLit:
        return IntVal(e.value)
    if t is Var:
        return env.lookup(e.name)
    if t is ValueLit:
        return e.value
    if t is BinOp:
        a = eval_expr(e.left, env)
        b = eval_expr(e.right, env)
        if not isinstance(a, IntVal) or not isinstance(b, IntVal):
            raise TypeFault(f"arithmetic on code value in {e!r}")
        if e.op == "+":
            return IntVal(a.n + b.n)
        if e.op == "-":
            return IntVal(a.n - b.n)
        if e.op == "*":
            return IntVal(a.n * b.n)
        raise TypeFault(f"unknown operator {e.op}")
    if t is Quote:
        fv = free_vars(e.body)[0]
        return CodeVal(e.body, env.restrict(fv), INF)
    raise TypeError(f"not an expression: {e!r}")


def _addr_of(v: HeapValue):
    return v.n if isinstance(v, IntVal) else None


def exec_cmd(C: Command, env: Env, h: Heap, fuel: int) -> Outcome:
    """Run a command; faults are outcomes, never exceptions."""
    out, _ = _exec(C, env, h, fuel)
    return out


def _exec(C, env, h: Heap, fuel: int):
    if h.is_bot:
        return Done(BOT), fuel
    t = type(C)
    try:
        if t is Skip:
            return Done(h), fuel
        if t is Assign:
            a = _addr_of(eval_expr(C.target, env))
            cells = dict(h.cells)
            if a is None or a not in cells:
                return Fault(f"update of non-address {a}"), fuel
            cells[a] = eval_expr(C.source, env)
            return Done(Heap(tuple(sorted(cells.items())))), fuel
        if t is LetDeref:
            a = _addr_of(eval_expr(C.addr, env))
            cells = dict(h.cells)
            if a is None or a not in cells:
                return Fault(f"lookup of non-address {a}"), fuel
            return _exec(C.body, env.bind(C.var, cells[a]), h, fuel)
        if t is EvalAt:
            a = _addr_of(eval_expr(C.addr, env))
            cells = dict(h.cells)
            if a is None or a not in cells:
                return Fault(f"eval at non-address {a}"), fuel
            v = cells[a]
            if not isinstance(v, CodeVal):
                return Fault(f"eval of non-code at {a}"), fuel
            if fuel <= 0:
                return OutOfFuel(), fuel
            return _run_codeval(v, h, fuel - 1)
        if t is LetNew:
            vals = [eval_expr(e, env) for e in C.inits]
            dom = h.domain()
            n = len(vals)
            base = 1
            while any(base + i in dom for i in range(n)):
                base += 1
            cells = dict(h.cells)
            for i, v in enumerate(vals):
                cells[base + i] = v
            h2 = Heap(tuple(sorted(cells.items())))
            return _exec(C.body, env.bind(C.var, IntVal(base)), h2, fuel)
        if t is Free:
            a = _addr_of(eval_expr(C.addr, env))
            cells = dict(h.cells)
            if a is None or a not in cells:
                return Fault(f"free of non-address {a}"), fuel
            del cells[a]
            return Done(Heap(tuple(sorted(cells.items())))), fuel
        if t is Seq:
            if fuel <= 0:
                return OutOfFuel(), fuel
            out, fuel = _exec(C.first, env, h, fuel - 1)
            if not isinstance(out, Done):
                return out, fuel
            return _exec(C.second, env, out.heap, fuel)
        if t is If:
            a = eval_expr(C.lhs, env)
            b = eval_expr(C.rhs, env)
            if isinstance(a, CodeVal) or isinstance(b, CodeVal):
                return OutOfFuel(), fuel  # comparison of code diverges
            branch = C.then if a.n == b.n else C.els
            return _exec(branch, env, h, fuel)
    except (TypeFault, UnboundVariable) as exc:
        return Fault(str(exc)), fuel
    raise TypeError(f"not a command: {C!r}")


def _run_codeval(v: CodeVal, h: Heap, fuel: int):
    if v.tag == 0:
        return OutOfFuel(), fuel
    if v.tag == INF:
        return _exec(v.body, v.captured, h, fuel)
    out, fuel = _exec(v.body, v.captured, truncate(v.tag, h), fuel)
    if isinstance(out, Done):
        out = Done(truncate(v.tag, out.heap))
    return out, fuel


def run_codeval(v: CodeVal, h: Heap, fuel: int) -> Outcome:
    """Run a stored closure respecting its truncation tag."""
    out, _ = _run_codeval(v, h, fuel)
    return out


# ---------------------------------------------------------------------------
# heap text format: one `addr = value` per line, value an integer,
# 'C' (untagged code) or 'C'@t (tagged code)


def parse_value_text(text: str) -> HeapValue:
    import re as _re

    text = text.strip()
    tag = INF
    m = _re.match(r"^(.*')\s*@\s*(\d+)$", text, _re.DOTALL)
    if m:
        text, tag = m.group(1).strip(), int(m.group(2))
    if text.startswith("'") and text.endswith("'"):
        cmd = grammar.parse(text[1:-1], "program")
        return CodeVal(cmd, EMPTY_ENV, tag)
    return IntVal(int(text))


def parse_heap_text(text: str) -> Heap:
    cells = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        addr_part, value_part = line.split("=", 1)
        cells[int(addr_part.strip())] = parse_value_text(value_part)
    return Heap.of(cells)


def format_value(v: HeapValue) -> str:
    if isinstance(v, IntVal):
        return str(v.n)
    body = grammar.pretty_cmd(v.body)
    if v.captured.items:
        env = ", ".join(f"{k}={format_value(x)}" for k, x in v.captured.items)
        body = f"{body} with {env}"
    return f"'{body}'" if v.tag == INF else f"'{body}'@{int(v.tag)}"


def format_heap(h: Heap) -> str:
    if h.is_bot:
        return "<bot>"
    if not h.cells:
        return "<empty>"
    return "\n".join(f"{a} = {format_value(v)}" for a, v in h.cells)
