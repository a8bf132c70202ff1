"""Interpreter tests: projections, rank, heap order, execution."""

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from sepstore.config import default_config
from sepstore.grammar import parse
from sepstore.interp import (
    BOT, EMPTY_ENV, EMPTY_HEAP, INF, CodeVal, Done, Env, Fault, Heap,
    IntVal, OutOfFuel, exec_cmd, eval_expr, format_heap, format_value,
    heap_join, heap_leq, parse_heap_text, rank, run_codeval, tag_raises,
    truncate,
)
from sepstore.semantics import Tester
from sepstore.syntax import Quote, Skip


def prog(text):
    return parse(text, "program")


SKIP_CODE = CodeVal(Skip(), EMPTY_ENV, INF)


def small_universe():
    """Exhaustive set of heaps over two addresses and a few values."""
    vals = [IntVal(0), IntVal(1)] + [CodeVal(Skip(), EMPTY_ENV, t)
                                     for t in (0, 1, 2, INF)]
    heaps = [BOT, EMPTY_HEAP]
    for dom in ((1,), (2,), (1, 2)):
        for combo in itertools.product(vals, repeat=len(dom)):
            heaps.append(Heap(tuple(zip(dom, combo))))
    return heaps


# ---------------------------------------------------------------------------
# projections and rank


def test_rank_base_cases():
    assert rank(EMPTY_HEAP) == 1
    assert rank(BOT) == 0
    assert rank(Heap(((1, IntVal(5)),))) == 1
    assert rank(Heap(((1, CodeVal(Skip(), EMPTY_ENV, 2)),))) == 3
    assert rank(Heap(((1, SKIP_CODE),))) == INF


def test_truncate_examples():
    h = Heap(((1, IntVal(3)), (2, CodeVal(Skip(), EMPTY_ENV, 4))))
    assert truncate(0, h) == BOT
    assert truncate(2, h) == Heap(((1, IntVal(3)),
                                   (2, CodeVal(Skip(), EMPTY_ENV, 1))))
    assert truncate(9, h) == h
    assert truncate(3, BOT) == BOT


def test_truncate_min_law_small_exhaustive():
    for h in small_universe():
        for n in range(4):
            for m in range(4):
                assert truncate(n, truncate(m, h)) \
                    == truncate(min(n, m), h)


def test_truncate_fixes_at_rank():
    for h in small_universe():
        r = rank(h)
        if r == INF:
            continue
        assert truncate(r, h) == h
        if r > 0:
            assert truncate(r - 1, h) != h


def test_truncate_distributes_over_join_small_exhaustive():
    hs = small_universe()
    for h1 in hs:
        for h2 in hs:
            for n in range(4):
                assert truncate(n, heap_join(h1, h2)) \
                    == heap_join(truncate(n, h1), truncate(n, h2))


# ---------------------------------------------------------------------------
# order and join


def test_heap_leq_basics():
    lo = Heap(((1, CodeVal(Skip(), EMPTY_ENV, 1)),))
    hi = Heap(((1, SKIP_CODE),))
    assert heap_leq(BOT, lo) and heap_leq(lo, hi)
    assert not heap_leq(hi, lo)
    assert not heap_leq(Heap(((1, IntVal(0)),)), Heap(((2, IntVal(0)),)))
    assert not heap_leq(Heap(((1, IntVal(0)),)), Heap(((1, IntVal(1)),)))


def test_heap_leq_partial_order():
    hs = small_universe()
    for h in hs:
        assert heap_leq(h, h)
    for h1 in hs:
        for h2 in hs:
            if heap_leq(h1, h2) and heap_leq(h2, h1):
                assert h1 == h2


def test_truncate_monotone():
    hs = small_universe()
    for h1 in hs:
        for h2 in hs:
            if heap_leq(h1, h2):
                for n in range(4):
                    assert heap_leq(truncate(n, h1), truncate(n, h2))


def test_heap_join():
    a = Heap(((1, IntVal(0)),))
    b = Heap(((2, IntVal(1)),))
    assert heap_join(a, b) == Heap(((1, IntVal(0)), (2, IntVal(1))))
    assert heap_join(a, b) == heap_join(b, a)
    assert heap_join(a, a) == BOT          # overlapping domains
    assert heap_join(a, BOT) == BOT
    assert heap_join(a, EMPTY_HEAP) == a


def test_tag_raises_are_upper_set():
    h = Heap(((1, CodeVal(Skip(), EMPTY_ENV, 1)), (2, IntVal(0))))
    ups = tag_raises(h, 3)
    assert h in ups
    assert all(heap_leq(h, g) for g in ups)
    tags = sorted(g.get(1).tag for g in ups)
    assert tags == [1, 2, 3]


# ---------------------------------------------------------------------------
# expression evaluation


def test_eval_expr():
    env = Env.of({"x": IntVal(4)})
    assert eval_expr(parse("x + 2", "expr"), env) == IntVal(6)
    assert eval_expr(parse("(x * x) - 1", "expr"), env) == IntVal(15)
    code = eval_expr(parse("'[1] := x'", "expr"), env)
    assert isinstance(code, CodeVal) and code.tag == INF
    assert code.captured == env  # the closure captures its free variables
    from sepstore.interp import TypeFault, UnboundVariable
    with pytest.raises(UnboundVariable):
        eval_expr(parse("y", "expr"), env)
    with pytest.raises(TypeFault):
        eval_expr(parse("'skip' + 1", "expr"), env)


# ---------------------------------------------------------------------------
# command execution


def run(text, heap_text="", fuel=1000):
    return exec_cmd(prog(text), EMPTY_ENV, parse_heap_text(heap_text), fuel)


def test_exec_assign_deref_free():
    out = run("[1] := 7", "1 = 0")
    assert out == Done(Heap(((1, IntVal(7)),)))
    out = run("let x = [1] in [2] := x + 1", "1 = 5\n2 = 0")
    assert out == Done(Heap(((1, IntVal(5)), (2, IntVal(6)))))
    out = run("free(1)", "1 = 5\n2 = 0")
    assert out == Done(Heap(((2, IntVal(0)),)))


def test_exec_new_allocates_fresh_block():
    out = run("let x = new 8, 9 in [1] := x", "1 = 0\n3 = 0")
    # the two fresh contiguous cells must avoid addresses 1 and 3
    assert isinstance(out, Done)
    cells = out.heap.to_dict()
    base = cells[1].n
    assert base not in (1, 3) and base + 1 not in (1, 3)
    assert cells[base] == IntVal(8) and cells[base + 1] == IntVal(9)


def test_exec_faults():
    assert isinstance(run("[1] := 0"), Fault)          # dangling update
    assert isinstance(run("free(2)", "1 = 0"), Fault)  # dangling free
    assert isinstance(run("eval [1]", "1 = 5"), Fault)  # eval of an integer
    assert isinstance(run("[1] := 'skip' + 1", "1 = 0"), Fault)


def test_exec_if():
    out = run("if (1 = 1) then [1] := 1 else [1] := 2", "1 = 0")
    assert out.heap.get(1) == IntVal(1)
    out = run("if (0 = 1) then [1] := 1 else [1] := 2", "1 = 0")
    assert out.heap.get(1) == IntVal(2)
    # comparing code values never terminates
    out = exec_cmd(prog("if (x = 0) then skip else skip"),
                   Env.of({"x": SKIP_CODE}), EMPTY_HEAP, 1000)
    assert isinstance(out, OutOfFuel)


def test_exec_on_bot_is_bot():
    assert run("[1] := 0", "") != exec_cmd(prog("[1] := 0"), EMPTY_ENV,
                                           BOT, 10)
    assert exec_cmd(prog("free(1)"), EMPTY_ENV, BOT, 10) == Done(BOT)


def test_self_eval_runs_out_of_fuel():
    out = run("eval [1]", "1 = 'eval [1]'", fuel=50)
    assert isinstance(out, OutOfFuel)


def test_laundering_program_faults_deterministically():
    text = "let x = [2] in ([3] := x ; eval [3])"
    heap = "1 = 0\n2 = 'free(-1)'\n3 = 'skip'"
    for _ in range(3):
        out = run(text, heap)
        assert isinstance(out, Fault)


def test_tagged_code_truncates_result():
    # the stored command writes untagged code; run through a tag-2 closure
    # the result heap is truncated at level 2
    v = CodeVal(prog("[1] := 'skip'"), EMPTY_ENV, 2)
    out = run_codeval(v, parse_heap_text("1 = 0"), 100)
    assert out == Done(Heap(((1, CodeVal(Skip(), EMPTY_ENV, 1)),)))
    # tag 0 never terminates
    assert isinstance(run_codeval(CodeVal(Skip(), EMPTY_ENV, 0),
                                  EMPTY_HEAP, 100), OutOfFuel)


def test_fuel_monotone():
    cases = [("eval [3] ; eval [3]", "3 = '[4] := 0'"),
             ("[1] := 1 ; ([2] := 2 ; skip)", "1 = 0\n2 = 0"),
             ("eval [1]", "1 = 'free(2)'")]
    for text, heap in cases:
        outs = [run(text, heap, fuel=f) for f in range(0, 12)]
        # once a run completes or faults, more fuel never changes it
        settled = None
        for out in outs:
            if settled is None and not isinstance(out, OutOfFuel):
                settled = out
            if settled is not None:
                assert out == settled


# ---------------------------------------------------------------------------
# the heap text format


def test_heap_text_roundtrip():
    text = "1 = 42\n2 = 'skip'\n3 = '[1] := 2'@1"
    h = parse_heap_text(text)
    assert h.get(1) == IntVal(42)
    assert h.get(2) == SKIP_CODE
    assert h.get(3).tag == 1
    assert parse_heap_text(format_heap(h)) == h
    assert format_heap(BOT) == "<bot>"
    assert format_heap(EMPTY_HEAP) == "<empty>"
    assert format_value(IntVal(3)) == "3"
    with pytest.raises(ValueError):
        parse_heap_text("0 = 1")  # addresses are positive


def test_default_universe_is_finite_and_ranked():
    tester = Tester(default_config())
    uni = tester.universe()
    assert 2000 < len(uni) < 10 ** 4
    assert BOT in uni and EMPTY_HEAP in uni
    r0 = tester.universe_up_to_rank(0)
    assert r0 == [BOT]
    assert all(rank(h) <= 2 for h in tester.universe_up_to_rank(2))
