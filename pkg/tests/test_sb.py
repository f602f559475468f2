from __future__ import annotations

import itertools

from helpers import corpus
from sbreduce.core import (
    RMW,
    Arg,
    Config,
    Fence,
    FrozenMap,
    GhostState,
    Lit,
    Memory,
    Read,
    Thread,
    Write,
    const_op,
)
from sbreduce.explorer import explore
from sbreduce.litmus import parse_litmus
from sbreduce.pimp import SKIP, ProgramState
from sbreduce.sb import (
    GhostSb,
    ProgSb,
    ReadSb,
    WriteSb,
    buffered_val,
    sb_flush_step,
    sb_memory_step,
    sb_step_global,
)

X, Y = 0, 1
DONE = ProgramState(SKIP, 5)


def w(a, v, volatile=False):
    return WriteSb(volatile, a, const_op(v), v)


def config(instrs=(), sb=(), m=None, S=None, ghost=GhostState()):
    th = Thread(DONE, tuple(instrs), FrozenMap(), tuple(sb), ghost)
    return Config((th,), FrozenMap(S or {}), Memory(m or {}))


def test_buffered_val():
    assert buffered_val((w(X, 5), w(X, 7)), X) == 7
    assert buffered_val((w(Y, 1),), X) is None
    assert buffered_val((), X) is None


def test_read_forwards_from_buffer():
    g = config([Read(False, X, 0)], sb=[w(X, 1)])
    (g2,) = sb_memory_step(g, 0)
    th = g2.threads[0]
    assert th.temps == {0: 1}
    assert th.sb == (w(X, 1), ReadSb(False, X, 0, 1))


def test_volatile_write_is_buffered():
    g = config([Write(True, X, const_op(1))])
    (g2,) = sb_memory_step(g, 0)
    th = g2.threads[0]
    assert g2.mem == Memory() and th.ghost.dirty
    assert th.sb == (w(X, 1, volatile=True),)


def test_fence_and_rmw_need_empty_buffer():
    assert sb_memory_step(config([Fence()], sb=[w(X, 1)]), 0) == []
    rmw = RMW(X, 0, const_op(1), Lit(1), Arg(0))
    assert sb_memory_step(config([rmw], sb=[w(Y, 1)]), 0) == []
    assert len(sb_memory_step(config([rmw]), 0)) == 1


def test_flush_nonvolatile_write():
    (g2,) = sb_flush_step(config(sb=[w(X, 5)]), 0)
    assert g2.mem[X] == 5 and g2.threads[0].sb == ()


def test_flush_ghost_entry():
    (g2,) = sb_flush_step(config(sb=[GhostSb({X}, {X})], S={X: True}), 0)
    assert g2.threads[0].ghost.owned == {X} and g2.threads[0].ghost.acquired == {X}
    assert g2.shared == {}


def test_flush_is_fifo():
    g = config(sb=[ReadSb(False, Y, 0, 0), w(X, 5)])
    (g2,) = sb_flush_step(g, 0)
    assert g2.mem == g.mem and g2.threads[0].sb == (w(X, 5),)


def test_draining_folds_writes_in_order():
    for order in itertools.permutations([w(X, 1), w(X, 2), w(Y, 3)]):
        g = config(sb=order)
        while g.threads[0].sb:
            (g,) = sb_flush_step(g, 0)
        expected = {}
        for e in order:
            expected[e.addr] = e.value
        assert g.mem == Memory(expected)


def test_global_step_cases():
    assert sb_step_global(config(), 0) == []
    g = config(sb=[w(X, 1)])
    assert sb_step_global(g, 0) == sb_flush_step(g, 0)


def test_program_steps_are_recorded():
    lf = corpus("sb_naive")
    g = lf.initial()
    # P0: [x] := 1; [r0] := [y];  run it to completion without flushing
    while True:
        th = g.threads[0]
        steps = [c for c in sb_step_global(g, 0) if len(c.threads[0].sb) >= len(th.sb)]
        if not steps:
            break
        g = steps[0]
    kinds = [type(e).__name__ for e in g.threads[0].sb]
    assert kinds.count("WriteSb") == 2 and kinds.count("ReadSb") == 1
    assert isinstance(g.threads[0].sb[0], ProgSb)
    n = len(g.threads[0].sb)
    for _ in range(n):
        (g,) = sb_flush_step(g, 0)
    assert g.threads[0].sb == () and g.mem[lf.address("x")] == 1


def test_reads_match_forwarding_in_single_thread_runs():
    """A lone thread always reads the value it would see in sequential order."""
    lf = parse_litmus("""
        mem { x = 0; y = 0; }
        owns P0 { x; y; }
        thread P0 { [x] := 1; [y] := [x] + 1; [x] := [y] * 2; }
    """)
    graph = explore("sb", lf.initial())
    for g in graph.states:
        th = g.threads[0]
        for k, e in enumerate(th.sb):
            if isinstance(e, ReadSb):
                v = buffered_val(th.sb[:k], e.addr)
                assert e.value == (g.mem[e.addr] if v is None else v)
    finals = {(g.mem[0], g.mem[1]) for g in graph.states if not any(t.sb or t.instrs for t in g.threads)
              and g.threads[0].prog.stmt == SKIP}
    assert finals == {(4, 2)}


def test_rmw_and_fence_never_run_with_a_full_buffer():
    graph = explore("sb", corpus("sb_cas").initial())
    for src, dst, thread, kind in graph.edges:
        if kind != "memory":
            continue
        before = graph.states[src].threads[thread]
        if isinstance(before.instrs[0], (RMW, Fence)):
            assert before.sb == ()
