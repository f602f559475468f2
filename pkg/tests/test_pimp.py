from __future__ import annotations

import random

import pytest

from helpers import random_program
from sbreduce.core import RMW, Arg, Bin, Fence, FrozenMap, Ghost, Lit, Read, StoreOp, TmpRef, Write
from sbreduce.pimp import (
    CAS,
    NO_ADDRS,
    SKIP,
    AddrSet,
    AnnExprs,
    Assign,
    Binop,
    Cond,
    Const,
    InvalidAddress,
    Mem,
    ProgramState,
    SFence,
    SGhost,
    Seq,
    Tmp,
    While,
    eval_expr,
    issue_expr,
    pimp_step,
    seq,
    used_tmps,
)

NO_TEMPS = FrozenMap()


def only(steps):
    assert len(steps) == 1
    return steps[0]


def test_expression_compilation_numbers_reads_left_to_right():
    e = Binop("+", Mem(False, 4), Binop("*", Mem(True, 5), Const(2)))
    assert used_tmps(e) == 2
    assert issue_expr(3, e) == (Read(False, 4, 3), Read(True, 5, 4))
    sop = eval_expr(3, e)
    assert sop.domain == {3, 4}
    assert sop.fn == Bin("+", TmpRef(3), Bin("*", TmpRef(4), Lit(2)))


def test_constant_address_assignment_takes_two_steps():
    p = ProgramState(Assign(False, Const(0), Const(1)), 0)
    p1, issued = only(pimp_step(NO_TEMPS, p))
    assert issued == ()
    assert isinstance(p1.stmt.addr, Tmp)
    p2, issued = only(pimp_step(NO_TEMPS, p1))
    assert p2 == ProgramState(SKIP, 0)
    assert issued == (Write(False, 0, StoreOp(set(), Lit(1))),)


def test_computed_address_waits_for_its_read():
    p = ProgramState(Assign(True, Mem(False, 2), Mem(False, 3)), 0)
    p1, issued = only(pimp_step(NO_TEMPS, p))
    assert issued == (Read(False, 2, 0),) and p1.t == 1
    assert pimp_step(NO_TEMPS, p1) == []
    p2, issued = only(pimp_step(FrozenMap({0: 7}), p1))
    assert issued == (Read(False, 3, 1), Write(True, 7, StoreOp({1}, TmpRef(1))))
    assert p2.t == 2


def test_negative_computed_address_is_rejected():
    p = ProgramState(Assign(False, Tmp(StoreOp(set(), Lit(-1))), Const(0)), 0)
    with pytest.raises(InvalidAddress):
        pimp_step(NO_TEMPS, p)


def test_annotation_target_is_the_evaluated_address():
    ann = AnnExprs(release=AddrSet({1}, target=True))
    p = ProgramState(Assign(True, Tmp(StoreOp(set(), Lit(4))), Const(0), ann), 0)
    (_, issued), = pimp_step(NO_TEMPS, p)
    assert issued[-1].ann.release == {1, 4}


def test_cas_stages_and_instruction():
    p = ProgramState(CAS(Const(3), Mem(False, 1), Binop("+", Mem(False, 3), Const(1))), 0)
    p1, i1 = only(pimp_step(NO_TEMPS, p))
    p2, i2 = only(pimp_step(NO_TEMPS, p1))
    assert i1 == () and i2 == (Read(False, 1, 0),) and p2.t == 1
    assert pimp_step(NO_TEMPS, p2) == []
    p3, i3 = only(pimp_step(FrozenMap({0: 0}), p2))
    assert p3 == ProgramState(SKIP, 3)
    read, rmw = i3
    assert read == Read(False, 3, 1)
    assert rmw == RMW(3, 2, StoreOp({1}, Bin("+", TmpRef(1), Lit(1))), Bin("==", TmpRef(2), TmpRef(0)), Arg(0))


def test_conditional_branches_on_resolved_condition():
    p = ProgramState(Cond(Mem(False, 0), SFence(), SKIP), 0)
    p1, issued = only(pimp_step(NO_TEMPS, p))
    assert issued == (Read(False, 0, 0),)
    assert pimp_step(NO_TEMPS, p1) == []
    assert only(pimp_step(FrozenMap({0: 2}), p1))[0].stmt == SFence()
    assert only(pimp_step(FrozenMap({0: 0}), p1))[0].stmt == SKIP


def test_while_unfolds_once():
    w = While(Const(1), SKIP)
    p1, issued = only(pimp_step(NO_TEMPS, ProgramState(w, 5)))
    assert issued == () and p1 == ProgramState(Cond(Const(1), Seq(SKIP, w), SKIP), 5)


def test_fence_ghost_and_sequencing():
    g = SGhost(AddrSet({1}), AddrSet({1}))
    p = ProgramState(seq(SFence(), g), 0)
    p1, i1 = only(pimp_step(NO_TEMPS, p))
    assert i1 == (Fence(),) and p1.stmt == Seq(SKIP, g)
    p2, i2 = only(pimp_step(NO_TEMPS, p1))
    assert i2 == () and p2.stmt == g
    p3, i3 = only(pimp_step(NO_TEMPS, p2))
    assert i3 == (Ghost({1}, {1}),) and p3.stmt == SKIP
    assert pimp_step(NO_TEMPS, p3) == []
    assert SGhost(NO_ADDRS, NO_ADDRS) != g


def test_counter_stays_fresh_across_random_runs():
    """Every issued read gets a temporary not used before, numbered consecutively."""
    rng = random.Random(3)
    for _ in range(200):
        p = ProgramState(random_program(rng), 0)
        temps: dict = {}
        used: list[int] = []
        for _ in range(500):
            steps = pimp_step(FrozenMap(temps), p)
            if not steps:
                break
            (p, issued), = steps
            for ins in issued:
                if isinstance(ins, (Read, RMW)):
                    used.append(ins.tmp)
                    temps[ins.tmp] = 0
        assert used == list(range(len(used)))
        assert p.t == len(used)
