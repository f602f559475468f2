"""Shared test utilities: corpus access, random programs and a big-step interpreter.

The interpreter below is written against the source language only.  It does
not reuse anything from the package besides the AST classes, so it can serve
as an independent oracle for the small-step machines.
"""

from __future__ import annotations

import random
from contextlib import contextmanager
from pathlib import Path

from sbreduce.core import Config, GhostState, Memory, Thread, FrozenMap
from sbreduce.litmus import load_litmus
from sbreduce.pimp import (
    CAS,
    Assign,
    Binop,
    Cond,
    Const,
    Mem,
    ProgramState,
    SFence,
    SGhost,
    Seq,
    Skip,
    Unop,
    While,
    NO_ADDRS,
    seq,
)

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"

SAFE_CORPUS = (
    "cas_lock", "cas_race", "local_only", "mp_ownership", "mp_volatile", "publish_ro", "ro_read",
    "sb_cas", "sb_fenced", "sb_local_flush", "spinlock_counter", "tour_release_ro",
    "tour_release_rw", "tour_shared",
)


def corpus(name: str):
    return load_litmus(CORPUS / f"{name}.litmus")


# ---------------------------------------------------------------------------
# Acceptance criterion bookkeeping, reported by conftest at the end of a run
# ---------------------------------------------------------------------------

CRITERIA: dict[int, tuple[str, bool, str]] = {}


@contextmanager
def criterion(n: int, title: str):
    """Record whether the block passes; the detail list is filled by the block.

    Several tests may report on one criterion: it passes only if all of them do.
    """
    detail: list[str] = []
    ok = False
    try:
        yield detail
        ok = True
    finally:
        _, prev_ok, prev = CRITERIA.get(n, (title, True, ""))
        text = "; ".join(x for x in (prev, *detail) if x)
        CRITERIA[n] = (title, prev_ok and ok, text)


# ---------------------------------------------------------------------------
# Big-step oracle for single-threaded programs
# ---------------------------------------------------------------------------

LO, HI = -(2**63), 2**63 - 1


class OracleOverflow(Exception):
    pass


def _fit(v: int) -> int:
    if not LO <= v <= HI:
        raise OracleOverflow(v)
    return v


def big_eval(e, mem: dict) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Mem):
        return mem.get(e.addr, 0)
    if isinstance(e, Unop):
        v = big_eval(e.arg, mem)
        return _fit(-v) if e.op == "-" else int(v == 0)
    if isinstance(e, Binop):
        x, y = big_eval(e.left, mem), big_eval(e.right, mem)
        table = {
            "+": lambda: _fit(x + y),
            "-": lambda: _fit(x - y),
            "*": lambda: _fit(x * y),
            "==": lambda: int(x == y),
            "!=": lambda: int(x != y),
            "<": lambda: int(x < y),
            "<=": lambda: int(x <= y),
            ">": lambda: int(x > y),
            ">=": lambda: int(x >= y),
            "&&": lambda: int(x != 0 and y != 0),
            "||": lambda: int(x != 0 or y != 0),
        }
        return table[e.op]()
    raise TypeError(e)


def big_step(s, mem: dict, fuel: int = 10_000) -> dict:
    """Final memory of running statement `s` alone on `mem` (a plain dict)."""
    mem = dict(mem)

    def run(s):
        nonlocal fuel
        fuel -= 1
        if fuel < 0:
            raise RuntimeError("out of fuel")
        if isinstance(s, (Skip, SFence, SGhost)):
            return
        if isinstance(s, Seq):
            run(s.first)
            run(s.second)
        elif isinstance(s, Assign):
            a = big_eval(s.addr, mem)
            mem[a] = big_eval(s.expr, mem)
        elif isinstance(s, CAS):
            a = big_eval(s.addr, mem)
            cmp = big_eval(s.cmp, mem)
            new = big_eval(s.swap, mem)
            if mem.get(a, 0) == cmp:
                mem[a] = new
        elif isinstance(s, Cond):
            run(s.then if big_eval(s.cond, mem) != 0 else s.orelse)
        elif isinstance(s, While):
            while big_eval(s.cond, mem) != 0:
                run(s.body)
        else:
            raise TypeError(s)

    run(s)
    return mem


# ---------------------------------------------------------------------------
# Random loop-free programs
# ---------------------------------------------------------------------------

OPS = ("+", "-", "*", "==", "!=", "<", "<=", ">", ">=", "&&", "||")


def random_expr(rng: random.Random, naddr: int, depth: int):
    r = rng.random()
    if depth <= 0 or r < 0.3:
        if rng.random() < 0.5:
            return Const(rng.randint(-3, 5))
        return Mem(rng.random() < 0.3, rng.randrange(naddr))
    if r < 0.4:
        return Unop(rng.choice("-!"), random_expr(rng, naddr, depth - 1))
    return Binop(rng.choice(OPS), random_expr(rng, naddr, depth - 1), random_expr(rng, naddr, depth - 1))


def random_addr(rng: random.Random, naddr: int):
    """A constant address, or one computed through a memory read."""
    a = rng.randrange(naddr)
    if rng.random() < 0.2:
        return Binop("+", Const(a), Binop("*", Mem(False, rng.randrange(naddr)), Const(0)))
    return Const(a)


def random_stmt(rng: random.Random, naddr: int, depth: int):
    r = rng.random()
    if depth > 0 and r < 0.15:
        return Cond(random_expr(rng, naddr, 2), random_block(rng, naddr, depth - 1),
                    random_block(rng, naddr, depth - 1))
    if r < 0.25:
        return CAS(random_addr(rng, naddr), random_expr(rng, naddr, 1), random_expr(rng, naddr, 2))
    if r < 0.3:
        return SFence()
    if r < 0.33:
        return SGhost(NO_ADDRS, NO_ADDRS)
    return Assign(rng.random() < 0.3, random_addr(rng, naddr), random_expr(rng, naddr, 2))


def random_block(rng: random.Random, naddr: int, depth: int):
    return seq(*[random_stmt(rng, naddr, depth) for _ in range(rng.randint(0, 3))])


def random_program(rng: random.Random, naddr: int = 3):
    return seq(*[random_stmt(rng, naddr, 2) for _ in range(rng.randint(1, 6))])


def single_thread(stmt, init: dict, naddr: int) -> Config:
    """A lone thread owning every address, so every access it makes is safe."""
    th = Thread(ProgramState(stmt, 0), ghost=GhostState(False, frozenset(range(naddr)), frozenset()))
    return Config((th,), FrozenMap(), Memory(init))
