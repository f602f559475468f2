"""TSO store buffer machine.

Memory steps only fill the thread's FIFO buffer; flush steps drain it from
the front.  Besides writes, the buffer records reads, ghost operations and
program steps so that the machine's history can be related to the virtual
machine.
"""

from __future__ import annotations

from typing import Any

from .core import (
    record,
    RMW,
    NO_ANN,
    Annotation,
    Config,
    Fence,
    Frozen,
    Ghost,
    GhostState,
    Read,
    StoreOp,
    Thread,
    Write,
    eval_fn,
    eval_storeop,
    release_acquire,
    sharing_subtract,
)
from .pimp import pimp_step

SbThread = Thread
SbGlobal = Config


@record
class ReadSb(Frozen):
    volatile: bool
    addr: int
    tmp: int
    value: int


@record
class WriteSb(Frozen):
    volatile: bool
    addr: int
    sop: StoreOp
    value: int
    ann: Annotation = NO_ANN


@record
class ProgSb(Frozen):
    prog: Any
    prog2: Any
    instrs: tuple


@record
class GhostSb(Frozen):
    acquire: frozenset
    local: frozenset

    def __post_init__(self):
        object.__setattr__(self, "acquire", frozenset(self.acquire))
        object.__setattr__(self, "local", frozenset(self.local))


SbEntry = ReadSb | WriteSb | ProgSb | GhostSb


def is_volatile_write(entry) -> bool:
    return isinstance(entry, WriteSb) and entry.volatile


def buffered_val(sb: tuple, a: int) -> int | None:
    """Value of the youngest buffered write to `a`, or None."""
    for entry in reversed(sb):
        if isinstance(entry, WriteSb) and entry.addr == a:
            return entry.value
    return None


def sb_memory_step(g: Config, i: int) -> list[Config]:
    th = g.threads[i]
    if not th.instrs:
        return []
    ins, rest = th.instrs[0], th.instrs[1:]
    gh, m, temps, sb = th.ghost, g.mem, th.temps, th.sb

    if isinstance(ins, Read):
        v = buffered_val(sb, ins.addr)
        if v is None:
            v = m[ins.addr]
        th2 = th.replace(instrs=rest, temps=temps.set(ins.tmp, v), sb=sb + (ReadSb(ins.volatile, ins.addr, ins.tmp, v),))
        return [g.with_thread(i, th2)]

    if isinstance(ins, Write):
        entry = WriteSb(ins.volatile, ins.addr, ins.sop, eval_storeop(ins.sop, temps), ins.ann)
        gh2 = GhostState(True, gh.owned, gh.acquired) if ins.volatile else gh
        return [g.with_thread(i, th.replace(instrs=rest, sb=sb + (entry,), ghost=gh2))]

    if isinstance(ins, Ghost):
        return [g.with_thread(i, th.replace(instrs=rest, sb=sb + (GhostSb(ins.acquire, ins.local),)))]

    # interlocked operations need an empty buffer
    if sb:
        return []

    if isinstance(ins, RMW):
        old = m[ins.addr]
        temps1 = temps.set(ins.tmp, old)
        if not eval_fn(ins.cond, temps1):
            th2 = th.replace(instrs=rest, temps=temps1, ghost=GhostState(False, gh.owned, frozenset()))
            return [g.with_thread(i, th2)]
        new = eval_storeop(ins.sop, temps1)
        ann = ins.ann
        th2 = th.replace(
            instrs=rest,
            temps=temps.set(ins.tmp, eval_fn(ins.ret, temps1, (old, new))),
            ghost=GhostState(False, (gh.owned | ann.acquire) - ann.release, frozenset()),
        )
        return [g.with_thread(i, th2, shared=release_acquire(g.shared, ann), mem=m.set(ins.addr, new))]

    if isinstance(ins, Fence):
        return [g.with_thread(i, th.replace(instrs=rest, ghost=GhostState(False, gh.owned, frozenset())))]

    raise TypeError(f"not an instruction: {ins!r}")


def apply_flush(entry, gh: GhostState, S, m):
    """Effect of one entry leaving the buffer on (ghost, S, m)."""
    if isinstance(entry, WriteSb):
        m = m.set(entry.addr, entry.value)
        if entry.volatile:
            ann = entry.ann
            gh = GhostState(gh.dirty, (gh.owned | ann.acquire) - ann.release, (gh.acquired | ann.acquire) - ann.release)
            S = release_acquire(S, ann)
        return gh, S, m
    if isinstance(entry, GhostSb):
        gh = GhostState(gh.dirty, gh.owned | entry.acquire, gh.acquired | entry.acquire)
        return gh, sharing_subtract(S, entry.acquire, entry.local), m
    return gh, S, m


def sb_flush_step(g: Config, i: int) -> list[Config]:
    th = g.threads[i]
    if not th.sb:
        return []
    gh, S, m = apply_flush(th.sb[0], th.ghost, g.shared, g.mem)
    return [g.with_thread(i, th.replace(sb=th.sb[1:], ghost=gh), shared=S, mem=m)]


def sb_program_step(g: Config, i: int) -> list[Config]:
    th = g.threads[i]
    return [g.with_thread(i, th.replace(prog=p2, instrs=th.instrs + issued, sb=th.sb + (ProgSb(th.prog, p2, issued),)))
            for p2, issued in pimp_step(th.temps, th.prog)]


def sb_successors(g: Config, i: int) -> list[tuple[str, Config]]:
    return ([("program", c) for c in sb_program_step(g, i)]
            + [("memory", c) for c in sb_memory_step(g, i)]
            + [("flush", c) for c in sb_flush_step(g, i)])


def sb_step_global(g: Config, i: int) -> list[Config]:
    return [c for _, c in sb_successors(g, i)]
