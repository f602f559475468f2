"""Sequentially consistent virtual machine and its safety judgment."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import (
    RMW,
    Config,
    Fence,
    Ghost,
    GhostState,
    Read,
    Thread,
    Write,
    eval_fn,
    eval_storeop,
    read_only,
    release_acquire,
    sharing_subtract,
)
from .pimp import pimp_step

VmThread = Thread
VmGlobal = Config


class Violation(str, Enum):
    NotReadable = "NotReadable"
    DirtyVolatileRead = "DirtyVolatileRead"
    DirtyFreshRead = "DirtyFreshRead"
    NonVolWriteSharedOrUnowned = "NonVolWriteSharedOrUnowned"
    VolWriteOwnedByOther = "VolWriteOwnedByOther"
    VolWriteReadOnly = "VolWriteReadOnly"
    AcquireOwnedByOther = "AcquireOwnedByOther"
    AcquireNotShared = "AcquireNotShared"
    LNotInA = "LNotInA"
    RNotOwned = "RNotOwned"
    AIntersectsR = "AIntersectsR"
    RmwAddrInvisible = "RmwAddrInvisible"
    GhostAcquireViolation = "GhostAcquireViolation"


@dataclass(frozen=True)
class SafetyReport:
    """Outcome of the safety judgment for one thread's head instruction."""

    violation: Violation | None = None
    detail: str = ""

    @property
    def safe(self) -> bool:
        return self.violation is None

    def __bool__(self) -> bool:
        return self.safe


SAFE = SafetyReport()


def _others(Os: Sequence[frozenset], i: int) -> frozenset:
    out = frozenset()
    for j, o in enumerate(Os):
        if j != i:
            out |= o
    return out


def _write_side(Os, i, th: Thread, S, addr: int, ann) -> SafetyReport:
    """Premises shared by volatile writes and successful RMWs."""
    others = _others(Os, i)
    owned = th.ghost.owned
    if addr in others:
        return SafetyReport(Violation.VolWriteOwnedByOther, f"address {addr} owned by another thread")
    if addr in read_only(S):
        return SafetyReport(Violation.VolWriteReadOnly, f"address {addr} is read-only")
    if ann.acquire & others:
        return SafetyReport(Violation.AcquireOwnedByOther, f"acquiring {sorted(ann.acquire & others)}")
    if not ann.acquire <= owned | S.keys():
        return SafetyReport(Violation.AcquireNotShared,
                            f"acquiring unshared {sorted(ann.acquire - owned - S.keys())}")
    if not ann.local <= ann.acquire:
        return SafetyReport(Violation.LNotInA, f"local {sorted(ann.local - ann.acquire)} not acquired")
    if not ann.release <= owned:
        return SafetyReport(Violation.RNotOwned, f"releasing unowned {sorted(ann.release - owned)}")
    if ann.acquire & ann.release:
        return SafetyReport(Violation.AIntersectsR, f"{sorted(ann.acquire & ann.release)} both acquired and released")
    return SAFE


def vm_safe(Os: Sequence[frozenset], i: int, th: Thread, S, m) -> SafetyReport:
    """Safety of thread `i`'s head instruction; an empty instruction list is safe."""
    if not th.instrs:
        return SAFE
    ins = th.instrs[0]
    g = th.ghost

    if isinstance(ins, Read):
        a = ins.addr
        if not (a in g.owned or a in read_only(S) or (ins.volatile and a in S)):
            return SafetyReport(Violation.NotReadable, f"read of address {a}")
        if ins.volatile and g.dirty:
            return SafetyReport(Violation.DirtyVolatileRead, f"volatile read of {a} with dirty buffer")
        if not ins.volatile and a in g.acquired and g.dirty:
            return SafetyReport(Violation.DirtyFreshRead, f"read of freshly acquired {a} with dirty buffer")
        return SAFE

    if isinstance(ins, Write):
        if not ins.volatile:
            if ins.addr in g.owned and ins.addr not in S:
                return SAFE
            return SafetyReport(Violation.NonVolWriteSharedOrUnowned, f"non-volatile write of {ins.addr}")
        return _write_side(Os, i, th, S, ins.addr, ins.ann)

    if isinstance(ins, RMW):
        temps = th.temps.set(ins.tmp, m[ins.addr])
        if not eval_fn(ins.cond, temps):
            if ins.addr in S or ins.addr in g.owned:
                return SAFE
            return SafetyReport(Violation.RmwAddrInvisible, f"failing RMW on {ins.addr}")
        return _write_side(Os, i, th, S, ins.addr, ins.ann)

    if isinstance(ins, Fence):
        return SAFE

    if isinstance(ins, Ghost):
        others = _others(Os, i)
        if not ins.acquire <= S.keys() | g.owned:
            return SafetyReport(Violation.GhostAcquireViolation, "acquired address neither shared nor owned")
        if not ins.local <= ins.acquire:
            return SafetyReport(Violation.GhostAcquireViolation, "local address not acquired")
        if ins.acquire & others:
            return SafetyReport(Violation.GhostAcquireViolation, "acquired address owned by another thread")
        return SAFE

    raise TypeError(f"not an instruction: {ins!r}")


def config_safe(g: Config) -> tuple[int, SafetyReport] | None:
    """First unsafe thread of a configuration, or None."""
    Os = g.owned_sets()
    for i, th in enumerate(g.threads):
        rep = vm_safe(Os, i, th, g.shared, g.mem)
        if not rep.safe:
            return i, rep
    return None


def vm_memory_step(g: Config, i: int) -> list[Config]:
    """The (at most one) successor from executing thread i's head instruction."""
    th = g.threads[i]
    if not th.instrs:
        return []
    ins, rest = th.instrs[0], th.instrs[1:]
    gh = th.ghost
    S, m, temps = g.shared, g.mem, th.temps

    if isinstance(ins, Read):
        th2 = th.replace(instrs=rest, temps=temps.set(ins.tmp, m[ins.addr]))
        return [g.with_thread(i, th2)]

    if isinstance(ins, Write):
        m2 = m.set(ins.addr, eval_storeop(ins.sop, temps))
        if not ins.volatile:
            return [g.with_thread(i, th.replace(instrs=rest), mem=m2)]
        ann = ins.ann
        gh2 = GhostState(True, (gh.owned | ann.acquire) - ann.release, (gh.acquired | ann.acquire) - ann.release)
        return [g.with_thread(i, th.replace(instrs=rest, ghost=gh2), shared=release_acquire(S, ann), mem=m2)]

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
        return [g.with_thread(i, th2, shared=release_acquire(S, ann), mem=m.set(ins.addr, new))]

    if isinstance(ins, Fence):
        return [g.with_thread(i, th.replace(instrs=rest, ghost=GhostState(False, gh.owned, frozenset())))]

    if isinstance(ins, Ghost):
        gh2 = GhostState(gh.dirty, gh.owned | ins.acquire, gh.acquired | ins.acquire)
        return [g.with_thread(i, th.replace(instrs=rest, ghost=gh2), shared=sharing_subtract(S, ins.acquire, ins.local))]

    raise TypeError(f"not an instruction: {ins!r}")


def vm_program_step(g: Config, i: int) -> list[Config]:
    th = g.threads[i]
    return [g.with_thread(i, th.replace(prog=p2, instrs=th.instrs + issued))
            for p2, issued in pimp_step(th.temps, th.prog)]


def vm_successors(g: Config, i: int) -> list[tuple[str, Config]]:
    """Labelled successors of thread i: program steps first, then the memory step."""
    return [("program", c) for c in vm_program_step(g, i)] + [("memory", c) for c in vm_memory_step(g, i)]


def vm_step_global(g: Config, i: int) -> list[Config]:
    return [c for _, c in vm_successors(g, i)]
