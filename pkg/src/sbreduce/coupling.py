"""Coupling between store buffer machine states and virtual machine states.

The virtual machine memory is the store buffer memory with every buffer
flushed up to (excluding) its first volatile write; the remaining entries are
suspended in front of the virtual machine's instruction list.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .core import Config, Ghost, Memory, Read, Thread, Write, sharing_subtract
from .sb import GhostSb, ProgSb, ReadSb, WriteSb, is_volatile_write


@dataclass(frozen=True)
class SplitBuffer:
    flushs: tuple
    suspends: tuple


def split_buffer(sb: Sequence) -> SplitBuffer:
    for k, entry in enumerate(sb):
        if is_volatile_write(entry):
            return SplitBuffer(tuple(sb[:k]), tuple(sb[k:]))
    return SplitBuffer(tuple(sb), ())


def flush_all_until_volatile_write(ts: Iterable[Thread], m: Memory) -> Memory:
    for th in ts:
        for entry in split_buffer(th.sb).flushs:
            if isinstance(entry, WriteSb):
                m = m.set(entry.addr, entry.value)
    return m


def share_all_until_volatile_write(ts: Iterable[Thread], S):
    for th in ts:
        for entry in split_buffer(th.sb).flushs:
            if isinstance(entry, GhostSb):
                S = sharing_subtract(S, entry.acquire, entry.local)
    return S


def instrs(entries: Iterable) -> tuple:
    """Turn buffer entries back into the instructions that produced them."""
    out = []
    for e in entries:
        if isinstance(e, ReadSb):
            out.append(Read(e.volatile, e.addr, e.tmp))
        elif isinstance(e, WriteSb):
            out.append(Write(e.volatile, e.addr, e.sop, e.ann))
        elif isinstance(e, GhostSb):
            out.append(Ghost(e.acquire, e.local))
    return tuple(out)


def prog_instrs(entries: Iterable) -> tuple:
    out: tuple = ()
    for e in entries:
        if isinstance(e, ProgSb):
            out += e.instrs
    return out


def read_tmps(entries: Iterable) -> frozenset:
    return frozenset(e.tmp for e in entries if isinstance(e, ReadSb))


def hd_prog(p, entries: Iterable):
    for e in entries:
        if isinstance(e, ProgSb):
            return e.prog
    return p


def acquire(flushs: Iterable, X: frozenset) -> frozenset:
    X = frozenset(X)
    for e in flushs:
        if isinstance(e, GhostSb):
            X = X | e.acquire
    return X


def strip_suffix(xs: tuple, suffix: tuple) -> tuple | None:
    """`is` with is @ suffix == xs, or None when `suffix` is not a suffix of xs."""
    n = len(suffix)
    if n > len(xs):
        return None
    if n and xs[len(xs) - n:] != suffix:
        return None
    return xs[: len(xs) - n]


class Mismatch(str, Enum):
    ThreadCount = "ThreadCount"
    MemoryMismatch = "MemoryMismatch"
    SharingMismatch = "SharingMismatch"
    InstrsMismatch = "InstrsMismatch"
    TempsMismatch = "TempsMismatch"
    ProgMismatch = "ProgMismatch"
    BufferNotEmpty = "BufferNotEmpty"
    OwnedMismatch = "OwnedMismatch"
    AcquiredMismatch = "AcquiredMismatch"
    DirtyMismatch = "DirtyMismatch"


@dataclass(frozen=True)
class CouplingReport:
    mismatch: Mismatch | None = None
    thread: int | None = None

    @property
    def ok(self) -> bool:
        return self.mismatch is None

    def __bool__(self) -> bool:
        return self.ok


COUPLED = CouplingReport()


def coupled_thread(th: Thread) -> tuple:
    """VM thread components determined by an SB thread; the dirty flag is left out.

    Returns (prog, instrs-or-None, temps, owned, acquired).
    """
    split = split_buffer(th.sb)
    sus = split.suspends
    is_vm = strip_suffix(instrs(sus) + th.instrs, prog_instrs(sus))
    return (
        hd_prog(th.prog, sus),
        is_vm,
        th.temps.remove(read_tmps(sus)),
        acquire(split.flushs, th.ghost.owned),
        acquire(split.flushs, th.ghost.acquired),
    )


def couple_thread(ts: Thread, tv: Thread) -> Mismatch | None:
    prog, is_vm, temps, owned, acq = coupled_thread(ts)
    if is_vm is None or tv.instrs != is_vm:
        return Mismatch.InstrsMismatch
    if tv.temps != temps:
        return Mismatch.TempsMismatch
    if tv.prog != prog:
        return Mismatch.ProgMismatch
    if tv.sb != ():
        return Mismatch.BufferNotEmpty
    if tv.ghost.owned != owned:
        return Mismatch.OwnedMismatch
    if tv.ghost.acquired != acq:
        return Mismatch.AcquiredMismatch
    has_vw = any(is_volatile_write(e) for e in ts.sb)
    if ts.ghost.dirty != (tv.ghost.dirty or has_vw):
        return Mismatch.DirtyMismatch
    return None


def couple(sbg: Config, vg: Config) -> CouplingReport:
    if len(sbg.threads) != len(vg.threads):
        return CouplingReport(Mismatch.ThreadCount)
    if vg.mem != flush_all_until_volatile_write(sbg.threads, sbg.mem):
        return CouplingReport(Mismatch.MemoryMismatch)
    if vg.shared != share_all_until_volatile_write(sbg.threads, sbg.shared):
        return CouplingReport(Mismatch.SharingMismatch)
    for i, (ts, tv) in enumerate(zip(sbg.threads, vg.threads)):
        bad = couple_thread(ts, tv)
        if bad is not None:
            return CouplingReport(bad, i)
    return COUPLED
