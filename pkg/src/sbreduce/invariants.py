"""Invariants of store buffer machine states reachable from safe programs.

Checks that depend on ownership or sharing at the time an entry entered the
buffer replay the thread's own buffered ghost effects from its current
ownership.  Replaying is exact because entries leave in FIFO order: every
effect between the current state and the entry is still in the buffer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import RMW, Config, Read, Thread, Write, eval_storeop, read_only, release_acquire, sharing_subtract
from .coupling import instrs, prog_instrs, read_tmps, strip_suffix
from .pimp import pimp_step, thread_valid
from .sb import GhostSb, ProgSb, ReadSb, WriteSb, buffered_val

SUB_INVARIANTS = ("ownership", "sharing", "temporaries", "data_dependency", "history", "flush", "valid")


@dataclass(frozen=True)
class Failure:
    invariant: str
    thread: int | None
    detail: str


@dataclass
class InvariantReport:
    failures: list[Failure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok

    @property
    def first(self) -> Failure | None:
        return self.failures[0] if self.failures else None

    def failed(self) -> set[str]:
        return {f.invariant for f in self.failures}


@dataclass(frozen=True)
class _Slot:
    """Replayed context in front of one buffer entry."""

    index: int
    entry: object
    owned: frozenset
    acquired: frozenset
    shared: object
    suspended: bool


def _replay(th: Thread, S) -> list[_Slot]:
    owned, acq = th.ghost.owned, th.ghost.acquired
    suspended = False
    out = []
    for k, e in enumerate(th.sb):
        if isinstance(e, WriteSb) and e.volatile:
            suspended = True
        out.append(_Slot(k, e, owned, acq, S, suspended))
        if isinstance(e, WriteSb) and e.volatile:
            a = e.ann
            owned = (owned | a.acquire) - a.release
            acq = (acq | a.acquire) - a.release
            S = release_acquire(S, a)
        elif isinstance(e, GhostSb):
            owned = owned | e.acquire
            acq = acq | e.acquire
            S = sharing_subtract(S, e.acquire, e.local)
    return out


def _others_owned(g: Config, i: int) -> frozenset:
    out = frozenset()
    for j, th in enumerate(g.threads):
        if j != i:
            out |= th.ghost.owned
    return out


def _instr_read_tmps(xs) -> list[int]:
    return [x.tmp for x in xs if isinstance(x, (Read, RMW))]


def ownership_inv(g: Config) -> list[Failure]:
    out = []
    for i, th in enumerate(g.threads):
        others = _others_owned(g, i)
        for s in _replay(th, g.shared):
            e = s.entry
            if isinstance(e, WriteSb):
                if not e.volatile and e.addr not in s.owned:
                    out.append(Failure("ownership", i, f"outstanding non-volatile write to unowned {e.addr}"))
                if e.volatile and e.addr in others:
                    out.append(Failure("ownership", i, f"outstanding volatile write to {e.addr} owned by another thread"))
            elif isinstance(e, ReadSb) and not e.volatile and s.suspended and e.addr not in s.owned:
                if e.addr not in read_only(s.shared):
                    out.append(Failure("ownership", i, f"outstanding non-volatile read of {e.addr} neither owned nor read-only"))
                if e.addr in others:
                    out.append(Failure("ownership", i, f"outstanding read-only access to {e.addr} owned by another thread"))
    seen: set = set()
    for i, th in enumerate(g.threads):
        if th.ghost.owned & seen:
            out.append(Failure("ownership", i, f"addresses {sorted(th.ghost.owned & seen)} owned twice"))
        seen |= th.ghost.owned
    return out


def sharing_inv(g: Config) -> list[Failure]:
    out = []
    S = g.shared
    all_owned = frozenset().union(*(th.ghost.owned for th in g.threads))
    unshared_unowned = [a for a in g.mem.footprint() if a not in all_owned and a not in S]
    if unshared_unowned:
        out.append(Failure("sharing", None, f"unowned addresses {unshared_unowned} are not shared"))
    ro = read_only(S)
    for i, th in enumerate(g.threads):
        if th.ghost.owned & ro:
            out.append(Failure("sharing", i, f"owns read-only {sorted(th.ghost.owned & ro)}"))
        for s in _replay(th, S):
            e = s.entry
            if isinstance(e, WriteSb):
                if not e.volatile and e.addr in s.shared:
                    out.append(Failure("sharing", i, f"outstanding non-volatile write to shared {e.addr}"))
                if e.addr in read_only(s.shared):
                    out.append(Failure("sharing", i, f"outstanding write to read-only {e.addr}"))
                if e.volatile:
                    a = e.ann
                    if not a.release <= s.owned:
                        out.append(Failure("sharing", i, f"releases unowned {sorted(a.release - s.owned)}"))
                    if a.acquire & a.release:
                        out.append(Failure("sharing", i, "acquires and releases the same address"))
                    if not a.local <= a.acquire:
                        out.append(Failure("sharing", i, "local addresses not acquired"))
            elif isinstance(e, GhostSb) and not e.local <= e.acquire:
                out.append(Failure("sharing", i, "ghost local addresses not acquired"))
    return out


def temporaries_inv(g: Config) -> list[Failure]:
    out = []
    for i, th in enumerate(g.threads):
        pend = _instr_read_tmps(th.instrs)
        done = [e.tmp for e in th.sb if isinstance(e, ReadSb)]
        if len(set(pend)) != len(pend):
            out.append(Failure("temporaries", i, "read temporaries of instructions not distinct"))
        if len(set(done)) != len(done):
            out.append(Failure("temporaries", i, "read temporaries in store buffer not distinct"))
        if set(pend) & set(done):
            out.append(Failure("temporaries", i, "pending read temporaries already buffered"))
        if set(pend) & th.temps.keys():
            out.append(Failure("temporaries", i, f"read temporaries {sorted(set(pend) & th.temps.keys())} not fresh"))
    return out


def data_dependency_inv(g: Config) -> list[Failure]:
    out = []
    for i, th in enumerate(g.threads):
        for k, ins in enumerate(th.instrs):
            if isinstance(ins, (Write, RMW)):
                if not ins.sop.is_valid():
                    out.append(Failure("data_dependency", i, "store operation reads outside its domain"))
                later = set(_instr_read_tmps(th.instrs[k + 1:]))
                if ins.sop.domain & later:
                    out.append(Failure("data_dependency", i, "write depends on a later read"))
        pend = set(_instr_read_tmps(th.instrs))
        for e in th.sb:
            if isinstance(e, WriteSb):
                if not e.sop.is_valid():
                    out.append(Failure("data_dependency", i, "buffered store operation reads outside its domain"))
                if e.sop.domain & pend:
                    out.append(Failure("data_dependency", i, "buffered write depends on a pending read"))
    return out


def history_inv(g: Config) -> list[Failure]:
    out = []
    for i, th in enumerate(g.threads):
        sb = th.sb
        for s in _replay(th, g.shared):
            e, k = s.entry, s.index
            if isinstance(e, ReadSb):
                if s.suspended and (e.volatile or e.addr in s.acquired):
                    out.append(Failure("history", i, f"unclean read of {e.addr} behind a volatile write"))
                tracked = s.suspended or (e.addr in s.owned and e.addr not in s.acquired)
                if not e.volatile and tracked:
                    v = buffered_val(sb[:k], e.addr)
                    if v is None:
                        v = g.mem[e.addr]
                    if v != e.value:
                        out.append(Failure("history", i, f"recorded read of {e.addr} = {e.value}, expected {v}"))
                if th.temps.get(e.tmp) != e.value:
                    out.append(Failure("history", i, f"recorded read value differs from t{e.tmp}"))
            elif isinstance(e, WriteSb):
                if not e.sop.domain <= th.temps.keys():
                    out.append(Failure("history", i, "buffered write domain undefined"))
                elif eval_storeop(e.sop, th.temps) != e.value:
                    out.append(Failure("history", i, f"buffered write value to {e.addr} differs from its operation"))
                if e.sop.domain & read_tmps(sb[k + 1:]):
                    out.append(Failure("history", i, "buffered write depends on a later buffered read"))
        progs = [(k, e) for k, e in enumerate(sb) if isinstance(e, ProgSb)]
        for n, (k, e) in enumerate(progs):
            if n and progs[n - 1][1].prog2 != e.prog:
                out.append(Failure("history", i, "program history is not chained"))
            temps = th.temps.remove(read_tmps(sb[k + 1:]))
            if (e.prog2, e.instrs) not in pimp_step(temps, e.prog):
                out.append(Failure("history", i, "recorded program step is not replayable"))
        if progs and progs[-1][1].prog2 != th.prog:
            out.append(Failure("history", i, "program state differs from last recorded step"))
        for k in range(len(sb) + 1):
            rest = sb[k:]
            if strip_suffix(instrs(rest) + th.instrs, prog_instrs(rest)) is None:
                out.append(Failure("history", i, "pending instructions do not match recorded program steps"))
                break
    return out


def flush_inv(g: Config) -> list[Failure]:
    return [Failure("flush", i, "clean thread has an outstanding volatile write")
            for i, th in enumerate(g.threads)
            if not th.ghost.dirty and any(isinstance(e, WriteSb) and e.volatile for e in th.sb)]


def valid_inv(g: Config) -> list[Failure]:
    out = []
    for i, th in enumerate(g.threads):
        why = thread_valid(th)
        if why is not None:
            out.append(Failure("valid", i, why))
    return out


CHECKS = {
    "ownership": ownership_inv,
    "sharing": sharing_inv,
    "temporaries": temporaries_inv,
    "data_dependency": data_dependency_inv,
    "history": history_inv,
    "flush": flush_inv,
    "valid": valid_inv,
}


def check_invariant(g: Config) -> InvariantReport:
    """All failed sub-invariants, in the fixed order of SUB_INVARIANTS."""
    rep = InvariantReport()
    for name in SUB_INVARIANTS:
        rep.failures.extend(CHECKS[name](g))
    return rep
