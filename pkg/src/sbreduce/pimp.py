"""PIMP: a parallel WHILE language whose expressions compile to memory instructions.

A program step never touches memory.  It issues instructions and rewrites
the evaluated sub-expression to a `Tmp` node; the next stage waits until the
memory system has filled in the temporaries the node depends on.
"""

from __future__ import annotations

from typing import Any, Iterable, Mapping

from .core import (
    record,
    RMW,
    Annotation,
    Arg,
    Bin,
    Fence,
    Frozen,
    Ghost,
    Lit,
    Read,
    StoreOp,
    TmpRef,
    Un,
    Write,
    eval_storeop,
    fn_tmps,
    is_true,
)


class InvalidAddress(ValueError):
    pass


# ---------------------------------------------------------------------------
# Abstract syntax
# ---------------------------------------------------------------------------


@record
class Const(Frozen):
    value: int


@record
class Mem(Frozen):
    volatile: bool
    addr: int


@record
class Tmp(Frozen):
    sop: StoreOp


@record
class Unop(Frozen):
    op: str
    arg: Any


@record
class Binop(Frozen):
    op: str
    left: Any
    right: Any


Expr = Const | Mem | Tmp | Unop | Binop


@record
class AddrSet(Frozen):
    """Literal addresses, plus the evaluated target address when `target` is set."""

    lits: frozenset = frozenset()
    target: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lits", frozenset(self.lits))

    def evaluate(self, target_addr: int | None) -> frozenset:
        if not self.target:
            return self.lits
        if target_addr is None:
            raise ValueError("'addr' used where no target address exists")
        return self.lits | {target_addr}


NO_ADDRS = AddrSet()


@record
class AnnExprs(Frozen):
    acquire: AddrSet = NO_ADDRS
    local: AddrSet = NO_ADDRS
    release: AddrSet = NO_ADDRS
    writable: AddrSet = NO_ADDRS

    def evaluate(self, target_addr: int | None) -> Annotation:
        return Annotation(
            self.acquire.evaluate(target_addr),
            self.local.evaluate(target_addr),
            self.release.evaluate(target_addr),
            self.writable.evaluate(target_addr),
        )


NO_ANN_EXPRS = AnnExprs()


@record
class Skip(Frozen):
    pass


@record
class Assign(Frozen):
    volatile: bool
    addr: Any
    expr: Any
    ann: AnnExprs = NO_ANN_EXPRS


@record
class CAS(Frozen):
    addr: Any
    cmp: Any
    swap: Any
    ann: AnnExprs = NO_ANN_EXPRS


@record
class Seq(Frozen):
    first: Any
    second: Any


@record
class Cond(Frozen):
    cond: Any
    then: Any
    orelse: Any


@record
class While(Frozen):
    cond: Any
    body: Any


@record
class SGhost(Frozen):
    acquire: AddrSet
    local: AddrSet


@record
class SFence(Frozen):
    pass


Stmt = Skip | Assign | CAS | Seq | Cond | While | SGhost | SFence

SKIP = Skip()


@record
class ProgramState(Frozen):
    stmt: Any
    t: int = 0


def seq(*stmts) -> Any:
    """Right-nested sequence; the empty sequence is Skip."""
    if not stmts:
        return SKIP
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


# ---------------------------------------------------------------------------
# Expression compilation
# ---------------------------------------------------------------------------


def used_tmps(e) -> int:
    if isinstance(e, Mem):
        return 1
    if isinstance(e, Unop):
        return used_tmps(e.arg)
    if isinstance(e, Binop):
        return used_tmps(e.left) + used_tmps(e.right)
    return 0


def issue_expr(t: int, e) -> tuple:
    """Read instructions needed to evaluate `e`, numbered left to right from `t`."""
    if isinstance(e, Mem):
        return (Read(e.volatile, e.addr, t),)
    if isinstance(e, Unop):
        return issue_expr(t, e.arg)
    if isinstance(e, Binop):
        return issue_expr(t, e.left) + issue_expr(t + used_tmps(e.left), e.right)
    return ()


def eval_expr(t: int, e) -> StoreOp:
    if isinstance(e, Const):
        return StoreOp(frozenset(), Lit(e.value))
    if isinstance(e, Mem):
        return StoreOp(frozenset((t,)), TmpRef(t))
    if isinstance(e, Tmp):
        return e.sop
    if isinstance(e, Unop):
        inner = eval_expr(t, e.arg)
        return StoreOp(inner.domain, Un(e.op, inner.fn))
    if isinstance(e, Binop):
        d1 = eval_expr(t, e.left)
        d2 = eval_expr(t + used_tmps(e.left), e.right)
        return StoreOp(d1.domain | d2.domain, Bin(e.op, d1.fn, d2.fn))
    raise TypeError(f"not an expression: {e!r}")


def _address(sop: StoreOp, temps: Mapping[int, int]) -> int:
    a = eval_storeop(sop, temps)
    if a < 0:
        raise InvalidAddress(f"computed address {a} is negative")
    return a


def _resolved(sop: StoreOp, temps: Mapping[int, int]) -> bool:
    return sop.domain <= temps.keys()


# ---------------------------------------------------------------------------
# Program transitions
# ---------------------------------------------------------------------------


def pimp_step(temps: Mapping[int, int], p: ProgramState) -> list[tuple[ProgramState, tuple]]:
    """All program transitions enabled at (temps, p).

    Returns an empty list for Skip and for stages whose Tmp domain is not yet
    resolved in `temps` (the thread has to wait for the memory system).
    """
    s, t = p.stmt, p.t

    if isinstance(s, Skip):
        return []

    if isinstance(s, Assign):
        if not isinstance(s.addr, Tmp):
            a2 = Tmp(eval_expr(t, s.addr))
            return [(ProgramState(Assign(s.volatile, a2, s.expr, s.ann), t + used_tmps(s.addr)),
                     issue_expr(t, s.addr))]
        if not _resolved(s.addr.sop, temps):
            return []
        addr = _address(s.addr.sop, temps)
        write = Write(s.volatile, addr, eval_expr(t, s.expr), s.ann.evaluate(addr))
        return [(ProgramState(SKIP, t + used_tmps(s.expr)), issue_expr(t, s.expr) + (write,))]

    if isinstance(s, CAS):
        if not isinstance(s.addr, Tmp):
            a2 = Tmp(eval_expr(t, s.addr))
            return [(ProgramState(CAS(a2, s.cmp, s.swap, s.ann), t + used_tmps(s.addr)),
                     issue_expr(t, s.addr))]
        if not isinstance(s.cmp, Tmp):
            c2 = Tmp(eval_expr(t, s.cmp))
            return [(ProgramState(CAS(s.addr, c2, s.swap, s.ann), t + used_tmps(s.cmp)),
                     issue_expr(t, s.cmp))]
        if not (_resolved(s.addr.sop, temps) and _resolved(s.cmp.sop, temps)):
            return []
        addr = _address(s.addr.sop, temps)
        swap_op = eval_expr(t, s.swap)
        t2 = t + used_tmps(s.swap)
        rmw = RMW(addr, t2, swap_op, Bin("==", TmpRef(t2), s.cmp.sop.fn), Arg(0), s.ann.evaluate(addr))
        return [(ProgramState(SKIP, t2 + 1), issue_expr(t, s.swap) + (rmw,))]

    if isinstance(s, Seq):
        if isinstance(s.first, Skip):
            return [(ProgramState(s.second, t), ())]
        return [(ProgramState(Seq(p2.stmt, s.second), p2.t), issued)
                for p2, issued in pimp_step(temps, ProgramState(s.first, t))]

    if isinstance(s, Cond):
        if not isinstance(s.cond, Tmp):
            e2 = Tmp(eval_expr(t, s.cond))
            return [(ProgramState(Cond(e2, s.then, s.orelse), t + used_tmps(s.cond)),
                     issue_expr(t, s.cond))]
        if not _resolved(s.cond.sop, temps):
            return []
        branch = s.then if is_true(eval_storeop(s.cond.sop, temps)) else s.orelse
        return [(ProgramState(branch, t), ())]

    if isinstance(s, While):
        return [(ProgramState(Cond(s.cond, Seq(s.body, s), SKIP), t), ())]

    if isinstance(s, SGhost):
        return [(ProgramState(SKIP, t), (Ghost(s.acquire.evaluate(None), s.local.evaluate(None)),))]

    if isinstance(s, SFence):
        return [(ProgramState(SKIP, t), (Fence(),))]

    raise TypeError(f"not a statement: {s!r}")


# ---------------------------------------------------------------------------
# The `valid` side condition on temporaries
# ---------------------------------------------------------------------------


def _expr_tmp_sops(e) -> Iterable[StoreOp]:
    if isinstance(e, Tmp):
        yield e.sop
    elif isinstance(e, Unop):
        yield from _expr_tmp_sops(e.arg)
    elif isinstance(e, Binop):
        yield from _expr_tmp_sops(e.left)
        yield from _expr_tmp_sops(e.right)


def stmt_tmp_sops(s) -> Iterable[StoreOp]:
    """Every store operation held by a Tmp node inside a statement."""
    if isinstance(s, Assign):
        yield from _expr_tmp_sops(s.addr)
        yield from _expr_tmp_sops(s.expr)
    elif isinstance(s, CAS):
        for e in (s.addr, s.cmp, s.swap):
            yield from _expr_tmp_sops(e)
    elif isinstance(s, Seq):
        yield from stmt_tmp_sops(s.first)
        yield from stmt_tmp_sops(s.second)
    elif isinstance(s, Cond):
        yield from _expr_tmp_sops(s.cond)
        yield from stmt_tmp_sops(s.then)
        yield from stmt_tmp_sops(s.orelse)
    elif isinstance(s, While):
        yield from _expr_tmp_sops(s.cond)
        yield from stmt_tmp_sops(s.body)


def has_tmp(s) -> bool:
    return any(True for _ in stmt_tmp_sops(s))


def _sop_tmps(sop: StoreOp) -> frozenset:
    return sop.domain | fn_tmps(sop.fn)


def instr_tmps(ins) -> frozenset:
    if isinstance(ins, Read):
        return frozenset((ins.tmp,))
    if isinstance(ins, Write):
        return _sop_tmps(ins.sop)
    if isinstance(ins, RMW):
        return _sop_tmps(ins.sop) | fn_tmps(ins.cond) | {ins.tmp}
    return frozenset()


def entry_tmps(entry) -> frozenset:
    # local import: sb imports pimp
    from .sb import ProgSb, ReadSb, WriteSb

    if isinstance(entry, ReadSb):
        return frozenset((entry.tmp,))
    if isinstance(entry, WriteSb):
        return _sop_tmps(entry.sop)
    if isinstance(entry, ProgSb):
        out = frozenset()
        for ins in entry.instrs:
            out |= instr_tmps(ins)
        return out
    return frozenset()


def thread_valid(th) -> str | None:
    """Reason the thread violates the counter conditions, or None."""
    p = th.prog
    t = p.t
    for sop in stmt_tmp_sops(p.stmt):
        bad = [x for x in _sop_tmps(sop) if x >= t]
        if bad:
            return f"Tmp node in statement uses t{min(bad)} >= counter {t}"
    pending = set()
    for ins in th.instrs:
        bad = [x for x in instr_tmps(ins) if x >= t]
        if bad:
            return f"instruction uses t{min(bad)} >= counter {t}"
        if isinstance(ins, (Read, RMW)):
            pending.add(ins.tmp)
    for entry in th.sb:
        bad = [x for x in entry_tmps(entry) if x >= t]
        if bad:
            return f"store buffer entry uses t{min(bad)} >= counter {t}"
    for x in range(t):
        if x not in th.temps and x not in pending:
            return f"t{x} below counter {t} is neither defined nor pending"
    return None


def pimp_valid(g) -> bool:
    return all(thread_valid(th) is None for th in g.threads)
