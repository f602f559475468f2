"""Shared domain types for the virtual machine and the store buffer machine.

Addresses and temporaries are plain non-negative ints, values are signed
64-bit ints with checked arithmetic.  Everything here is immutable and
hashable so that whole machine configurations can be deduplicated during
exploration.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, Iterable, Iterator, Mapping

VALUE_MIN = -(2**63)
VALUE_MAX = 2**63 - 1


class UndefinedTemporary(LookupError):
    """A store operation was evaluated before its domain was resolved."""


class ValueOverflow(ArithmeticError):
    pass


class Frozen:
    """Base of `record` classes: drops the cached hash on pickling, because
    string hashes differ between interpreter processes."""

    __slots__ = ()

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_h", None)
        return state

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)


def record(cls):
    """Frozen dataclass keeping a cached structural hash.

    A plain frozen dataclass would install its own, uncached `__hash__`.
    """
    cls = dataclass(frozen=True, eq=True)(cls)
    names = tuple(f.name for f in fields(cls))
    tag = cls.__name__

    def __hash__(self) -> int:
        d = self.__dict__
        h = d.get("_h")
        if h is None:
            h = d["_h"] = hash((tag,) + tuple([d[n] for n in names]))
        return h

    cls.__hash__ = __hash__
    return cls


def check_value(v: int) -> int:
    if not VALUE_MIN <= v <= VALUE_MAX:
        raise ValueOverflow(f"value {v} does not fit in 64 bits")
    return v


def is_true(v: int) -> bool:
    return v != 0


# ---------------------------------------------------------------------------
# Immutable maps
# ---------------------------------------------------------------------------


class FrozenMap(Mapping):
    """Hashable immutable mapping with functional update."""

    __slots__ = ("_d", "_h")

    def __init__(self, items: Mapping | Iterable = ()):
        self._d = dict(items)
        self._h = None

    def __getitem__(self, k):
        return self._d[k]

    def __iter__(self) -> Iterator:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __hash__(self) -> int:
        if self._h is None:
            self._h = hash(frozenset(self._d.items()))
        return self._h

    def __eq__(self, other) -> bool:
        if isinstance(other, FrozenMap):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        body = ", ".join(f"{k!r}: {v!r}" for k, v in sorted(self._d.items()))
        return f"{type(self).__name__}({{{body}}})"

    def __getstate__(self):
        return self._d

    def __setstate__(self, d):
        self._d = d
        self._h = None

    def set(self, k, v) -> FrozenMap:
        d = dict(self._d)
        d[k] = v
        return type(self)(d)

    def remove(self, keys: Iterable) -> FrozenMap:
        keys = set(keys)
        return type(self)({k: v for k, v in self._d.items() if k not in keys})

    def restrict(self, keys: Iterable) -> FrozenMap:
        keys = set(keys)
        return type(self)({k: v for k, v in self._d.items() if k in keys})


Temporaries = FrozenMap
SharingMap = FrozenMap


class Memory:
    """Total map address -> value, default 0 outside the explicit footprint.

    Equality and hashing ignore entries equal to the default.
    """

    __slots__ = ("_d", "_h")

    def __init__(self, items: Mapping | Iterable = ()):
        self._d = {a: check_value(v) for a, v in dict(items).items()}
        self._h = None

    def __getitem__(self, a: int) -> int:
        return self._d.get(a, 0)

    def footprint(self) -> tuple[int, ...]:
        return tuple(sorted(self._d))

    def items(self):
        return sorted(self._d.items())

    def _normal(self) -> frozenset:
        return frozenset((a, v) for a, v in self._d.items() if v != 0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Memory):
            return NotImplemented
        return self._normal() == other._normal()

    def __hash__(self) -> int:
        if self._h is None:
            self._h = hash(self._normal())
        return self._h

    def __repr__(self) -> str:
        return f"Memory({dict(self.items())!r})"

    def __getstate__(self):
        return self._d

    def __setstate__(self, d):
        self._d = d
        self._h = None

    def set(self, a: int, v: int) -> Memory:
        d = dict(self._d)
        d[a] = v
        return Memory(d)


# ---------------------------------------------------------------------------
# Syntactic functions over temporaries
# ---------------------------------------------------------------------------

UNOPS = ("-", "!")
BINOPS = ("+", "-", "*", "==", "!=", "<", "<=", ">", ">=", "&&", "||")


def apply_unop(op: str, v: int) -> int:
    if op == "-":
        return check_value(-v)
    if op == "!":
        return int(not is_true(v))
    raise ValueError(f"unknown unary operator {op!r}")


def apply_binop(op: str, x: int, y: int) -> int:
    if op == "+":
        return check_value(x + y)
    if op == "-":
        return check_value(x - y)
    if op == "*":
        return check_value(x * y)
    if op == "==":
        return int(x == y)
    if op == "!=":
        return int(x != y)
    if op == "<":
        return int(x < y)
    if op == "<=":
        return int(x <= y)
    if op == ">":
        return int(x > y)
    if op == ">=":
        return int(x >= y)
    if op == "&&":
        return int(is_true(x) and is_true(y))
    if op == "||":
        return int(is_true(x) or is_true(y))
    raise ValueError(f"unknown binary operator {op!r}")


@record
class Lit(Frozen):
    value: int


@record
class TmpRef(Frozen):
    tmp: int


@record
class Arg(Frozen):
    """Positional argument of a `ret` function: 0 = old value, 1 = new value."""

    index: int


@record
class Un(Frozen):
    op: str
    arg: Any


@record
class Bin(Frozen):
    op: str
    left: Any
    right: Any


FnExpr = Lit | TmpRef | Arg | Un | Bin


def fn_tmps(e: FnExpr) -> frozenset[int]:
    """Temporaries read by a function expression."""
    if isinstance(e, TmpRef):
        return frozenset((e.tmp,))
    if isinstance(e, Un):
        return fn_tmps(e.arg)
    if isinstance(e, Bin):
        return fn_tmps(e.left) | fn_tmps(e.right)
    return frozenset()


def eval_fn(e: FnExpr, temps: Mapping[int, int], args: tuple[int, ...] = ()) -> int:
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, TmpRef):
        try:
            return temps[e.tmp]
        except KeyError:
            raise UndefinedTemporary(f"temporary t{e.tmp} is undefined") from None
    if isinstance(e, Arg):
        return args[e.index]
    if isinstance(e, Un):
        return apply_unop(e.op, eval_fn(e.arg, temps, args))
    if isinstance(e, Bin):
        return apply_binop(e.op, eval_fn(e.left, temps, args), eval_fn(e.right, temps, args))
    raise TypeError(f"not a function expression: {e!r}")


@record
class StoreOp(Frozen):
    """Pair (domain, fn); fn may only read temporaries in the domain."""

    domain: frozenset
    fn: Any

    def __post_init__(self):
        object.__setattr__(self, "domain", frozenset(self.domain))

    def is_valid(self) -> bool:
        return fn_tmps(self.fn) <= self.domain


def const_op(v: int) -> StoreOp:
    return StoreOp(frozenset(), Lit(v))


def eval_storeop(sop: StoreOp, temps: Mapping[int, int]) -> int:
    missing = sop.domain - set(temps)
    if missing:
        raise UndefinedTemporary(f"store operation needs undefined temporaries {sorted(missing)}")
    return eval_fn(sop.fn, temps)


# ---------------------------------------------------------------------------
# Ownership annotations and the sharing-map algebra
# ---------------------------------------------------------------------------


@record
class Annotation(Frozen):
    acquire: frozenset = frozenset()
    local: frozenset = frozenset()
    release: frozenset = frozenset()
    writable: frozenset = frozenset()

    def __post_init__(self):
        for f in ("acquire", "local", "release", "writable"):
            object.__setattr__(self, f, frozenset(getattr(self, f)))


NO_ANN = Annotation()


def sharing_augment(S: Mapping[int, bool], R: Iterable[int], W: Iterable[int]) -> SharingMap:
    """Released addresses become shared; writable iff also in W."""
    W = frozenset(W)
    d = dict(S)
    for a in R:
        d[a] = a in W
    return SharingMap(d)


def sharing_subtract(S: Mapping[int, bool], A: Iterable[int], L: Iterable[int]) -> SharingMap:
    """Drop local addresses from the sharing map; acquired ones become writable."""
    A, L = frozenset(A), frozenset(L)
    return SharingMap({a: (a in A or w) for a, w in S.items() if a not in L})


def read_only(S: Mapping[int, bool]) -> frozenset[int]:
    return frozenset(a for a, w in S.items() if not w)


def release_acquire(S: Mapping[int, bool], ann: Annotation) -> SharingMap:
    return sharing_subtract(sharing_augment(S, ann.release, ann.writable), ann.acquire, ann.local)


@record
class GhostState(Frozen):
    dirty: bool = False
    owned: frozenset = frozenset()
    acquired: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "owned", frozenset(self.owned))
        object.__setattr__(self, "acquired", frozenset(self.acquired))


# ---------------------------------------------------------------------------
# Memory instructions
# ---------------------------------------------------------------------------


@record
class Read(Frozen):
    volatile: bool
    addr: int
    tmp: int


@record
class Write(Frozen):
    volatile: bool
    addr: int
    sop: StoreOp
    ann: Annotation = NO_ANN


@record
class RMW(Frozen):
    """Interlocked read-modify-write.

    `cond` is evaluated over the temporaries after the old value was loaded
    into `tmp`; `ret` is evaluated with Arg(0) = old and Arg(1) = new value.
    """

    addr: int
    tmp: int
    sop: StoreOp
    cond: Any
    ret: Any
    ann: Annotation = NO_ANN


@record
class Fence(Frozen):
    pass


@record
class Ghost(Frozen):
    acquire: frozenset
    local: frozenset

    def __post_init__(self):
        object.__setattr__(self, "acquire", frozenset(self.acquire))
        object.__setattr__(self, "local", frozenset(self.local))


MemInstr = Read | Write | RMW | Fence | Ghost


def instr_read_tmp(ins) -> int | None:
    if isinstance(ins, (Read, RMW)):
        return ins.tmp
    return None


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def to_json(obj: Any) -> Any:
    """Canonical JSON-compatible tree for any core or machine value."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, (frozenset, set)):
        return sorted(to_json(x) for x in obj)
    if isinstance(obj, (tuple, list)):
        return [to_json(x) for x in obj]
    if isinstance(obj, Memory):
        return {str(a): v for a, v in obj.items()}
    if isinstance(obj, FrozenMap):
        return {str(k): to_json(v) for k, v in sorted(obj.items())}
    if hasattr(obj, "__dataclass_fields__"):
        out = {"kind": type(obj).__name__}
        for f in fields(obj):
            out[f.name] = to_json(getattr(obj, f.name))
        return out
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def show_fn(e: FnExpr) -> str:
    if isinstance(e, Lit):
        return str(e.value)
    if isinstance(e, TmpRef):
        return f"t{e.tmp}"
    if isinstance(e, Arg):
        return ("old", "new")[e.index]
    if isinstance(e, Un):
        return f"{e.op}{show_fn(e.arg)}"
    return f"({show_fn(e.left)} {e.op} {show_fn(e.right)})"


def show_addrs(s: Iterable[int], names: Mapping[int, str] | None = None) -> str:
    names = names or {}
    return "{" + ",".join(names.get(a, str(a)) for a in sorted(s)) + "}"


# ---------------------------------------------------------------------------
# Machine configurations (shared by both machines)
# ---------------------------------------------------------------------------


_KEEP = object()


@record
class Thread(Frozen):
    """Thread configuration (p, is, theta, sb, dirty, owned, acquired).

    The virtual machine keeps `sb` as the empty tuple, its unit placeholder.
    """

    prog: Any
    instrs: tuple = ()
    temps: FrozenMap = FrozenMap()
    sb: tuple = ()
    ghost: GhostState = GhostState()

    def replace(self, prog=_KEEP, instrs=_KEEP, temps=_KEEP, sb=_KEEP, ghost=_KEEP) -> Thread:
        return Thread(
            self.prog if prog is _KEEP else prog,
            self.instrs if instrs is _KEEP else instrs,
            self.temps if temps is _KEEP else temps,
            self.sb if sb is _KEEP else sb,
            self.ghost if ghost is _KEEP else ghost,
        )


@record
class Config(Frozen):
    """Global configuration (ts, S, m)."""

    threads: tuple
    shared: FrozenMap
    mem: Memory

    def with_thread(self, i: int, th: Thread, shared=None, mem=None) -> Config:
        ts = self.threads[:i] + (th,) + self.threads[i + 1:]
        return Config(ts, self.shared if shared is None else shared, self.mem if mem is None else mem)

    def owned_sets(self) -> tuple[frozenset, ...]:
        return tuple(t.ghost.owned for t in self.threads)
