"""Bounded breadth-first exploration of either machine and the checks built on it.

States are deduplicated by structural equality.  Exploration is level
synchronous: a whole frontier is expanded (optionally by worker processes)
and the successors are merged in frontier order, so the resulting graph does
not depend on the number of workers.
"""

from __future__ import annotations

import random
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .core import Config, read_only
from .coupling import couple
from .invariants import Failure, check_invariant
from .pimp import Skip
from .sb import sb_successors
from .vm import SafetyReport, config_safe, vm_successors

DEFAULT_MAX_DEPTH = 200
DEFAULT_STATE_CAP = 2_000_000


class StateExplosion(RuntimeError):
    """More distinct states than the configured cap."""


class Verdict(str, Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ExploreOptions:
    max_depth: int = DEFAULT_MAX_DEPTH
    state_cap: int = DEFAULT_STATE_CAP
    workers: int = 1
    # None keeps the canonical successor order; an int shuffles it reproducibly
    seed: int | None = None
    keep_edges: bool = True

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.state_cap < 1:
            raise ValueError("state_cap must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


DEFAULT_OPTIONS = ExploreOptions()

Step = tuple  # (thread, kind, Config)


def successors(machine: str, g: Config) -> list[Step]:
    """Labelled successors over all threads, in thread order."""
    succ = sb_successors if machine == "sb" else vm_successors
    if machine not in ("sb", "vm"):
        raise ValueError(f"unknown machine {machine!r}")
    return [(i, kind, c) for i in range(len(g.threads)) for kind, c in succ(g, i)]


def _expand_chunk(args) -> list[list[Step]]:
    machine, states = args
    return [successors(machine, g) for g in states]


def is_terminal(g: Config) -> bool:
    return all(isinstance(th.prog.stmt, Skip) and not th.instrs and not th.sb for th in g.threads)


def outcome(g: Config, observe: Sequence[int]) -> tuple[int, ...]:
    return tuple(g.mem[a] for a in observe)


@dataclass
class StateGraph:
    machine: str
    states: list[Config] = field(default_factory=list)
    index: dict = field(default_factory=dict)
    parent: list = field(default_factory=list)  # (src, thread, kind) or None
    depth: list[int] = field(default_factory=list)
    edges: list[tuple[int, int, int, str]] = field(default_factory=list)
    frontier_sizes: list[int] = field(default_factory=list)
    bound_exceeded: bool = False
    stopped_at: int | None = None

    def __len__(self) -> int:
        return len(self.states)

    def add(self, g: Config, parent, depth: int) -> tuple[int, bool]:
        k = self.index.get(g)
        if k is not None:
            return k, False
        k = len(self.states)
        self.index[g] = k
        self.states.append(g)
        self.parent.append(parent)
        self.depth.append(depth)
        return k, True

    def path_to(self, k: int) -> list[tuple[int | None, str | None, Config]]:
        """Steps from the initial state to state k as (thread, kind, state)."""
        out = []
        while True:
            par = self.parent[k]
            if par is None:
                out.append((None, None, self.states[k]))
                break
            src, thread, kind = par
            out.append((thread, kind, self.states[k]))
            k = src
        out.reverse()
        return out

    def terminals(self) -> list[int]:
        return [k for k, g in enumerate(self.states) if is_terminal(g)]

    def outcomes(self, observe: Sequence[int]) -> Counter:
        """Number of distinct terminal states per observed outcome."""
        return Counter(outcome(self.states[k], observe) for k in self.terminals())

    def stats(self) -> dict:
        return {
            "states": len(self.states),
            "edges": len(self.edges),
            "max_depth_reached": max(self.depth) if self.depth else 0,
            "frontier_sizes": list(self.frontier_sizes),
            "bound_exceeded": self.bound_exceeded,
        }


def explore(machine: str, initial: Config, options: ExploreOptions = DEFAULT_OPTIONS,
            stop: Callable[[Config], bool] | None = None) -> StateGraph:
    """Breadth-first closure of the global step relation up to `options.max_depth`.

    When `stop` returns True for a discovered state, exploration ends there
    and `stopped_at` holds its index.
    """
    graph = StateGraph(machine)
    rng = random.Random(options.seed) if options.seed is not None else None
    k0, _ = graph.add(initial, None, 0)
    if stop is not None and stop(initial):
        graph.stopped_at = k0
        return graph
    frontier = [k0]
    depth = 0
    pool = ProcessPoolExecutor(options.workers) if options.workers > 1 else None
    try:
        while frontier:
            graph.frontier_sizes.append(len(frontier))
            if depth >= options.max_depth:
                if any(successors(machine, graph.states[k]) for k in frontier):
                    graph.bound_exceeded = True
                break
            states = [graph.states[k] for k in frontier]
            if pool is None:
                expanded = _expand_chunk((machine, states))
            else:
                n = options.workers
                size = max(1, -(-len(states) // (4 * n)))
                chunks = [(machine, states[j:j + size]) for j in range(0, len(states), size)]
                expanded = [succ for part in pool.map(_expand_chunk, chunks) for succ in part]
            nxt = []
            for src, succ in zip(frontier, expanded):
                if rng is not None:
                    succ = list(succ)
                    rng.shuffle(succ)
                for thread, kind, g in succ:
                    k, new = graph.add(g, (src, thread, kind), depth + 1)
                    if options.keep_edges:
                        graph.edges.append((src, k, thread, kind))
                    if not new:
                        continue
                    if len(graph.states) > options.state_cap:
                        raise StateExplosion(f"more than {options.state_cap} states")
                    if stop is not None and stop(g):
                        graph.stopped_at = k
                        return graph
                    nxt.append(k)
            frontier = nxt
            depth += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return graph


# ---------------------------------------------------------------------------
# Safety of all reachable virtual machine states
# ---------------------------------------------------------------------------


@dataclass
class SafetyResult:
    verdict: Verdict
    graph: StateGraph
    thread: int | None = None
    report: SafetyReport | None = None

    @property
    def witness(self) -> list | None:
        if self.graph.stopped_at is None:
            return None
        return self.graph.path_to(self.graph.stopped_at)


def safe_reach(initial: Config, options: ExploreOptions = DEFAULT_OPTIONS) -> SafetyResult:
    found: list = []

    def unsafe(g: Config) -> bool:
        r = config_safe(g)
        if r is not None:
            found.append(r)
            return True
        return False

    graph = explore("vm", initial, options, stop=unsafe)
    if found:
        i, rep = found[0]
        return SafetyResult(Verdict.FAILS, graph, i, rep)
    return SafetyResult(Verdict.INCONCLUSIVE if graph.bound_exceeded else Verdict.HOLDS, graph)


# ---------------------------------------------------------------------------
# Outcome comparison between the machines
# ---------------------------------------------------------------------------


@dataclass
class ScResult:
    verdict: Verdict
    sb: StateGraph
    vm: StateGraph
    sb_outcomes: Counter
    vm_outcomes: Counter
    extra: list[tuple]  # outcomes of the store buffer machine missing on the virtual machine
    witness: list | None = None


def check_sc(initial: Config, observe: Sequence[int], options: ExploreOptions = DEFAULT_OPTIONS) -> ScResult:
    sbg = explore("sb", initial, options)
    vmg = explore("vm", initial, options)
    o_sb, o_vm = sbg.outcomes(observe), vmg.outcomes(observe)
    extra = sorted(set(o_sb) - set(o_vm))
    witness = None
    if extra:
        target = extra[0]
        k = next(k for k in sbg.terminals() if outcome(sbg.states[k], observe) == target)
        witness = sbg.path_to(k)
        verdict = Verdict.INCONCLUSIVE if vmg.bound_exceeded else Verdict.FAILS
    else:
        verdict = Verdict.INCONCLUSIVE if sbg.bound_exceeded else Verdict.HOLDS
    return ScResult(verdict, sbg, vmg, o_sb, o_vm, extra, witness)


# ---------------------------------------------------------------------------
# Simulation of store buffer steps by virtual machine paths
# ---------------------------------------------------------------------------


def step_label(kind: str, before: Config, thread: int) -> str:
    """Step kind, refined by the buffer entry that leaves for flush steps."""
    if kind == "flush":
        e = before.threads[thread].sb[0]
        name = type(e).__name__
        if name == "WriteSb":
            name = "WriteSb.volatile" if e.volatile else "WriteSb.nonvolatile"
        return f"flush:{name}"
    return kind


def default_match_bound(g: Config, thread: int) -> int:
    th = g.threads[thread]
    return len(th.sb) + len(th.instrs) + 1


@dataclass(frozen=True)
class Unmatched:
    pair: int
    thread: int
    kind: str
    bound: int
    bound_exceeded: bool  # True when VM paths longer than the bound exist


def match_step(vm: Config, target: Config, thread: int, bound: int) -> tuple[Config | None, int, bool]:
    """Shortest VM path of `thread` steps from `vm` to a state coupled with `target`.

    Returns (state, length, cut) where state is None when no path of length
    at most `bound` exists and `cut` tells whether longer paths were left out.
    """
    if couple(target, vm):
        return vm, 0, False
    seen = {vm}
    frontier = [vm]
    for length in range(1, bound + 1):
        nxt = []
        for g in frontier:
            for _, g2 in vm_successors(g, thread):
                if g2 in seen:
                    continue
                if couple(target, g2):
                    return g2, length, False
                seen.add(g2)
                nxt.append(g2)
        frontier = nxt
        if not frontier:
            return None, length, False
    cut = any(vm_successors(g, thread) for g in frontier)
    return None, bound, cut


@dataclass
class SimulationResult:
    verdict: Verdict
    safety: SafetyResult
    pairs: int = 0
    steps: int = 0
    invariant_failures: list[tuple[int, str, Failure]] = field(default_factory=list)
    unmatched: list[Unmatched] = field(default_factory=list)
    match_lengths: dict[str, Counter] = field(default_factory=dict)
    bound_exceeded: bool = False

    @property
    def match_bound_exceeded(self) -> list[Unmatched]:
        return [u for u in self.unmatched if u.bound_exceeded]

    @property
    def genuine_unmatched(self) -> list[Unmatched]:
        return [u for u in self.unmatched if not u.bound_exceeded]


def check_simulation(initial: Config, options: ExploreOptions = DEFAULT_OPTIONS,
                     match_bound: int | None = None) -> SimulationResult:
    """Check every store buffer step from reachable coupled pairs.

    Only pairs reachable from the coupled initial pair are visited, which
    under-approximates a check over all coupled pairs satisfying the invariant.
    """
    safety = safe_reach(initial, options)
    res = SimulationResult(Verdict.HOLDS, safety)
    if safety.verdict is not Verdict.HOLDS:
        res.verdict = safety.verdict
        return res

    rep = check_invariant(initial)
    for f in rep.failures:
        res.invariant_failures.append((0, "initial", f))
    inv_cache: dict[Config, list[Failure]] = {}
    seen = {(initial, initial): 0}
    queue = deque([(initial, initial, 0)])
    while queue:
        sbg, vmg, depth = queue.popleft()
        if depth >= options.max_depth:
            if successors("sb", sbg):
                res.bound_exceeded = True
            continue
        pid = seen[(sbg, vmg)]
        for thread, kind, s2 in successors("sb", sbg):
            res.steps += 1
            label = step_label(kind, sbg, thread)
            fails = inv_cache.get(s2)
            if fails is None:
                fails = inv_cache[s2] = check_invariant(s2).failures
            for f in fails:
                res.invariant_failures.append((pid, label, f))
            bound = match_bound if match_bound is not None else default_match_bound(sbg, thread)
            v2, length, cut = match_step(vmg, s2, thread, bound)
            if v2 is None:
                res.unmatched.append(Unmatched(pid, thread, label, bound, cut))
                continue
            res.match_lengths.setdefault(label, Counter())[length] += 1
            key = (s2, v2)
            if key not in seen:
                seen[key] = len(seen)
                if len(seen) > options.state_cap:
                    raise StateExplosion(f"more than {options.state_cap} state pairs")
                queue.append((s2, v2, depth + 1))
    res.pairs = len(seen)
    if res.invariant_failures or res.genuine_unmatched:
        res.verdict = Verdict.FAILS
    elif res.unmatched or res.bound_exceeded:
        res.verdict = Verdict.INCONCLUSIVE
    return res


# ---------------------------------------------------------------------------
# Ownership status of addresses
# ---------------------------------------------------------------------------

OWNED_UNSHARED = "owned-unshared"
OWNED_SHARED = "owned-shared"
UNOWNED_RW = "unowned-rw"
UNOWNED_RO = "unowned-ro"
UNOWNED_UNSHARED = "unowned-unshared"

# Status changes ghost annotations can cause, labelled with the annotation
# fraction responsible.  The owned-unshared to owned-shared change is absent:
# acquiring an address never makes it shared.
TRANSFER_EDGES = {
    (OWNED_UNSHARED, UNOWNED_RW): "R&W",
    (OWNED_SHARED, UNOWNED_RW): "R&W",
    (OWNED_UNSHARED, UNOWNED_RO): "R-W",
    (OWNED_SHARED, UNOWNED_RO): "R-W",
    (UNOWNED_RW, OWNED_SHARED): "A-L",
    (UNOWNED_RO, OWNED_SHARED): "A-L",
    (UNOWNED_RW, OWNED_UNSHARED): "A&L",
    (UNOWNED_RO, OWNED_UNSHARED): "A&L",
    (OWNED_SHARED, OWNED_UNSHARED): "A&L",
}


def address_status(g: Config, a: int) -> str:
    owned = any(a in th.ghost.owned for th in g.threads)
    if owned:
        return OWNED_SHARED if a in g.shared else OWNED_UNSHARED
    if a not in g.shared:
        return UNOWNED_UNSHARED
    return UNOWNED_RO if a in read_only(g.shared) else UNOWNED_RW


def _addresses(g: Config) -> set:
    out = set(g.mem.footprint()) | set(g.shared.keys())
    for th in g.threads:
        out |= th.ghost.owned
    return out


def transfer_edges(graph: StateGraph) -> Counter:
    """How often each (address, from-status, to-status) change occurs on graph edges."""
    out: Counter = Counter()
    for src, dst, _, _ in graph.edges:
        g1, g2 = graph.states[src], graph.states[dst]
        if g1.shared == g2.shared and g1.owned_sets() == g2.owned_sets():
            continue
        for a in sorted(_addresses(g1) | _addresses(g2)):
            s1, s2 = address_status(g1, a), address_status(g2, a)
            if s1 != s2:
                out[(a, s1, s2)] += 1
    return out
