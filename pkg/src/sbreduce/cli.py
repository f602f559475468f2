"""Command-line driver: `python -m sbreduce <command> FILE [options]`.

Exit codes: 0 all expectations met, 1 an expectation failed, 2 inconclusive
because a bound was hit, 3 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Sequence

from .core import to_json
from .explorer import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_STATE_CAP,
    ExploreOptions,
    StateExplosion,
    StateGraph,
    Verdict,
    check_sc,
    check_simulation,
    explore,
    safe_reach,
)
from .invariants import check_invariant
from .litmus import DeclError, LitmusFile, ParseError, format_pred, load_litmus, pred_holds

SCHEMA = "sbreduce-report/1"
EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3
COMMANDS = ("outcomes", "check-safety", "check-sc", "check-sim", "check-inv", "all")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sbreduce", description="Explore litmus programs on the store buffer and virtual machines.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("file", help="litmus file")
    p.add_argument("--machine", choices=("sb", "vm"), default="sb", help="machine for `outcomes`")
    p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    p.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP)
    p.add_argument("--json", metavar="PATH", help="write the report as JSON")
    p.add_argument("--trace", action="store_true", help="include full states in witnesses")
    p.add_argument("--seed", type=int, default=None, help="shuffle exploration order")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--match-bound", type=int, default=None, help="fixed VM path bound for check-sim")
    p.add_argument("--timing", action="store_true", help="record wall-clock times in the report")
    return p


# ---------------------------------------------------------------------------
# Report pieces
# ---------------------------------------------------------------------------


def _status(verdict: Verdict, expected: bool = True) -> str:
    if verdict is Verdict.INCONCLUSIVE:
        return "inconclusive"
    return "ok" if (verdict is Verdict.HOLDS) == expected else "failed"


def _witness(lf: LitmusFile, path, trace: bool) -> list[dict]:
    out = []
    for n, (thread, kind, g) in enumerate(path):
        step = {"step": n, "thread": None if thread is None else lf.threads[thread][0], "kind": kind}
        if trace:
            step["state"] = to_json(g)
        else:
            step["memory"] = {lf.names[a]: g.mem[a] for a in range(len(lf.names))}
        out.append(step)
    return out


def _outcome_dict(lf: LitmusFile, out: tuple) -> dict:
    return {lf.names[a]: v for a, v in zip(lf.observed(), out)}


def _histogram(lf: LitmusFile, counts) -> list[dict]:
    return [{"outcome": _outcome_dict(lf, o), "count": counts[o]} for o in sorted(counts)]


def _graph_stats(graph: StateGraph) -> dict:
    st = graph.stats()
    return {"states": st["states"], "edges": st["edges"], "max_depth_reached": st["max_depth_reached"],
            "bound_exceeded": st["bound_exceeded"]}


def _expectations(lf: LitmusFile, machine: str, counts, complete: bool) -> list[dict]:
    out = []
    obs = lf.observed()
    for e in lf.expectations:
        if e.machine != machine:
            continue
        hit = any(pred_holds(e.pred, obs, o) for o in counts)
        if e.kind == "allowed":
            status = "ok" if hit else ("failed" if complete else "inconclusive")
        else:
            status = "failed" if hit else ("ok" if complete else "inconclusive")
        out.append({"kind": e.kind, "machine": machine, "predicate": format_pred(lf, e.pred), "status": status})
    return out


def run_outcomes(lf: LitmusFile, machine: str, opts: ExploreOptions, trace: bool) -> dict:
    graph = explore(machine, lf.initial(), opts)
    counts = graph.outcomes(lf.observed())
    exps = _expectations(lf, machine, counts, not graph.bound_exceeded)
    statuses = [e["status"] for e in exps]
    if graph.bound_exceeded and not statuses:
        statuses.append("inconclusive")
    return {"machine": machine, "histogram": _histogram(lf, counts), "stats": _graph_stats(graph),
            "expectations": exps, "status": _worst(statuses)}


def run_safety(lf: LitmusFile, opts: ExploreOptions, trace: bool) -> dict:
    res = safe_reach(lf.initial(), opts)
    expected = True if lf.expect_safe is None else lf.expect_safe
    out = {"verdict": {"holds": "safe", "fails": "unsafe", "inconclusive": "inconclusive"}[res.verdict.value],
           "expected": "safe" if expected else "unsafe", "stats": _graph_stats(res.graph),
           "status": _status(res.verdict, expected)}
    if res.report is not None:
        out["violation"] = {"thread": lf.threads[res.thread][0], "kind": res.report.violation.value,
                            "detail": res.report.detail}
        out["witness"] = _witness(lf, res.witness, trace)
    return out


def run_sc(lf: LitmusFile, opts: ExploreOptions, trace: bool) -> dict:
    res = check_sc(lf.initial(), lf.observed(), opts)
    expected = True if lf.expect_sc is None else lf.expect_sc
    out = {"verdict": {"holds": "sc", "fails": "not-sc", "inconclusive": "inconclusive"}[res.verdict.value],
           "expected": "sc" if expected else "not-sc",
           "sb_histogram": _histogram(lf, res.sb_outcomes), "vm_histogram": _histogram(lf, res.vm_outcomes),
           "sb_only": [_outcome_dict(lf, o) for o in res.extra],
           "vm_only": [_outcome_dict(lf, o) for o in sorted(set(res.vm_outcomes) - set(res.sb_outcomes))],
           "sb_stats": _graph_stats(res.sb), "vm_stats": _graph_stats(res.vm),
           "status": _status(res.verdict, expected)}
    if res.witness is not None:
        out["witness"] = _witness(lf, res.witness, trace)
    exps = (_expectations(lf, "sb", res.sb_outcomes, not res.sb.bound_exceeded)
            + _expectations(lf, "vm", res.vm_outcomes, not res.vm.bound_exceeded))
    out["expectations"] = exps
    out["status"] = _worst([out["status"]] + [e["status"] for e in exps])
    return out


def run_sim(lf: LitmusFile, opts: ExploreOptions, trace: bool, match_bound: int | None) -> dict:
    res = check_simulation(lf.initial(), opts, match_bound)
    if res.safety.verdict is Verdict.FAILS:
        return {"verdict": "not-applicable", "reason": "program is not safe on the virtual machine",
                "status": "failed"}
    out = {
        "verdict": res.verdict.value,
        "scope": "pairs reachable from the coupled initial pair",
        "pairs": res.pairs,
        "steps": res.steps,
        "invariant_failures": [
            {"pair": pid, "step": label, "invariant": f.invariant,
             "thread": None if f.thread is None else lf.threads[f.thread][0], "detail": f.detail}
            for pid, label, f in res.invariant_failures[:20]],
        "invariant_failure_count": len(res.invariant_failures),
        "unmatched": [{"pair": u.pair, "thread": lf.threads[u.thread][0], "step": u.kind, "bound": u.bound}
                      for u in res.genuine_unmatched[:20]],
        "unmatched_count": len(res.genuine_unmatched),
        "match_bound_exceeded": len(res.match_bound_exceeded),
        "match_lengths": {k: {str(n): c for n, c in sorted(v.items())} for k, v in sorted(res.match_lengths.items())},
        "bound_exceeded": res.bound_exceeded,
        "status": _status(res.verdict),
    }
    return out


def run_inv(lf: LitmusFile, opts: ExploreOptions, trace: bool) -> dict:
    found = []

    def broken(g) -> bool:
        rep = check_invariant(g)
        if not rep.ok:
            found.append(rep)
            return True
        return False

    graph = explore("sb", lf.initial(), opts, stop=broken)
    if found:
        f = found[0].first
        return {"verdict": "fails", "failure": {"invariant": f.invariant,
                                                "thread": None if f.thread is None else lf.threads[f.thread][0],
                                                "detail": f.detail},
                "failed_invariants": sorted(found[0].failed()),
                "witness": _witness(lf, graph.path_to(graph.stopped_at), trace),
                "stats": _graph_stats(graph), "status": "failed"}
    verdict = Verdict.INCONCLUSIVE if graph.bound_exceeded else Verdict.HOLDS
    return {"verdict": verdict.value, "stats": _graph_stats(graph), "status": _status(verdict)}


def _worst(statuses: Sequence[str]) -> str:
    if "failed" in statuses:
        return "failed"
    if "inconclusive" in statuses:
        return "inconclusive"
    return "ok"


EXIT_FOR = {"ok": EXIT_OK, "failed": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}


def build_report(args, lf: LitmusFile) -> dict:
    opts = ExploreOptions(args.max_depth, args.state_cap, args.workers, args.seed)
    results: dict = {}
    timing: dict = {}

    def timed(name, fn, *a):
        t0 = time.perf_counter()
        results[name] = fn(*a)
        timing[name] = round(time.perf_counter() - t0, 3)

    cmd = args.command
    if cmd == "outcomes":
        timed("outcomes", run_outcomes, lf, args.machine, opts, args.trace)
    if cmd in ("check-safety", "all"):
        timed("safety", run_safety, lf, opts, args.trace)
    if cmd == "all":
        timed("outcomes_sb", run_outcomes, lf, "sb", opts, args.trace)
        timed("outcomes_vm", run_outcomes, lf, "vm", opts, args.trace)
    if cmd in ("check-sc", "all"):
        timed("sc", run_sc, lf, opts, args.trace)
    if cmd in ("check-sim", "all"):
        timed("simulation", run_sim, lf, opts, args.trace, args.match_bound)
    if cmd in ("check-inv", "all"):
        timed("invariants", run_inv, lf, opts, args.trace)

    status = _worst([r["status"] for r in results.values()])
    report = {
        "schema": SCHEMA,
        "litmus": lf.name,
        "command": cmd,
        "options": {"machine": args.machine, "max_depth": args.max_depth, "state_cap": args.state_cap,
                    "seed": args.seed, "match_bound": args.match_bound},
        "locations": list(lf.names),
        "observed": [lf.names[a] for a in lf.observed()],
        "threads": list(lf.thread_names()),
        "results": results,
        "status": status,
        "exit_code": EXIT_FOR[status],
    }
    if args.timing:
        report["timing"] = timing
    return report


def _summary(report: dict) -> list[str]:
    lines = [f"{report['litmus'] or '(unnamed)'}: {report['command']}"]
    for name, r in report["results"].items():
        head = f"  {name}: {r['status']}"
        if "verdict" in r:
            head += f" (verdict {r['verdict']})"
        lines.append(head)
        for key, label in (("histogram", "outcome"), ("sb_histogram", "sb"), ("vm_histogram", "vm")):
            for h in r.get(key, []):
                o = " ".join(f"{k}={v}" for k, v in h["outcome"].items())
                lines.append(f"    {label}: {o}  x{h['count']}")
        if "violation" in r:
            v = r["violation"]
            lines.append(f"    {v['thread']}: {v['kind']}: {v['detail']}")
        if "failure" in r:
            f = r["failure"]
            lines.append(f"    {f['invariant']} ({f['thread']}): {f['detail']}")
        for e in r.get("expectations", []):
            lines.append(f"    {e['kind']} {e['machine']} ({e['predicate']}): {e['status']}")
        if "witness" in r:
            lines.append("    witness: " + ", ".join(f"{s['thread']}:{s['kind']}" for s in r["witness"][1:]))
    return lines


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.max_depth < 0 or args.state_cap < 1 or args.workers < 1:
            raise UsageError("--max-depth must be >= 0, --state-cap and --workers >= 1")
        lf = load_litmus(args.file)
    except UsageError as e:
        print(f"sbreduce: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, DeclError) as e:
        print(f"sbreduce: {args.file}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"sbreduce: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = build_report(args, lf)
    except StateExplosion as e:
        print(f"sbreduce: {e}", file=sys.stderr)
        report = {"schema": SCHEMA, "litmus": lf.name, "command": args.command, "results": {},
                  "status": "inconclusive", "error": str(e), "exit_code": EXIT_INCONCLUSIVE}
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump(report, f, sort_keys=True, indent=2)
            f.write("\n")
    print("\n".join(_summary(report)))
    return report["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
