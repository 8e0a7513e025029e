"""Command line front end: replay a stream file and print the answers.

One line per insertion goes to stdout (index, tab, answer or value).
With --report, a JSON report plus CSV and figures are written next to
the given path.  Exit codes: 0 success, 1 input error, 2 oracle
mismatch.
"""

import argparse
import os
import sys
import time
from fractions import Fraction

from .graph import GraphError
from .ipm import IpmError, ThresholdRun
from .maxflow import MaxflowError, MaxflowRun
from .oracle import max_flow, threshold_decisions
from .params import Params
from .report import RunReport
from .streams import StreamError, load_stream


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, but 2 is reserved for
    # oracle mismatches here, so usage errors become input errors
    def error(self, message):
        raise CliError(message)


def build_parser():
    p = _Parser(prog="dynflow",
                description="Replay an insertion stream and report, after "
                            "every edge, either the threshold decision or "
                            "the approximate maxflow value.")
    p.add_argument("stream", help="path to a DYNFLOW v1 stream file")
    p.add_argument("--mode", choices=["threshold", "maxflow"],
                   help="expected mode; must match the stream header")
    p.add_argument("--threshold", type=int, metavar="F",
                   help="override the header budget")
    p.add_argument("--epsilon", type=float, metavar="EPS",
                   help="override the header approximation target")
    p.add_argument("--oracle-check", action="store_true",
                   help="recompute every answer with the exact static "
                        "oracle; any disagreement exits 2")
    p.add_argument("--trace", action="store_true",
                   help="include the per-step potential trace in the report")
    p.add_argument("--seed", type=int, default=0,
                   help="seed echoed into the report (default 0)")
    p.add_argument("--k", type=int,
                   help="hierarchy reduction factor (default: auto)")
    p.add_argument("--kappa", type=float,
                   help="override the derived cycle-quality factor")
    p.add_argument("--report", metavar="PATH",
                   help="write a JSON report at PATH, with a CSV and "
                        "rendered figures alongside")
    p.add_argument("--exact-rational", action="store_true",
                   help="verify witnesses in exact rational arithmetic")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return _run(args)
    except CliError as err:
        print(f"dynflow: error: {err}", file=sys.stderr)
        return 1
    except (StreamError, GraphError, MaxflowError, IpmError, OSError) as err:
        print(f"dynflow: {err}", file=sys.stderr)
        return 1


def _run(args):
    stream = load_stream(args.stream)
    if args.mode and args.mode != stream.mode:
        raise CliError(f"--mode {args.mode} but the stream header says "
                       f"{stream.mode}")
    params = Params(seed=args.seed, k=args.k, kappa_override=args.kappa)
    if stream.mode == "threshold":
        rep, mismatches = _run_threshold(stream, args, params)
    else:
        rep, mismatches = _run_maxflow(stream, args, params)

    for row in rep.rows:
        value = row["answer"] if stream.mode == "threshold" else row["value"]
        print(f"{row['index']}\t{value}")
    if args.report:
        for path in rep.save(args.report):
            print(f"wrote {path}", file=sys.stderr)
    if mismatches:
        for msg in mismatches:
            print(f"dynflow: oracle mismatch: {msg}", file=sys.stderr)
        return 2
    return 0


def _run_threshold(stream, args, params):
    budget = args.threshold if args.threshold is not None else stream.budget
    if budget is None:
        raise CliError("threshold mode needs F in the header or --threshold")
    run = ThresholdRun(stream.n, stream.m_cap, stream.C, stream.U, budget,
                       params=params, trace=args.trace)
    header = {"n": stream.n, "m": stream.m_cap, "C": stream.C,
              "U": stream.U, "mode": "threshold", "F": budget}
    rep = RunReport("threshold", header, run.derived.describe(),
                    seed=args.seed)
    t_all = time.perf_counter()
    for i, (tail, head, cap, cost) in enumerate(stream.records):
        t0 = time.perf_counter()
        answer = run.insert(tail, head, cap, cost)
        ms = (time.perf_counter() - t0) * 1e3
        phi = run.potential() if hasattr(run, "S") else None
        rep.add_row(index=i, tail=tail, head=head, capacity=cap, cost=cost,
                    answer=answer, steps=run.history[-1]["steps"],
                    phi=phi, ms=round(ms, 3))
    rep.timings["total_s"] = round(time.perf_counter() - t_all, 6)
    rep.summary = {
        "answer": run.answer,
        "yes_from": next((r["index"] for r in rep.rows
                          if r["answer"] == "yes"), None),
        "steps_accepted": getattr(run, "steps_accepted", 0),
        "stats": getattr(run, "stats", {}),
    }
    if args.trace and run.step_trace is not None:
        rep.summary["step_trace"] = [list(t) for t in run.step_trace]

    mismatches = []
    if args.oracle_check:
        expected = threshold_decisions(stream.n, stream.records, budget)
        for i, row in enumerate(rep.rows):
            want = "yes" if expected[i] else "no"
            if row["answer"] != want:
                mismatches.append(f"insertion {i}: reported {row['answer']}, "
                                  f"oracle says {want}")
        if run.answer == "yes":
            err = check_threshold_witness(stream.n, stream.records, budget,
                                          run.witness, args.exact_rational)
            if err:
                mismatches.append(err)
    return rep, mismatches


def _run_maxflow(stream, args, params):
    eps = args.epsilon if args.epsilon is not None else stream.eps
    if eps is None or not 0.0 < eps < 1.0:
        raise CliError("maxflow mode needs eps in (0, 1)")
    header = {"n": stream.n, "m": stream.m_cap, "C": stream.C,
              "U": stream.U, "mode": "maxflow", "eps": eps,
              "s": stream.source, "t": stream.sink}
    mismatches = []
    workers = min(8, os.cpu_count() or 1)
    with MaxflowRun(stream.n, stream.m_cap, stream.U, eps, stream.source,
                    stream.sink, params=params, workers=workers) as mf:
        sample = next(iter(mf.runs.values()), None)
        config = sample.derived.describe() if sample else params.__dict__
        rep = RunReport("maxflow", header, config, seed=args.seed)
        t_all = time.perf_counter()
        for i, (tail, head, cap, _) in enumerate(stream.records):
            # the reduction gives every real edge cost 0
            t0 = time.perf_counter()
            value = mf.insert(tail, head, cap)
            ms = (time.perf_counter() - t0) * 1e3
            rep.add_row(index=i, tail=tail, head=head, capacity=cap,
                        value=value, ms=round(ms, 3))
            if args.oracle_check:
                arcs = [(t, h, u) for t, h, u, _ in stream.records[:i + 1]]
                exact = max_flow(stream.n, arcs, stream.source, stream.sink)
                if Fraction(value) < (1 - Fraction(eps)) * exact:
                    mismatches.append(f"insertion {i}: reported {value} "
                                      f"below (1-eps) * {exact}")
                err = check_flow_witness(stream.n, stream.records[:i + 1],
                                         mf.flow, value, stream.source,
                                         stream.sink, args.exact_rational)
                if err:
                    mismatches.append(f"insertion {i}: {err}")
        rep.timings["total_s"] = round(time.perf_counter() - t_all, 6)
        rep.summary = {
            "value": mf.value,
            "best_threshold": mf.best_threshold(),
            "grid": mf.thresholds,
            "per_threshold": mf.describe(),
        }
    return rep, mismatches


def check_threshold_witness(n, records, budget, witness, exact=False):
    """Feasibility and cost of a circulation witness; None when sound.

    Witness keys are insertion indices.  All data is integral, so the
    float path is already exact below 2**53; the rational path removes
    even that caveat.
    """
    lift = Fraction if exact else float
    cost = lift(0)
    balance = [lift(0)] * n
    for eid, fe in witness.items():
        if not 0 <= eid < len(records):
            return f"witness names unknown edge {eid}"
        tail, head, cap, c = records[eid]
        if not 0 <= fe <= cap:
            return f"witness flow {fe} outside [0, {cap}] on edge {eid}"
        cost += lift(fe) * c
        balance[tail] += lift(fe)
        balance[head] -= lift(fe)
    bad = [v for v in range(n) if balance[v] != 0]
    if bad:
        return f"witness has nonzero divergence at {bad}"
    if cost > budget:
        return f"witness costs {cost}, above the budget {budget}"
    return None


def check_flow_witness(n, records, flow, value, source, sink, exact=False):
    """Feasibility and value of a source-sink flow witness; None when sound."""
    lift = Fraction if exact else float
    balance = [lift(0)] * n
    for eid, fe in flow.items():
        if not 0 <= eid < len(records):
            return f"flow names unknown edge {eid}"
        tail, head, cap, _ = records[eid]
        if not 0 <= fe <= cap:
            return f"flow {fe} outside [0, {cap}] on edge {eid}"
        balance[tail] += lift(fe)
        balance[head] -= lift(fe)
    for v in range(n):
        want = value if v == source else -value if v == sink else 0
        if balance[v] != want:
            return f"net flow {balance[v]} at vertex {v}, expected {want}"
    return None


if __name__ == "__main__":
    sys.exit(main())
