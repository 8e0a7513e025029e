"""Run reports: versioned JSON, per-insertion CSV, and rendered figures.

A report is deterministic for a fixed (stream, config, seed) apart from
the `timings` block, which holds wall-clock measurements.
"""

import json
import math
import os
import statistics
import time

SCHEMA_VERSION = 1


def _clean(obj):
    # JSON has no spelling for non-finite floats; None round-trips
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


class RunReport:
    """Per-insertion rows plus config echo for one driver run."""

    def __init__(self, mode, header, config, seed=None):
        self.schema_version = SCHEMA_VERSION
        self.mode = mode
        self.header = dict(header)
        self.config = dict(config)
        self.seed = seed
        self.rows = []
        self.summary = {}
        self.timings = {}

    def add_row(self, **fields):
        self.rows.append(fields)

    def to_dict(self):
        return _clean({
            "schema_version": self.schema_version,
            "mode": self.mode,
            "header": self.header,
            "config": self.config,
            "seed": self.seed,
            "insertions": self.rows,
            "summary": self.summary,
            "timings": self.timings,
        })

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_columns(self):
        cols = []
        for row in self.rows:
            for key in row:
                if key not in cols:
                    cols.append(key)
        return cols

    def to_csv(self):
        cols = self.csv_columns()
        lines = [",".join(cols)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row.get(c)) for c in cols))
        return "\n".join(lines) + "\n"

    def save(self, path, figures=True):
        """Write JSON at `path`, CSV and figures alongside; returns paths."""
        base, ext = os.path.splitext(path)
        if ext != ".json":
            base = path
            path = base + ".json"
        outdir = os.path.dirname(os.path.abspath(path))
        os.makedirs(outdir, exist_ok=True)
        written = [path]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        with open(base + ".csv", "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())
        written.append(base + ".csv")
        if figures:
            written.extend(render_figures(self, base))
        return written


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_figures(report, base):
    """Render the potential trace and the answer timeline as PNG files."""
    plt = _plt()
    written = []
    xs = list(range(1, len(report.rows) + 1))

    phis = [row.get("phi") for row in report.rows]
    if any(p is not None for p in phis):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot(xs, [p if p is not None else float("nan") for p in phis],
                drawstyle="steps-post", lw=1.2)
        ax.set_xlabel("insertion")
        ax.set_ylabel("potential")
        ax.set_title("potential after each insertion")
        fig.tight_layout()
        path = base + "_phi.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(7, 3.5))
    if report.mode == "maxflow":
        ys = [row.get("value", 0) for row in report.rows]
        ax.set_ylabel("flow value")
        ax.set_title("maintained flow value")
    else:
        ys = [1 if row.get("answer") == "yes" else 0 for row in report.rows]
        ax.set_ylabel("answer")
        ax.set_yticks([0, 1], ["no", "yes"])
        ax.set_title("maintained answer")
    ax.plot(xs, ys, drawstyle="steps-post", lw=1.2)
    ax.set_xlabel("insertion")
    fig.tight_layout()
    path = base + "_answers.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)
    return written


# -- scaling benchmark --------------------------------------------------------


def bench_scaling(ms=(1000, 10000, 100000), density=10, C=4, U=4,
                  seed=1, k=2, kappa=1.0):
    """Average per-insertion work across stream sizes, with fitted slopes.

    Streams draw nonnegative costs and carry budget -1, so the maintained
    answer is a sustained "no": every insertion pays for hierarchy
    maintenance plus one stalling threshold query, with no optimizer
    steps mixed into the measurement (step counts have their own budget
    check).  The chained hierarchy is forced with a small k, and kappa is
    overridden because the worst-case value at depth >= 2 puts the
    acceptance threshold below float64 resolution; answers stay sound
    since certificates are verified exactly.  Work counts insertions,
    queries, stalls, refreshes, exact leaf solves, and chain rebuilds;
    wall time is recorded separately because it varies with the host.
    Slopes are least-squares fits of log(per-insertion quantity) against
    log(m).
    """
    from .ipm import ThresholdRun
    from .params import Params
    from .streams import uniform_random

    points = []
    for m in ms:
        n = max(2, m // density)
        stream = uniform_random(n, m, C, U, seed + m, budget=-1,
                                cost_range=(0, C))
        run = ThresholdRun(n, m, C, U, stream.budget,
                           params=Params(k=k, kappa_override=kappa))
        t0 = time.perf_counter()
        for rec in stream.records:
            run.insert(*rec)
        dt = time.perf_counter() - t0
        s = run.stats
        h = run.handle.stats
        work = (run.steps_accepted + s["stalls"] + s["stale_cycles"]
                + s["full_refreshes"] + s["insertions"]
                + h["threshold_queries"] + h["exact_solves"]
                + run.handle.chain.rebuild_count)
        points.append({
            "m": m, "n": n, "work": work, "work_per_insert": work / m,
            "seconds": round(dt, 4), "us_per_insert": round(dt / m * 1e6, 3),
            "steps": run.steps_accepted, "stalls": s["stalls"],
            "exact_solves": h["exact_solves"],
            "rebuilds": run.handle.chain.rebuild_count,
        })

    def slope(key):
        if len(points) < 2:
            return None
        xs = [math.log(p["m"]) for p in points]
        ys = [math.log(max(p[key], 1e-12)) for p in points]
        return statistics.linear_regression(xs, ys).slope

    return {
        "schema_version": SCHEMA_VERSION,
        "density": density, "C": C, "U": U, "seed": seed, "k": k,
        "points": points,
        "slope_work_per_insert": slope("work_per_insert"),
        "slope_time_per_insert": slope("us_per_insert"),
    }


def save_bench(result, base):
    """Write the benchmark JSON and its log-log figure; returns paths."""
    outdir = os.path.dirname(os.path.abspath(base))
    os.makedirs(outdir, exist_ok=True)
    path = base + ".json"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_clean(result), indent=2, sort_keys=True) + "\n")
    written = [path]

    plt = _plt()
    points = result["points"]
    fig, ax = plt.subplots(figsize=(6, 4))
    ms = [p["m"] for p in points]
    ax.loglog(ms, [p["us_per_insert"] for p in points], "o-",
              label=f"time/insert (slope {result['slope_time_per_insert']:.2f})")
    ax.loglog(ms, [p["work_per_insert"] for p in points], "s--",
              label=f"work/insert (slope {result['slope_work_per_insert']:.2f})")
    ax.set_xlabel("insertions m")
    ax.set_ylabel("per-insertion cost")
    ax.set_title("per-insertion scaling at fixed density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(base + ".png")
    plt.close(fig)
    written.append(base + ".png")
    return written
