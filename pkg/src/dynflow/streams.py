"""Line-oriented update-stream files and reproducible stream generators.

A stream file is one header line followed by one insertion record per
line:

    DYNFLOW v1 n=<n> m=<m> C=<C> U=<U> mode=threshold F=<budget>
    + <tail> <head> <capacity> <cost>

Maxflow-mode headers carry ``eps=<float> s=<vertex> t=<vertex>`` in place
of ``F``.  Blank lines and lines starting with ``#`` are ignored, so
generated files can carry provenance comments without affecting replay.
"""

import random
from dataclasses import dataclass, field

from .oracle import mincost_circulation

MAGIC = "DYNFLOW v1"


class StreamError(ValueError):
    """Malformed stream text; carries the 1-based offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class UpdateStream:
    """Parsed header plus the ordered insertion records."""

    n: int
    m_cap: int
    C: int
    U: int
    mode: str = "threshold"
    budget: int = None
    eps: float = None
    source: int = None
    sink: int = None
    records: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise StreamError("n must be at least 1")
        if self.m_cap < 0 or self.C < 0 or self.U < 0:
            raise StreamError("m, C, U must be nonnegative")
        if self.mode == "threshold":
            if self.budget is None:
                raise StreamError("threshold mode needs F=<budget>")
        elif self.mode == "maxflow":
            if self.eps is None or self.source is None or self.sink is None:
                raise StreamError("maxflow mode needs eps=, s=, t=")
            if not 0.0 < self.eps < 1.0:
                raise StreamError("eps must lie strictly between 0 and 1")
            if self.source == self.sink:
                raise StreamError("source and sink must differ")
            for name, v in (("s", self.source), ("t", self.sink)):
                if not 0 <= v < self.n:
                    raise StreamError(f"{name}={v} outside [0, {self.n})")
        else:
            raise StreamError(f"unknown mode {self.mode!r}")

    def check_record(self, rec, line=None):
        """Validate one (tail, head, capacity, cost) against the header."""
        tail, head, cap, cost = rec
        if not (0 <= tail < self.n and 0 <= head < self.n):
            raise StreamError(f"endpoint out of range: ({tail}, {head})", line)
        if not 0 <= cap <= self.U:
            raise StreamError(f"capacity {cap} outside [0, {self.U}]", line)
        if abs(cost) > self.C:
            raise StreamError(f"|cost| {abs(cost)} exceeds {self.C}", line)

    def append(self, tail, head, cap, cost, line=None):
        if len(self.records) >= self.m_cap:
            raise StreamError(f"more than m={self.m_cap} records", line)
        rec = (tail, head, cap, cost)
        self.check_record(rec, line)
        self.records.append(rec)


def _parse_header(line, lineno):
    tokens = line.split()
    if len(tokens) < 2 or " ".join(tokens[:2]) != MAGIC:
        raise StreamError(f"header must start with {MAGIC!r}", lineno)
    fields = {}
    for tok in tokens[2:]:
        key, sep, val = tok.partition("=")
        if not sep or not key or not val:
            raise StreamError(f"bad header token {tok!r}", lineno)
        if key in fields:
            raise StreamError(f"duplicate header key {key!r}", lineno)
        fields[key] = val

    def take(key, conv, required=False):
        if key not in fields:
            if required:
                raise StreamError(f"header missing {key}=", lineno)
            return None
        try:
            return conv(fields.pop(key))
        except ValueError:
            raise StreamError(f"bad value for {key}=", lineno) from None

    try:
        stream = UpdateStream(
            n=take("n", int, required=True),
            m_cap=take("m", int, required=True),
            C=take("C", int, required=True),
            U=take("U", int, required=True),
            mode=take("mode", str, required=True),
            budget=take("F", int),
            eps=take("eps", float),
            source=take("s", int),
            sink=take("t", int),
        )
    except StreamError as err:
        if err.line is None:
            raise StreamError(str(err), lineno) from None
        raise
    if fields:
        raise StreamError(f"unknown header keys {sorted(fields)}", lineno)
    return stream


def parse_stream(text):
    """Parse stream text into an UpdateStream.

    Raises StreamError naming the first offending line on malformed input
    or any record that violates the header bounds.
    """
    stream = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if stream is None:
            stream = _parse_header(line, lineno)
            continue
        parts = line.split()
        if parts[0] != "+":
            raise StreamError(f"expected record, got {line!r}", lineno)
        if len(parts) != 5:
            raise StreamError("record is '+ tail head capacity cost'", lineno)
        try:
            tail, head, cap, cost = (int(p) for p in parts[1:])
        except ValueError:
            raise StreamError("record fields must be integers", lineno) from None
        stream.append(tail, head, cap, cost, line=lineno)
    if stream is None:
        raise StreamError("missing header line", 1)
    return stream


def write_stream(stream):
    """Render a stream to text; parse(write(s)) round-trips exactly."""
    head = f"{MAGIC} n={stream.n} m={stream.m_cap} C={stream.C} U={stream.U}"
    if stream.mode == "threshold":
        head += f" mode=threshold F={stream.budget}"
    else:
        head += f" mode=maxflow eps={stream.eps!r} s={stream.source} t={stream.sink}"
    lines = [head]
    lines.extend(f"+ {t} {h} {u} {c}" for t, h, u, c in stream.records)
    return "\n".join(lines) + "\n"


def load_stream(path):
    with open(path, encoding="utf-8") as fh:
        return parse_stream(fh.read())


def save_stream(stream, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_stream(stream))


# -- generators ---------------------------------------------------------------


def _random_records(rng, n, m, C, U, cost=None, cost_range=None):
    if n < 2:
        raise ValueError("generators need at least two vertices")
    if U < 1:
        raise ValueError("generators need U >= 1")
    lo, hi = (-C, C) if cost_range is None else cost_range
    if not -C <= lo <= hi <= C:
        raise ValueError("cost_range must sit inside [-C, C]")
    recs = []
    for _ in range(m):
        tail = rng.randrange(n)
        head = rng.randrange(n - 1)
        if head >= tail:
            # uniform over the n-1 non-loop heads
            head += 1
        c = rng.randint(lo, hi) if cost is None else cost
        recs.append((tail, head, rng.randint(1, U), c))
    return recs


def uniform_random(n, m, C, U, seed, budget=-1, cost_range=None):
    """Independent uniform records; the budget is carried, not tuned."""
    rng = random.Random(seed)
    recs = _random_records(rng, n, m, C, U, cost_range=cost_range)
    return UpdateStream(n, m, C, U, "threshold", budget=budget,
                        records=recs)


def threshold_straddling(n, m, C, U, seed):
    """Stream whose decision provably flips from no to yes mid-stream.

    The budget is drawn between the full-stream optimum and -1: any
    single-record prefix has optimum 0, so the run opens with a no, and
    the full stream closes with a yes.  Draws whose full-stream optimum
    is nonnegative are redrawn a few times, then two records are
    replaced with a negative two-cycle so a flip always exists.
    """
    if C < 1:
        raise ValueError("straddling streams need C >= 1")
    if m < 2:
        raise ValueError("straddling streams need m >= 2")
    rng = random.Random(seed)
    recs = None
    for _ in range(20):
        recs = _random_records(rng, n, m, C, U)
        full, _ = mincost_circulation(n, dict(enumerate(recs)))
        if full <= -1:
            break
    else:
        a = rng.randrange(n)
        b = (a + 1) % n
        at = min(m - 2, m // 2)
        recs[at] = (a, b, 1, -C)
        recs[at + 1] = (b, a, 1, C - 1)
        full, _ = mincost_circulation(n, dict(enumerate(recs)))
    budget = rng.randint(full, -1)
    return UpdateStream(n, m, C, U, "threshold", budget=budget, records=recs)


def cycle_detection(n, m, C, U, seed):
    """All costs -1 with budget -1: yes exactly when a directed cycle exists."""
    if C < 1:
        raise ValueError("cycle streams need C >= 1")
    rng = random.Random(seed)
    return UpdateStream(n, m, C, U, "threshold", budget=-1,
                        records=_random_records(rng, n, m, C, U, cost=-1))


def maxflow_uniform(n, m, C, U, seed, eps, source=None, sink=None):
    """Uniform capacities with zero costs, wrapped in a maxflow header."""
    rng = random.Random(seed)
    if source is None:
        source = 0
    if sink is None:
        sink = n - 1
    recs = [(t, h, u, 0) for t, h, u, _ in _random_records(rng, n, m, C, U)]
    return UpdateStream(n, m, max(C, 1), U, "maxflow", eps=eps,
                        source=source, sink=sink, records=recs)


_KINDS = {
    "uniform-random": uniform_random,
    "threshold-straddling": threshold_straddling,
    "cycle-detection": cycle_detection,
    "maxflow-uniform": maxflow_uniform,
}


def generate_stream(kind, n, m, C, U, seed, **kw):
    """Build a reproducible stream of the named kind."""
    try:
        make = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown stream kind {kind!r}; "
                         f"choose from {sorted(_KINDS)}") from None
    return make(n, m, C, U, seed, **kw)
