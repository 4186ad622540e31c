"""Independent reference computations used by the tests.

Nothing here imports the solver or path code under test; the only shared
pieces are plain data (node/edge tuples).
"""

from __future__ import annotations

import itertools
import math
import re


def bpr(t, c, x, lam=0.15, beta=4.0):
    return t * (1.0 + lam * (x / c) ** beta)


def all_simple_paths(edges, s, d):
    """Every simple s->d path as a tuple of edge ids (depth-first)."""
    out_edges = {}
    for eid, a, b, *_ in edges:
        out_edges.setdefault(a, []).append((eid, b))
    found = []

    def walk(node, seen, seq):
        if node == d:
            found.append(tuple(seq))
            return
        for eid, nxt in out_edges.get(node, ()):
            if nxt not in seen:
                walk(nxt, seen | {nxt}, seq + [eid])

    walk(s, {s}, [])
    return found


def path_cost(seq, cost):
    return sum(cost[e] for e in seq)


def grid_so_parallel(links, r, step):
    """Minimum of sum x*tau(x) over splits of r on parallel links, on a grid."""
    n = int(round(r / step))
    best = (math.inf, None)
    for i in range(n + 1):
        for j in range(n + 1 - i):
            k = n - i - j
            xs = (i * step, j * step, k * step)
            val = sum(x * bpr(t, c, x) for (t, c), x in zip(links, xs))
            if val < best[0]:
                best = (val, xs)
    return best


def wardrop_parallel(links, r, tol=1e-12):
    """Equal-latency UE split on parallel links by bisection on the common level."""

    def inverse(t, c, level):
        if level <= t:
            return 0.0
        return c * ((level / t - 1.0) / 0.15) ** 0.25

    lo, hi = 0.0, max(bpr(t, c, r) for t, c in links)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if sum(inverse(t, c, mid) for t, c in links) < r:
            lo = mid
        else:
            hi = mid
    level = 0.5 * (lo + hi)
    return level, [inverse(t, c, level) for t, c in links]


def count_tntp_links(text):
    """Link-record count and node set from raw text, by regex only."""
    body = text.split("<END OF METADATA>", 1)[1]
    n, nodes = 0, set()
    for line in body.splitlines():
        line = line.split("~", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"(\d+)\s+(\d+)\s", line)
        if m:
            n += 1
            nodes.update((int(m.group(1)), int(m.group(2))))
    return n, nodes


def sum_tntp_trips(text):
    """(number of positive OD pairs, total flow) from raw trips text."""
    body = text.split("<END OF METADATA>", 1)[1]
    pairs, total, origin = 0, 0.0, None
    for line in body.splitlines():
        m = re.match(r"\s*Origin\s+(\d+)", line)
        if m:
            origin = int(m.group(1))
            continue
        for d, f in re.findall(r"(\d+)\s*:\s*([0-9.eE+-]+)", line):
            f = float(f)
            total += f
            if f > 0 and int(d) != origin:
                pairs += 1
    return pairs, total


def brute_profiles(options, evaluate):
    """Minimum of ``evaluate`` over the product of ``options``."""
    best = (math.inf, None)
    for combo in itertools.product(*options):
        v = evaluate(combo)
        if v < best[0]:
            best = (v, combo)
    return best


def golden_min(fn, lo, hi, tol=1e-10):
    """Minimiser of a unimodal scalar function on [lo, hi] (golden section)."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)
