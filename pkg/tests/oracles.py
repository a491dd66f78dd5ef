"""Independent reference computations used as test oracles.

Nothing here calls into the package; each function recomputes its answer
by enumeration or by a separate library.
"""

import itertools
import math

import numpy as np

DIGITS = {"signed": (-1, 1), "unsigned": (0, 1)}


def all_codes(k, domain):
    return list(itertools.product(DIGITS[domain], repeat=k))


def combine(v, code):
    total = 0.0
    for vi, bi in zip(v, code):
        total += vi * bi
    return total


def brute_levels(v, domain):
    return sorted({combine(v, c) for c in all_codes(len(v), domain)})


def brute_quantize(x, v, domain):
    # lowest level whose upper threshold is >= x, i.e. (t_l, t_{l+1}] intervals
    lv = brute_levels(v, domain)
    for i in range(len(lv) - 1):
        if x <= (lv[i] + lv[i + 1]) / 2:
            return lv[i]
    return lv[-1]


def brute_optimum(values, k, domain):
    """Global minimum squared error over every code assignment.

    For each assignment the basis is the least-squares solution, so the
    minimum over assignments is the optimum over all (v, codes).
    Returns ``(error, v)``.
    """
    x = np.asarray(values, dtype=float)
    codes = all_codes(k, domain)
    best = (math.inf, None)
    for assign in itertools.product(codes, repeat=x.size):
        B = np.array(assign, dtype=float)
        v, *_ = np.linalg.lstsq(B, x, rcond=None)
        err = float(np.sum((x - B @ v) ** 2))
        if err < best[0]:
            best = (err, v)
    return best


def naive_forward(nodes, conns, x):
    """Recursive float evaluation of a genome dict without quantization.

    ``nodes`` maps id -> (kind, activation); ``conns`` is a list of enabled
    (source, target, weight).  Sums use math.fsum.
    """
    cache = {}
    inputs = sorted(n for n, (kind, _) in nodes.items() if kind == "input")

    def value(n):
        if n in cache:
            return cache[n]
        kind, act = nodes[n]
        if kind == "input":
            out = float(x[inputs.index(n)])
        elif kind == "bias":
            out = 1.0
        else:
            z = math.fsum(value(s) * w for s, t, w in conns if t == n)
            out = z if act == "identity" else 1.0 / (1.0 + math.exp(-z))
        cache[n] = out
        return out

    return [value(n) for n in sorted(n for n, (k, _) in nodes.items() if k == "output")]
