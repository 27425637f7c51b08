"""Brute-force reference implementations shared by the metric tests."""

import itertools
import math

import numpy as np

from uagnn.metrics import f1_under_mapping


def brute_force_cost(cost):
    rows, cols = cost.shape
    if rows <= cols:
        return min(sum(cost[i, p[i]] for i in range(rows))
                   for p in itertools.permutations(range(cols), rows))
    return min(sum(cost[p[j], j] for j in range(cols))
               for p in itertools.permutations(range(rows), cols))


def assignment_cost(cost, assign):
    used = [j for j in assign if j >= 0]
    assert len(used) == len(set(used)) == min(cost.shape)
    return sum(cost[i, j] for i, j in enumerate(assign) if j >= 0)


def brute_force_f1(pred, truth):
    """Every one-to-one map; returns (best overlap, F1 of each overlap-optimal map)."""
    pids, tids = np.unique(pred).tolist(), np.unique(truth).tolist()
    if len(pids) <= len(tids):
        maps = (dict(zip(pids, t)) for t in itertools.permutations(tids, len(pids)))
    else:
        maps = (dict(zip(p, tids)) for p in itertools.permutations(pids, len(tids)))
    best_overlap, f1s = -1, []
    for mapping in maps:
        overlap = sum(np.sum((pred == p) & (truth == t)) for p, t in mapping.items())
        f1 = f1_under_mapping(pred, truth, mapping)
        if overlap > best_overlap:
            best_overlap, f1s = overlap, [f1]
        elif overlap == best_overlap:
            f1s.append(f1)
    return best_overlap, f1s


def nmi_oracle(a, b):
    n = len(a)
    count = {}
    for x, y in zip(a, b):
        count[(x, y)] = count.get((x, y), 0) + 1
    ca = {x: list(a).count(x) for x in set(a)}
    cb = {y: list(b).count(y) for y in set(b)}
    ha = -sum(c / n * math.log(c / n) for c in ca.values())
    hb = -sum(c / n * math.log(c / n) for c in cb.values())
    mi = sum(c / n * math.log(c * n / (ca[x] * cb[y])) for (x, y), c in count.items())
    if ha == 0 or hb == 0:
        return 1.0 if ha == hb else 0.0
    return mi / ((ha + hb) / 2)
