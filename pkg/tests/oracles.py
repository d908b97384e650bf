"""Brute-force oracles, independent of the code paths they check."""
import functools
import itertools
import math

import numpy as np
from scipy import integrate
from scipy.stats import norm


@functools.lru_cache(maxsize=None)
def spanning_trees(k, l):
    """All spanning trees of K_{k,l}, as tuples of (row, col) cells."""
    cells = [(i, j) for i in range(k) for j in range(l)]
    need = k + l - 1
    out = []

    def find(parent, x):
        while parent[x] != x:
            x = parent[x]
        return x

    def rec(pos, chosen, parent):
        if len(chosen) == need:
            out.append(tuple(chosen))
            return
        if len(cells) - pos < need - len(chosen):
            return
        i, j = cells[pos]
        ri, rj = find(parent, i), find(parent, k + j)
        if ri != rj:
            p2 = list(parent)
            p2[ri] = rj
            rec(pos + 1, chosen + [(i, j)], p2)
        rec(pos + 1, chosen, parent)

    rec(0, [], list(range(k + l)))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _basis_systems(k, l):
    trees = np.array(spanning_trees(k, l), dtype=np.intp).reshape(-1, k + l - 1, 2)
    A = np.zeros((trees.shape[0], k + l, k + l - 1))
    cols = np.arange(k + l - 1)
    for t, tree in enumerate(trees):
        A[t, tree[:, 0], cols] = 1.0
        A[t, k + tree[:, 1], cols] = 1.0
    # one marginal equation is redundant; drop the last
    return trees, A[:, :-1, :]


def transport_vertices(cost, a, b, sense="minimize"):
    """Best objective over all basic feasible solutions (vertex enumeration)."""
    cost = np.asarray(cost, dtype=float)
    k, l = cost.shape
    trees, A = _basis_systems(k, l)
    rhs = np.concatenate([a, b])[:-1]
    x = np.linalg.solve(A, np.broadcast_to(rhs, (A.shape[0], rhs.size))[..., None])[..., 0]
    vals = (x * cost[trees[..., 0], trees[..., 1]]).sum(axis=1)
    feasible = x.min(axis=1) >= -1e-12
    vals = vals[feasible]
    return float(vals.max() if sense == "maximize" else vals.min())


def min_cover_exhaustive(dist, eps):
    n = dist.shape[0]
    balls = [set(np.flatnonzero(dist[t] <= eps * (1 + 1e-12))) for t in range(n)]
    for size in range(1, n + 1):
        for centers in itertools.combinations(range(n), size):
            if set().union(*(balls[c] for c in centers)) == set(range(n)):
                return size
    return n


def multiset_class_bruteforce(counts, N):
    items = [t for t, c in enumerate(counts) for _ in range(N * c)]
    return sorted(set(itertools.permutations(items)))


def expected_max_iid_normal(n, sigma=1.0):
    """E[max of n i.i.d. N(0, sigma^2)] by 1-D quadrature."""
    f = lambda x: x * n * norm.pdf(x) * norm.cdf(x) ** (n - 1)
    val, _ = integrate.quad(f, -12, 12, limit=200)
    return sigma * val


def riemann_entropy(dist, scales=10_000):
    """Midpoint Riemann sum of sqrt(log N(eps)) on a fine uniform grid."""
    diam = dist.max()
    h = diam / scales
    total = 0.0
    for s in range(scales):
        eps = (s + 0.5) * h
        total += h * math.sqrt(math.log(min_cover_exhaustive(dist, eps)))
    return total
