"""Exact transportation LPs and the quantities built on them.

The solver is a transportation simplex: north-west corner start, Dantzig
entering rule with lowest-index tie-break, and a ratio test on
symbolically perturbed marginals (supplies a_i + eps, last demand
b_l + k*eps), which makes every basis nondegenerate and rules out cycling.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .core import (CheckReport, DiscreteLaw, IndexSet, MeasureOnT, SUM_TOL,
                   _check_same_index)
from .errors import DegenerateInput, InputError, MarginalMismatch, NonpositiveC, SubgError

MARGINAL_TOL = 1e-10
CERT_TOL = 1e-9
FEAS_TOL = 1e-6
_LEX_TOL = 1e-13
_HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class CertificateError(SubgError):
    """A returned plan failed its own optimality certificate."""


@dataclass(frozen=True, eq=False)
class TransportPlan:
    plan: np.ndarray
    value: float
    dual_row: np.ndarray
    dual_col: np.ndarray
    sense: str
    iterations: int = 0

    def to_dict(self):
        return {"value": self.value, "plan": self.plan.tolist(),
                "dual_row": self.dual_row.tolist(), "dual_col": self.dual_col.tolist()}


@dataclass(frozen=True, eq=False)
class FeasibilityResult:
    feasible: bool
    gap: float
    c: float
    tol: float
    witness: np.ndarray | None = None
    max_residual: float = float("nan")

    def to_dict(self):
        return {"feasible": self.feasible, "gap": self.gap, "c": self.c}


def _lex_less(av, ae, bv, be):
    if abs(av - bv) > _LEX_TOL:
        return av < bv
    return ae < be


def _northwest(a, b):
    k, l = a.size, b.size
    av, ae = a.astype(float).copy(), np.ones(k, dtype=np.int64)
    bv, be = b.astype(float).copy(), np.zeros(l, dtype=np.int64)
    be[-1] = k
    cells, xv, xe = [], [], []
    i = j = 0
    while True:
        if i == k - 1 and j == l - 1:
            cells.append((i, j)); xv.append(av[i]); xe.append(ae[i])
            break
        if (j == l - 1) or (i < k - 1 and _lex_less(av[i], ae[i], bv[j], be[j])):
            cells.append((i, j)); xv.append(av[i]); xe.append(ae[i])
            bv[j] -= av[i]; be[j] -= ae[i]
            i += 1
        else:
            cells.append((i, j)); xv.append(bv[j]); xe.append(be[j])
            av[i] -= bv[j]; ae[i] -= be[j]
            j += 1
    return cells, xv, xe


def _adjacency(cells, k, l):
    row_adj = [set() for _ in range(k)]
    col_adj = [set() for _ in range(l)]
    for (i, j) in cells:
        row_adj[i].add(j)
        col_adj[j].add(i)
    return row_adj, col_adj


def _duals(cost_rows, row_adj, col_adj, k, l):
    u = [None] * k
    v = [None] * l
    u[0] = 0.0
    rows, cols = [0], []
    while rows or cols:
        if rows:
            i = rows.pop()
            ci, ui = cost_rows[i], u[i]
            for j in row_adj[i]:
                if v[j] is None:
                    v[j] = ci[j] - ui
                    cols.append(j)
        else:
            j = cols.pop()
            vj = v[j]
            for i in col_adj[j]:
                if u[i] is None:
                    u[i] = cost_rows[i][j] - vj
                    rows.append(i)
    return np.array(u, dtype=float), np.array(v, dtype=float)


class _RootedTree:
    """Spanning-tree basis on rows 0..k-1 and columns k..k+l-1, rooted at row 0.

    Parent pointers give cycle paths in O(path length); a pivot re-hangs only
    the subtree cut off by the leaving edge and shifts its duals.
    """

    def __init__(self, cells, k, l, cost_rows):
        self.k = k
        self.adj = [set() for _ in range(k + l)]
        for (i, j) in cells:
            self.adj[i].add(k + j)
            self.adj[k + j].add(i)
        self.parent = [-1] * (k + l)
        self.depth = [0] * (k + l)
        self.pot = [0.0] * (k + l)               # u for rows, v for columns
        self.cost_rows = cost_rows
        self._hang(0, -1, 0.0)

    def _cost(self, x, y):
        k = self.k
        return self.cost_rows[x][y - k] if x < k else self.cost_rows[y][x - k]

    def _hang(self, top, parent, top_pot):
        """Re-root the component containing ``top`` below ``parent``; returns its nodes."""
        self.parent[top] = parent
        self.depth[top] = 0 if parent < 0 else self.depth[parent] + 1
        self.pot[top] = top_pot
        stack, seen = [top], [top]
        while stack:
            x = stack.pop()
            for y in self.adj[x]:
                if y != self.parent[x]:
                    self.parent[y] = x
                    self.depth[y] = self.depth[x] + 1
                    self.pot[y] = self._cost(x, y) - self.pot[x]
                    stack.append(y)
                    seen.append(y)
        return seen

    def duals(self):
        k = self.k
        return np.array(self.pot[:k]), np.array(self.pot[k:])

    def path(self, i, j):
        """Cycle cells from column j back to row i, excluding the entering cell."""
        k = self.k
        x, y = i, k + j
        up_x, up_y = [], []
        while x != y:
            if self.depth[x] >= self.depth[y]:
                up_x.append(x)
                x = self.parent[x]
            else:
                up_y.append(y)
                y = self.parent[y]
        nodes = up_y + [x] + up_x[::-1]
        return [(a, b - k) if a < k else (b, a - k) for a, b in zip(nodes, nodes[1:])]

    def _below(self, x, top):
        while self.depth[x] > self.depth[top]:
            x = self.parent[x]
        return x == top

    def pivot(self, enter, leave):
        k = self.k
        la, lb = leave[0], k + leave[1]
        child = la if self.parent[la] == lb else lb
        ea, eb = enter[0], k + enter[1]
        # the entering endpoint inside the detached subtree becomes its new top
        top, anchor = (ea, eb) if self._below(ea, child) else (eb, ea)
        self.adj[la].discard(lb)
        self.adj[lb].discard(la)
        self.adj[ea].add(eb)
        self.adj[eb].add(ea)
        self._hang(top, anchor, self._cost(top, anchor) - self.pot[anchor])


def tree_flows(cells, a, b):
    """Flows on a spanning-tree basis that reproduce marginals a, b (leaf peeling)."""
    k, l = len(a), len(b)
    ra, rb = np.array(a, dtype=float), np.array(b, dtype=float)
    row_adj = [set() for _ in range(k)]
    col_adj = [set() for _ in range(l)]
    for (i, j) in cells:
        row_adj[i].add(j)
        col_adj[j].add(i)
    flows = {}
    leaves = deque([(0, i) for i in range(k) if len(row_adj[i]) == 1] +
                   [(1, j) for j in range(l) if len(col_adj[j]) == 1])
    while leaves:
        kind, idx = leaves.popleft()
        if kind == 0:
            if len(row_adj[idx]) != 1:
                continue
            j = row_adj[idx].pop()
            col_adj[j].discard(idx)
            flows[(idx, j)] = ra[idx]
            rb[j] -= ra[idx]
            ra[idx] = 0.0
            if len(col_adj[j]) == 1:
                leaves.append((1, j))
        else:
            if len(col_adj[idx]) != 1:
                continue
            i = col_adj[idx].pop()
            row_adj[i].discard(idx)
            flows[(i, idx)] = rb[idx]
            ra[i] -= rb[idx]
            rb[idx] = 0.0
            if len(row_adj[i]) == 1:
                leaves.append((0, i))
    return flows


def _validate_marginals(cost, a, b):
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise DegenerateInput("transport problem needs k >= 1 and l >= 1")
    if cost.shape != (a.size, b.size):
        raise InputError(f"cost shape {cost.shape} does not match marginals ({a.size}, {b.size})")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise InputError("marginals must be nonnegative")
    if abs(a.sum() - b.sum()) > SUM_TOL:
        raise MarginalMismatch(f"marginal totals differ: {a.sum()!r} vs {b.sum()!r}")
    return cost, a, b


def solve_transport(cost, row_marginal, col_marginal, sense="minimize", max_iter=None):
    """Optimal basic solution of the transportation LP with a dual certificate."""
    if sense not in ("minimize", "maximize"):
        raise InputError(f"unknown sense {sense!r}")
    cost, a, b = _validate_marginals(cost, row_marginal, col_marginal)
    k, l = cost.shape
    c = cost if sense == "minimize" else -cost
    scale = max(1.0, float(np.max(np.abs(c))))
    opt_tol = 1e-12 * scale

    cells, xv, xe = _northwest(a, b)
    flow = {cell: (v, e) for cell, v, e in zip(cells, xv, xe)}
    basic = np.zeros((k, l), dtype=bool)
    for cell in cells:
        basic[cell] = True
    max_iter = max_iter or 50 * (k + l) * max(k, l) + 100
    cost_rows = c.tolist()
    tree = _RootedTree(flow.keys(), k, l, cost_rows)
    it = 0
    fresh = True
    while True:
        u, v = tree.duals()
        red = c - u[:, None] - v[None, :]
        red[basic] = 0.0
        flat = int(np.argmin(red))
        if red.flat[flat] >= -opt_tol:
            if fresh:
                break
            # incremental duals may drift; confirm optimality from scratch
            tree._hang(0, -1, 0.0)
            fresh = True
            continue
        if it >= max_iter:
            raise SubgError(f"transportation simplex exceeded {max_iter} pivots")
        it += 1
        fresh = False
        ie, je = divmod(flat, l)
        path = tree.path(ie, je)
        minus = path[0::2]
        plus = path[1::2]
        leave = None
        for cell in minus:
            fv, fe = flow[cell]
            if leave is None or _lex_less(fv, fe, *flow[leave]) or (
                    abs(fv - flow[leave][0]) <= _LEX_TOL and fe == flow[leave][1] and cell < leave):
                leave = cell
        tv, te = flow[leave]
        for cell in plus:
            fv, fe = flow[cell]
            flow[cell] = (fv + tv, fe + te)
        for cell in minus:
            fv, fe = flow[cell]
            flow[cell] = (fv - tv, fe - te)
        del flow[leave]
        basic[leave] = False
        flow[(ie, je)] = (tv, te)
        basic[ie, je] = True
        tree.pivot((ie, je), leave)

    row_adj, col_adj = _adjacency(flow.keys(), k, l)
    exact = tree_flows(list(flow.keys()), a, b)
    plan = np.zeros((k, l))
    for cell, val in exact.items():
        plan[cell] = val
    plan[(plan < 0) & (plan > -1e-12)] = 0.0
    u, v = _duals(cost_rows, row_adj, col_adj, k, l)
    if sense == "maximize":
        u, v = -u, -v
    value = float(np.sum(plan * cost))
    result = TransportPlan(plan, value, u, v, sense, it)
    verify_certificate(result, cost, a, b)
    return result


def verify_certificate(tp: TransportPlan, cost, a, b):
    """Primal feasibility plus complementary slackness; raises CertificateError."""
    cost = np.asarray(cost, dtype=float)
    tol = CERT_TOL * max(1.0, float(np.max(np.abs(cost))))
    plan = tp.plan
    problems = []
    if plan.min() < -1e-12:
        problems.append(f"negative flow {plan.min():.3e}")
    if np.max(np.abs(plan.sum(axis=1) - a)) > MARGINAL_TOL:
        problems.append("row marginal violated")
    if np.max(np.abs(plan.sum(axis=0) - b)) > MARGINAL_TOL:
        problems.append("column marginal violated")
    slack = tp.dual_row[:, None] + tp.dual_col[None, :] - cost
    if tp.sense == "minimize":
        slack = -slack
    if slack.min() < -tol:
        problems.append(f"dual infeasible by {-slack.min():.3e}")
    support = plan > 1e-12
    if support.any() and np.max(np.abs(slack[support])) > tol:
        problems.append("complementary slackness violated")
    dual_value = float(a @ tp.dual_row + b @ tp.dual_col)
    if abs(dual_value - tp.value) > tol:
        problems.append(f"duality gap {abs(dual_value - tp.value):.3e}")
    if abs(float(np.sum(plan * cost)) - tp.value) > tol:
        problems.append("value inconsistent with plan")
    if problems:
        raise CertificateError("; ".join(problems))


def fernique_functional(law: DiscreteLaw, mu: MeasureOnT) -> TransportPlan:
    """sup over couplings (X, Z) of E[X_Z]; rows are atoms, columns are indices."""
    _check_same_index(law, mu)
    return solve_transport(law.atoms, law.weights, mu.probs, sense="maximize")


def _norm_matrix(xa, xb, norm):
    diff = xa[:, None, :] - xb[None, :, :]
    if norm == "euclidean":
        return np.sqrt(np.sum(diff ** 2, axis=2))
    if norm == "sup":
        return np.max(np.abs(diff), axis=2)
    raise InputError(f"unknown norm {norm!r}")


def atom_norms(law: DiscreteLaw, norm="euclidean"):
    if norm == "euclidean":
        return np.linalg.norm(law.atoms, axis=1)
    if norm == "sup":
        return np.max(np.abs(law.atoms), axis=1)
    raise InputError(f"unknown norm {norm!r}")


def wasserstein1(law_a: DiscreteLaw, law_b: DiscreteLaw, norm="euclidean") -> float:
    _check_same_index(law_a, law_b)
    cost = _norm_matrix(law_a.atoms, law_b.atoms, norm)
    return max(0.0, solve_transport(cost, law_a.weights, law_b.weights, "minimize").value)


def total_variation(mu_a: MeasureOnT, mu_b: MeasureOnT) -> float:
    _check_same_index(mu_a, mu_b)
    return 0.5 * float(np.sum(np.abs(mu_a.probs - mu_b.probs)))


def continuity_gap_w1(law_a: DiscreteLaw, law_b: DiscreteLaw, mu: MeasureOnT,
                      norm="euclidean") -> CheckReport:
    _check_same_index(law_a, law_b, mu)
    lhs = abs(fernique_functional(law_a, mu).value - fernique_functional(law_b, mu).value)
    rhs = wasserstein1(law_a, law_b, norm)
    return CheckReport("continuity_w1", lhs <= rhs + CERT_TOL,
                       {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs})


def tv_bound(law: DiscreteLaw, mu_a: MeasureOnT, mu_b: MeasureOnT, r: float, norm="euclidean"):
    """r * ||mu_a - mu_b||_TV + 2 E[||X|| 1{||X|| > r}], TV norm of the signed difference."""
    norms = atom_norms(law, norm)
    tail = float(law.weights @ (norms * (norms > r)))
    return r * 2.0 * total_variation(mu_a, mu_b) + 2.0 * tail


def continuity_gap_tv(law: DiscreteLaw, mu_a: MeasureOnT, mu_b: MeasureOnT, r: float,
                      norm="euclidean", r_grid=None) -> CheckReport:
    _check_same_index(law, mu_a, mu_b)
    if r < 0:
        raise InputError("r must be nonnegative")
    lhs = abs(fernique_functional(law, mu_a).value - fernique_functional(law, mu_b).value)
    rhs = tv_bound(law, mu_a, mu_b, r, norm)
    details = {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "r": r}
    if r_grid is not None:
        bounds = [tv_bound(law, mu_a, mu_b, float(rr), norm) for rr in r_grid]
        best = int(np.argmin(bounds))
        details.update(best_r=float(r_grid[best]), best_rhs=float(bounds[best]))
    return CheckReport("continuity_tv", lhs <= rhs + CERT_TOL, details)


# ---------------------------------------------------------------------------
# Strassen couplings X = c E[G | X] on a discretized Gaussian


def gaussian_grid(n, size=41, clip=6.0, index=None, method="hermite") -> DiscreteLaw:
    """Tensor-product discretization of N(0, I_n) on an odd, symmetric 1-D grid.

    ``method="hermite"`` uses Gauss-Hermite nodes, dropping those with
    |g| > clip; ``method="uniform"`` uses equispaced nodes on [-clip, clip]
    with density weights.  Weights are renormalized and the grid is exactly
    symmetric, so its mean is zero.
    """
    if size % 2 == 0:
        raise InputError("grid size must be odd")
    if method == "hermite":
        nodes, w = np.polynomial.hermite_e.hermegauss(size)
        keep = np.abs(nodes) <= clip
        nodes, w = nodes[keep], w[keep]
    elif method == "uniform":
        nodes = np.linspace(-clip, clip, size)
        w = np.exp(-nodes ** 2 / 2.0)
    else:
        raise InputError(f"unknown grid method {method!r}")
    w = 0.5 * (w + w[::-1])
    nodes = 0.5 * (nodes - nodes[::-1])
    w = w / w.sum()
    grids = np.meshgrid(*([nodes] * n), indexing="ij")
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    atoms = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    weights = weights / weights.sum()
    return DiscreteLaw(index or IndexSet.range(n), atoms, weights)


def _strassen_system(law_x: DiscreteLaw, grid: DiscreteLaw, c: float):
    p, q, n = law_x.k, grid.k, law_x.n
    nvar = p * q
    var = np.arange(nvar).reshape(p, q)
    rows, cols, vals = [], [], []
    # row marginals
    rows.append(np.repeat(np.arange(p), q)); cols.append(var.ravel()); vals.append(np.ones(nvar))
    # column marginals
    rows.append(p + np.tile(np.arange(q), p)); cols.append(var.ravel()); vals.append(np.ones(nvar))
    # barycenters: sum_g pi(x,g) g_t = (x_t / c) p(x)
    for t in range(n):
        rows.append(p + q + np.repeat(np.arange(p), q) * n + t)
        cols.append(var.ravel())
        vals.append(np.tile(grid.atoms[:, t], p))
    a_eq = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(p + q + p * n, nvar))
    rhs = np.concatenate([law_x.weights, grid.weights,
                          (law_x.atoms / c * law_x.weights[:, None]).ravel()])
    return a_eq, rhs


def strassen_residual(witness, law_x: DiscreteLaw, grid: DiscreteLaw, c: float):
    """Total and max absolute constraint violation of a candidate coupling."""
    a_eq, rhs = _strassen_system(law_x, grid, c)
    res = a_eq @ np.asarray(witness).ravel() - rhs
    neg = np.clip(-np.asarray(witness), 0, None).sum()
    return float(np.abs(res).sum() + neg), float(max(np.abs(res).max(), np.clip(-witness, 0, None).max()))


def strassen_feasibility(law_x: DiscreteLaw, grid: DiscreteLaw, c: float,
                         tol: float = FEAS_TOL) -> FeasibilityResult:
    """Phase-1 LP for a coupling pi of law_x and grid with E[G | X = x] = x / c."""
    _check_same_index(law_x, grid)
    if not c > 0:
        raise NonpositiveC(f"c must be positive, got {c}")
    a_eq, rhs = _strassen_system(law_x, grid, c)
    m, nvar = a_eq.shape
    eye = sparse.identity(m, format="csr")
    a_full = sparse.hstack([a_eq, eye, -eye], format="csr")
    obj = np.concatenate([np.zeros(nvar), np.ones(2 * m)])
    res = linprog(obj, A_eq=a_full, b_eq=rhs, bounds=(0, None), method="highs",
                  options=_HIGHS_OPTIONS)
    if res.status != 0:
        raise SubgError(f"phase-1 LP failed: {res.message}")
    witness = np.clip(res.x[:nvar], 0.0, None).reshape(law_x.k, grid.k)
    gap, max_res = strassen_residual(witness, law_x, grid, c)
    feasible = gap <= tol
    return FeasibilityResult(feasible, gap, float(c), tol, witness if feasible else None, max_res)


def mix_with_product(result: FeasibilityResult, law_x: DiscreteLaw, grid: DiscreteLaw,
                     c_new: float) -> FeasibilityResult:
    """Witness at c_new > c: (c/c_new) pi + (1 - c/c_new) p x q."""
    if result.witness is None:
        raise InputError("need a feasible witness to mix")
    if c_new < result.c:
        raise InputError("mixing only moves c upward")
    lam = result.c / c_new
    product = np.outer(law_x.weights, grid.weights)
    witness = lam * result.witness + (1.0 - lam) * product
    gap, max_res = strassen_residual(witness, law_x, grid, c_new)
    return FeasibilityResult(gap <= result.tol, gap, float(c_new), result.tol, witness, max_res)


def strassen_min_c(law_x: DiscreteLaw, grid: DiscreteLaw, lo=0.25, hi=8.0, tol=FEAS_TOL, iters=30):
    """Bisection for the smallest c at which the phase-1 LP is feasible."""
    if not strassen_feasibility(law_x, grid, hi, tol).feasible:
        return float("inf")
    if strassen_feasibility(law_x, grid, lo, tol).feasible:
        return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if strassen_feasibility(law_x, grid, mid, tol).feasible:
            hi = mid
        else:
            lo = mid
    return hi
