"""Convex-order domination E f(X) <= E f(cG), tested with max-affine witnesses."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .core import (CheckReport, DiscreteLaw, MeasureOnT, _check_same_index, centeredness_check,
                   child_rng, projection_subgaussian_check)
from .errors import InputError, NonpositiveC, PreconditionFailed
from .transport import fernique_functional, gaussian_grid, strassen_min_c

IDENTITY_TOL = 1e-9
EXACT_TOL = 1e-9
# trapezoid error on a kink of unit slope change is about 0.065 h^2
KINK_ERR = 0.1
# nodes per axis for the uniform tensor quadrature, by dimension
QUAD_SIZES = {1: 4001, 2: 501, 3: 121}
QUAD_CLIP = 7.0
DEFAULT_X_GRID = (0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0)


@dataclass(frozen=True, eq=False)
class MaxAffine:
    """f(x) = max_i <slopes[i], x> + offsets[i]."""

    slopes: np.ndarray
    offsets: np.ndarray
    name: str = ""

    def __post_init__(self):
        slopes = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        offsets = np.asarray(self.offsets, dtype=float).ravel()
        if slopes.shape[0] < 1 or slopes.shape[0] != offsets.size:
            raise InputError("need at least one affine piece and one offset per slope")
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "offsets", offsets)

    @property
    def n(self):
        return self.slopes.shape[1]

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.max(x @ self.slopes.T + self.offsets, axis=1)

    def to_dict(self):
        return {"name": self.name, "slopes": self.slopes.tolist(), "offsets": self.offsets.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["slopes"], d["offsets"], d.get("name", ""))


def expected_sup_shifted(law: DiscreteLaw, m) -> float:
    m = np.asarray(m, dtype=float).ravel()
    if m.size != law.n:
        raise InputError("shift vector length does not match the index set")
    return float(law.weights @ np.max(law.atoms + m, axis=1))


def argmax_law(law: DiscreteLaw, m) -> MeasureOnT:
    """Law of the index attaining max_t X_t + m_t, ties to the lowest position."""
    pick = np.argmax(law.atoms + np.asarray(m, dtype=float), axis=1)
    probs = np.bincount(pick, weights=law.weights, minlength=law.n)
    return MeasureOnT(law.index, probs / probs.sum())


def sup_decomposition_check(law: DiscreteLaw, m, step=1e-3) -> CheckReport:
    """E[max_t X_t + m_t] against F(X, mu*) + <mu*, m> at the argmax law mu*."""
    m = np.asarray(m, dtype=float).ravel()
    lhs = expected_sup_shifted(law, m)
    mu = argmax_law(law, m)
    rhs = fernique_functional(law, mu).value + float(mu.probs @ m)
    worst_move = -math.inf
    for a in range(law.n):
        for b in range(law.n):
            if a == b or mu.probs[b] < step:
                continue
            p = mu.probs.copy()
            p[a] += step
            p[b] -= step
            moved = MeasureOnT(law.index, p)
            obj = fernique_functional(law, moved).value + float(p @ m)
            worst_move = max(worst_move, obj - rhs)
    local_ok = worst_move <= IDENTITY_TOL
    passed = abs(lhs - rhs) <= IDENTITY_TOL and local_ok
    return CheckReport("sup_decomposition", bool(passed), {
        "lhs": lhs, "rhs": rhs, "difference": lhs - rhs, "mu_star": mu.probs.tolist(),
        "max_perturbation_gain": None if worst_move == -math.inf else worst_move})


# ---------------------------------------------------------------------------
# Witness families


def witness_family(n, random=0, seed=0, law: DiscreteLaw | None = None, canonical=True,
                   pieces=(2, 4), n_abs=2):
    """Canonical and random max-affine witnesses on R^n."""
    rng = child_rng(seed, 17)
    out = []
    eye = np.eye(n)
    if canonical:
        for t in range(n):
            out.append(MaxAffine(eye[t], [0.0], f"x{t}"))
            out.append(MaxAffine(-eye[t], [0.0], f"-x{t}"))
            out.append(MaxAffine(np.stack([eye[t], -eye[t]]), [0.0, 0.0], f"|x{t}|"))
        for j in range(n_abs if n > 1 else 0):
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            out.append(MaxAffine(np.stack([v, -v]), [0.0, 0.0], f"|<v{j},x>|"))
        if law is not None:
            a = law.atoms[np.linalg.norm(law.atoms, axis=1) > 0]
            if a.size:
                a = a / np.linalg.norm(a, axis=1)[:, None]
                out.append(MaxAffine(a, np.zeros(a.shape[0]), "sup_atoms"))
    if random:
        lo, hi = (-1.0, 1.0)
        if law is not None:
            lo, hi = float(law.atoms.min()), float(law.atoms.max())
            if lo == hi:
                lo, hi = lo - 1.0, hi + 1.0
        for j in range(random):
            p = int(rng.integers(pieces[0], pieces[1] + 1))
            s = rng.standard_normal((p, n))
            s /= np.linalg.norm(s, axis=1)[:, None]
            out.append(MaxAffine(s, rng.uniform(lo, hi, p), f"random{j}"))
    return out


def family_from_spec(spec: dict, n, law=None):
    """Build witnesses from a JSON-style description (or replay an explicit list)."""
    if "witnesses" in spec:
        return [MaxAffine.from_dict(d) for d in spec["witnesses"]]
    return witness_family(n, random=int(spec.get("random", 0)), seed=int(spec.get("seed", 0)),
                          law=law, canonical=bool(spec.get("canonical", True)),
                          pieces=tuple(spec.get("pieces", (2, 4))),
                          n_abs=int(spec.get("n_abs", 2)))


# ---------------------------------------------------------------------------
# Gaussian expectations


def _exact_1d(f: MaxAffine, c: float) -> float:
    """E max_i (s_i c G + o_i) for scalar G, integrated piece by piece."""
    s, o = c * f.slopes[:, 0], f.offsets
    cuts = set()
    for i in range(s.size):
        for j in range(i + 1, s.size):
            if s[i] != s[j]:
                cuts.add(float((o[j] - o[i]) / (s[i] - s[j])))
    cuts = sorted(cuts)
    edges = [-math.inf] + cuts + [math.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if math.isinf(lo) and math.isinf(hi):
            probe = 0.0
        elif math.isinf(lo):
            probe = hi - 1.0
        elif math.isinf(hi):
            probe = lo + 1.0
        else:
            probe = 0.5 * (lo + hi)
        i = int(np.argmax(s * probe + o))
        # E[(a G + b) 1{lo < G < hi}] = a (phi(lo) - phi(hi)) + b (Phi(hi) - Phi(lo))
        total += s[i] * (norm.pdf(lo) - norm.pdf(hi)) + o[i] * (norm.cdf(hi) - norm.cdf(lo))
    return float(total)


class GaussianExpectation:
    """E f(cG) for G ~ N(0, I_n): exact for n = 1, tensor quadrature for n <= 3,
    antithetic MC otherwise.

    The MC sample is fixed at construction, so expectations at different c
    share the same paths.
    """

    def __init__(self, n, method="auto", samples=200_000, seed=0):
        if method == "auto":
            method = "exact" if n == 1 else "quadrature" if n <= 3 else "mc"
        self.n = n
        self.method = method
        if method == "exact":
            if n != 1:
                raise InputError("exact Gaussian expectations need n = 1")
            self.points = self.weights = None
        elif method == "quadrature":
            if n not in QUAD_SIZES:
                raise InputError("quadrature is available for n <= 3")
            g = gaussian_grid(n, size=QUAD_SIZES[n], clip=QUAD_CLIP, method="uniform")
            self.points, self.weights = g.atoms, g.weights
            self.step = 2.0 * QUAD_CLIP / (QUAD_SIZES[n] - 1)
        elif method == "mc":
            half = (int(samples) + 1) // 2
            z = child_rng(seed, 23).standard_normal((half, n))
            self.points = np.concatenate([z, -z])
            self.weights = None
        else:
            raise InputError(f"unknown Gaussian expectation method {method!r}")

    def __call__(self, f: MaxAffine, c: float):
        """(mean, standard error) of f(cG); the error is 0 unless sampled."""
        if self.method == "exact":
            return _exact_1d(f, c), 0.0
        vals = f(c * self.points)
        if self.weights is not None:
            return float(self.weights @ vals), 0.0
        half = vals.size // 2
        pair = 0.5 * (vals[:half] + vals[half:])
        return float(pair.mean()), float(pair.std(ddof=1) / math.sqrt(half))

    def bias_bound(self, f: MaxAffine, c: float) -> float:
        """Deterministic error allowance; sampling error is reported separately."""
        if self.method == "quadrature":
            return EXACT_TOL + KINK_ERR * self.step ** 2 * c * float(np.abs(f.slopes).sum(axis=1).max())
        return EXACT_TOL


@dataclass
class OrderingReport:
    c_tested: float
    family: str
    gaps: list
    stderrs: list
    worst_gap: float
    worst_index: int
    violating_witness: MaxAffine | None
    passed: bool
    witness_names: list = field(default_factory=list)

    def to_dict(self):
        return {"c": self.c_tested, "family": self.family, "worst_gap": self.worst_gap,
                "worst_witness": self.witness_names[self.worst_index] if self.witness_names else None,
                "violating_witness": None if self.violating_witness is None
                else self.violating_witness.to_dict(),
                "passed": self.passed}


def check_subgaussian_vector(law: DiscreteLaw, witnesses, x_grid=DEFAULT_X_GRID, tol=1e-12):
    """Centered and 1-subgaussian along coordinates and witness slope directions."""
    cen = centeredness_check(law, tol)
    if not cen.passed:
        raise PreconditionFailed(f"law is not centered: {cen.details}")
    dirs = [np.eye(law.n)] + [w.slopes for w in witnesses]
    proj = projection_subgaussian_check(law, np.concatenate(dirs), x_grid)
    if not proj.passed:
        raise PreconditionFailed(f"law is not 1-subgaussian: {proj.details}")
    return proj


def convex_order_check(law_x: DiscreteLaw, c: float, witnesses, gauss=None, seed=0,
                       check_preconditions=True, slack_sigmas=3.0, family="") -> OrderingReport:
    """Worst gap E f(X) - E f(cG) over the witnesses."""
    if not c > 0:
        raise NonpositiveC(f"c must be positive, got {c}")
    if not witnesses:
        raise InputError("need at least one witness")
    if gauss is None or isinstance(gauss, (int, np.integer)):
        gauss = GaussianExpectation(law_x.n, "auto" if gauss is None else "mc",
                                    samples=gauss or 200_000, seed=seed)
    if check_preconditions:
        check_subgaussian_vector(law_x, witnesses)
    gaps, ses, fails = [], [], []
    for w in witnesses:
        fx = float(law_x.weights @ w(law_x.atoms))
        fg, se = gauss(w, c)
        gap = fx - fg
        gaps.append(gap)
        ses.append(se)
        fails.append(gap > gauss.bias_bound(w, c) + slack_sigmas * se)
    worst = int(np.argmax(gaps))
    failing = [i for i, bad in enumerate(fails) if bad]
    ok = not failing
    violating = witnesses[max(failing, key=gaps.__getitem__)] if failing else None
    return OrderingReport(float(c), family or f"{len(witnesses)} witnesses", gaps, ses,
                          float(gaps[worst]), worst, violating, bool(ok),
                          [w.name or f"w{i}" for i, w in enumerate(witnesses)])


@dataclass
class ConstantReport:
    rows: list
    smallest_c: float | None
    strassen_c: float | None = None

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["c", "worst_gap", "worst_witness_id", "pass"])
        for r in self.rows:
            w.writerow([format(r["c"], ".17g"), format(r["worst_gap"], ".17g"),
                        r["worst_witness_id"], "true" if r["pass"] else "false"])
        return buf.getvalue()

    def gap_curve(self):
        return [(r["c"], r["worst_gap"]) for r in self.rows]


def estimate_constant(law_x: DiscreteLaw, witnesses, c_grid, gauss=None, seed=0,
                      strassen_grid_size=None, check_preconditions=True) -> ConstantReport:
    """Smallest c on the grid for which every witness satisfies the ordering."""
    c_grid = [float(c) for c in c_grid]
    if any(c <= 0 for c in c_grid) or any(b <= a for a, b in zip(c_grid, c_grid[1:])):
        raise InputError("c grid must be positive and increasing")
    if gauss is None or isinstance(gauss, (int, np.integer)):
        gauss = GaussianExpectation(law_x.n, "auto" if gauss is None else "mc",
                                    samples=gauss or 200_000, seed=seed)
    if check_preconditions:
        check_subgaussian_vector(law_x, witnesses)
    rows = []
    smallest = None
    for c in c_grid:
        rep = convex_order_check(law_x, c, witnesses, gauss, seed, check_preconditions=False)
        rows.append({"c": c, "worst_gap": rep.worst_gap,
                     "worst_witness_id": rep.witness_names[rep.worst_index], "pass": rep.passed})
        if rep.passed and smallest is None:
            smallest = c
    strassen_c = None
    if strassen_grid_size:
        grid = gaussian_grid(law_x.n, size=strassen_grid_size, index=law_x.index)
        strassen_c = strassen_min_c(law_x, grid)
    return ConstantReport(rows, smallest, strassen_c)
