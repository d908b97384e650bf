"""Domain types for random processes on a finite index set.

All vectors and matrices are indexed in the order of ``IndexSet.labels``.
Arrays stored on the dataclasses are made read-only at construction, so the
objects can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import norm

from .errors import IndexMismatch, InputError, NonPSDCovariance

SUM_TOL = 1e-12
SYM_TOL = 1e-12
PSD_TOL = 1e-10
TRIANGLE_TOL = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IndexSet:
    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) < 1:
            raise InputError("index set must be nonempty")
        if len(set(labels)) != len(labels):
            raise InputError("index labels must be distinct")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def range(cls, n):
        return cls(tuple(range(n)))

    @property
    def n(self):
        return len(self.labels)

    def position(self, label):
        return self.labels.index(label)


def _check_same_index(*objs):
    first = objs[0].index
    for o in objs[1:]:
        if o.index != first:
            raise IndexMismatch(f"index sets differ: {first.labels} vs {o.index.labels}")


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a numerical check: a verdict plus diagnostics."""

    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, **self.details}


@dataclass(frozen=True, eq=False)
class DiscreteLaw:
    """Finitely supported law on R^T: ``atoms[k]`` has probability ``weights[k]``."""

    index: IndexSet
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None] if self.index.n == 1 else atoms[None, :]
        weights = np.array(self.weights, dtype=float).ravel()
        if atoms.ndim != 2 or atoms.shape[1] != self.index.n:
            raise InputError(f"atoms must have shape (k, {self.index.n}), got {atoms.shape}")
        if atoms.shape[0] != weights.shape[0] or atoms.shape[0] == 0:
            raise InputError("need one weight per atom and at least one atom")
        if np.any(weights < 0):
            raise InputError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > SUM_TOL:
            raise InputError(f"weights sum to {weights.sum()!r}, not 1")
        if not np.all(np.isfinite(atoms)):
            raise InputError("atoms must be finite")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def uniform(cls, atoms, index=None):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        if index is None:
            index = IndexSet.range(atoms.shape[1])
        k = atoms.shape[0]
        return cls(index, atoms, np.full(k, 1.0 / k))

    @classmethod
    def point_mass(cls, x, index=None):
        x = np.asarray(x, dtype=float).ravel()
        if index is None:
            index = IndexSet.range(x.size)
        return cls(index, x[None, :], [1.0])

    @property
    def n(self):
        return self.index.n

    @property
    def k(self):
        return self.atoms.shape[0]

    def mean(self):
        return self.weights @ self.atoms

    def shift(self, v):
        return DiscreteLaw(self.index, self.atoms + np.asarray(v, dtype=float), self.weights)

    def centered(self):
        return self.shift(-self.mean())

    def sample_indices(self, rng, size):
        return rng.choice(self.k, size=size, p=self.weights)

    def to_dict(self):
        return {"index": list(self.index.labels), "atoms": self.atoms.tolist(),
                "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        atoms = np.asarray(d["atoms"], dtype=float)
        labels = d.get("index")
        index = IndexSet(tuple(labels)) if labels is not None else IndexSet.range(atoms.shape[1])
        return cls(index, atoms, d["weights"])


def psd_sqrt(cov):
    """Symmetric square root of a PSD matrix; tolerant of rank deficiency."""
    cov = np.asarray(cov, dtype=float)
    lam, vec = np.linalg.eigh(cov)
    scale = max(np.max(np.abs(lam)), 1.0) if lam.size else 1.0
    if lam.size and lam.min() < -PSD_TOL * scale:
        raise NonPSDCovariance(f"covariance has eigenvalue {lam.min():.3e}")
    lam = np.clip(lam, 0.0, None)
    return (vec * np.sqrt(lam)) @ vec.T


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Gaussian process on T with mean ``mean`` and covariance ``cov``."""

    index: IndexSet
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        n = self.index.n
        mean = np.array(self.mean, dtype=float).ravel()
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (n,) or cov.shape != (n, n):
            raise InputError(f"mean/cov shapes {mean.shape}/{cov.shape} do not match n={n}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL:
            raise InputError("covariance is not symmetric")
        lam = np.linalg.eigvalsh(cov)
        norm2 = np.max(np.abs(lam))
        if lam.min() < -PSD_TOL * norm2:
            raise NonPSDCovariance(f"covariance has eigenvalue {lam.min():.3e}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @classmethod
    def centered(cls, cov, index=None):
        cov = np.asarray(cov, dtype=float)
        if index is None:
            index = IndexSet.range(cov.shape[0])
        return cls(index, np.zeros(cov.shape[0]), cov)

    @property
    def n(self):
        return self.index.n

    @property
    def is_centered(self):
        return not np.any(self.mean)

    def factor(self):
        return psd_sqrt(self.cov)

    def to_dict(self):
        return {"index": list(self.index.labels), "mean": self.mean.tolist(),
                "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d):
        cov = np.asarray(d["cov"], dtype=float)
        labels = d.get("index")
        index = IndexSet(tuple(labels)) if labels is not None else IndexSet.range(cov.shape[0])
        mean = d.get("mean", np.zeros(cov.shape[0]))
        return cls(index, mean, cov)


@dataclass(frozen=True, eq=False)
class MetricOnT:
    index: IndexSet
    dist: np.ndarray

    def __post_init__(self):
        n = self.index.n
        dist = np.array(self.dist, dtype=float)
        if dist.shape != (n, n):
            raise InputError(f"distance matrix must be {n}x{n}")
        if np.any(dist < 0) or np.any(np.diag(dist) != 0):
            raise InputError("distances must be nonnegative with zero diagonal")
        if np.max(np.abs(dist - dist.T)) > SYM_TOL:
            raise InputError("distance matrix is not symmetric")
        object.__setattr__(self, "dist", _frozen(dist))

    @property
    def n(self):
        return self.index.n

    def triangle_violation(self):
        """Largest d(t,u) - d(t,s) - d(s,u) over all triples (<= 0 for a metric)."""
        d = self.dist
        via = d[:, :, None] + d[None, :, :]          # via[t, s, u] = d(t,s) + d(s,u)
        return float(np.max(d[:, None, :] - via))

    def diameter(self):
        return float(self.dist.max())


@dataclass(frozen=True, eq=False)
class MeasureOnT:
    index: IndexSet
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float).ravel()
        if probs.shape != (self.index.n,):
            raise InputError("need one probability per index")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > SUM_TOL:
            raise InputError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", _frozen(probs))

    @classmethod
    def dirac(cls, index, label):
        p = np.zeros(index.n)
        p[index.position(label)] = 1.0
        return cls(index, p)

    @classmethod
    def uniform(cls, index):
        return cls(index, np.full(index.n, 1.0 / index.n))

    @property
    def n(self):
        return self.index.n

    def to_dict(self):
        return {"index": list(self.index.labels), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d):
        probs = d["probs"]
        labels = d.get("index")
        index = IndexSet(tuple(labels)) if labels is not None else IndexSet.range(len(probs))
        return cls(index, probs)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    index: IndexSet
    rows: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.index.n or rows.shape[0] < 1:
            raise InputError(f"rows must have shape (m>=1, {self.index.n})")
        object.__setattr__(self, "rows", _frozen(rows))

    @property
    def m(self):
        return self.rows.shape[0]


def child_rng(seed, *keys):
    """Generator for the stream identified by (seed, *keys)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def natural_metric(spec: GaussianSpec) -> MetricOnT:
    cov = spec.cov
    diag = np.diag(cov)
    rad = diag[:, None] + diag[None, :] - 2.0 * cov
    if rad.min() < -PSD_TOL:
        raise NonPSDCovariance(f"negative increment variance {rad.min():.3e}")
    dist = np.sqrt(np.clip(rad, 0.0, None))
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return MetricOnT(spec.index, dist)


def sample_gaussian(spec: GaussianSpec, m: int, seed: int) -> SampleBatch:
    if m < 1:
        raise InputError("m must be >= 1")
    a = spec.factor()
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, spec.n))
    return SampleBatch(spec.index, spec.mean + z @ a, seed)


def empirical_law(batch: SampleBatch) -> DiscreteLaw:
    """Empirical distribution of the rows; bitwise-equal rows are merged."""
    rows = np.ascontiguousarray(batch.rows)
    keys = rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).ravel()
    _, first, counts = np.unique(keys, return_index=True, return_counts=True)
    order = np.argsort(first)
    atoms = rows[first[order]]
    weights = counts[order] / batch.m
    weights = weights / weights.sum()
    return DiscreteLaw(batch.index, atoms, weights)


def _pairs(metric):
    iu, ju = np.triu_indices(metric.n, 1)
    keep = metric.dist[iu, ju] > 0
    return iu[keep], ju[keep]


def subgaussian_increment_check(law, metric: MetricOnT, x_grid: Sequence[float]) -> CheckReport:
    """Compare increment tails P[|X_t - X_s| > x d(t,s)] with 2 exp(-x^2/2).

    ``law`` may be a DiscreteLaw (exact tails), a SampleBatch (empirical
    tails with slack 3 sqrt(bound/m)) or a GaussianSpec (analytic tails).
    """
    _check_same_index(law, metric)
    x = np.asarray(x_grid, dtype=float)
    if x.size == 0 or np.any(x <= 0):
        raise InputError("x_grid must be a nonempty list of positive reals")
    iu, ju = _pairs(metric)
    bound = 2.0 * np.exp(-x ** 2 / 2.0)
    if iu.size == 0:
        return CheckReport("subgaussian_increment", True,
                           {"worst_ratio": 0.0, "pairs": 0, "source": type(law).__name__})
    d = metric.dist[iu, ju]
    thresh = d[:, None] * x[None, :]                 # (pairs, grid)
    if isinstance(law, GaussianSpec):
        sd = np.sqrt(np.clip(law.cov[iu, iu] + law.cov[ju, ju] - 2 * law.cov[iu, ju], 0, None))
        mu = (law.mean[iu] - law.mean[ju])[:, None]
        sd = sd[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = norm.sf((thresh - mu) / sd) + norm.cdf((-thresh - mu) / sd)
        tail = np.where(sd > 0, tail, (np.abs(mu) > thresh).astype(float))
        slack = np.zeros_like(bound)
        m = None
    else:
        if isinstance(law, DiscreteLaw):
            rows, w = law.atoms, law.weights
            slack = np.zeros_like(bound)
            m = None
        else:
            rows = law.rows
            w = np.full(law.m, 1.0 / law.m)
            m = law.m
            slack = 3.0 * np.sqrt(bound / m)
        tail = np.empty_like(thresh)
        for p in range(iu.size):
            inc = np.abs(rows[:, iu[p]] - rows[:, ju[p]])
            tail[p] = (inc[:, None] > thresh[p][None, :]).T @ w
    ok = tail <= bound[None, :] + slack[None, :] + 1e-15
    ratio = tail / bound[None, :]
    worst = np.unravel_index(np.argmax(ratio), ratio.shape)
    return CheckReport("subgaussian_increment", bool(ok.all()), {
        "worst_ratio": float(ratio[worst]),
        "worst_pair": [metric.index.labels[iu[worst[0]]], metric.index.labels[ju[worst[0]]]],
        "worst_x": float(x[worst[1]]),
        "pairs": int(iu.size),
        "samples": m,
        "source": type(law).__name__,
    })


def projection_subgaussian_check(law: DiscreteLaw, directions, x_grid) -> CheckReport:
    """Exact check of P[|<v,X>| > x] <= 2 exp(-x^2/2) for unit directions v."""
    v = np.atleast_2d(np.asarray(directions, dtype=float))
    nrm = np.linalg.norm(v, axis=1)
    v = v[nrm > 0] / nrm[nrm > 0, None]
    x = np.asarray(x_grid, dtype=float)
    bound = 2.0 * np.exp(-x ** 2 / 2.0)
    proj = np.abs(law.atoms @ v.T)                   # (k, directions)
    tail = np.einsum("k,kdx->dx", law.weights, (proj[:, :, None] > x[None, None, :]).astype(float))
    ratio = tail / bound
    return CheckReport("projection_subgaussian", bool(np.all(tail <= bound + 1e-15)),
                       {"worst_ratio": float(ratio.max(initial=0.0)), "directions": int(v.shape[0])})


def centeredness_check(law: DiscreteLaw, tol: float = 0.0) -> CheckReport:
    mean = law.mean()
    dev = float(np.max(np.abs(mean)))
    return CheckReport("centeredness", dev <= tol, {"max_deviation": dev, "tol": tol})
