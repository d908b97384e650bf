"""Tensorized processes over sequences with a prescribed type.

For mu with masses in (1/K)Z and a block count N, the sequence class holds
every length-NK sequence in which t appears N*K*mu(t) times.  Given i.i.d.
copies X^(1), ..., X^(NK) of the base process, the tensorized process is
X_seq = mean_i X^(i)_{seq_i}.  Its expected supremum over the class
increases to Fernique's functional F(X, mu) as N grows.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import norm

from . import kernels
from .core import (CheckReport, DiscreteLaw, GaussianSpec, IndexSet, MeasureOnT, MetricOnT,
                   _check_same_index, child_rng, natural_metric, subgaussian_increment_check)
from .errors import ClassTooLarge, InputError, InsufficientSamples, PreconditionFailed
from .transport import fernique_functional, gaussian_grid

DEFAULT_CAP = 100_000
MAX_LENGTH = 16
CHUNK = 1 << 15
Z99 = float(norm.ppf(0.995))


@dataclass(frozen=True, eq=False)
class RationalMeasure:
    index: IndexSet
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != self.index.n or any(c < 0 for c in counts) or sum(counts) == 0:
            raise InputError("counts must be nonnegative integers, one per index, not all zero")
        object.__setattr__(self, "counts", counts)

    @property
    def K(self):
        return sum(self.counts)

    def measure(self) -> MeasureOnT:
        K = self.K
        return MeasureOnT(self.index, [c / K for c in self.counts])

    @classmethod
    def from_measure(cls, mu: MeasureOnT, max_denominator=64):
        fracs = [Fraction(float(p)).limit_denominator(max_denominator) for p in mu.probs]
        K = math.lcm(*(f.denominator for f in fracs))
        counts = [int(f * K) for f in fracs]
        if sum(counts) != K or np.max(np.abs(np.array(counts) / K - mu.probs)) > 1e-12:
            raise InputError("measure is not rational with small denominator")
        return cls(mu.index, counts)


def class_size(mu: RationalMeasure, N: int) -> int:
    """Multinomial coefficient (NK)! / prod_t (N counts_t)!."""
    total = N * mu.K
    size = math.factorial(total)
    for c in mu.counts:
        size //= math.factorial(N * c)
    return size


def multiset_permutations(items):
    """Distinct permutations of a multiset in lexicographic order."""
    a = sorted(items)
    n = len(a)
    while True:
        yield tuple(a)
        i = n - 2
        while i >= 0 and a[i] >= a[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while a[j] <= a[i]:
            j -= 1
        a[i], a[j] = a[j], a[i]
        a[i + 1:] = reversed(a[i + 1:])


@dataclass(frozen=True, eq=False)
class SequenceClass:
    base: RationalMeasure
    N: int
    sequences: np.ndarray        # (size, NK) array of index positions
    size: int

    @property
    def length(self):
        return self.N * self.base.K

    @property
    def index(self):
        return self.base.index

    def labels(self):
        lab = self.base.index.labels
        return [tuple(lab[p] for p in row) for row in self.sequences]

    def sequence_index(self) -> IndexSet:
        return IndexSet(tuple(self.labels()))

    def lookup(self):
        return {tuple(row): s for s, row in enumerate(self.sequences.tolist())}


def enumerate_sequence_class(mu: RationalMeasure, N: int, cap: int = DEFAULT_CAP,
                             max_length: int = MAX_LENGTH) -> SequenceClass:
    if N < 1:
        raise InputError("N must be a positive integer")
    size = class_size(mu, N)
    if size > cap:
        raise ClassTooLarge(size, cap)
    if N * mu.K > max_length:
        raise InputError(f"sequence length {N * mu.K} exceeds {max_length}")
    multiset = [t for t, c in enumerate(mu.counts) for _ in range(N * c)]
    seqs = np.array(list(multiset_permutations(multiset)), dtype=np.intp)
    seqs.setflags(write=False)
    assert seqs.shape[0] == size
    return SequenceClass(mu, N, seqs, size)


def tensor_metric(metric: MetricOnT, seq_class: SequenceClass) -> MetricOnT:
    """d_N(t, s) = sqrt(sum_i d(t_i, s_i)^2) / NK on the sequence class."""
    _check_same_index(metric, seq_class)
    d2 = metric.dist ** 2
    seqs = seq_class.sequences
    acc = np.zeros((seq_class.size, seq_class.size))
    for i in range(seq_class.length):
        col = seqs[:, i]
        acc += d2[col[:, None], col[None, :]]
    return MetricOnT(seq_class.sequence_index(), np.sqrt(acc) / seq_class.length)


@dataclass(frozen=True, eq=False)
class TensorGaussian:
    source: GaussianSpec
    seq_class: SequenceClass
    cov: np.ndarray

    def spec(self) -> GaussianSpec:
        return GaussianSpec(self.seq_class.sequence_index(), np.zeros(self.seq_class.size), self.cov)


def _tensor_cov(cov, seqs, M):
    acc = np.zeros((seqs.shape[0], seqs.shape[0]))
    for i in range(seqs.shape[1]):
        col = seqs[:, i]
        acc += cov[col[:, None], col[None, :]]
    return acc / M ** 2


def tensor_gaussian_cov(spec: GaussianSpec, seq_class: SequenceClass) -> TensorGaussian:
    _check_same_index(spec, seq_class)
    if not spec.is_centered:
        raise InputError("tensorized covariance needs a centered Gaussian")
    cov = _tensor_cov(spec.cov, seq_class.sequences, seq_class.length)
    cov.setflags(write=False)
    return TensorGaussian(spec, seq_class, cov)


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    ci_lo: float
    ci_hi: float
    samples: int

    def contains(self, value, k=None):
        if k is None:
            return self.ci_lo <= value <= self.ci_hi
        return abs(value - self.mean) <= k * self.stderr


def _draw_copies(law, rng, r, M):
    if isinstance(law, GaussianSpec):
        z = rng.standard_normal((r, M, law.n))
        return np.ascontiguousarray(law.mean + z @ law.factor())
    idx = rng.choice(law.k, size=(r, M), p=law.weights)
    return np.ascontiguousarray(law.atoms[idx])


def _chunks(samples):
    for c, lo in enumerate(range(0, samples, CHUNK)):
        yield c, min(CHUNK, samples - lo)


def _estimate(values):
    values = np.asarray(values)
    m = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return Estimate(mean, se, mean - Z99 * se, mean + Z99 * se, m)


def mc_sup_tensorized(law, seq_class: SequenceClass, samples: int, seed: int,
                      key=(), backend=None) -> Estimate:
    """Monte Carlo estimate of E[sup over the class of the tensorized process].

    Replicates are drawn in fixed chunks; chunk c uses the stream
    (seed, *key, c), so results do not depend on how chunks are scheduled.
    """
    _check_same_index(law, seq_class)
    if samples < 100:
        raise InsufficientSamples("need at least 100 replicates")
    kern = kernels.get(backend) if backend else kernels
    M = seq_class.length
    sups = np.empty(samples)
    pos = 0
    for c, r in _chunks(samples):
        rng = child_rng(seed, *key, c)
        copies = _draw_copies(law, rng, r, M)
        sups[pos:pos + r] = kern.tensor_sup(copies, seq_class.sequences)
        pos += r
    return _estimate(sups)


def discretize_gaussian(spec: GaussianSpec, size=61) -> DiscreteLaw:
    """Push a uniform tensor grid for N(0, I) through the covariance root."""
    grid = gaussian_grid(spec.n, size=size, method="uniform")
    return DiscreteLaw(spec.index, spec.mean + grid.atoms @ spec.factor(), grid.weights)


def reference_fernique(law, mu: MeasureOnT, grid_size=61) -> float:
    if isinstance(law, GaussianSpec):
        law = discretize_gaussian(law, grid_size)
    return fernique_functional(law, mu).value


@dataclass
class StudyTable:
    rows: list = field(default_factory=list)
    exact_F: float = float("nan")
    monotone_flags: list = field(default_factory=list)

    COLUMNS = ("N", "class_size", "estimate", "stderr", "ci_lo", "ci_hi", "exact_F", "gap")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.COLUMNS])
        return buf.getvalue()

    def plot_columns(self):
        return [(r["N"], r["estimate"], r["ci_lo"], r["ci_hi"]) for r in self.rows]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def convergence_study(law, mu: RationalMeasure, Ns, samples: int, seed: int,
                      exact_F=None, cap=DEFAULT_CAP) -> StudyTable:
    """Estimates along a ladder of N, each compared with the exact functional."""
    if exact_F is None:
        exact_F = reference_fernique(law, mu.measure())
    table = StudyTable(exact_F=float(exact_F))
    for N in Ns:
        sc = enumerate_sequence_class(mu, N, cap=cap)
        est = mc_sup_tensorized(law, sc, samples, seed, key=(N,))
        table.rows.append({"N": N, "class_size": sc.size, "estimate": est.mean,
                           "stderr": est.stderr, "ci_lo": est.ci_lo, "ci_hi": est.ci_hi,
                           "exact_F": float(exact_F), "gap": float(exact_F) - est.mean})
    for a, b in zip(table.rows, table.rows[1:]):
        noise = 3.0 * math.hypot(a["stderr"], b["stderr"])
        if b["estimate"] < a["estimate"] - noise:
            table.monotone_flags.append((a["N"], b["N"]))
    return table


def transitive_witness(first, target):
    """A permutation sigma of positions with first[sigma] == target."""
    first = np.asarray(first)
    target = np.asarray(target)
    sigma = np.empty(first.size, dtype=np.intp)
    for t in np.unique(first):
        sigma[np.flatnonzero(target == t)] = np.flatnonzero(first == t)
    return sigma


def stationarity_check(tensor: TensorGaussian, trials: int, seed: int, tol=1e-12) -> CheckReport:
    """Exact invariance of the tensor covariance under random position permutations."""
    sc = tensor.seq_class
    seqs = sc.sequences
    lookup = sc.lookup()
    rng = np.random.default_rng(seed)
    M = sc.length
    worst = 0.0
    sigmas = [np.arange(M)]
    if M > 1:
        swap = np.arange(M)
        swap[[0, 1]] = [1, 0]
        sigmas.append(swap)
    sigmas += [rng.permutation(M) for _ in range(trials)]
    for sigma in sigmas:
        perm = np.array([lookup[tuple(row)] for row in seqs[:, sigma].tolist()])
        if np.unique(perm).size != sc.size:
            return CheckReport("stationarity", False, {"reason": "action is not a bijection"})
        moved = _tensor_cov(tensor.source.cov, seqs[perm], M)
        worst = max(worst, float(np.max(np.abs(moved - tensor.cov))),
                    float(np.max(np.abs(tensor.cov[np.ix_(perm, perm)] - tensor.cov))))
    transitive = True
    for row in seqs:
        sigma = transitive_witness(seqs[0], row)
        if not np.array_equal(seqs[0][sigma], row):
            transitive = False
            break
    return CheckReport("stationarity", worst <= tol and transitive,
                       {"max_deviation": worst, "permutations": len(sigmas),
                        "transitive": transitive, "class_size": sc.size})


def birkhoff_identity(copies, seq_class: SequenceClass):
    """Both sides of sup_seq X_seq = F(empirical law of the copies, mu).

    ``copies`` holds NK realizations of the base process, one per row.
    """
    copies = np.ascontiguousarray(np.asarray(copies, dtype=float))
    M = seq_class.length
    if copies.shape != (M, seq_class.index.n):
        raise InputError(f"need {M} copies of length {seq_class.index.n}")
    sup = float(kernels.tensor_sup(copies[None], seq_class.sequences)[0])
    emp = DiscreteLaw(seq_class.index, copies, np.full(M, 1.0 / M))
    lp = fernique_functional(emp, seq_class.base.measure()).value
    return sup, lp


def tensor_subgaussian_check(law, seq_class: SequenceClass, metric: MetricOnT, C: float,
                             x_grid, samples: int, seed: int, c_grid=None,
                             max_pairs=400) -> CheckReport:
    """Monte Carlo check of P[|X_t - X_s| > C x d_N(t,s)] <= 2 exp(-x^2/2)."""
    _check_same_index(law, seq_class, metric)
    base = subgaussian_increment_check(law, metric, x_grid)
    if not base.passed:
        raise PreconditionFailed(f"base law is not dominated by the metric: {base.details}")
    x = np.asarray(x_grid, dtype=float)
    bound = 2.0 * np.exp(-x ** 2 / 2.0)
    slack = 3.0 * np.sqrt(bound / samples)
    dN = tensor_metric(metric, seq_class).dist
    iu, ju = np.triu_indices(seq_class.size, 1)
    keep = dN[iu, ju] > 0
    iu, ju = iu[keep], ju[keep]
    rng = child_rng(seed, 0)
    if iu.size > max_pairs:
        pick = np.sort(rng.choice(iu.size, max_pairs, replace=False))
        iu, ju = iu[pick], ju[pick]
    c_grid = sorted(set(c_grid or [0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 4.0]) | {float(C)})
    exceed = {cc: np.zeros((iu.size, x.size)) for cc in c_grid}
    for c, r in _chunks(samples):
        copies = _draw_copies(law, child_rng(seed, 1, c), r, seq_class.length)
        vals = kernels.tensor_values(copies, seq_class.sequences)
        inc = np.abs(vals[:, iu] - vals[:, ju]) / dN[iu, ju]
        for cc in c_grid:
            exceed[cc] += (inc[:, :, None] > cc * x[None, None, :]).sum(axis=0)
    passing = []
    worst = {}
    for cc in c_grid:
        tail = exceed[cc] / samples
        worst[cc] = float(np.max(tail / bound)) if tail.size else 0.0
        if np.all(tail <= bound + slack):
            passing.append(cc)
    return CheckReport("tensor_subgaussian", float(C) in passing, {
        "C": float(C), "smallest_passing_C": min(passing) if passing else None,
        "worst_ratio": worst[float(C)], "pairs": int(iu.size), "samples": samples})
