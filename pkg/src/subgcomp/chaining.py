"""Covering numbers, the entropy integral, and the stationary-process sandwich.

Balls are closed, B(t, eps) = {s : d(t, s) <= eps}, and centered at points
of T.
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (CheckReport, DiscreteLaw, GaussianSpec, IndexSet, MetricOnT, child_rng,
                   natural_metric, subgaussian_increment_check)
from .errors import ExactTooLarge, InputError, NotInvariant, NotTransitive, PreconditionFailed

EXACT_MAX_N = 20
BAND = (1.0 / 64.0, 64.0)
_BALL_RTOL = 1e-12


def _ball_masks(metric, eps):
    inside = metric.dist <= eps * (1.0 + _BALL_RTOL)
    weights = np.left_shift(np.uint64(1), np.arange(metric.n, dtype=np.uint64))
    return (inside.astype(np.uint64) * weights[None, :]).sum(axis=1).astype(np.uint64)


def _greedy_cover(inside):
    uncovered = np.ones(inside.shape[0], dtype=bool)
    count = 0
    while uncovered.any():
        gain = inside[:, uncovered].sum(axis=1)
        c = int(np.argmax(gain))
        uncovered &= ~inside[c]
        count += 1
    return count


def covering_number(metric: MetricOnT, eps: float, method: str = "exact") -> int:
    """Smallest number of closed eps-balls centered in T that cover T."""
    if not eps >= 0:
        raise InputError("eps must be nonnegative")
    inside = metric.dist <= eps * (1.0 + _BALL_RTOL)
    greedy = _greedy_cover(inside)
    if method == "greedy":
        return greedy
    if method != "exact":
        raise InputError(f"unknown method {method!r}")
    if metric.n > EXACT_MAX_N:
        raise ExactTooLarge(f"exact covering limited to n <= {EXACT_MAX_N}, got {metric.n}")
    if greedy <= 1:
        return greedy
    masks = np.unique(_ball_masks(metric, eps))
    return int(kernels.min_cover(np.ascontiguousarray(masks), metric.n, greedy))


def _default_method(metric):
    return "exact" if metric.n <= EXACT_MAX_N else "greedy"


@dataclass
class CoveringProfile:
    metric: MetricOnT
    scales: list
    exact: list
    greedy: list

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["scale", "N_exact", "N_greedy"])
        for s, e, g in zip(self.scales, self.exact, self.greedy):
            w.writerow([format(s, ".17g"), "" if e is None else e, g])
        return buf.getvalue()


def covering_profile(metric: MetricOnT, scales) -> CoveringProfile:
    scales = sorted((float(s) for s in scales), reverse=True)
    exact = [covering_number(metric, s, "exact") if metric.n <= EXACT_MAX_N else None
             for s in scales]
    greedy = [covering_number(metric, s, "greedy") for s in scales]
    return CoveringProfile(metric, scales, exact, greedy)


@dataclass
class EntropyIntegral:
    """Exact integral of sqrt(log N(eps)) plus a dyadic bracket around it."""

    value: float
    lower: float
    upper: float
    scales: list = field(default_factory=list)
    numbers: list = field(default_factory=list)
    method: str = "exact"


def entropy_integral(metric: MetricOnT, method: str | None = None) -> EntropyIntegral:
    method = method or _default_method(metric)
    diam = metric.diameter()
    if metric.n == 1 or diam == 0:
        return EntropyIntegral(0.0, 0.0, 0.0, [diam], [1], method)

    def h(eps):
        return math.sqrt(math.log(covering_number(metric, eps, method)))

    n0 = covering_number(metric, 0.0, method)
    h0 = math.sqrt(math.log(n0))

    # N is piecewise constant with jumps only at pairwise distances
    levels = np.unique(metric.dist[metric.dist > 0])
    value = levels[0] * h0
    for a, b in zip(levels[:-1], levels[1:]):
        value += (b - a) * h(a)

    scales = [diam]
    numbers = [covering_number(metric, diam, method)]
    while numbers[-1] < n0:
        scales.append(scales[-1] / 2.0)
        numbers.append(covering_number(metric, scales[-1], method))
    logs = [math.sqrt(math.log(nn)) for nn in numbers]
    upper = lower = scales[-1] * h0
    for j in range(len(scales) - 1):
        width = scales[j] - scales[j + 1]
        upper += width * logs[j + 1]
        lower += width * logs[j]
    return EntropyIntegral(float(value), lower, upper, scales, numbers, method)


# ---------------------------------------------------------------------------
# Stationarity


@dataclass(frozen=True, eq=False)
class GroupAction:
    generators: tuple
    verified_transitive: bool = False

    def __post_init__(self):
        gens = tuple(np.asarray(g, dtype=np.intp) for g in self.generators)
        for g in gens:
            if np.sort(g).tolist() != list(range(g.size)):
                raise InputError(f"generator {g.tolist()} is not a permutation")
        object.__setattr__(self, "generators", gens)

    def orbit(self, start=0):
        seen = {start}
        queue = deque([start])
        while queue:
            t = queue.popleft()
            for g in self.generators:
                s = int(g[t])
                if s not in seen:
                    seen.add(s)
                    queue.append(s)
        return seen


def cyclic_action(n):
    return GroupAction((np.roll(np.arange(n), -1),))


def symmetric_action(n):
    gens = [np.roll(np.arange(n), -1)]
    if n > 1:
        swap = np.arange(n)
        swap[[0, 1]] = [1, 0]
        gens.append(swap)
    return GroupAction(tuple(gens))


def torus_covariance(n, decay=2.0):
    """Circulant covariance on Z_n with spectrum (1 + |j|)^-decay, unit variance."""
    j = np.arange(n)
    freq = np.minimum(j, n - j)
    lam = (1.0 + freq) ** (-decay)
    h = np.arange(n)
    row = np.array([np.sum(lam * np.cos(2 * np.pi * j * k / n)) for k in h])
    row /= row[0]
    cov = np.array([[row[(s - t) % n] for s in range(n)] for t in range(n)])
    return 0.5 * (cov + cov.T)


def verify_stationary(spec: GaussianSpec, action: GroupAction, tol=1e-12) -> CheckReport:
    """Transitivity by orbit search, invariance by Cov(g t, g s) = Cov(t, s)."""
    for g in action.generators:
        if g.size != spec.n:
            raise InputError("generator length does not match the index set")
    orbit = action.orbit(0)
    if len(orbit) != spec.n:
        raise NotTransitive(f"orbit of the first index has {len(orbit)} of {spec.n} points")
    for gi, g in enumerate(action.generators):
        moved = spec.cov[np.ix_(g, g)]
        dev = np.abs(moved - spec.cov)
        if dev.max() > tol:
            entry = np.unravel_index(np.argmax(dev), dev.shape)
            raise NotInvariant(gi, (int(entry[0]), int(entry[1])), float(dev.max()))
        if np.any(spec.mean[g] != spec.mean):
            raise NotInvariant(gi, (int(np.argmax(spec.mean[g] != spec.mean)),), 0.0)
    return CheckReport("stationary", True, {"generators": len(action.generators),
                                            "orbit_size": len(orbit)})


def rademacher_image(spec: GaussianSpec, max_atoms=1 << 16) -> DiscreteLaw:
    """Law of mean + A xi with xi uniform on {-1, 1}^n and A A^T = cov.

    Its increments satisfy the same subgaussian tail bound as the Gaussian.
    """
    a = spec.factor()
    cols = a[:, np.any(np.abs(a) > 1e-14, axis=0)]
    r = cols.shape[1]
    if (1 << r) > max_atoms:
        raise InputError(f"{1 << r} atoms exceed max_atoms={max_atoms}")
    signs = 1.0 - 2.0 * ((np.arange(1 << r)[:, None] >> np.arange(r)[None, :]) & 1)
    atoms = spec.mean + signs @ cols.T
    return DiscreteLaw(spec.index, atoms, np.full(1 << r, 1.0 / (1 << r)))


def expected_sup_gaussian(spec: GaussianSpec, samples: int, seed: int, key=()):
    """Monte Carlo E[max_t G_t] with its standard error."""
    if spec.n == 1:
        return float(spec.mean[0]), 0.0
    a = spec.factor()
    total = 0.0
    total2 = 0.0
    chunk = 1 << 16
    for c, lo in enumerate(range(0, samples, chunk)):
        r = min(chunk, samples - lo)
        z = child_rng(seed, *key, c).standard_normal((r, spec.n))
        m = (spec.mean + z @ a).max(axis=1)
        total += m.sum()
        total2 += (m ** 2).sum()
    mean = total / samples
    var = max(total2 / samples - mean ** 2, 0.0) * samples / max(samples - 1, 1)
    return float(mean), float(math.sqrt(var / samples))


@dataclass
class SandwichReport:
    entropy: EntropyIntegral
    sup_x: float
    sup_x_se: float
    sup_g: float
    sup_g_se: float
    ratio_x: float
    ratio_g: float
    band: tuple
    passed: bool

    def to_dict(self):
        return {"entropy_integral": self.entropy.value, "entropy_lower": self.entropy.lower,
                "entropy_upper": self.entropy.upper, "sup_x": self.sup_x,
                "sup_x_se": self.sup_x_se, "sup_g": self.sup_g, "sup_g_se": self.sup_g_se,
                "ratio_x": self.ratio_x, "ratio_g": self.ratio_g, "band": list(self.band),
                "passed": self.passed}


def _ratio(num, den):
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den


def fernique_sandwich_check(law_x, spec: GaussianSpec, action: GroupAction, samples: int,
                            seed: int, x_grid=(0.5, 1.0, 1.5, 2.0, 3.0, 4.0),
                            band=BAND) -> SandwichReport:
    """Entropy integral against E[sup X] and E[sup G] for stationary G."""
    verify_stationary(spec, action)
    metric = natural_metric(spec)
    dom = subgaussian_increment_check(law_x, metric, x_grid)
    if not dom.passed:
        raise PreconditionFailed(f"X is not dominated by the natural metric: {dom.details}")
    ent = entropy_integral(metric)
    if isinstance(law_x, DiscreteLaw):
        sup_x, sup_x_se = float(law_x.weights @ law_x.atoms.max(axis=1)), 0.0
    else:
        sup_x, sup_x_se = expected_sup_gaussian(law_x, samples, seed, key=(0,))
    sup_g, sup_g_se = expected_sup_gaussian(spec, samples, seed, key=(1,))
    rx, rg = _ratio(ent.value, sup_x), _ratio(ent.value, sup_g)
    passed = bool(band[0] <= rx <= band[1] and band[0] <= rg <= band[1])
    return SandwichReport(ent, sup_x, sup_x_se, sup_g, sup_g_se, rx, rg, tuple(band), passed)
