import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subgcomp.core import (DiscreteLaw, GaussianSpec, IndexSet, MeasureOnT, MetricOnT,
                           SampleBatch, centeredness_check, empirical_law, natural_metric,
                           psd_sqrt, sample_gaussian, subgaussian_increment_check)
from subgcomp.errors import IndexMismatch, InputError, NonPSDCovariance
from subgcomp.serialize import dumps
from subgcomp.transport import wasserstein1


def test_natural_metric_independent():
    d = natural_metric(GaussianSpec.centered(np.eye(2))).dist
    np.testing.assert_allclose(d, [[0, math.sqrt(2)], [math.sqrt(2), 0]], atol=1e-15)


def test_natural_metric_perfectly_correlated():
    assert np.all(natural_metric(GaussianSpec.centered(np.ones((2, 2)))).dist == 0)


def test_natural_metric_correlated_against_samples():
    spec = GaussianSpec.centered([[1, 0.5], [0.5, 1]])
    assert natural_metric(spec).dist[0, 1] == pytest.approx(1.0, abs=1e-15)
    rows = sample_gaussian(spec, 10**6, seed=3).rows
    assert np.std(rows[:, 0] - rows[:, 1]) == pytest.approx(1.0, abs=5e-3)


def test_non_psd_rejected():
    with pytest.raises(NonPSDCovariance):
        GaussianSpec.centered([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NonPSDCovariance):
        GaussianSpec.centered([[1.0, 0.0], [0.0, -1e-3]])


def test_asymmetric_cov_rejected():
    with pytest.raises(InputError):
        GaussianSpec.centered([[1.0, 0.1], [0.0, 1.0]])


def _random_psd(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, max(1, n - 1)))
    return a @ a.T


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 7))
def test_natural_metric_is_a_metric(seed, n):
    m = natural_metric(GaussianSpec.centered(_random_psd(seed, n)))
    assert np.all(m.dist >= 0)
    np.testing.assert_array_equal(m.dist, m.dist.T)
    assert m.triangle_violation() <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_psd_sqrt_reconstructs(seed, n):
    cov = _random_psd(seed, n)
    a = psd_sqrt(cov)
    np.testing.assert_allclose(a @ a.T, cov, atol=1e-10 * max(1.0, np.abs(cov).max()))


def test_sample_mean_and_determinism():
    spec = GaussianSpec.centered(np.eye(2))
    b1 = sample_gaussian(spec, 10**6, seed=7)
    assert np.all(np.abs(b1.rows.mean(axis=0)) < 5e-3)
    b2 = sample_gaussian(spec, 10**6, seed=7)
    assert np.array_equal(b1.rows, b2.rows)


def test_degenerate_sampling():
    spec = GaussianSpec(IndexSet.range(3), [1.0, -2.0, 0.5], np.zeros((3, 3)))
    rows = sample_gaussian(spec, 50, seed=1).rows
    assert np.all(rows == np.array([1.0, -2.0, 0.5]))


def test_sample_correlation():
    spec = GaussianSpec.centered([[1, 0.5], [0.5, 1]])
    rows = sample_gaussian(spec, 10**6, seed=11).rows
    assert np.corrcoef(rows.T)[0, 1] == pytest.approx(0.5, abs=5e-3)


@pytest.mark.parametrize("m", [10**4, 10**5])
def test_sample_covariance_lln(m):
    cov = np.array([[2.0, -0.3, 0.1], [-0.3, 1.0, 0.4], [0.1, 0.4, 0.5]])
    rows = sample_gaussian(GaussianSpec.centered(cov), m, seed=5).rows
    # entrywise sd of the sample covariance is sqrt((s_ii s_jj + s_ij^2) / m)
    sd = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2) / m)
    assert np.all(np.abs(np.cov(rows.T) - cov) <= 5 * sd)


def test_empirical_law_counts():
    law = empirical_law(SampleBatch(IndexSet.range(2), [[1, 0], [1, 0], [0, 1]]))
    np.testing.assert_array_equal(law.atoms, [[1, 0], [0, 1]])
    np.testing.assert_allclose(law.weights, [2 / 3, 1 / 3])


def test_empirical_law_point_mass():
    law = empirical_law(SampleBatch(IndexSet.range(3), [[0.25, -1.0, 2.0]]))
    assert law.k == 1 and law.weights[0] == 1.0


def test_empirical_law_converges_in_w1():
    p = DiscreteLaw(IndexSet.range(2), [[0, 0], [1, -1], [-2, 1]], [0.5, 0.3, 0.2])
    rng = np.random.default_rng(2)
    rows = p.atoms[p.sample_indices(rng, 10**4)]
    emp = empirical_law(SampleBatch(p.index, rows))
    assert wasserstein1(p, emp) < 0.1


def test_increment_check_gaussian_passes():
    spec = GaussianSpec.centered(_random_psd(4, 4))
    rep = subgaussian_increment_check(spec, natural_metric(spec), np.linspace(0.1, 6, 40))
    assert rep.passed


def test_increment_check_bounded_increments():
    # X_t - X_s = +-d(t, s) exactly, so the tail at x = 3 is zero
    law = DiscreteLaw.uniform([[0.0, 1.0, 3.0], [0.0, -1.0, -3.0]])
    metric = MetricOnT(law.index, [[0, 1, 3], [1, 0, 4], [3, 4, 0]])
    rep = subgaussian_increment_check(law, metric, [3.0])
    assert rep.passed and rep.details["worst_ratio"] == 0.0


def test_increment_check_rademacher_exact():
    # independent signs: |X_0 - X_1| = 2 with probability 1/2, d = sqrt(2)
    law = DiscreteLaw.uniform([[1, 1], [1, -1], [-1, 1], [-1, -1]])
    metric = natural_metric(GaussianSpec.centered(np.eye(2)))
    rep = subgaussian_increment_check(law, metric, [1.0])
    assert rep.passed
    assert rep.details["worst_ratio"] == pytest.approx(0.5 / (2 * math.exp(-0.5)), rel=1e-14)


def test_increment_check_detects_heavy_increments():
    law = DiscreteLaw(IndexSet.range(2), [[0, 0], [10, -10]], [0.9, 0.1])
    metric = MetricOnT(law.index, [[0, 1], [1, 0]])
    assert not subgaussian_increment_check(law, metric, [1, 2, 3]).passed


def test_increment_check_index_mismatch():
    law = DiscreteLaw.uniform([[1, -1], [-1, 1]], IndexSet(("a", "b")))
    metric = MetricOnT(IndexSet(("a", "c")), [[0, 1], [1, 0]])
    with pytest.raises(IndexMismatch):
        subgaussian_increment_check(law, metric, [1.0])


def test_increment_check_sample_batch():
    spec = GaussianSpec.centered(np.eye(3))
    batch = sample_gaussian(spec, 20_000, seed=2)
    assert subgaussian_increment_check(batch, natural_metric(spec), [0.5, 1, 2, 3]).passed


def test_centeredness():
    assert centeredness_check(DiscreteLaw.uniform([[1, -1], [-1, 1]]), tol=0).passed
    rep = centeredness_check(DiscreteLaw.point_mass([1, 0]))
    assert not rep.passed and rep.details["max_deviation"] == 1.0
    rows = sample_gaussian(GaussianSpec.centered(np.eye(3)), 500, seed=9).rows
    law = empirical_law(SampleBatch(IndexSet.range(3), rows)).centered()
    assert centeredness_check(law, tol=1e-12).passed


def test_law_validation():
    with pytest.raises(InputError):
        DiscreteLaw(IndexSet.range(2), [[0, 0]], [0.5])
    with pytest.raises(InputError):
        DiscreteLaw(IndexSet.range(2), [[0, 0], [1, 1]], [1.5, -0.5])
    with pytest.raises(InputError):
        MeasureOnT(IndexSet.range(2), [0.7, 0.7])
    with pytest.raises(InputError):
        IndexSet(("a", "a"))


def test_json_round_trip():
    law = DiscreteLaw(IndexSet(("a", "b")), [[0.1, -0.1], [1 / 3, 2.0]], [0.25, 0.75])
    back = DiscreteLaw.from_dict(json.loads(dumps(law.to_dict())))
    assert back.index == law.index
    assert np.array_equal(back.atoms, law.atoms) and np.array_equal(back.weights, law.weights)
    spec = GaussianSpec.centered(_random_psd(1, 3))
    back = GaussianSpec.from_dict(json.loads(dumps(spec.to_dict())))
    assert np.array_equal(back.cov, spec.cov)
    mu = MeasureOnT(IndexSet.range(3), [0.2, 0.3, 0.5])
    assert np.array_equal(MeasureOnT.from_dict(json.loads(dumps(mu.to_dict()))).probs, mu.probs)


def test_serializer_is_deterministic_and_unsigned_zero():
    text = dumps({"b": [-0.0, 1.0, 0.1], "a": np.float64(2)})
    assert text == '{\n  "b": [0.0, 1.0, 0.10000000000000001],\n  "a": 2.0\n}\n'
