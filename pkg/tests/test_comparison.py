import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subgcomp.comparison import (GaussianExpectation, MaxAffine, argmax_law, convex_order_check,
                                 estimate_constant, expected_sup_shifted,
                                 sup_decomposition_check, witness_family)
from subgcomp.core import DiscreteLaw, IndexSet, MeasureOnT
from subgcomp.errors import InputError, NonpositiveC, PreconditionFailed
from subgcomp.transport import fernique_functional, gaussian_grid

TWO_ATOM = DiscreteLaw.uniform([[1.0, -1.0], [-1.0, 1.0]])
RADEMACHER = DiscreteLaw.uniform([[-1.0], [1.0]])
ABS = MaxAffine([[1.0], [-1.0]], [0.0, 0.0], "|x|")


def test_expected_sup_shifted_examples():
    assert expected_sup_shifted(DiscreteLaw.point_mass([0.0, 0.0]), [0, 0]) == 0.0
    assert expected_sup_shifted(TWO_ATOM, [0, 0]) == 1.0
    assert expected_sup_shifted(TWO_ATOM, [10, 0]) == 10.0


def test_decomposition_dominant_entry():
    law = DiscreteLaw(IndexSet.range(3), [[0.3, -1, 0.2], [-0.5, 0.4, 1.0]], [0.6, 0.4])
    m = [0.0, 50.0, 0.0]
    assert argmax_law(law, m).probs.tolist() == [0.0, 1.0, 0.0]
    rep = sup_decomposition_check(law, m)
    assert rep.passed
    assert rep.details["lhs"] == pytest.approx(law.mean()[1] + 50.0, abs=1e-12)


def test_decomposition_two_atom():
    rep = sup_decomposition_check(TWO_ATOM, [0.0, 0.0])
    assert rep.passed and rep.details["lhs"] == 1.0 == rep.details["rhs"]
    assert rep.details["mu_star"] == [0.5, 0.5]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 4))
def test_decomposition_random(seed, k, n):
    rng = np.random.default_rng(seed)
    law = DiscreteLaw(IndexSet.range(n), rng.standard_normal((k, n)), rng.dirichlet(np.ones(k)))
    m = rng.standard_normal(n)
    rep = sup_decomposition_check(law, m)
    assert rep.passed, rep.details
    # no other measure beats mu* either
    for _ in range(5):
        mu = MeasureOnT(law.index, rng.dirichlet(np.ones(n)))
        assert fernique_functional(law, mu).value + mu.probs @ m <= rep.details["lhs"] + 1e-12


def test_max_affine_evaluation_and_roundtrip():
    f = MaxAffine([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.5])
    np.testing.assert_array_equal(f([[1.0, 0.0], [0.0, 1.0]]), [1.0, 1.5])
    g = MaxAffine.from_dict(f.to_dict())
    assert np.array_equal(g.slopes, f.slopes) and np.array_equal(g.offsets, f.offsets)
    with pytest.raises(InputError):
        MaxAffine([[1.0]], [0.0, 1.0])


def test_quadrature_moments():
    gauss = GaussianExpectation(1)
    mean, se = gauss(ABS, 1.0)
    assert se == 0.0 and mean == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)
    quad = GaussianExpectation(1, "quadrature")
    rng = np.random.default_rng(0)
    for f in witness_family(1, random=10, seed=2):
        c = rng.uniform(0.2, 3)
        assert quad(f, c)[0] == pytest.approx(gauss(f, c)[0], abs=1e-5)
    g2 = GaussianExpectation(2)
    norm1 = MaxAffine([[1, 1], [1, -1], [-1, 1], [-1, -1]], [0, 0, 0, 0])
    err = abs(g2(norm1, 1.0)[0] - 2 * math.sqrt(2 / math.pi))
    assert err <= g2.bias_bound(norm1, 1.0)


def test_affine_witness_gap_zero():
    f = MaxAffine([[0.3, -0.7]], [1.25])
    for c in (0.5, 1.0, 3.0):
        rep = convex_order_check(TWO_ATOM, c, [f])
        assert rep.worst_gap == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("c", [0.1, 1.0, 2.0])
def test_point_mass_always_dominated(c):
    law = DiscreteLaw.point_mass([0.0, 0.0])
    rep = convex_order_check(law, c, witness_family(2, random=10, seed=1))
    assert rep.passed and rep.worst_gap <= 1e-12


@pytest.mark.parametrize("c", [1.0, 1.2, 1.25, 1.26, 1.3, 2.0])
def test_rademacher_abs_gap_closed_form(c):
    rep = convex_order_check(RADEMACHER, c, [ABS])
    assert rep.gaps[0] == pytest.approx(1 - c * math.sqrt(2 / math.pi), abs=1e-9)
    assert rep.passed == (c >= math.sqrt(math.pi / 2))


def test_reflexivity_on_scaled_gaussian():
    # X = c' G on the quadrature grid is dominated by c G at c = c' exactly
    gauss = GaussianExpectation(1, "quadrature")
    law = DiscreteLaw(IndexSet.range(1), 0.8 * gauss.points, gauss.weights)
    rep = convex_order_check(law, 0.8, witness_family(1, random=20, seed=3), gauss,
                             check_preconditions=False)
    assert rep.passed and abs(rep.worst_gap) < 1e-12


def test_jensen_lower_bound():
    fam = witness_family(2, random=10, seed=4, law=TWO_ATOM)
    for f in fam:
        assert TWO_ATOM.weights @ f(TWO_ATOM.atoms) >= f([[0.0, 0.0]])[0] - 1e-12


def test_nonpositive_c():
    with pytest.raises(NonpositiveC):
        convex_order_check(RADEMACHER, 0.0, [ABS])


def test_preconditions():
    with pytest.raises(PreconditionFailed):
        convex_order_check(DiscreteLaw.point_mass([1.0]), 1.0, [ABS])
    heavy = DiscreteLaw(IndexSet.range(1), [[-10.0], [0.0], [10.0]], [0.05, 0.9, 0.05])
    with pytest.raises(PreconditionFailed):
        convex_order_check(heavy, 1.0, [ABS])


CUBE4 = DiscreteLaw.uniform(1.0 - 2.0 * ((np.arange(16)[:, None] >> np.arange(4)) & 1))


def test_mc_violation_reproduces_with_fresh_seed():
    law = CUBE4
    fam = witness_family(4, random=0, seed=0, law=law)
    rep = convex_order_check(law, 0.5, fam, GaussianExpectation(4, "mc", 100_000, seed=1))
    assert rep.violating_witness is not None
    again = convex_order_check(law, 0.5, [rep.violating_witness],
                               GaussianExpectation(4, "mc", 100_000, seed=2))
    combined = math.hypot(rep.stderrs[rep.worst_index], again.stderrs[0])
    assert abs(again.gaps[0] - rep.worst_gap) <= 3 * combined


def test_mc_gap_is_monotone_in_c():
    law = CUBE4
    fam = witness_family(4, random=6, seed=2, law=law)
    rep = estimate_constant(law, fam, np.linspace(0.5, 2.0, 16),
                            GaussianExpectation(4, "mc", 20_000, seed=3))
    gaps = [g for _, g in rep.gap_curve()]
    assert all(a >= b for a, b in zip(gaps, gaps[1:]))


def test_estimate_constant_point_mass():
    rep = estimate_constant(DiscreteLaw.point_mass([0.0]), [ABS], [0.5, 1.0, 1.5])
    assert rep.smallest_c == 0.5


def test_estimate_constant_rademacher():
    grid = np.round(np.arange(1.0, 2.0001, 0.01), 12)
    rep = estimate_constant(RADEMACHER, witness_family(1, random=8, seed=5, law=RADEMACHER), grid)
    assert rep.smallest_c >= math.sqrt(math.pi / 2)
    assert rep.smallest_c - math.sqrt(math.pi / 2) <= 0.01
    assert rep.to_csv().splitlines()[0] == "c,worst_gap,worst_witness_id,pass"


def test_bad_c_grid():
    with pytest.raises(InputError):
        estimate_constant(RADEMACHER, [ABS], [1.0, 0.5])
