"""Numerical checks comparing suprema of subgaussian and Gaussian processes.

Fernique's functional as a transportation LP, the tensorized processes
whose suprema converge to it, chaining bounds for stationary processes,
and convex-order checks of subgaussian laws against scaled Gaussians.
"""
__version__ = "0.1.0"

from .core import (CheckReport, DiscreteLaw, GaussianSpec, IndexSet, MeasureOnT, MetricOnT,
                   SampleBatch, centeredness_check, empirical_law, natural_metric,
                   sample_gaussian, subgaussian_increment_check)
from .transport import (TransportPlan, continuity_gap_tv, continuity_gap_w1, fernique_functional,
                        solve_transport, strassen_feasibility, total_variation, wasserstein1)
from .tensorization import (RationalMeasure, convergence_study, enumerate_sequence_class,
                            mc_sup_tensorized, stationarity_check, tensor_gaussian_cov,
                            tensor_metric)
from .chaining import covering_number, entropy_integral, fernique_sandwich_check, verify_stationary
from .comparison import (MaxAffine, convex_order_check, estimate_constant, expected_sup_shifted,
                         sup_decomposition_check)
