"""Generalized permutation tests for non-exchangeable null models.

A generalized permutation test weights every image of the observed point by
its null density, so it keeps exact level under nulls that are not invariant
to coordinate permutations.  The package provides the exact most powerful
test by orbit enumeration, sample-based approximations, p-value estimators
with concentration bounds, and Gaussian linear-model applications.
"""

__version__ = "0.1.0"

from .errors import (CompositionLimit, DimensionMismatch, DiscontinuityPoint, EmptySample,
                     ExhaustiveLimit, GenpermError, InputError, MissingSampler, NotPositiveDefinite,
                     NumericalError, OrbitMassZero)
from .perm import (Permutation, all_permutations, apply, compose, enumerate_all, identity,
                   induced_permutation, inverse, locate_region, sample_uniform)
from .densities import (DensityModel, GaussianSpec, VcCovarianceSpec, ar1_covariance,
                        build_vc_covariance, gaussian_model, l1_distance_estimate,
                        linear_exp_model, mvn_log_density)
from .exact import (OrbitScan, RatioOrder, TestDecision, bias_bound, exact_significance,
                    exactness_check, likelihood_ratio, mp_criterion_diagnostic, mp_test,
                    scan_orbit, weights)
from .approx import (approx_test_from_sample, bernstein_test_value, chi, concentration_tail,
                     convergence_envelope, multinomial_kernel, sample_scan)
from .significance import (BoundReport, SignificanceEstimate, direct_bounds, direct_estimate,
                           geometric_estimate, indirect_bounds, indirect_estimate_classprob)
from .linmodel import (LinearModelSpec, VcTestSpec, gls_beta, lm_log_ratio, np_counterexample_report,
                       s_const, v1, v1_order, v2, v2_order, vc_test)
