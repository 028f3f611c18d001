"""bootperc: bootstrap percolation on product-weight random graphs.

Samplers for inhomogeneous random graphs driven by vertex weights,
threshold-infection dynamics on them, finite-level approximations of the
weight law, the fluid-limit ODE system of the exposure process, and the
fixed-point theory predicting the final infected fraction, plus a CLI
that packages the standard experiments.
"""

from .weights import (WeightSequence, WeightDistribution, make_point_mass,
                      make_power_law, weight_sequence_from_values,
                      empirical_cdf, c_gamma, w_gamma, sample_size_biased,
                      check_regularity)
from .graphgen import (SparseGraph, CouplingTranscript, sample_chung_lu,
                       sample_chung_lu_prime, sample_coupled_minus,
                       naive_chung_lu, expected_degree_report)
from .percolation import (PercolationResult, PercolationTrajectory,
                          run_bootstrap, run_bootstrap_sync, seed_bernoulli,
                          verify_fixed_point, run_sequential_exposure,
                          deviation_report)
from .discretise import (Partition, Discretisation, DiscretisedSequence,
                         build_partition, discretise_minus, discretise_plus,
                         build_discretisation, check_f_convergence,
                         sandwich_experiment)
from .theory import (FixedPointResult, NumericFailure, psi_r, f_r, f_r_prime,
                     solve_fixed_point, final_fraction,
                     check_derivative_condition, powerlaw_fixed_point,
                     critical_density, expected_psi)
from .odeflow import (OdeSolution, ode_rhs, initial_state, integrate,
                      closed_form_gamma, closed_form_nu_mu,
                      discretised_fixed_point, alpha)

__version__ = "0.1.0"
