"""Exponential tail bounds for normalized martingale maxima.

The pipeline has three legs: numeric convex-conjugate calculus for the
exponential-moment generators (:mod:`lilbound.phi`), a partition-optimized
block-sum bound for the maximum of S(n)/(sigma(n) v(n))
(:mod:`lilbound.engine`), and Monte Carlo plus exhaustive verification on
concrete martingale families (:mod:`lilbound.models`,
:mod:`lilbound.verify`).  Norm estimation from raw samples lives in
:mod:`lilbound.norms`; the ``lilbound`` command in :mod:`lilbound.cli`.
"""
from .engine import (BlockSumResult, BoundReport, NormingSequence, Partition,
                     RateFit, SigmaProfile, block_sum, block_term,
                     constant_norming, dp_partition_oracle, fit_rate_form,
                     geometric_partition, geometric_prefix_sum,
                     iterated_log_norming, optimized_bound, shifted_norming,
                     single_time_lower_bound, table_norming, table_profile)
from .errors import (CalibrationError, CenteringError, DomainError,
                     LilboundError, NonconvergenceError,
                     UnreachableValueError)
from .models import (ChaosState, MartingaleModel, chaos_identity_check,
                     chaos_model, power_law_surrogate, weighted_iid_model)
from .norms import (NormEstimate, Sample, bphi_norm, estimate_norms,
                    gnorm_tail_bound, gpsi_norm, tail_function)
from .phi import (ConjugateGrid, PhiFunction, PhiReport, chi_square_phi,
                  conjugate, conjugate_function, conjugate_grid,
                  conjugate_many, cosh_phi, phi2, phi_from_csv,
                  phi_from_table, phi_inverse, power_phi, psi, standard_grid,
                  validate_phi)
from .verify import (CalibrationResult, DoobReport, ExactTail,
                     SquaredWalkProbe, TailEstimate, TrajectoryStats,
                     calibrate_constant, doob_moment_check,
                     empirical_sup_tail, exact_sup_tail,
                     hartman_wintner_probe, lil_trajectory_stats,
                     single_time_tail, wilson_interval, worker_count)

__version__ = "0.1.0"

__all__ = [
    "BlockSumResult", "BoundReport", "CalibrationError", "CalibrationResult",
    "CenteringError", "ChaosState", "ConjugateGrid", "DoobReport",
    "DomainError", "ExactTail", "LilboundError", "MartingaleModel",
    "NonconvergenceError", "NormEstimate", "NormingSequence", "Partition",
    "PhiFunction", "PhiReport", "RateFit", "Sample", "SigmaProfile",
    "SquaredWalkProbe", "TailEstimate", "TrajectoryStats",
    "UnreachableValueError", "block_sum", "block_term", "bphi_norm",
    "calibrate_constant", "chaos_identity_check", "chaos_model",
    "chi_square_phi", "conjugate", "conjugate_function", "conjugate_grid",
    "conjugate_many", "constant_norming", "cosh_phi", "doob_moment_check",
    "dp_partition_oracle", "empirical_sup_tail", "estimate_norms",
    "exact_sup_tail", "fit_rate_form", "geometric_partition",
    "geometric_prefix_sum", "gnorm_tail_bound", "gpsi_norm",
    "hartman_wintner_probe", "iterated_log_norming", "lil_trajectory_stats",
    "optimized_bound", "phi2", "phi_from_csv", "phi_from_table",
    "phi_inverse", "power_law_surrogate", "power_phi", "psi",
    "shifted_norming", "single_time_lower_bound", "single_time_tail",
    "standard_grid", "table_norming", "table_profile", "tail_function",
    "validate_phi", "weighted_iid_model", "wilson_interval",
    "worker_count",
]
