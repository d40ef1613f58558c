"""Finite truncations of Read-type operators and certified checks on them."""

from .basis import (FVector, dual_norm, e_in_f, e_to_f, f_identity, f_to_e, lambda_log2,
                    layoff_weight, norm)
from .errors import ReadOpError
from .factorize import Factorization, build_factorization, check_kernel_localization, split_T0
from .operator import (SparseOperator, apply, apply_poly, assemble, column_Tf, operator_norm_bound,
                       polynomial_net, power_apply, projection_Q, sk_split)
from .poly import Polynomial
from .report import CertReport
from .schedule import (Schedule, ScheduleParams, build_schedule, build_schedule_multi,
                       classify_index, desk_params, sigma, validate_schedule)

__all__ = [
    "CertReport", "FVector", "Factorization", "Polynomial", "ReadOpError", "Schedule",
    "ScheduleParams", "SparseOperator", "apply", "apply_poly", "assemble", "build_factorization",
    "build_schedule", "build_schedule_multi", "check_kernel_localization", "classify_index",
    "column_Tf", "desk_params", "dual_norm", "e_in_f", "e_to_f", "f_identity", "f_to_e",
    "lambda_log2", "layoff_weight", "norm", "operator_norm_bound", "polynomial_net", "power_apply", "projection_Q",
    "sigma", "sk_split", "split_T0", "validate_schedule",
]
