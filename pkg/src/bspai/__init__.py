"""Adaptive-precision sparse approximate inverse preconditioning.

The package builds sparse approximate inverses column by column in a
reduced working precision, stores them in per-row precision buckets, and
uses the bucketed operator inside a GMRES-based iterative refinement
solver that mixes up to five floating point formats.
"""

from .bucketed import (BucketScheme, BucketedMatrix, apply_error_bound,
                       bspmv, build_buckets, c_constant,
                       normwise_backward_error, storage_fraction,
                       storage_ratio)
from .krylov import GmresConfig, GmresResult, gmres_left
from .precision import (DOUBLE, DROP, HALF, QUAD, SINGLE, FpFormat,
                        parse_format, round_to, round_vec, unit_roundoff)
from .refine import (IrConfig, IrReport, IrStep, bspai_gmres_ir,
                     reference_solution, spai_gmres_ir)
from .sparsemat import (MatrixMarketError, SparseMatrix, kappa_inf, norm_inf,
                        norm_max, read_matrix_market, spmv_uniform,
                        write_matrix_market)
from .spai import SpaiConfig, SpaiReport, spai_build, spai_right_preconditioner

__version__ = "0.1.0"

__all__ = [
    "BucketScheme",
    "BucketedMatrix",
    "FpFormat",
    "GmresConfig",
    "GmresResult",
    "IrConfig",
    "IrReport",
    "IrStep",
    "MatrixMarketError",
    "SpaiConfig",
    "SpaiReport",
    "SparseMatrix",
    "HALF",
    "SINGLE",
    "DOUBLE",
    "QUAD",
    "DROP",
    "apply_error_bound",
    "bspai_gmres_ir",
    "bspmv",
    "build_buckets",
    "c_constant",
    "gmres_left",
    "kappa_inf",
    "norm_inf",
    "norm_max",
    "normwise_backward_error",
    "parse_format",
    "read_matrix_market",
    "reference_solution",
    "round_to",
    "round_vec",
    "spai_build",
    "spai_gmres_ir",
    "spai_right_preconditioner",
    "spmv_uniform",
    "storage_fraction",
    "storage_ratio",
    "unit_roundoff",
    "write_matrix_market",
    "__version__",
]
