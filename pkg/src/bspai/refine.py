"""GMRES-based iterative refinement around a bucketed approximate inverse.

Five formats cooperate: the approximate inverse is constructed in a build
format, the solution lives in a working format, residuals are evaluated in
a (higher) residual format, and the inner GMRES runs its vectors in a
working format of its own with matrix products in yet another. The default
pairing applies the preconditioner through its bucketed representation;
the uniform variant applies it in the GMRES working format and is the
reference the bucketed path degenerates to with a single bucket.

Each step solves (M A) d = M r by GMRES, updates x in the working format,
and measures instrumentation errors against a double-double reference
solution: the relative forward error and the normwise backward error
||b - A x|| / (||A|| ||x|| + ||b||), numerators in double-double. The loop
stops when both fall under theta * u of the working format (theta defaults
to max(10, sqrt(n))), when the step budget runs out, or when the forward
error grows twice in a row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .bucketed import (
    BucketedMatrix,
    BucketScheme,
    bspmv,
    build_buckets,
    storage_ratio,
)
from .doubledouble import DDVector
from .krylov import GmresConfig, gmres_left
from .precision import DOUBLE, FpFormat, QUAD, parse_format, round_vec
from .sparsemat import SparseMatrix, norm_inf, spmv_uniform
from .spai import SpaiConfig, spai_right_preconditioner

__all__ = [
    "IrConfig",
    "IrStep",
    "IrReport",
    "bspai_gmres_ir",
    "spai_gmres_ir",
    "reference_solution",
]


@dataclass
class IrConfig:
    spai: SpaiConfig
    bucket: BucketScheme | None = None
    fmt_f: FpFormat = DOUBLE
    fmt_w: FpFormat = DOUBLE
    fmt_r: FpFormat = QUAD
    fmt_g: FpFormat | None = None
    fmt_p: FpFormat | None = None
    tol: float = 1e-8
    i_max: int = 10
    theta_f: float | None = None  # None resolves to max(10, sqrt(n))
    theta_b: float | None = None
    record_solves: bool = False

    def __post_init__(self):
        self.fmt_f = parse_format(self.fmt_f)
        self.fmt_w = parse_format(self.fmt_w)
        self.fmt_r = parse_format(self.fmt_r)
        self.fmt_g = self.fmt_w if self.fmt_g is None else parse_format(self.fmt_g)
        self.fmt_p = self.fmt_w if self.fmt_p is None else parse_format(self.fmt_p)
        if not (self.fmt_f.unit_roundoff >= self.fmt_w.unit_roundoff
                >= self.fmt_r.unit_roundoff):
            raise ValueError(
                "format precisions must be ordered: build <= working <= residual"
            )
        if self.spai.build_fmt.name != self.fmt_f.name:
            raise ValueError("spai.build_fmt must match fmt_f")
        if self.i_max < 1:
            raise ValueError("i_max must be positive")


@dataclass
class IrStep:
    gmres_iterations: int
    forward_error: float
    backward_error: float
    gmres_converged: bool
    solve_data: dict | None = None  # populated only under record_solves


@dataclass
class IrReport:
    steps: list
    initial_forward_error: float
    initial_backward_error: float
    converged: bool
    total_iterations: int
    kappa_ma: float
    occupancies: list | None
    storage: float
    precond_nnz: int
    x: np.ndarray

    @property
    def n_steps(self):
        return len(self.steps)

    def iterations_per_step(self):
        return [s.gmres_iterations for s in self.steps]

    def to_json(self) -> str:
        return json.dumps(
            {
                "converged": self.converged,
                "total_iterations": self.total_iterations,
                "iterations_per_step": self.iterations_per_step(),
                "forward_errors": [s.forward_error for s in self.steps],
                "backward_errors": [s.backward_error for s in self.steps],
                "initial_forward_error": self.initial_forward_error,
                "initial_backward_error": self.initial_backward_error,
                "kappa_ma": self.kappa_ma,
                "occupancies": self.occupancies,
                "storage": self.storage,
                "precond_nnz": self.precond_nnz,
            }
        )


def reference_solution(a: SparseMatrix, b) -> DDVector:
    """Solve A x = b by dense LU carried out entirely in double-double."""
    if a.n_rows != a.n_cols:
        raise ValueError("matrix must be square")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.n_rows,):
        raise ValueError(f"b has shape {b.shape}, expected ({a.n_rows},)")
    hi = a.to_dense()
    lo = np.zeros_like(hi)
    piv = np.zeros(a.n_rows, dtype=np.int64)
    bad = _kernels.dd_lu_factor(hi, lo, piv)
    if bad >= 0:
        raise np.linalg.LinAlgError(
            f"matrix is singular: zero pivot in column {bad}"
        )
    xh = np.zeros(a.n_rows)
    xl = np.zeros(a.n_rows)
    _kernels.dd_lu_solve(hi, lo, piv, b, np.zeros_like(b), xh, xl)
    return DDVector(xh, xl)


def _residual_dd(a: SparseMatrix, x, b) -> DDVector:
    hi = np.zeros(a.n_rows)
    lo = np.zeros(a.n_rows)
    _kernels.dd_csr_matvec(a.row_ptr, a.col_idx, a.values, x, hi, lo)
    return DDVector(hi, lo).rsub(b)


def _residual_in(a: SparseMatrix, x, b, fmt) -> np.ndarray:
    """b - A x with products and subtractions rounded in fmt."""
    if fmt.name == "quad":
        return _residual_dd(a, x, b).to_float64()
    ax = spmv_uniform(a, x, fmt)
    return round_vec(np.asarray(b, dtype=np.float64) - ax, fmt)


def _instrument(a, x, b, x_ref: DDVector, na: float):
    fe = x_ref.rsub(x).inf_norm() / x_ref.inf_norm()
    r = _residual_dd(a, x, b)
    be = r.inf_norm() / (na * float(np.max(np.abs(x))) + float(np.max(np.abs(b))))
    return float(fe), float(be)


def _kappa_inf_dense(p: np.ndarray) -> float:
    try:
        inv = np.linalg.inv(p)
    except np.linalg.LinAlgError:
        return float("inf")
    if not np.all(np.isfinite(inv)):
        return float("inf")
    return float(np.abs(p).sum(axis=1).max() * np.abs(inv).sum(axis=1).max())


class _BucketedPrecond:
    def __init__(self, mb: BucketedMatrix):
        self.mb = mb

    def apply(self, w):
        return bspmv(self.mb, w)

    def gmres_operand(self):
        return self.mb

    def occupancies(self):
        return self.mb.occupancy_totals()

    def storage(self):
        return storage_ratio(self.mb)

    def nnz(self):
        return self.mb.nnz

    def effective_dense(self):
        return self.mb.effective_matrix().to_dense()


class _UniformPrecond:
    def __init__(self, m: SparseMatrix, fmt: FpFormat):
        self.m = m
        self.fmt = fmt

    def apply(self, w):
        return spmv_uniform(self.m, w, self.fmt)

    def gmres_operand(self):
        return self.m

    def occupancies(self):
        return None

    def storage(self):
        return 1.0

    def nnz(self):
        return self.m.nnz

    def effective_dense(self):
        eff = round_vec(self.m.values, self.fmt)
        out = np.zeros((self.m.n_rows, self.m.n_cols))
        out[self.m.entry_rows(), self.m.col_idx] = eff
        return out


def _drive(a: SparseMatrix, b, cfg: IrConfig, strategy, x_ref):
    n = a.n_rows
    if a.n_rows != a.n_cols:
        raise ValueError("matrix must be square")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"b has shape {b.shape}, expected ({n},)")
    if not np.any(b):
        raise ValueError("right-hand side must be nonzero")
    u = cfg.fmt_w.unit_roundoff
    theta_f = cfg.theta_f if cfg.theta_f is not None else max(10.0, math.sqrt(n))
    theta_b = cfg.theta_b if cfg.theta_b is not None else max(10.0, math.sqrt(n))
    b_u = round_vec(b, cfg.fmt_w)
    if x_ref is None:
        x_ref = reference_solution(a, b_u)
    na = norm_inf(a)

    x = round_vec(strategy.apply(b_u), cfg.fmt_w)
    fe0, be0 = _instrument(a, x, b_u, x_ref, na)
    converged = fe0 <= theta_f * u and be0 <= theta_b * u
    steps = []
    prev_fe = fe0
    grew = 0
    gm_cfg = GmresConfig(tol=cfg.tol, fmt_work=cfg.fmt_g, fmt_matvec=cfg.fmt_p)

    while not converged and len(steps) < cfg.i_max:
        r = _residual_in(a, x, b_u, cfg.fmt_r)
        r_u = round_vec(r, cfg.fmt_w)
        res = gmres_left(a, strategy.gmres_operand(), r_u, gm_cfg)
        x = round_vec(x + res.d, cfg.fmt_w)
        fe, be = _instrument(a, x, b_u, x_ref, na)
        data = None
        if cfg.record_solves:
            data = {"r": r_u, "s": res.precond_rhs, "d": res.d}
        steps.append(IrStep(res.iterations, fe, be, res.converged, data))
        if fe <= theta_f * u and be <= theta_b * u:
            converged = True
            break
        # two steps without strict improvement: diverging or stalled
        # (a stall happens when the correction rounds to zero in u)
        grew = grew + 1 if fe >= prev_fe else 0
        prev_fe = fe
        if grew >= 2:
            break

    kappa = _kappa_inf_dense(strategy.effective_dense() @ a.to_dense())
    return IrReport(
        steps=steps,
        initial_forward_error=fe0,
        initial_backward_error=be0,
        converged=converged,
        total_iterations=sum(s.gmres_iterations for s in steps),
        kappa_ma=kappa,
        occupancies=strategy.occupancies(),
        storage=strategy.storage(),
        precond_nnz=strategy.nnz(),
        x=x,
    )


def bspai_gmres_ir(a: SparseMatrix, b, cfg: IrConfig, *, x_ref=None,
                   precomputed_m: SparseMatrix | None = None) -> IrReport:
    """Iterative refinement with the bucketed preconditioner application."""
    if cfg.bucket is None:
        raise ValueError("cfg.bucket is required for the bucketed solver")
    m = precomputed_m
    if m is None:
        m = spai_right_preconditioner(a, cfg.spai)
    mb = build_buckets(m, cfg.bucket)
    return _drive(a, b, cfg, _BucketedPrecond(mb), x_ref)


def spai_gmres_ir(a: SparseMatrix, b, cfg: IrConfig, *, x_ref=None,
                  precomputed_m: SparseMatrix | None = None) -> IrReport:
    """Uniform-precision reference: the preconditioner applied in fmt_g."""
    m = precomputed_m
    if m is None:
        m = spai_right_preconditioner(a, cfg.spai)
    return _drive(a, b, cfg, _UniformPrecond(m, cfg.fmt_g), x_ref)
