"""Left-preconditioned MGS-GMRES with Givens rotations, no restarting.

The solver runs entirely in a uniform working format: basis vectors,
Hessenberg entries, rotations, and the small triangular solve all round
there. Products with A go through spmv_uniform in a (possibly different)
matvec format; the preconditioner is applied through its bucketed
representation when one is supplied, or uniformly in the working format
for a plain sparse matrix.

Operation order is fixed and documented so an independent reimplementation
can reproduce results bitwise: dot products are numpy reductions over the
working dtype; the orthogonalization update is z = z - (h * V_i) with both
steps rounded elementwise; a rotation maps (a, b) to ((c*a) + (s*b),
(c*b) - (s*a)); the new rotation uses nu = sqrt((h_jj * h_jj) +
(h_next * h_next)), c = h_jj / nu, s = h_next / nu, and the rotated
diagonal entry is assigned nu directly.

Convergence is declared on the rotation-maintained residual estimate
|g_{j+1}| / |g_0| <= tol. A zero subdiagonal entry (happy breakdown) drives
that estimate to exactly zero, so breakdown reports as convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bucketed import BucketedMatrix, bspmv
from .precision import DOUBLE, FpFormat, np_dtype, parse_format
from .sparsemat import SparseMatrix, spmv_uniform

__all__ = ["GmresConfig", "GmresResult", "gmres_left"]


@dataclass
class GmresConfig:
    tol: float = 1e-8
    max_iters: int | None = None  # defaults to the problem size
    fmt_work: FpFormat = DOUBLE
    fmt_matvec: FpFormat | None = None

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0):
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        self.fmt_work = parse_format(self.fmt_work)
        self.fmt_matvec = (
            self.fmt_work if self.fmt_matvec is None
            else parse_format(self.fmt_matvec)
        )


@dataclass
class GmresResult:
    d: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    converged: bool = False
    breakdown: bool = False
    precond_rhs: np.ndarray | None = None


def _apply_precond(m, w, fmt_work):
    if isinstance(m, BucketedMatrix):
        return bspmv(m, w)
    return spmv_uniform(m, w, fmt_work)


def gmres_left(a: SparseMatrix, m, r, cfg: GmresConfig) -> GmresResult:
    """Solve (M A) d = M r, returning d in the working format.

    m may be a BucketedMatrix (applied through bspmv) or a SparseMatrix
    (applied uniformly in the working format). Raises FloatingPointError,
    naming the iteration, if an iterate stops being finite.
    """
    dt = np_dtype(cfg.fmt_work)
    if dt is None:
        raise ValueError("GMRES working format must be half, single, or double")
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (a.n_rows,):
        raise ValueError(f"r has shape {r.shape}, expected ({a.n_rows},)")
    n = a.n_rows
    kmax = cfg.max_iters if cfg.max_iters is not None else n

    with np.errstate(over="ignore", invalid="ignore"):
        s = _apply_precond(m, r, cfg.fmt_work).astype(dt)
        if not np.all(np.isfinite(s)):
            raise FloatingPointError(
                "preconditioned residual not finite at iteration 0"
            )
        beta = np.sqrt(np.add.reduce(s * s))
        result = GmresResult(
            d=np.zeros(n), iterations=0, converged=True,
            precond_rhs=s.astype(np.float64),
        )
        if beta == 0:
            return result

        v = np.zeros((kmax + 1, n), dtype=dt)
        h = np.zeros((kmax + 1, kmax), dtype=dt)
        giv_c = np.zeros(kmax, dtype=dt)
        giv_s = np.zeros(kmax, dtype=dt)
        g = np.zeros(kmax + 1, dtype=dt)
        v[0] = s / beta
        g[0] = beta
        converged = False
        breakdown = False
        its = 0

        for j in range(kmax):
            w = spmv_uniform(a, v[j].astype(np.float64), cfg.fmt_matvec)
            z = _apply_precond(m, w, cfg.fmt_work).astype(dt)
            for i in range(j + 1):
                hij = np.add.reduce(v[i] * z)
                h[i, j] = hij
                z = z - (hij * v[i])
            hnext = np.sqrt(np.add.reduce(z * z))
            h[j + 1, j] = hnext
            if not (np.all(np.isfinite(h[: j + 2, j])) and np.isfinite(hnext)):
                raise FloatingPointError(
                    f"GMRES iterate not finite at iteration {j + 1}"
                )
            for i in range(j):
                hi = h[i, j]
                hk = h[i + 1, j]
                h[i, j] = (giv_c[i] * hi) + (giv_s[i] * hk)
                h[i + 1, j] = (giv_c[i] * hk) - (giv_s[i] * hi)
            nu = np.sqrt((h[j, j] * h[j, j]) + (hnext * hnext))
            if nu == 0:
                raise FloatingPointError(
                    f"GMRES stalled on a singular operator at iteration {j + 1}"
                )
            giv_c[j] = h[j, j] / nu
            giv_s[j] = hnext / nu
            h[j, j] = nu
            h[j + 1, j] = 0
            g[j + 1] = -(giv_s[j] * g[j])
            g[j] = giv_c[j] * g[j]
            its = j + 1
            rel = float(abs(g[j + 1]) / beta)
            result.residuals.append(rel)
            if rel <= cfg.tol:
                converged = True
                breakdown = hnext == 0
                break
            if hnext == 0:
                converged = True
                breakdown = True
                break
            if j + 1 < kmax:
                v[j + 1] = z / hnext

        # Triangular solve for the coefficients, then the correction.
        y = np.zeros(its, dtype=dt)
        for i in range(its - 1, -1, -1):
            acc = g[i]
            if i + 1 < its:
                acc = acc - np.dot(h[i, i + 1: its], y[i + 1: its])
            y[i] = acc / h[i, i]
        d = np.zeros(n, dtype=dt)
        for jj in range(its):
            d = d + (y[jj] * v[jj])

    result.d = d.astype(np.float64)
    result.iterations = its
    result.converged = converged
    result.breakdown = breakdown
    return result
