"""Sparse approximate inverse construction with adaptive pattern growth.

Columns of M are computed independently: minimize ||A m_k - e_k||_2 over a
sparsity pattern J_k, then enlarge J_k a few indices at a time until the
residual drops below a tolerance or the growth budget is spent. Candidate
indices are scored by how much a one-dimensional update along each column
would reduce the residual, and only candidates scoring no worse than the
mean are admitted, at most beta per growth iteration, index order breaking
ties.

The least-squares solves and residual norms run in a configurable
construction format. For double and single they use the native LAPACK QR
on the densified submatrix; for half they use a modified Gram-Schmidt QR
with every scalar operation rounded. Candidate scoring is always evaluated
in double: it only steers pattern selection and a low-precision score would
make the selection, not the arithmetic, the bottleneck.

The least-squares row set is the shadow of J_k together with row k itself,
so the reported residual always sees the unit right-hand side even when the
diagonal entry is missing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .precision import DOUBLE, FpFormat, parse_format
from .sparsemat import SparseMatrix, column_scale_transpose

__all__ = ["SpaiConfig", "SpaiReport", "spai_build", "spai_right_preconditioner"]


@dataclass
class SpaiConfig:
    eps: float = 0.5
    alpha: int = 5
    beta: int = 8
    initial_pattern: str = "identity"
    build_fmt: FpFormat = DOUBLE

    def __post_init__(self):
        self.build_fmt = parse_format(self.build_fmt)
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.beta < 1:
            raise ValueError("beta must be at least 1")
        if self.initial_pattern not in ("identity", "pattern-of-A"):
            raise ValueError("initial_pattern must be 'identity' or 'pattern-of-A'")
        if self.build_fmt.name not in ("half", "single", "double"):
            raise ValueError("construction format must be half, single, or double")


@dataclass
class SpaiReport:
    """Per-column construction outcome.

    residual_norms holds ||e_k - A m_k||_2 recomputed in double against the
    unrounded input; eps_exit marks columns whose growth loop stopped because
    the construction-format residual met eps; capped counts the rest.
    """

    residual_norms: np.ndarray
    eps_exit: np.ndarray
    pattern_sizes: np.ndarray
    capped: int
    eps: float
    build_fmt_name: str = "double"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "eps": self.eps,
                "build_fmt": self.build_fmt_name,
                "capped": self.capped,
                "residual_norms": self.residual_norms.tolist(),
                "eps_exit": self.eps_exit.astype(int).tolist(),
                "pattern_sizes": self.pattern_sizes.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SpaiReport":
        d = json.loads(text)
        return cls(
            residual_norms=np.asarray(d["residual_norms"], dtype=np.float64),
            eps_exit=np.asarray(d["eps_exit"], dtype=bool),
            pattern_sizes=np.asarray(d["pattern_sizes"], dtype=np.int64),
            capped=int(d["capped"]),
            eps=float(d["eps"]),
            build_fmt_name=d["build_fmt"],
        )


def _back_substitute(r, y):
    # Upper-triangular solve in the dtype of r, row by row.
    p = r.shape[0]
    m = np.zeros(p, dtype=r.dtype)
    for i in range(p - 1, -1, -1):
        acc = y[i]
        if i + 1 < p:
            acc = acc - np.dot(r[i, i + 1:], m[i + 1:])
        m[i] = acc / r[i, i]
    return m


def _lstsq_native(abar, e, dtype):
    """Solve min ||abar m - e||_2 via QR in a native dtype."""
    a = abar.astype(dtype)
    b = e.astype(dtype)
    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    if len(diag) == 0 or diag.min() <= max(a.shape) * np.finfo(dtype).eps * max(
        diag.max(), np.finfo(dtype).tiny
    ):
        m = np.linalg.lstsq(a, b, rcond=None)[0]
    else:
        m = _back_substitute(r, q.T @ b)
    s = a @ m - b
    eta = np.sqrt(np.dot(s, s))
    return m.astype(np.float64), s.astype(np.float64), float(eta)


def _f16(x):
    return np.float16(x)


def _dot16(v, w):
    s = _f16(0.0)
    for a, b in zip(v, w):
        s = s + _f16(a * b)
    return s


def _lstsq_half(abar, e):
    """Modified Gram-Schmidt least squares with half-precision rounding.

    Every scalar multiply, add, divide, and square root rounds to half.
    Rank deficiency falls back to a double minimum-norm solve rounded in.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        v = abar.astype(np.float16)
        mrows, p = v.shape
        r = np.zeros((p, p), dtype=np.float16)
        for j in range(p):
            for i in range(j):
                rij = _dot16(v[:, i], v[:, j])
                r[i, j] = rij
                v[:, j] = (v[:, j] - (rij * v[:, i]).astype(np.float16)).astype(
                    np.float16
                )
            rjj = np.sqrt(_dot16(v[:, j], v[:, j]))
            if rjj == 0 or not np.isfinite(rjj):
                m = np.linalg.lstsq(abar, e, rcond=None)[0].astype(np.float16)
                break
            r[j, j] = rjj
            v[:, j] = (v[:, j] / rjj).astype(np.float16)
        else:
            y = np.array([_dot16(v[:, i], e.astype(np.float16)) for i in range(p)],
                         dtype=np.float16)
            m = np.zeros(p, dtype=np.float16)
            for i in range(p - 1, -1, -1):
                acc = y[i]
                for jj in range(i + 1, p):
                    acc = acc - _f16(r[i, jj] * m[jj])
                m[i] = acc / r[i, i]
        a16 = abar.astype(np.float16)
        s = np.zeros(mrows, dtype=np.float16)
        for i in range(mrows):
            acc = _f16(0.0)
            for jj in range(p):
                acc = acc + _f16(a16[i, jj] * m[jj])
            s[i] = acc - _f16(e[i])
        eta = np.sqrt(_dot16(s, s))
    return m.astype(np.float64), s.astype(np.float64), float(eta)


def _solve_column(abar, e, fmt):
    if fmt.name == "double":
        return _lstsq_native(abar, e, np.float64)
    if fmt.name == "single":
        return _lstsq_native(abar, e, np.float32)
    return _lstsq_half(abar, e)


def spai_build(a: SparseMatrix, cfg: SpaiConfig):
    """Build M with columns minimizing ||A m_k - e_k||_2 on grown patterns.

    Returns (M, SpaiReport). Columns are processed independently and
    deterministically; ties in candidate scores resolve to the smallest
    index.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("matrix must be square")
    n = a.n_rows
    fmt = cfg.build_fmt
    csc = a.transpose()  # CSR of A^T, i.e. column access to A

    if fmt.name == "half":
        rounded = csc.typed_values(np.float16).astype(np.float64)
    elif fmt.name == "single":
        rounded = csc.typed_values(np.float32).astype(np.float64)
    else:
        rounded = csc.values

    def col(j):
        lo, hi = csc.row_ptr[j], csc.row_ptr[j + 1]
        return csc.col_idx[lo:hi], rounded[lo:hi], csc.values[lo:hi]

    if cfg.initial_pattern == "identity":
        have_diag = np.zeros(n, dtype=bool)
        mask = a.entry_rows() == a.col_idx
        have_diag[a.col_idx[mask]] = True
        missing = np.flatnonzero(~have_diag)
        if len(missing):
            raise ValueError(
                f"column {int(missing[0])} has no diagonal entry; the identity "
                "initial pattern needs a full diagonal, use pattern-of-A"
            )

    out_rows = []
    out_cols = []
    out_vals = []
    res_norms = np.zeros(n)
    eps_exit = np.zeros(n, dtype=bool)
    sizes = np.zeros(n, dtype=np.int64)

    for k in range(n):
        if cfg.initial_pattern == "identity":
            j_set = np.array([k], dtype=np.int64)
        else:
            rows0, _, _ = col(k)
            if len(rows0) == 0:
                raise ValueError(f"column {k} is empty, pattern cannot start")
            j_set = rows0.copy()

        in_j = np.zeros(n, dtype=bool)
        in_j[j_set] = True
        in_i = np.zeros(n, dtype=bool)
        in_i[k] = True  # row k always participates in the residual
        for j in j_set:
            in_i[col(j)[0]] = True
        i_set = np.flatnonzero(in_i)

        m_col = np.zeros(0)
        s_bar = np.zeros(0)
        for it in range(cfg.alpha + 1):
            local = np.full(n, -1, dtype=np.int64)
            local[i_set] = np.arange(len(i_set))
            abar = np.zeros((len(i_set), len(j_set)))
            for jj, j in enumerate(j_set):
                rows_j, vals_j, _ = col(j)
                abar[local[rows_j], jj] = vals_j
            e = np.zeros(len(i_set))
            e[local[k]] = 1.0
            m_col, s_bar, eta = _solve_column(abar, e, fmt)
            if eta <= cfg.eps:
                eps_exit[k] = True
                break
            if it == cfg.alpha:
                break

            # Candidate indices: columns touching any shadow row, J excluded.
            cand = []
            for ell in i_set:
                ci, _ = a.row(ell)
                cand.append(ci)
            cand = np.unique(np.concatenate(cand)) if cand else np.zeros(0, np.int64)
            cand = cand[~in_j[cand]]
            if len(cand) == 0:
                break

            s_glob = np.zeros(n)
            s_glob[i_set] = s_bar
            snorm2 = float(np.dot(s_bar, s_bar))
            rho = np.empty(len(cand))
            for idx, j in enumerate(cand):
                rows_j, vals_j, _ = col(j)
                num = float(np.dot(s_glob[rows_j], vals_j))
                den = float(np.dot(vals_j[in_i[rows_j]], vals_j[in_i[rows_j]]))
                if den > 0.0:
                    rho[idx] = np.sqrt(max(snorm2 - num * num / den, 0.0))
                else:
                    rho[idx] = np.sqrt(snorm2)
            rho_mean = float(rho.mean())
            order = np.lexsort((cand, rho))
            picked = []
            for pos in order[: cfg.beta]:
                if rho[pos] <= rho_mean:
                    picked.append(cand[pos])
            if not picked:
                break
            picked = np.asarray(picked, dtype=np.int64)
            in_j[picked] = True
            j_set = np.sort(np.concatenate([j_set, picked]))
            grown = [col(j)[0] for j in picked]
            fresh = np.concatenate(grown)
            fresh = fresh[~in_i[fresh]]
            if len(fresh):
                in_i[fresh] = True
                i_set = np.flatnonzero(in_i)

        # Double recompute of the true residual against the unrounded input.
        r_glob = np.zeros(n)
        for jj, j in enumerate(j_set):
            rows_j, _, vals_orig = col(j)
            r_glob[rows_j] += vals_orig * m_col[jj]
        r_glob[k] -= 1.0
        res_norms[k] = float(np.linalg.norm(r_glob))
        sizes[k] = len(j_set)
        out_rows.append(j_set)
        out_cols.append(np.full(len(j_set), k, dtype=np.int64))
        out_vals.append(m_col)

    m = SparseMatrix.from_coo(
        n,
        n,
        np.concatenate(out_rows),
        np.concatenate(out_cols),
        np.concatenate(out_vals),
    )
    report = SpaiReport(
        residual_norms=res_norms,
        eps_exit=eps_exit,
        pattern_sizes=sizes,
        capped=int(np.sum(~eps_exit)),
        eps=cfg.eps,
        build_fmt_name=fmt.name,
    )
    return m, report


def spai_right_preconditioner(a: SparseMatrix, cfg: SpaiConfig) -> SparseMatrix:
    """Approximate inverse of A via its scaled transpose.

    The input is replaced by B = A^T D, D holding reciprocal row maxima, so
    every column of B has unit maximum magnitude; M_B approximates B^{-1}
    and M = M_B^T D approximates A^{-1}.
    """
    b, d = column_scale_transpose(a)
    m_b, _ = spai_build(b, cfg)
    ridx = m_b.entry_rows()
    return SparseMatrix.from_coo(
        a.n_rows, a.n_cols, m_b.col_idx, ridx, m_b.values * d.d[ridx]
    )
