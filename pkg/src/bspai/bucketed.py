"""Magnitude-bucketed mixed-precision storage and the adaptive product.

A BucketedMatrix partitions the entries of a sparse matrix row-wise into q
precision buckets by magnitude. With unit roundoffs u_1 < ... < u_q and a
budget eps_target, entry a_ij lands in the highest-k bucket whose interval
contains |a_ij|: bucket 1 takes magnitudes above eps*||A||/u_2, bucket k
takes (eps*||A||/u_{k+1}, eps*||A||/u_k], and the last bucket takes
everything down to zero. Boundary magnitudes sit in the lower-precision
bucket (the intervals are closed on the right). The last format may be
"drop", whose nominal roundoff is 1: those entries are not stored at all.

The adaptive product bspmv forms one partial sum per bucket, each evaluated
entirely in that bucket's precision, then adds the partials in bucket-1
precision in ascending bucket order. The rounding error obeys

    eps_nw <= (q - 1) u_1 + c * eps_target

with c = (1 + (q-1) u_1) + max_i sum_k p_ik^2 (1 + u_k)^2 in the default
(squared) form; c_constant can also evaluate the variant linear in p_ik.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .doubledouble import sub_vec
from .precision import FpFormat, parse_format, round_vec
from .sparsemat import SparseMatrix, _matvec_typed, norm_inf, norm_max

__all__ = [
    "BucketScheme",
    "BucketedMatrix",
    "build_buckets",
    "bspmv",
    "apply_error_bound",
    "bucket_index",
    "c_constant",
    "normwise_backward_error",
    "storage_ratio",
    "storage_fraction",
]


@dataclass
class BucketScheme:
    """Ladder of formats (strictly decreasing precision) plus the budget."""

    precisions: tuple
    eps_target: float
    norm_choice: str = "max-abs"

    def __post_init__(self):
        self.precisions = tuple(parse_format(f) for f in self.precisions)
        if len(self.precisions) < 1:
            raise ValueError("need at least one bucket format")
        u = [f.unit_roundoff for f in self.precisions]
        if not all(b > a for a, b in zip(u, u[1:])):
            raise ValueError("unit roundoffs must be strictly increasing")
        if self.precisions[0].bits == 0:
            raise ValueError("the leading format must store values")
        if not (u[0] <= self.eps_target < 1.0):
            raise ValueError("eps_target must lie in [u_1, 1)")
        if self.norm_choice not in ("max-abs", "inf-norm"):
            raise ValueError("norm_choice must be 'max-abs' or 'inf-norm'")

    @property
    def q(self):
        return len(self.precisions)


class BucketedMatrix:
    """Row-wise bucketed storage of one sparse matrix.

    Each bucket is kept as its own CSR triple over the shared shape; stored
    values are rounded into the bucket format (drop-bucket values are all
    zero but the pattern is kept so occupancies stay meaningful). occupancy
    is the (n_rows, q) table of per-row bucket counts.
    """

    def __init__(self, scheme, n_rows, n_cols, row_ptrs, col_idxs, values,
                 source_norm):
        self.scheme = scheme
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_ptrs = row_ptrs
        self.col_idxs = col_idxs
        self.values = values
        self.source_norm = float(source_norm)
        self.occupancy = np.stack(
            [np.diff(rp).astype(np.int64) for rp in row_ptrs], axis=1
        ) if n_rows else np.zeros((0, scheme.q), dtype=np.int64)
        self._native = [None] * scheme.q

    @property
    def nnz(self):
        return int(sum(len(c) for c in self.col_idxs))

    def occupancy_totals(self):
        """Total entry count per bucket, leading bucket first."""
        return [int(len(self.col_idxs[k])) for k in range(self.scheme.q)]

    def native_values(self, k):
        if self._native[k] is None:
            fmt = self.scheme.precisions[k]
            dt = {"half": np.float16, "single": np.float32}.get(fmt.name, np.float64)
            with np.errstate(over="ignore"):
                self._native[k] = self.values[k].astype(dt)
        return self._native[k]

    def effective_matrix(self) -> SparseMatrix:
        """The matrix actually applied: stored values, dropped entries gone."""
        rows = []
        cols = []
        vals = []
        for k in range(self.scheme.q):
            rows.append(np.repeat(np.arange(self.n_rows),
                                  np.diff(self.row_ptrs[k])))
            cols.append(self.col_idxs[k])
            vals.append(self.values[k])
        return SparseMatrix.from_coo(
            self.n_rows, self.n_cols,
            np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        )

    def to_files(self, meta_path, blob_path):
        """Write a JSON description plus an npz blob of the bucket arrays."""
        meta = {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "source_norm": self.source_norm,
            "scheme": {
                "precisions": [f.name for f in self.scheme.precisions],
                "eps_target": self.scheme.eps_target,
                "norm_choice": self.scheme.norm_choice,
            },
        }
        with open(meta_path, "w") as f:
            json.dump(meta, f, indent=1)
        arrays = {}
        for k in range(self.scheme.q):
            arrays[f"row_ptr_{k}"] = self.row_ptrs[k]
            arrays[f"col_idx_{k}"] = self.col_idxs[k]
            arrays[f"values_{k}"] = self.values[k]
        with open(blob_path, "wb") as f:
            np.savez(f, **arrays)

    @classmethod
    def from_files(cls, meta_path, blob_path):
        with open(meta_path) as f:
            meta = json.load(f)
        scheme = BucketScheme(
            precisions=tuple(meta["scheme"]["precisions"]),
            eps_target=meta["scheme"]["eps_target"],
            norm_choice=meta["scheme"]["norm_choice"],
        )
        blob = np.load(blob_path)
        row_ptrs = [blob[f"row_ptr_{k}"] for k in range(scheme.q)]
        col_idxs = [blob[f"col_idx_{k}"] for k in range(scheme.q)]
        values = [blob[f"values_{k}"] for k in range(scheme.q)]
        return cls(scheme, meta["n_rows"], meta["n_cols"], row_ptrs, col_idxs,
                   values, meta["source_norm"])


def bucket_index(absval, scheme: BucketScheme, norm: float):
    """1-based bucket index for each magnitude under a given matrix norm."""
    absval = np.asarray(absval, dtype=np.float64)
    q = scheme.q
    if q == 1:
        return np.ones(absval.shape, dtype=np.int64)
    lows = np.array(
        [scheme.eps_target * norm / scheme.precisions[k].unit_roundoff
         for k in range(1, q)]
    )  # lows[k-1] is the open lower endpoint of bucket k
    asc = lows[::-1].copy()
    count = np.searchsorted(asc, absval, side="left")
    return (q - count).astype(np.int64)


def build_buckets(a: SparseMatrix, scheme: BucketScheme) -> BucketedMatrix:
    """Partition a matrix into a BucketedMatrix under a scheme.

    The norm in the thresholds follows scheme.norm_choice: the largest entry
    magnitude by default, or the infinity norm. An all-zero matrix yields
    empty buckets.
    """
    norm = norm_max(a) if scheme.norm_choice == "max-abs" else norm_inf(a)
    which = bucket_index(np.abs(a.values), scheme, norm) - 1
    ridx = a.entry_rows()
    row_ptrs = []
    col_idxs = []
    values = []
    for k in range(scheme.q):
        mask = which == k
        rp = np.zeros(a.n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(ridx[mask], minlength=a.n_rows), out=rp[1:])
        row_ptrs.append(rp)
        col_idxs.append(a.col_idx[mask])
        values.append(round_vec(a.values[mask], scheme.precisions[k]))
    return BucketedMatrix(scheme, a.n_rows, a.n_cols, row_ptrs, col_idxs,
                          values, norm)


def bspmv(m: BucketedMatrix, x) -> np.ndarray:
    """y = M x through the bucketed representation.

    Bucket k forms its partial sum entirely in precision u_k (the input is
    rounded to u_k for those products); partials are then accumulated in
    u_1, ascending bucket order. Dropped entries contribute nothing. The
    result is a float64 carrier of u_1-representable values.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_cols,):
        raise ValueError(f"x has shape {x.shape}, expected ({m.n_cols},)")
    u1 = m.scheme.precisions[0]
    acc = None
    for k in range(m.scheme.q):
        fmt = m.scheme.precisions[k]
        if fmt.name == "drop" or len(m.col_idxs[k]) == 0:
            continue
        y_k = _matvec_typed(m.row_ptrs[k], m.col_idxs[k], m.native_values(k),
                            x, fmt)
        if acc is None:
            acc = y_k
        elif u1.name == "double":
            acc = acc + y_k
        else:
            acc = round_vec(acc + y_k, u1)
    if acc is None:
        return np.zeros(m.n_rows)
    return acc


def c_constant(m: BucketedMatrix, squared: bool = True) -> float:
    """Constant in the bspmv error bound eps_nw <= (q-1) u_1 + c eps.

    The default uses squared per-row occupancies; squared=False evaluates
    the variant linear in the occupancies.
    """
    q = m.scheme.q
    u1 = m.scheme.precisions[0].unit_roundoff
    weights = np.array([(1.0 + f.unit_roundoff) ** 2 for f in m.scheme.precisions])
    occ = m.occupancy.astype(np.float64)
    if squared:
        occ = occ ** 2
    per_row = occ @ weights
    worst = float(per_row.max()) if len(per_row) else 0.0
    return (1.0 + (q - 1) * u1) + worst


def apply_error_bound(m: BucketedMatrix, squared: bool = True) -> float:
    """Full normwise backward error bound for bspmv: (q-1) u_1 + c eps."""
    q = m.scheme.q
    u1 = m.scheme.precisions[0].unit_roundoff
    return (q - 1) * u1 + c_constant(m, squared=squared) * m.scheme.eps_target


def normwise_backward_error(a: SparseMatrix, x, y_hat) -> float:
    """||y_hat - A x||_inf / (||A||_inf ||x||_inf), product in quad surrogate."""
    x = np.asarray(x, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    den = norm_inf(a) * (float(np.max(np.abs(x))) if len(x) else 0.0)
    if den == 0.0:
        raise ValueError("backward error undefined: ||A|| ||x|| is zero")
    hi = np.zeros(a.n_rows)
    lo = np.zeros(a.n_rows)
    _kernels.dd_csr_matvec(a.row_ptr, a.col_idx, a.values, x, hi, lo)
    rh, _ = sub_vec(y_hat, np.zeros_like(y_hat), hi, lo)
    return float(np.max(np.abs(rh))) / den


def storage_fraction(counts, precisions) -> float:
    """Bit cost of bucketed storage relative to uniform leading-format storage."""
    precisions = [parse_format(f) for f in precisions]
    total = sum(counts)
    if total == 0:
        return 1.0
    stored = sum(c * f.bits for c, f in zip(counts, precisions))
    return stored / (total * precisions[0].bits)


def storage_ratio(m: BucketedMatrix) -> float:
    return storage_fraction(m.occupancy_totals(), m.scheme.precisions)
