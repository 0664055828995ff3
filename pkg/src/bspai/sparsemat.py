"""CSR matrices, Matrix Market I/O, scaling, and precision-faithful products.

The SparseMatrix container is deliberately small: canonical CSR with sorted
column indices, no duplicates, no explicitly stored zeros. Instances are
treated as immutable after construction; lazily built caches (typed value
arrays, the transpose) rely on that.

spmv_uniform evaluates y = A x with every multiply and add rounded in one
format. Double and single run through compiled sequential kernels, half
runs through numpy half scalars, quad through the double-double kernels.
Accumulation order is always left to right in column order within a row.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .precision import parse_format, round_vec

__all__ = [
    "SparseMatrix",
    "ScalingDiag",
    "MatrixMarketError",
    "read_matrix_market",
    "write_matrix_market",
    "column_scale_transpose",
    "spmv_uniform",
    "norm_inf",
    "norm_frob",
    "norm_max",
    "kappa_inf",
    "cond2_transpose",
]

_DENSE_LIMIT = 4096  # dense condition-number paths are desk scale only


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; messages carry 1-based line numbers."""


class SparseMatrix:
    """Sparse matrix in canonical CSR form."""

    def __init__(self, n_rows, n_cols, row_ptr, col_idx, values):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self._typed = {}
        self._t = None
        self._check()

    def _check(self):
        if self.row_ptr.shape != (self.n_rows + 1,):
            raise ValueError("row_ptr has wrong length")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.col_idx):
            raise ValueError("row_ptr endpoints inconsistent with nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if len(self.col_idx) != len(self.values):
            raise ValueError("col_idx and values lengths differ")
        if len(self.col_idx) and (
            self.col_idx.min() < 0 or self.col_idx.max() >= self.n_cols
        ):
            raise ValueError("column index out of range")
        for i in range(self.n_rows):
            seg = self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]
            if len(seg) > 1 and np.any(np.diff(seg) <= 0):
                raise ValueError(f"row {i}: column indices not strictly increasing")
        if np.any(self.values == 0.0):
            raise ValueError("explicitly stored zeros are not allowed")

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals):
        """Build from triplets; sorts, rejects duplicates, prunes zeros."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("triplet arrays must have equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows) > 1:
            same = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if np.any(same):
                k = int(np.argmax(same))
                raise ValueError(
                    f"duplicate entry at ({int(rows[k])}, {int(cols[k])})"
                )
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
        return cls(n_rows, n_cols, row_ptr, cols, vals)

    @property
    def nnz(self):
        return len(self.values)

    def row(self, i):
        """(column indices, values) of row i as views."""
        a, b = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[a:b], self.values[a:b]

    def entry_rows(self):
        """Row index of every stored entry, in storage order."""
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        out[self.entry_rows(), self.col_idx] = self.values
        return out

    def transpose(self):
        """CSR transpose (doubles as a CSC view of self); cached."""
        if self._t is None:
            self._t = SparseMatrix.from_coo(
                self.n_cols, self.n_rows, self.col_idx, self.entry_rows(), self.values
            )
        return self._t

    def typed_values(self, dtype):
        """Values cast to a native dtype, cached (the cast is the rounding)."""
        key = np.dtype(dtype)
        if key not in self._typed:
            with np.errstate(over="ignore"):
                self._typed[key] = self.values.astype(key)
        return self._typed[key]


@dataclass
class ScalingDiag:
    """Diagonal scaling D = diag(d) with d = 1 / (per-row max magnitude)."""

    d: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.float64)
        if len(self.d) and not np.all(np.isfinite(self.d) & (self.d > 0)):
            raise ValueError("scaling entries must be finite and positive")


def _open_text(source):
    if isinstance(source, (str, Path)):
        return open(source, "rb"), True
    if isinstance(source, bytes):
        return io.BytesIO(source), True
    return source, False


def read_matrix_market(source) -> SparseMatrix:
    """Parse coordinate Matrix Market data (real, integer, or pattern).

    source may be a path, raw bytes, or a file object (text or binary).
    Symmetric inputs are expanded; complex fields and array format are
    rejected. All parse errors name the offending 1-based line.
    """
    f, should_close = _open_text(source)
    try:
        return _parse_mm(f)
    finally:
        if should_close:
            f.close()


def _fail(lineno, msg):
    raise MatrixMarketError(f"line {lineno}: {msg}")


def _decode(raw):
    return raw.decode("latin-1") if isinstance(raw, bytes) else raw


def _parse_mm(f):
    lineno = 0
    header = None
    while header is None:
        raw = f.readline()
        lineno += 1
        if not raw:
            _fail(lineno, "missing Matrix Market header")
        line = _decode(raw).strip()
        if line:
            header = line
    parts = header.split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket":
        _fail(lineno, "malformed Matrix Market banner")
    obj, fmt, field, sym = (p.lower() for p in parts[1:])
    if obj != "matrix":
        _fail(lineno, f"unsupported object {obj!r}")
    if fmt != "coordinate":
        _fail(lineno, f"unsupported format {fmt!r} (only coordinate)")
    if field not in ("real", "integer", "pattern"):
        _fail(lineno, f"unsupported field {field!r}")
    if sym not in ("general", "symmetric"):
        _fail(lineno, f"unsupported symmetry {sym!r}")

    size = None
    while size is None:
        raw = f.readline()
        lineno += 1
        if not raw:
            _fail(lineno, "missing size line")
        line = _decode(raw).strip()
        if not line or line.startswith("%"):
            continue
        toks = line.split()
        if len(toks) != 3:
            _fail(lineno, "size line must have three integers")
        try:
            size = tuple(int(t) for t in toks)
        except ValueError:
            _fail(lineno, "size line must have three integers")
    m, n, nnz = size
    if m < 0 or n < 0 or nnz < 0:
        _fail(lineno, "negative size")

    want = 2 if field == "pattern" else 3
    rows = []
    cols = []
    vals = []
    seen = {}
    read = 0
    while read < nnz:
        raw = f.readline()
        lineno += 1
        if not raw:
            _fail(lineno, f"unexpected end of data, got {read} of {nnz} entries")
        line = _decode(raw).strip()
        if not line or line.startswith("%"):
            continue
        toks = line.split()
        if len(toks) != want:
            _fail(lineno, f"expected {want} fields, got {len(toks)}")
        try:
            i = int(toks[0])
            j = int(toks[1])
        except ValueError:
            _fail(lineno, "indices must be integers")
        if not (1 <= i <= m) or not (1 <= j <= n):
            _fail(lineno, f"entry ({i}, {j}) outside {m} x {n}")
        if field == "pattern":
            v = 1.0
        else:
            try:
                v = float(toks[2])
            except ValueError:
                _fail(lineno, f"bad value {toks[2]!r}")
        if sym == "symmetric" and j > i:
            _fail(lineno, "symmetric input stores only the lower triangle")
        key = (i, j)
        if key in seen:
            _fail(lineno, f"duplicate entry ({i}, {j}), first at line {seen[key]}")
        seen[key] = lineno
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if sym == "symmetric" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v)
        read += 1
    return SparseMatrix.from_coo(m, n, rows, cols, vals)


def write_matrix_market(a: SparseMatrix, dest):
    """Write coordinate real general with full double precision."""
    lines = [
        "%%MatrixMarket matrix coordinate real general\n",
        f"{a.n_rows} {a.n_cols} {a.nnz}\n",
    ]
    ridx = a.entry_rows()
    for i, j, v in zip(ridx, a.col_idx, a.values):
        lines.append(f"{i + 1} {j + 1} {float(v)!r}\n")
    data = "".join(lines)
    if isinstance(dest, (str, Path)):
        with open(dest, "w") as f:
            f.write(data)
    else:
        # text or binary file object
        try:
            dest.write(data)
        except TypeError:
            dest.write(data.encode("ascii"))


def column_scale_transpose(a: SparseMatrix):
    """Return (B, D) with B = A^T D and D = diag(1 / row-max magnitudes).

    Every column of B then has largest magnitude exactly 1: the scaling
    divides by the stored maximum itself, so the extremal entry maps to
    +-1.0 with no rounding.
    """
    row_max = np.zeros(a.n_rows)
    ridx = a.entry_rows()
    np.maximum.at(row_max, ridx, np.abs(a.values))
    dead = np.flatnonzero(row_max == 0.0)
    if len(dead):
        raise ValueError(f"row {int(dead[0])} has no nonzero entries, cannot scale")
    b = SparseMatrix.from_coo(
        a.n_cols, a.n_rows, a.col_idx, ridx, a.values / row_max[ridx]
    )
    return b, ScalingDiag(1.0 / row_max)


def _matvec_typed(row_ptr, col_idx, vals_typed, x, fmt) -> np.ndarray:
    """Sequential CSR product over raw arrays in one uniform format.

    vals_typed must already be the native array for fmt (float16/32/64);
    x is a float64 carrier and is rounded into fmt here. Shared by the
    uniform product and by every bucket slice of a BucketedMatrix, so the
    one-bucket degenerate case is the uniform product by construction.
    """
    n_rows = len(row_ptr) - 1
    if fmt.name == "half":
        with np.errstate(over="ignore", invalid="ignore"):
            x16 = x.astype(np.float16)
            prods = vals_typed * x16[col_idx]
            out = np.zeros(n_rows, dtype=np.float16)
            zero = np.float16(0.0)
            for i in range(n_rows):
                s = zero
                for p in prods[row_ptr[i]:row_ptr[i + 1]]:
                    s = s + p
                out[i] = s
        return out.astype(np.float64)
    with np.errstate(over="ignore"):
        out = np.zeros(n_rows, dtype=vals_typed.dtype)
        _kernels.csr_matvec(row_ptr, col_idx, vals_typed,
                            x.astype(vals_typed.dtype), out)
    return out.astype(np.float64)


def spmv_uniform(a: SparseMatrix, x, fmt) -> np.ndarray:
    """y = A x with every product and sum rounded in fmt.

    Inputs are rounded into fmt first, accumulation is sequential left to
    right within each row. The quad result is collapsed to the nearest
    doubles. The returned array always carries float64 values representable
    in fmt.
    """
    fmt = parse_format(fmt)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.n_cols,):
        raise ValueError(f"x has shape {x.shape}, expected ({a.n_cols},)")
    if fmt.name == "drop":
        return np.zeros(a.n_rows)
    if fmt.name == "quad":
        hi = np.zeros(a.n_rows)
        lo = np.zeros(a.n_rows)
        _kernels.dd_csr_matvec(a.row_ptr, a.col_idx, a.values, x, hi, lo)
        return hi
    dt = {"half": np.float16, "single": np.float32, "double": np.float64}[fmt.name]
    return _matvec_typed(a.row_ptr, a.col_idx, a.typed_values(dt), x, fmt)


def norm_inf(a: SparseMatrix) -> float:
    """Max absolute row sum."""
    if a.nnz == 0:
        return 0.0
    sums = np.zeros(a.n_rows)
    np.add.at(sums, a.entry_rows(), np.abs(a.values))
    return float(sums.max())


def norm_frob(a: SparseMatrix) -> float:
    return float(np.sqrt(np.sum(a.values ** 2)))


def norm_max(a: SparseMatrix) -> float:
    """Largest entry magnitude."""
    return float(np.max(np.abs(a.values))) if a.nnz else 0.0


def _dense_inv(a: SparseMatrix):
    if a.n_rows != a.n_cols:
        raise ValueError("matrix must be square")
    if a.n_rows > _DENSE_LIMIT:
        raise ValueError("matrix too large for the dense condition-number path")
    inv = np.linalg.inv(a.to_dense())
    if not np.all(np.isfinite(inv)):
        raise np.linalg.LinAlgError("matrix is singular to working precision")
    return inv


def kappa_inf(a: SparseMatrix) -> float:
    """Infinity-norm condition number via a dense inverse."""
    inv = _dense_inv(a)
    na = norm_inf(a)
    ninv = float(np.max(np.sum(np.abs(inv), axis=1)))
    return na * ninv


def cond2_transpose(a: SparseMatrix, tol=1e-10, max_iter=20000) -> float:
    """Componentwise condition number || |A^-T| |A^T| ||_2.

    The product is dense and elementwise nonnegative; its largest singular
    value is found by power iteration on C^T C.
    """
    inv = _dense_inv(a)
    c = np.abs(inv.T) @ np.abs(a.to_dense().T)
    n = c.shape[0]
    z = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(max_iter):
        w = c.T @ (c @ z)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        z_new = w / nw
        if abs(nw - lam) <= tol * nw:
            lam = nw
            break
        lam = nw
        z = z_new
    return float(np.sqrt(lam))
