"""Floating-point format descriptions and operation-level rounding.

Every precision used by the solvers is described by an FpFormat. Values of
any simulated format are carried in Python floats / float64 arrays whose
values are exactly representable in that format, so "storage in format F"
means "round with round_to(x, F) and keep the result as a double". Arithmetic
in a simulated format rounds after every scalar operation (operands are
assumed already representable; callers round their inputs first).

Rounding is round-to-nearest, ties to even, the only mode supported here.
Half and single rounding go through numpy's conversions, which implement
nearest-even with subnormals and overflow to infinity. Computing a single
binary operation on representable operands in double and then rounding once
more to the narrow format gives the same answer as native narrow arithmetic
(double carries more than 2p+2 significand bits for both targets), so the
simulation is exact at operation granularity.

The "quad" format is a double-double surrogate: an unevaluated sum hi + lo
of two doubles with |lo| <= ulp(hi)/2, giving a unit roundoff of 2**-104.
Operations in quad return DD values from .doubledouble. The "drop" format
stores nothing: every value rounds to zero and its nominal unit roundoff is
taken to be 1, which is the convention the bucketing error analysis uses.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .doubledouble import DD

__all__ = [
    "FpFormat",
    "HALF",
    "SINGLE",
    "DOUBLE",
    "QUAD",
    "DROP",
    "FORMATS",
    "parse_format",
    "unit_roundoff",
    "round_to",
    "round_vec",
    "op_in",
    "np_dtype",
]


@dataclass(frozen=True)
class FpFormat:
    """One floating-point format.

    bits is the storage width; unit_roundoff is 2**-t for a t-bit
    significand (hidden bit included). sig_bits/min_exp describe the
    value grid for the IEEE-like formats and are unused for quad/drop.
    """

    name: str
    bits: int
    unit_roundoff: float
    max_finite: float
    min_normal: float
    sig_bits: int = 0
    min_exp: int = 0

    def __repr__(self):
        return f"FpFormat({self.name})"


HALF = FpFormat("half", 16, 2.0 ** -11, 65504.0, 2.0 ** -14, sig_bits=11, min_exp=-14)
SINGLE = FpFormat(
    "single", 32, 2.0 ** -24, float(np.finfo(np.float32).max), 2.0 ** -126,
    sig_bits=24, min_exp=-126,
)
DOUBLE = FpFormat(
    "double", 64, 2.0 ** -53, sys.float_info.max, 2.0 ** -1022,
    sig_bits=53, min_exp=-1022,
)
# Double-double surrogate for quadruple precision. The roundoff is the
# worst-case relative error of a normalized hi+lo pair, not a grid spacing.
QUAD = FpFormat("quad", 128, 2.0 ** -104, sys.float_info.max, 2.0 ** -1022)
# Pseudo-format for values that are not stored at all.
DROP = FpFormat("drop", 0, 1.0, 0.0, 0.0)

FORMATS = {f.name: f for f in (HALF, SINGLE, DOUBLE, QUAD, DROP)}


def parse_format(name):
    """Look up a format by name, accepting an FpFormat passthrough."""
    if isinstance(name, FpFormat):
        return name
    try:
        return FORMATS[name]
    except KeyError:
        raise ValueError(f"unknown floating-point format {name!r}") from None


def unit_roundoff(fmt: FpFormat) -> float:
    return parse_format(fmt).unit_roundoff


def np_dtype(fmt: FpFormat):
    """Native numpy dtype for a format, or None if there is none."""
    fmt = parse_format(fmt)
    return {"half": np.float16, "single": np.float32, "double": np.float64}.get(fmt.name)


def round_to(x, fmt: FpFormat) -> float:
    """Round one double to the nearest value representable in fmt.

    Ties go to even, values beyond max_finite round to +-inf, NaN is
    passed through. For quad any double is representable, so x comes
    back unchanged (DD inputs too). For drop everything rounds to 0.
    """
    fmt = parse_format(fmt)
    if fmt.name == "double":
        return float(x)
    if fmt.name == "quad":
        return x if isinstance(x, DD) else float(x)
    if fmt.name == "drop":
        return 0.0
    with np.errstate(over="ignore"):
        if fmt.name == "single":
            return float(np.float32(x))
        return float(np.float16(x))


def round_vec(x, fmt: FpFormat) -> np.ndarray:
    """Vector round_to: a float64 array of fmt-representable values."""
    fmt = parse_format(fmt)
    x = np.asarray(x, dtype=np.float64)
    if fmt.name in ("double", "quad"):
        return x
    if fmt.name == "drop":
        return np.zeros_like(x)
    dt = np.float16 if fmt.name == "half" else np.float32
    with np.errstate(over="ignore"):
        return x.astype(dt).astype(np.float64)


def _round_exact(v: Fraction, fmt: FpFormat) -> float:
    # Nearest-even rounding of an exact rational onto the fmt value grid.
    # Only needed for fused multiply-add, where the exact result can carry
    # more bits than a double.
    if v == 0:
        return 0.0
    sign = -1.0 if v < 0 else 1.0
    v = abs(v)
    e = v.numerator.bit_length() - v.denominator.bit_length()
    if Fraction(2) ** e > v:
        e -= 1
    # Grid spacing: 2^(e - t + 1) in the normal range, frozen below min_exp.
    step_exp = max(e, fmt.min_exp) - fmt.sig_bits + 1
    q = v / (Fraction(2) ** step_exp)
    n, r = divmod(q.numerator, q.denominator)
    frac = Fraction(r, q.denominator)
    if frac > Fraction(1, 2) or (frac == Fraction(1, 2) and n % 2 == 1):
        n += 1
    out = Fraction(n) * Fraction(2) ** step_exp
    if out > Fraction(fmt.max_finite):
        return sign * float("inf")
    return sign * float(out)


_BINOPS = ("add", "sub", "mul", "div", "fma")


def op_in(a, b, kind: str, fmt: FpFormat, c=0.0):
    """One scalar operation with the result rounded into fmt.

    kind is one of add, sub, mul, div, fma; fma computes a*b + c with a
    single rounding. Operands must already be representable in fmt (not
    checked). In quad the operands may be floats or DD and the result is
    a DD; in drop the result is 0.
    """
    fmt = parse_format(fmt)
    if kind not in _BINOPS:
        raise ValueError(f"unknown operation kind {kind!r}")
    if fmt.name == "drop":
        return 0.0
    if fmt.name == "quad":
        da, db = DD.of(a), DD.of(b)
        if kind == "add":
            return da + db
        if kind == "sub":
            return da - db
        if kind == "mul":
            return da * db
        if kind == "div":
            return da / db
        return da * db + DD.of(c)
    a = float(a)
    b = float(b)
    if kind != "fma":
        # IEEE semantics (x/0 -> inf, overflow -> inf), not Python's
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            na, nb = np.float64(a), np.float64(b)
            if kind == "add":
                r = float(na + nb)
            elif kind == "sub":
                r = float(na - nb)
            elif kind == "mul":
                r = float(na * nb)
            else:
                r = float(na / nb)
    else:
        # Exact product plus addend, then one rounding. Hardware has no
        # fma here and a double intermediate would be twice rounded, so
        # the exact result is formed as a rational.
        c = float(c)
        for z in (a, b, c):
            if z != z or z in (float("inf"), float("-inf")):
                with np.errstate(invalid="ignore", over="ignore"):
                    return round_to(float(np.float64(a) * np.float64(b)
                                          + np.float64(c)), fmt)
        return _round_exact(Fraction(a) * Fraction(b) + Fraction(c), fmt)
    if fmt.name == "double":
        return r
    return round_to(r, fmt)
