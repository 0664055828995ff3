"""Double-double arithmetic: error-free transforms and a small value type.

A double-double represents a real as an unevaluated sum hi + lo of two
doubles with |lo| <= ulp(hi)/2. Sums use Knuth's two_sum, products use
Dekker's split (there is no fused multiply-add in the interpreter), and
the quotient does two Newton-style correction passes. The same transforms
are reimplemented inside the compiled kernels (_kernels.py); the scalar
versions here are the readable reference.

Vector helpers operate on (hi, lo) ndarray pairs so residuals and norms
can be evaluated without Python-level loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a: float, b: float):
    """Exact sum: returns (s, e) with s = fl(a+b) and s + e = a + b."""
    s = a + b
    t = s - a
    e = (a - (s - t)) + (b - t)
    return s, e


def quick_two_sum(a: float, b: float):
    """two_sum for |a| >= |b|."""
    s = a + b
    e = b - (s - a)
    return s, e


def split(a: float):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a: float, b: float):
    """Exact product: returns (p, e) with p = fl(a*b) and p + e = a * b."""
    p = a * b
    ah, al = split(a)
    bh, bl = split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


class DD:
    """A normalized double-double value."""

    __slots__ = ("hi", "lo")

    def __init__(self, hi: float, lo: float = 0.0):
        self.hi = float(hi)
        self.lo = float(lo)

    @staticmethod
    def of(x) -> "DD":
        return x if isinstance(x, DD) else DD(float(x))

    @staticmethod
    def prod(a: float, b: float) -> "DD":
        return DD(*two_prod(a, b))

    def __float__(self):
        # hi is the nearest double to hi + lo by the normalization invariant.
        return self.hi

    def __neg__(self):
        return DD(-self.hi, -self.lo)

    def __abs__(self):
        return -self if self.hi < 0 or (self.hi == 0 and self.lo < 0) else self

    def __add__(self, other):
        o = DD.of(other)
        sh, se = two_sum(self.hi, o.hi)
        tl, te = two_sum(self.lo, o.lo)
        se += tl
        sh, se = quick_two_sum(sh, se)
        se += te
        return DD(*quick_two_sum(sh, se))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-DD.of(other))

    def __rsub__(self, other):
        return DD.of(other) + (-self)

    def __mul__(self, other):
        o = DD.of(other)
        p, e = two_prod(self.hi, o.hi)
        e += self.hi * o.lo + self.lo * o.hi
        return DD(*quick_two_sum(p, e))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = DD.of(other)
        q1 = self.hi / o.hi
        r = self - o * q1
        q2 = r.hi / o.hi
        r = r - o * q2
        q3 = r.hi / o.hi
        s, e = quick_two_sum(q1, q2)
        return DD(*quick_two_sum(s, e + q3))

    def __rtruediv__(self, other):
        return DD.of(other) / self

    def __repr__(self):
        return f"DD({self.hi!r}, {self.lo!r})"

    def __eq__(self, other):
        o = DD.of(other)
        return self.hi == o.hi and self.lo == o.lo


# Vectorized transforms on (hi, lo) ndarray pairs.

def two_sum_vec(a, b):
    s = a + b
    t = s - a
    return s, (a - (s - t)) + (b - t)


def two_prod_vec(a, b):
    p = a * b
    t = _SPLITTER * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLITTER * b
    bh = t - (t - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def add_vec(ah, al, bh, bl):
    sh, se = two_sum_vec(ah, bh)
    tl, te = two_sum_vec(al, bl)
    se = se + tl
    s = sh + se
    se = se - (s - sh)
    se = se + te
    sh = s + se
    return sh, se - (sh - s)


def sub_vec(ah, al, bh, bl):
    return add_vec(ah, al, -bh, -bl)


@dataclass
class DDVector:
    """A vector of double-double values, stored as parallel arrays."""

    hi: np.ndarray
    lo: np.ndarray

    @classmethod
    def from_float64(cls, x) -> "DDVector":
        x = np.asarray(x, dtype=np.float64)
        return cls(x.copy(), np.zeros_like(x))

    def __len__(self):
        return len(self.hi)

    def to_float64(self) -> np.ndarray:
        return self.hi.copy()

    def sub(self, other) -> "DDVector":
        if isinstance(other, DDVector):
            oh, ol = other.hi, other.lo
        else:
            oh = np.asarray(other, dtype=np.float64)
            ol = np.zeros_like(oh)
        return DDVector(*sub_vec(self.hi, self.lo, oh, ol))

    def rsub(self, other) -> "DDVector":
        """other - self, with other a float64 array or DDVector."""
        if isinstance(other, DDVector):
            oh, ol = other.hi, other.lo
        else:
            oh = np.asarray(other, dtype=np.float64)
            ol = np.zeros_like(oh)
        return DDVector(*sub_vec(oh, ol, self.hi, self.lo))

    def inf_norm(self) -> float:
        # |hi| dominates |lo| after normalization.
        return float(np.max(np.abs(self.hi))) if len(self.hi) else 0.0
