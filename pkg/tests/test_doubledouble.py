from fractions import Fraction

import numpy as np

from bspai.doubledouble import (DD, DDVector, add_vec, split, sub_vec,
                                two_prod, two_prod_vec, two_sum, two_sum_vec)


def frac(d: DD) -> Fraction:
    return Fraction(d.hi) + Fraction(d.lo)


def test_two_sum_exact():
    rng = np.random.default_rng(31)
    for _ in range(2000):
        a = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-40, 40))
        b = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-40, 40))
        s, e = two_sum(a, b)
        assert Fraction(s) + Fraction(e) == Fraction(a) + Fraction(b)
        # s is the correctly rounded sum
        assert s == a + b


def test_two_prod_exact():
    rng = np.random.default_rng(37)
    for _ in range(2000):
        a = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-30, 30))
        b = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-30, 30))
        p, e = two_prod(a, b)
        assert Fraction(p) + Fraction(e) == Fraction(a) * Fraction(b)
        assert p == a * b


def test_split_reconstructs():
    rng = np.random.default_rng(41)
    for _ in range(500):
        a = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-20, 20))
        hi, lo = split(a)
        assert hi + lo == a
        # each part fits in 26 or fewer significand bits, so hi*hi etc.
        # are exact; spot-check via the defining property
        assert Fraction(hi) + Fraction(lo) == Fraction(a)


def test_dd_add_identity():
    # (a + b) - a - b must vanish exactly: the pair representation of
    # a + b is exact for any two doubles
    rng = np.random.default_rng(43)
    for _ in range(3000):
        a = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-60, 60))
        b = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-60, 60))
        r = (DD.of(a) + DD.of(b)) - DD.of(a) - DD.of(b)
        assert r.hi == 0.0 and r.lo == 0.0


def test_dd_mul_identity():
    rng = np.random.default_rng(47)
    for _ in range(3000):
        a = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-30, 30))
        b = float(rng.standard_normal()) * 2.0 ** float(rng.integers(-30, 30))
        p = DD.prod(a, b)
        assert frac(p) == Fraction(a) * Fraction(b)


def test_dd_ops_relative_error():
    # full dd arithmetic keeps roughly 104 bits
    rng = np.random.default_rng(53)
    tol = Fraction(2) ** -100
    for _ in range(400):
        a = DD.prod(float(rng.standard_normal()), float(rng.standard_normal()))
        b = DD.prod(float(rng.standard_normal()), float(rng.standard_normal()))
        if frac(b) == 0:
            continue
        for got, want in (
            (a + b, frac(a) + frac(b)),
            (a - b, frac(a) - frac(b)),
            (a * b, frac(a) * frac(b)),
            (a / b, frac(a) / frac(b)),
        ):
            if want == 0:
                assert abs(frac(got)) <= tol
            else:
                assert abs(frac(got) - want) <= tol * abs(want)


def test_dd_division_round_trip():
    rng = np.random.default_rng(59)
    tol = Fraction(2) ** -100
    for _ in range(500):
        a = float(rng.standard_normal())
        b = float(rng.standard_normal())
        if b == 0:
            continue
        q = DD.of(a) / DD.of(b)
        back = q * DD.of(b)
        assert abs(frac(back) - Fraction(a)) <= tol * abs(Fraction(a))


def test_dd_small_plus_one_exact():
    r = DD.of(1.0) + DD.of(2.0 ** -60)
    assert r.hi == 1.0 and r.lo == 2.0 ** -60
    assert float(r) == 1.0


def test_dd_float_and_neg():
    d = DD(3.0, 1e-20)
    assert float(d) == 3.0
    n = -d
    assert n.hi == -3.0 and n.lo == -1e-20
    assert abs(n).hi == 3.0


def test_vectorized_match_scalar():
    rng = np.random.default_rng(61)
    a = rng.standard_normal(300) * 10.0 ** rng.integers(-6, 6, 300)
    b = rng.standard_normal(300) * 10.0 ** rng.integers(-6, 6, 300)
    sh, sl = two_sum_vec(a, b)
    ph, pl = two_prod_vec(a, b)
    for i in range(300):
        s, e = two_sum(float(a[i]), float(b[i]))
        assert sh[i] == s and sl[i] == e
        p, e = two_prod(float(a[i]), float(b[i]))
        assert ph[i] == p and pl[i] == e


def test_add_sub_vec_match_dd():
    rng = np.random.default_rng(67)
    ah = rng.standard_normal(100)
    al = ah * 1e-18
    bh = rng.standard_normal(100)
    bl = bh * 1e-18
    rh, rl = add_vec(ah, al, bh, bl)
    dh, dl = sub_vec(ah, al, bh, bl)
    for i in range(100):
        s = DD(float(ah[i]), float(al[i])) + DD(float(bh[i]), float(bl[i]))
        d = DD(float(ah[i]), float(al[i])) - DD(float(bh[i]), float(bl[i]))
        assert (rh[i], rl[i]) == (s.hi, s.lo)
        assert (dh[i], dl[i]) == (d.hi, d.lo)


def test_ddvector_basics():
    x = np.array([1.0, -2.0, 0.5])
    v = DDVector.from_float64(x)
    assert np.array_equal(v.to_float64(), x)
    assert v.inf_norm() == 2.0
    w = v.sub(DDVector.from_float64(np.array([1.0, 1.0, 1.0])))
    assert np.array_equal(w.to_float64(), np.array([0.0, -3.0, -0.5]))
    r = v.rsub(np.array([2.0, 2.0, 2.0]))  # other - self
    assert np.array_equal(r.to_float64(), np.array([1.0, 4.0, 1.5]))
