"""Reference values for the hydraulics unit tests.

Evaluates the closed-form relations at 50 significant digits with mpmath and
locates roots by scanning a fine depth grid, independently of the C++ code.
Run with: python3 tests/oracle/hydraulics_reference.py
"""
from mpmath import mp, mpf, sqrt, cbrt

mp.dps = 50
g = mpf("9.81")


def energy(h, Q, b):
    return h + Q**2 / (2 * g * b**2 * h**2)


def friction(h, Q, b, n):
    area = b * h
    radius = area / (b + 2 * h)
    return n**2 * Q**2 / (area**2 * radius ** (mpf(4) / 3))


def froude(h, Q, b):
    return Q / (b * h * sqrt(g * h))


def scan_root(f, lo, hi, steps=200000):
    """Sign-change scan followed by interval halving; f must change sign once."""
    lo, hi = mpf(lo), mpf(hi)
    width = (hi - lo) / steps
    prev_x, prev_f = lo, f(lo)
    for k in range(1, steps + 1):
        x = lo + k * width
        fx = f(x)
        if (fx > 0) != (prev_f > 0):
            a, b = prev_x, x
            for _ in range(200):
                m = (a + b) / 2
                if (f(m) > 0) == (f(a) > 0):
                    a = m
                else:
                    b = m
            return (a + b) / 2
        prev_x, prev_f = x, fx
    raise RuntimeError("no sign change")


Q, b, n = mpf("44.29"), mpf(10), mpf("0.02")
print("E(2)          ", mp.nstr(energy(mpf(2), Q, b), 20))
print("J(2)          ", mp.nstr(friction(mpf(2), Q, b, n), 20))
print("Fr(2)         ", mp.nstr(froude(mpf(2), Q, b), 20))
print("hc(10,10)     ", mp.nstr(cbrt(mpf(10) ** 2 / (g * 100)), 20))
print("weir(100,20,3)", mp.nstr(3 + (3 * sqrt(3) * 100 / (2 * sqrt(2 * g) * 20)) ** (mpf(2) / 3), 20))
print("M(1,10,10)    ", mp.nstr(mpf("0.5") + mpf(100) / (g * 100 * 1), 20))
fr2 = froude(mpf(2), Q, b)
print("conj(2)       ", mp.nstr(mpf(1) * (-1 + sqrt(1 + 8 * fr2**2)), 20))
print("hn(s=1e-3)    ", mp.nstr(scan_root(lambda h: friction(h, Q, b, n) - mpf("0.001"), "0.01", "20"), 20))
print("h(E=2.25) sub ", mp.nstr(scan_root(lambda h: energy(h, Q, b) - mpf("2.25"), "1.3", "5"), 20))
Q2, b2, n2, s2 = mpf(50), mpf(10), mpf("0.015"), mpf("0.005")
print("hn steep      ", mp.nstr(scan_root(lambda h: friction(h, Q2, b2, n2) - s2, "0.01", "20"), 20))
print("hc steep      ", mp.nstr(scan_root(lambda h: froude(h, Q2, b2) - 1, "0.01", "20"), 20))
