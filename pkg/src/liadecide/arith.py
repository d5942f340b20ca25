"""Exact integer helpers used throughout the solver.

Python ints are arbitrary precision, which matters here: combining two
divisibility constraints multiplies their moduli.
"""

import math


def floor_div(n: int, d: int) -> int:
    if d == 0:
        raise ZeroDivisionError("floor_div by zero")
    return n // d


def ceil_div(n: int, d: int) -> int:
    if d == 0:
        raise ZeroDivisionError("ceil_div by zero")
    return -((-n) // d)


def gcd(a: int, b: int) -> int:
    return math.gcd(a, b)


def gcd_all(values) -> int:
    g = 0
    for v in values:
        g = math.gcd(g, v)
    return g


def lcm(a: int, b: int) -> int:
    if a == 0 or b == 0:
        raise ValueError("lcm of zero is undefined")
    return abs(a * b) // math.gcd(a, b)


def extended_gcd(a: int, b: int) -> tuple[int, int, int]:
    """Return (d, c1, c2) with d = gcd(a, b) >= 0 and c1*a + c2*b = d."""
    if a == 0 and b == 0:
        raise ValueError("extended_gcd(0, 0) is undefined")
    if a != 0 and b % a == 0:
        return abs(a), (1 if a > 0 else -1), 0
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t
