"""Writes mcnemar_reference.csv: exact two-sided McNemar p-values for b + c <= 20.

Computed with rational arithmetic, independently of the Rust implementation:
p = min(1, 2 * P[X <= min(b, c)]) for X ~ Binomial(b + c, 1/2).
"""

from fractions import Fraction
from math import comb


def p_value(b, c):
    n = b + c
    tail = sum(Fraction(comb(n, k), 2**n) for k in range(min(b, c) + 1))
    return min(Fraction(1), 2 * tail)


with open("mcnemar_reference.csv", "w") as f:
    f.write("b,c,p_value\n")
    for n in range(21):
        for b in range(n + 1):
            f.write(f"{b},{n - b},{float(p_value(b, n - b))!r}\n")
