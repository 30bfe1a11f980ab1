"""Arithmetic in GF(2^8) using log/antilog tables.

The field is built from the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1
(0x11D) with generator alpha = 0x02. Sketch bits depend on this choice, so
it must not change between enrollment and authentication.
"""

from __future__ import annotations

PRIMITIVE_POLY = 0x11D
GENERATOR = 0x02
FIELD_SIZE = 256
ORDER = FIELD_SIZE - 1


def _build_tables(prim: int = PRIMITIVE_POLY, generator: int = GENERATOR):
    exp = [0] * (2 * ORDER)
    log = [0] * FIELD_SIZE
    x = 1
    for i in range(ORDER):
        exp[i] = x
        log[x] = i
        # multiply by the generator without tables (carry-less, then reduce)
        y, acc = generator, 0
        while y:
            if y & 1:
                acc ^= x
            x <<= 1
            if x & 0x100:
                x ^= prim
            y >>= 1
        x = acc
    if len(set(exp[:ORDER])) != ORDER:
        raise ValueError("polynomial/generator pair is not primitive")
    for i in range(ORDER, 2 * ORDER):
        exp[i] = exp[i - ORDER]
    return exp, log


EXP, LOG = _build_tables()


def add(a: int, b: int) -> int:
    return a ^ b


def mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return EXP[(LOG[a] - LOG[b]) % ORDER]


def inverse(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("zero has no inverse in GF(256)")
    return EXP[ORDER - LOG[a]]


def power(a: int, n: int) -> int:
    if a == 0:
        return 1 if n == 0 else 0
    return EXP[(LOG[a] * n) % ORDER]


def alpha_pow(n: int) -> int:
    """alpha**n for any integer n (negative exponents allowed)."""
    return EXP[n % ORDER]


def poly_mul(p: list[int], q: list[int]) -> list[int]:
    """Product of two polynomials, coefficients highest degree first."""
    out = [0] * (len(p) + len(q) - 1)
    for j, qj in enumerate(q):
        if qj == 0:
            continue
        lq = LOG[qj]
        for i, pi in enumerate(p):
            if pi:
                out[i + j] ^= EXP[LOG[pi] + lq]
    return out


def poly_eval(p: list[int], x: int) -> int:
    """Horner evaluation, coefficients highest degree first."""
    y = p[0]
    if x == 0:
        return p[-1]
    lx = LOG[x]
    for c in p[1:]:
        y = (EXP[LOG[y] + lx] if y else 0) ^ c
    return y
