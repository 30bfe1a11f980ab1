"""Information leakage about the enrollment vector when key and/or sketch leak.

``J`` bits of enrollment vector, ``n`` selected bits, ``k`` sketch bits:

* key only: 0 bits (positions carry no values),
* sketch and key: ``k`` bits,
* sketch only: ``max(0, k - log2 C(J, n))`` since the positions stay unknown.

``log2 C(J, n)`` is taken from the exact integer binomial; no Stirling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

COMPROMISE = ("key_only", "sketch_only", "sketch_and_key")


class DomainError(ValueError):
    pass


def log2_binomial(J: int, n: int) -> float:
    """log2 C(J, n) from the exact integer; absolute error ~1e-13 at J = 1024."""
    return math.log2(math.comb(J, n))


def privacy_leakage(J: int, n: int, k: int, compromised: str) -> float:
    if compromised not in COMPROMISE:
        raise DomainError(f"compromised must be one of {COMPROMISE}")
    if not (1 <= k <= n <= J):
        raise DomainError(f"need 1 <= k <= n <= J, got J={J}, n={n}, k={k}")
    if compromised == "key_only":
        return 0.0
    if compromised == "sketch_and_key":
        return float(k)
    return max(0.0, k - log2_binomial(J, n))


@dataclass(frozen=True)
class LeakageBoundary:
    J: int
    zero_leakage_max_n: int  # largest n with zero leakage for every k <= n
    first_leaky_n: int
    first_leaky_k: int  # smallest leaking k at first_leaky_n


def zero_leakage_boundary(J: int) -> LeakageBoundary:
    """Scan n = 1..J for the sketch-only case.

    Leakage is zero for all k <= n exactly when n <= log2 C(J, n).
    """
    leaky = [n for n in range(1, J + 1) if n > log2_binomial(J, n)]
    if not leaky:
        return LeakageBoundary(J, J, J + 1, J + 1)
    first = leaky[0]
    if any(n not in leaky for n in range(first, J + 1)):
        raise AssertionError("zero-leakage region is not an initial interval")
    k_min = math.floor(log2_binomial(J, first)) + 1
    return LeakageBoundary(J, first - 1, first, k_min)


def min_leaky_k(J: int, n: int) -> int | None:
    """Smallest k <= n whose sketch-only leakage is positive, or None."""
    k = math.floor(log2_binomial(J, n)) + 1
    return k if k <= n else None
