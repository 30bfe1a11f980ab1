"""Iterative coordinate grid search over the loss weights (alpha, beta, gamma)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

DEFAULT_CANDIDATES = (1,) + tuple(2 * i for i in range(1, 16))


@dataclass
class GridSearchResult:
    alpha: float
    beta: float
    gamma: float
    converged: bool
    iterations: int
    score: float
    history: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def best(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)


def grid_search(
    evaluate: Callable[[float, float, float], float],
    candidates: Sequence[float] = DEFAULT_CANDIDATES,
    max_iterations: int = 20,
    start: tuple[float, float, float] = (1, 1, 1),
) -> GridSearchResult:
    """Each iteration picks the best beta, then gamma, then alpha from ``candidates``
    (higher score wins, ties go to the smaller value), holding the other two at the
    previous iteration's values. Stops when an iteration changes nothing.
    """
    cands = sorted(set(candidates))
    if not cands:
        raise ValueError("candidate set is empty")
    cache: dict[tuple, float] = {}

    def score(point):
        if point not in cache:
            cache[point] = float(evaluate(*point))
        return cache[point]

    def best_along(axis: int, prev: tuple) -> float:
        best_v, best_s = None, None
        for v in cands:
            point = tuple(v if i == axis else prev[i] for i in range(3))
            s = score(point)
            if best_s is None or s > best_s:
                best_v, best_s = v, s
        return best_v

    prev = tuple(start)
    history = [prev]
    for it in range(1, max_iterations + 1):
        b = best_along(1, prev)
        g = best_along(2, prev)
        a = best_along(0, prev)
        cur = (a, b, g)
        history.append(cur)
        if cur == prev:
            return GridSearchResult(a, b, g, True, it, score(cur), history)
        prev = cur
    best_point = max(cache, key=lambda p: (cache[p], tuple(-x for x in p)))
    warnings.warn(f"grid search did not converge in {max_iterations} iterations; returning best seen")
    return GridSearchResult(*best_point, False, max_iterations, cache[best_point], history)
