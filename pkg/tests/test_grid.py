import pytest

from biosketch.deephash import grid_search

S = range(1, 31)


def test_separable_objective_finds_optimum():
    res = grid_search(lambda a, b, g: -(a - 8) ** 2 - (b - 2) ** 2 - (g - 2) ** 2, S)
    assert res.best == (8, 2, 2) and res.converged


def test_constant_callback_ties_to_smallest():
    assert grid_search(lambda a, b, g: 0.0, S).best == (1, 1, 1)


def test_alpha_only_callback_keeps_others_at_one():
    res = grid_search(lambda a, b, g: -abs(a - 6), S)
    assert res.best == (6, 1, 1)


def test_non_convergence_warns_and_returns_best():
    # best alpha is 3 - previous beta and vice versa, so iterates alternate (1,1) <-> (2,2)
    def alternating(a, b, g):
        return -((a - (3 - b)) ** 2) - (b - (3 - a)) ** 2

    with pytest.warns(UserWarning, match="did not converge"):
        res = grid_search(alternating, [1, 2], max_iterations=6)
    assert not res.converged
    assert res.score == 0
    assert res.history[1] == (2, 2, 1) and res.history[2] == (1, 1, 1)


def test_empty_candidates_rejected():
    with pytest.raises(ValueError):
        grid_search(lambda a, b, g: 0, [])
