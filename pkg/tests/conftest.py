from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from distcone.cone import DistanceMatrix

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def shortest_path_closure(w: np.ndarray) -> np.ndarray:
    """Floyd-Warshall on a symmetric weight matrix; the result is a metric."""
    d = w.copy()
    n = len(d)
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def random_int_metric(rng: np.random.Generator, n: int, hi: int = 20) -> np.ndarray:
    w = rng.integers(1, hi + 1, size=(n, n))
    w = np.triu(w, 1)
    w = w + w.T
    return shortest_path_closure(w)


def rational_matrix(int_arr: np.ndarray, denom: int = 1) -> DistanceMatrix:
    return DistanceMatrix([[Fraction(int(x), denom) for x in row] for row in int_arr])


@st.composite
def rational_metrics(draw, min_order=1, max_order=5, hi=12):
    n = draw(st.integers(min_order, max_order))
    seed = draw(st.integers(0, 2**32 - 1))
    denom = draw(st.integers(1, 4))
    arr = random_int_metric(np.random.default_rng(seed), n, hi)
    return rational_matrix(arr, denom)


@st.composite
def float_metrics(draw, min_order=1, max_order=8):
    n = draw(st.integers(min_order, max_order))
    seed = draw(st.integers(0, 2**32 - 1))
    pts = np.random.default_rng(seed).normal(size=(n, 3))
    return DistanceMatrix.from_points(pts)


@st.composite
def permutations(draw, n):
    return [x + 1 for x in draw(st.permutations(list(range(n))))]


@pytest.fixture
def unit_triangle():
    return DistanceMatrix([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
