from fractions import Fraction

import numpy as np
import pytest

from distcone.cone import DistanceMatrix, DomainError, nw_corner, permute
from distcone.polytope import build, contains
from distcone.sampler import GrowthConfig, grow_random, iid_entry_matrix, random_graph_metric
from distcone.universality import (
    epsilon_extend_isometry,
    probe_targets,
    universality_defect,
    weak_universality_defect,
)

half = Fraction(1, 2)


def test_all_ones_defect_bounded_below():
    r = DistanceMatrix.from_upper(6, [1] * 15)
    rep = universality_defect(r, 2, targets=[(0, 1)])
    assert rep.epsilon_achieved == 1.0  # every column is (1, 1)
    rep = universality_defect(r, 2, probes=100, seed=0)
    assert rep.epsilon_achieved > 0.25


def test_exact_hit_contributes_zero():
    base = DistanceMatrix.from_upper(2, [1.0])
    r = DistanceMatrix.from_upper(3, [1.0, 0.7, 0.9])
    rep = universality_defect(r, 2, targets=[(0.7, 0.9)])
    assert rep.epsilon_achieved == 0
    assert rep.witness_targets[0]["column"] == 3


def test_errors():
    r = DistanceMatrix.from_upper(2, [1.0])
    with pytest.raises(DomainError):
        universality_defect(r, 2)
    semi = DistanceMatrix.from_upper(3, [0.0, 1.0, 1.0])
    with pytest.raises(DomainError):
        universality_defect(semi, 2)


def test_probes_are_admissible_and_seeded():
    rng = np.random.default_rng(0)
    for n in (1, 3, 6):
        c = DistanceMatrix.from_points(rng.normal(size=(n, 2)))
        T = probe_targets(c.to_array(), 50, seed=4)
        P = build(c)
        assert all(contains(P, t, tol=1e-9) for t in T)
        assert np.array_equal(T, probe_targets(c.to_array(), 50, seed=4))


def test_defect_never_increases_with_columns():
    r = grow_random(GrowthConfig(seed=5), 299)
    prev = np.inf
    for N in (20, 50, 100, 200, 300):
        d = universality_defect(nw_corner(r, N), 3, probes=100, seed=1).epsilon_achieved
        assert d <= prev
        prev = d


def test_permutation_fixing_corner_invariance():
    r = grow_random(GrowthConfig(seed=6), 59)
    rng = np.random.default_rng(1)
    tail = list(rng.permutation(np.arange(4, 61)) )
    g = [1, 2, 3] + [int(x) for x in tail]
    a = universality_defect(r, 3, probes=80, seed=2)
    b = universality_defect(permute(r, g), 3, probes=80, seed=2)
    assert a.epsilon_achieved == b.epsilon_achieved
    # witness columns agree up to the relabeling
    for wa, wb in zip(a.witness_targets, b.witness_targets):
        assert wa["distance"] == wb["distance"]


def test_extend_isometry_self():
    r = grow_random(GrowthConfig(seed=7), 30)
    q = nw_corner(r, 6)
    assert epsilon_extend_isometry(r, q, 3, 1e-9) == [4, 5, 6]
    assert epsilon_extend_isometry(r, q, 3, 1e-9, exhaustive=True) == [4, 5, 6]


def test_extend_isometry_all_ones_fails():
    r = DistanceMatrix.from_upper(8, [1] * 28)
    q = DistanceMatrix([[0, 1, half], [1, 0, half], [half, half, 0]])
    assert epsilon_extend_isometry(r, q, 2, 0.1) is None
    assert epsilon_extend_isometry(r, q, 2, 0.1, exhaustive=True) is None


def test_extend_isometry_corner_mismatch():
    r = DistanceMatrix.from_upper(3, [1, 1, 1])
    q = DistanceMatrix.from_upper(3, [2, 1, 1])
    with pytest.raises(DomainError):
        epsilon_extend_isometry(r, q, 2, 0.1)


def test_extend_isometry_certificate_verified():
    rng = np.random.default_rng(3)
    r = grow_random(GrowthConfig(seed=8, policy="hit_and_run"), 39)
    R = r.to_array()
    for _ in range(20):
        idx = [1, 2] + list(rng.choice(np.arange(3, 41), 2, replace=False))
        q = r.submatrix(idx)
        q = DistanceMatrix(q.to_array() + np.where(np.eye(4, dtype=bool), 0, 0.0))
        got = epsilon_extend_isometry(r, q, 2, 0.3)
        ex = epsilon_extend_isometry(r, q, 2, 0.3, exhaustive=True)
        assert ex is not None
        if got is not None:
            full = [1, 2] + got
            sub = R[np.ix_(np.array(full) - 1, np.array(full) - 1)]
            assert np.abs(sub - q.to_array()).max() < 0.3


def test_weak_defect_principal_submatrix_is_zero():
    r = grow_random(GrowthConfig(seed=9), 25)
    q = r.submatrix([4, 9, 17])
    err, idx = weak_universality_defect(r, q, exhaustive=True)
    assert err == 0
    err, idx = weak_universality_defect(r, q)
    assert err == 0 and r.submatrix(idx) == q


def test_weak_defect_discrete_values():
    r = random_graph_metric(30, 0.5, 1)
    q = DistanceMatrix.from_upper(3, [1.5, 1.0, 1.0])
    err, _ = weak_universality_defect(r, q, exhaustive=True)
    assert err >= 0.5
    assert weak_universality_defect(r, q).error >= err


def test_weak_greedy_matches_oracle_on_small_cases():
    rng = np.random.default_rng(4)
    for s in range(10):
        r = random_graph_metric(12, 0.5, s)
        q = DistanceMatrix.from_upper(3, list(rng.choice([1.0, 2.0], 3)))
        ex = weak_universality_defect(r, q, exhaustive=True)
        gr = weak_universality_defect(r, q)
        assert gr.error >= ex.error
        assert r.submatrix(gr.indices) is not None


def test_half_one_regime_weak_but_not_universal():
    # i.i.d. entries in [1/2, 1]: submatrices approximate such targets,
    # yet no column comes close to the admissible target (0.1)
    rng = np.random.default_rng(5)
    small = iid_entry_matrix(60, seed=1)
    big = iid_entry_matrix(600, seed=1)
    errs_small, errs_big = [], []
    for _ in range(10):
        q = DistanceMatrix.from_upper(3, list(rng.uniform(0.5, 1.0, 3)))
        errs_small.append(weak_universality_defect(small, q).error)
        errs_big.append(weak_universality_defect(big, q).error)
    assert np.mean(errs_big) < np.mean(errs_small)
    assert max(errs_big) < 0.05
    assert universality_defect(big, 1, targets=[(0.1,)]).epsilon_achieved >= 0.4


def test_uniform_interval_weak_defect():
    rng = np.random.default_rng(6)
    pts = rng.uniform(0, 1, size=(3000, 1))
    r = DistanceMatrix.from_points(pts)
    errs = []
    for _ in range(5):
        q = DistanceMatrix.from_points(rng.uniform(0, 1, size=(3, 1)))
        errs.append(weak_universality_defect(r, q, epsilon=0.05).error)
    assert np.median(errs) < 0.05
