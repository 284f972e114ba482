"""The ten acceptance criteria, each at its stated scale and tolerance.

Every test prints one ``PASS``/``FAIL`` line with the measured numbers, so
``pytest -s tests/test_acceptance.py`` (or the tee'd verbose log) doubles as
the acceptance report.
"""
import itertools
import json
import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from distcone.cli import main
from distcone.cone import DistanceMatrix, nw_corner, validate
from distcone.distribution import (
    NOT_MATRIX_DISTRIBUTION,
    MetricTriple,
    all_ones_matrix,
    ball_measure_estimate,
    compare,
    constant_source,
    coverage_condition,
    coverage_report,
    exact_marginal,
    fingerprint,
    iid_source,
    invariance_check,
    marginals_equal,
    sample_matrix,
    uniform_edges,
    uniform_triple,
    weight_preserving_isometry,
)
from distcone.polytope import build, contains, extend_prefix, extension_interval, extremal_points
from distcone.sampler import (
    GrowthConfig,
    UniversalSchedule,
    grow_random,
    grow_universal,
    iid_entry_matrix,
    random_graph_metric,
)
from distcone.universality import universality_defect, weak_universality_defect
from conftest import random_int_metric, rational_matrix

F = Fraction


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


def closed_form_vertices(al, be, ga):
    """The seven vertices of A(r) for r12 = al, r13 = be, r23 = ga."""
    de = (al + be + ga) / 2
    return {
        (de - ga, de - be, de - al),
        (de, de - al, de - be), (de - al, de, de - ga), (de - be, de - ga, de),
        (F(0), al, be), (al, F(0), ga), (be, ga, F(0)),
    }


def printed_apex_forms(al, be, ga):
    de = (al + be + ga) / 2
    return {(de, de - al, de - ga), (de - be, de, de - al), (de - ga, de - be, de)}


def test_criterion_01_unit_triangle_vertices(tmp_path, capsys, report):
    m = tmp_path / "tri.json"
    m.write_text(json.dumps({"order": 3, "upper": [1, 1, 1]}))
    t0 = time.perf_counter()
    code = main(["extremal", str(m)])
    elapsed = time.perf_counter() - t0
    body = json.loads(capsys.readouterr().out)
    got = {tuple(F(x) for x in v) for v in body["vertices"]}
    h, th = F(1, 2), F(3, 2)
    expected = {(h, h, h), (th, h, h), (h, th, h), (h, h, th), (0, 1, 1), (1, 0, 1), (1, 1, 0)}
    ok = code == 0 and got == expected and len(body["vertices"]) == 7 and elapsed < 1.0
    report(1, ok, f"7 exact vertices via the CLI in {elapsed:.3f}s")


def test_criterion_02_closed_forms(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    matched = printed_ok = 0
    for _ in range(100):
        denom = int(rng.integers(1, 7))
        r = rational_matrix(random_int_metric(rng, 3, 15), denom)
        al, be, ga = r.entry(1, 2), r.entry(1, 3), r.entry(2, 3)
        verts = set(extremal_points(build(r)))
        matched += verts == closed_form_vertices(al, be, ga)
        printed_ok += printed_apex_forms(al, be, ga) <= verts
    elapsed = time.perf_counter() - t0
    ok = matched == 100 and elapsed < 10
    report(2, ok, f"{matched}/100 rational matrices equal the closed forms in {elapsed:.2f}s "
                  f"(apex coordinates in the order as printed: {printed_ok}/100)")


def _admissible_prefix(rng, corner: np.ndarray, exact: bool):
    """A random admissible vector: shortest-path extension with long enough edges."""
    n = corner.shape[0]
    diam = max(1, math.ceil(np.max(corner)))
    if exact:
        w = [F(int(x), 2) for x in rng.integers(diam, 2 * diam + 1, n)]
        return [min(w[j] + corner[i, j] for j in range(n)) for i in range(n)]
    w = rng.uniform(diam / 2, diam, n)
    return list((w[None, :] + corner).min(axis=1))


def _triangle_ok(M: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Batched metric check for matrices of shape (g, m, m)."""
    lhs = M[:, :, None, :]
    rhs = M[:, :, :, None] + M[:, None, :, :]
    return np.all(lhs <= rhs + tol, axis=(1, 2, 3))


def test_criterion_03_extension_suite(report):
    rng = np.random.default_rng(33)
    failures = []
    for case in range(1000):
        total = int(rng.integers(3, 9))
        n = total - 2
        exact = case % 2 == 0
        if exact:
            full = rational_matrix(random_int_metric(rng, total, 9), int(rng.integers(1, 4)))
        else:
            full = DistanceMatrix.from_points(rng.normal(size=(total, 3)))
        r = nw_corner(full, n)
        shift = F(int(rng.integers(0, 3)), 2) if exact else float(rng.uniform(0, 1))
        a = [full.entry(i, n + 1) + shift for i in range(1, n + 1)]
        b = [full.entry(i, n + 2) for i in range(1, n + 1)]
        iv = extension_interval(r, a, b)
        if not iv.lower <= iv.upper:
            failures.append((case, "empty interval"))
            continue
        lo, hi = float(iv.lower), float(iv.upper)
        grid = np.concatenate([np.arange(lo - 0.25, lo + 0.25, 0.01), np.arange(hi - 0.25, hi + 0.25, 0.01),
                               [(lo + hi) / 2]])
        grid = grid[grid >= 0]
        base = np.zeros((total, total))
        base[:n, :n] = np.asarray(r.to_array(), dtype=float)
        base[n, :n] = base[:n, n] = np.asarray(a, dtype=float)
        base[n + 1, :n] = base[:n, n + 1] = np.asarray(b, dtype=float)
        M = np.repeat(base[None], len(grid), axis=0)
        M[:, n, n + 1] = M[:, n + 1, n] = grid
        feasible = grid[_triangle_ok(M)]
        if len(feasible) == 0 or abs(feasible.min() - lo) > 0.01 or abs(feasible.max() - hi) > 0.01:
            failures.append((case, "grid boundary"))
        m = int(rng.integers(1, total))
        corner = np.asarray(nw_corner(full, m).to_array(), dtype=object if exact else float)
        prefix = _admissible_prefix(rng, corner, exact)
        ext = extend_prefix(full, prefix, rule=("midpoint", "lower", "upper")[case % 3])
        if not contains(build(full), ext, tol=0 if exact else 1e-9):
            failures.append((case, "extend_prefix"))
    report(3, not failures, f"1000 cases, order <= 8, {len(failures)} failures {failures[:3]}")


def _violations(r: DistanceMatrix) -> int:
    rep = validate(np.asarray(r.to_array(), dtype=float), tol=1e-12)
    return len(rep.violations)


@pytest.mark.slow
def test_criterion_04_sampler_closure(report):
    t0 = time.perf_counter()
    bad10 = sum(_violations(grow_random(GrowthConfig(seed=s), 9)) > 0 for s in range(10_000))
    bad50 = sum(_violations(grow_random(GrowthConfig(seed=s), 49)) > 0 for s in range(1000))
    elapsed = time.perf_counter() - t0
    report(4, bad10 == 0 and bad50 == 0,
           f"order 10: {bad10}/10000 invalid, order 50: {bad50}/1000 invalid ({elapsed:.0f}s)")


@pytest.mark.slow
def test_criterion_05_universal_decay(report):
    t0 = time.perf_counter()
    rows, ok = [], True
    for seed in (1, 2, 3):
        r = grow_universal(UniversalSchedule(seed=seed), 399).matrix
        assert r.order == 400
        d400 = universality_defect(r, 1, probes=200, seed=seed).epsilon_achieved
        d100 = universality_defect(nw_corner(r, 100), 1, probes=200, seed=seed).epsilon_achieved
        ok &= d400 < 0.1 and d400 < d100
        rows.append(f"seed {seed}: {d100:.4f} -> {d400:.4f}")
    elapsed = time.perf_counter() - t0
    report(5, ok and elapsed < 300, "; ".join(rows) + f" ({elapsed:.1f}s)")


def test_criterion_06_counterexamples(report):
    inv = invariance_check(iid_source(0.5, 1.0), 3, 10_000, seed=6)
    stats = [c.statistic for c in (inv.raw_vs_permuted, inv.raw_vs_shifted, inv.permuted_vs_shifted)]
    r = iid_entry_matrix(400, 0.5, 1.0, seed=6)
    iid_cov = [coverage_condition(r, 0.3, N) for N in range(1, 101)]
    iid_cls = {coverage_report(r, 0.3, N).classification for N in (1, 50, 100)}
    point = all_ones_matrix(400)
    inv0 = invariance_check(constant_source(1.0), 3, 10_000, seed=6)
    pt_cov = [coverage_condition(point, 0.3, N) for N in range(1, 101)]
    pt_cls = {coverage_report(point, 0.3, N).classification for N in (1, 50, 100)}
    ok = (inv.passed and inv0.passed and all(c == 0.0 for c in iid_cov) and all(c == 0.0 for c in pt_cov)
          and iid_cls == pt_cls == {NOT_MATRIX_DISTRIBUTION})
    report(6, ok, f"invariance statistics {np.round(stats, 4).tolist()} vs threshold "
                  f"{inv.raw_vs_permuted.threshold:.4f}; coverage max {max(iid_cov)} (i.i.d.), "
                  f"{max(pt_cov)} (point mass); both '{NOT_MATRIX_DISTRIBUTION}'")


def _five_atom(rng):
    a = np.zeros((5, 5))
    iu = np.triu_indices(5, 1)
    a[iu] = rng.uniform(0.6, 1.0, len(iu[0]))
    w = rng.dirichlet(np.ones(5) * 4)
    return MetricTriple(None, DistanceMatrix(a + a.T), w)


def test_criterion_07_compare_isometry_classes(report):
    rng = np.random.default_rng(77)
    correct = {"isometric": 0, "perturbed": 0}
    disagreements = 0
    for pair in range(50):
        T = _five_atom(rng)
        if pair < 25:
            kind = "isometric"
            S = T.relabel([int(x) + 1 for x in rng.permutation(5)])
        else:
            kind = "perturbed"
            a = T.metric.to_array().copy()
            i, j = sorted(rng.choice(5, 2, replace=False))
            a[i, j] += 0.2
            a[j, i] += 0.2
            S = MetricTriple(None, DistanceMatrix(a), T.weights)
        edges = uniform_edges(max(float(T.metric.diameter), float(S.metric.diameter)))
        verdict = compare(fingerprint(T, 3, 10_000, edges, seed=2 * pair),
                          fingerprint(S, 3, 10_000, edges, seed=2 * pair + 1)).same
        oracle = marginals_equal(exact_marginal(T, 3), exact_marginal(S, 3))
        assert oracle == (weight_preserving_isometry(T, S) is not None)
        correct[kind] += verdict == (kind == "isometric")
        disagreements += verdict != oracle
    ok = correct["isometric"] >= 24 and correct["perturbed"] >= 24 and disagreements == 0
    report(7, ok, f"isometric {correct['isometric']}/25, perturbed {correct['perturbed']}/25, "
                  f"{disagreements} disagreements with the exact oracle")


def test_criterion_08_ball_estimator(report):
    r = sample_matrix(uniform_triple(all_ones_matrix(4)), 10_000, seed=8)
    worst = max(abs(ball_measure_estimate(r, i, 0.5) - 0.25) for i in range(1, r.order + 1))
    d = 1.0
    T = MetricTriple(["x", "y"], DistanceMatrix([[0, d], [d, 0]]), [0.75, 0.25])
    edges = uniform_edges(2.0, bins=8)
    f = fingerprint(T, 2, 10_000, edges, seed=8)
    d_bin = int(np.searchsorted(edges, d, side="right")) - 1
    mass = float(f.marginal(0)[d_bin])
    ok = worst < 0.02 and abs(mass - 3 / 8) < 0.02
    report(8, ok, f"max |ball - 1/4| over all i = {worst:.4f}; d-bin mass {mass:.4f} (3/8 = 0.375)")


@pytest.mark.slow
def test_criterion_09_graph_metric(report):
    targets = [DistanceMatrix.from_upper(3, list(v)) for v in itertools.product((1, 2), repeat=3)]
    valid = hits = 0
    for seed in range(100):
        r = random_graph_metric(200, 0.5, seed)
        valid += validate(np.asarray(r.to_array(), dtype=float)).valid
        hits += all(weak_universality_defect(r, q, epsilon=0.5).error == 0 for q in targets)
    report(9, valid == 100 and hits >= 99,
           f"{valid}/100 valid; all 8 order-3 {{1,2}} targets embedded exactly in {hits}/100 runs")


def test_criterion_10_replay_determinism(tmp_path, capsys, report):
    tri = tmp_path / "t.json"
    tri.write_text(json.dumps({"points": [1, 2, 3, 4], "metric_upper": [1, 2, 2, 1, 1, 2],
                               "weights": [0.1, 0.2, 0.3, 0.4]}))
    mat = tmp_path / "m.json"
    mat.write_text(json.dumps({"order": 4, "upper": [1, "3/2", 1, 2, 1, "1/2"]}))
    runs = {
        "gen-random": ["gen-random", "--steps", "20", "--seed", "10"],
        "gen-universal": ["gen-universal", "--steps", "60", "--seed", "10"],
        "gen-graph": ["gen-graph", "--n", "30", "--seed", "10"],
        "extremal": ["extremal", str(mat)],
        "check-universal": ["check-universal", str(mat), "--n", "2", "--probes", "50", "--seed", "10"],
        "fingerprint": ["fingerprint", "--triple", str(tri), "--samples", "20000", "--seed", "10"],
        "coverage": ["coverage", "--matrix", str(mat), "--epsilon", "0.6", "--N", "2"],
        "invariance": ["invariance", "--triple", str(tri), "--samples", "5000", "--seed", "10"],
    }
    thread_counts = sorted({1, 4, os.cpu_count() or 1})
    bad = []
    for name, argv in runs.items():
        outputs = []
        for t in thread_counts:
            out = tmp_path / f"{name}-{t}.json"
            assert main(argv + ["--threads", str(t), "-o", str(out)]) == 0
            outputs.append(out.read_bytes())
            for u in thread_counts:
                capsys.readouterr()
                code = main(["replay", str(out), "--threads", str(u)])
                if code != 0 or not json.loads(capsys.readouterr().out)["identical"]:
                    bad.append((name, t, u))
        if len(set(outputs)) != 1:
            bad.append((name, "outputs differ"))
    report(10, not bad, f"{len(runs)} commands replayed byte-identically across threads "
                        f"{thread_counts}; mismatches {bad}")
