"""Generators of distance matrices.

``grow_random`` runs the Markov growth chain: starting from the 1x1 zero
matrix, each step draws a point ``v`` of the compact part of the admissible
set, a shift ``lam`` from a base measure on the half-line, and attaches the
column ``v + lam * (1, ..., 1)``.

``grow_universal`` is the deterministic inductive constructor whose columns
become dense in every corner's admissible set, and ``random_graph_metric`` is
the random {1, 2}-valued graph metric.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from numba import njit
from scipy.stats import qmc

from .cone import FLOAT, RATIONAL, DistanceMatrix, nw_corner
from .polytope import (
    CLAMP_TOL,
    VertexCapExceeded,
    _admissible,
    _attach_unchecked,
    _extend_prefix_array,
    vertices_float,
)
from .rng import stream

logger = logging.getLogger(__name__)

MIXTURE_CAP = 4
ADMISSIBLE_TOL = 1e-12
MAX_RESAMPLES = 100


# -- base measures on the half-line -----------------------------------------

@dataclass(frozen=True)
class BaseMeasure:
    """A distribution on ``[0, inf)``.

    ``kind`` is one of ``exponential`` (rate), ``halfnormal`` (sigma),
    ``uniform`` (lo, hi) or ``table`` (a list of values drawn uniformly).
    """

    kind: str = "exponential"
    params: tuple = (1.0,)

    def __post_init__(self):
        p = self.params
        if self.kind == "exponential":
            ok = len(p) == 1 and p[0] > 0
        elif self.kind == "halfnormal":
            ok = len(p) == 1 and p[0] > 0
        elif self.kind == "uniform":
            ok = len(p) == 2 and 0 <= p[0] <= p[1]
        elif self.kind == "table":
            ok = len(p) >= 1 and all(x >= 0 for x in p)
        else:
            raise ValueError(f"unknown base measure {self.kind!r}")
        if not ok:
            raise ValueError(f"bad parameters {p!r} for {self.kind}")

    @classmethod
    def parse(cls, text: str) -> "BaseMeasure":
        """``exp:1``, ``halfnormal:0.5``, ``uniform:0.5,1`` or ``table:1,2,3``."""
        name, _, rest = text.partition(":")
        aliases = {"exp": "exponential", "exponential": "exponential",
                   "halfnormal": "halfnormal", "half-normal": "halfnormal",
                   "uniform": "uniform", "unif": "uniform", "table": "table"}
        if name not in aliases:
            raise ValueError(f"unknown base measure {name!r}")
        try:
            params = tuple(float(x) for x in rest.split(",")) if rest else ()
        except ValueError:
            raise ValueError(f"cannot parse parameters in {text!r}") from None
        kind = aliases[name]
        if not params:
            params = {"exponential": (1.0,), "halfnormal": (1.0,)}.get(kind, ())
        return cls(kind, params)

    def __str__(self):
        short = {"exponential": "exp"}.get(self.kind, self.kind)
        return f"{short}:{','.join(repr(float(x)) for x in self.params)}"

    def sample(self, rng: np.random.Generator, size=None):
        p = self.params
        if self.kind == "exponential":
            return rng.exponential(1.0 / p[0], size)
        if self.kind == "halfnormal":
            return np.abs(rng.normal(0.0, p[0], size))
        if self.kind == "uniform":
            return rng.uniform(p[0], p[1], size)
        return rng.choice(np.asarray(p, dtype=float), size)


@dataclass(frozen=True)
class GrowthConfig:
    """Transition kernel of the growth chain.

    ``policy`` selects how the compact part ``M_r`` is sampled:
    ``vertex_mixture`` takes a Dirichlet(1, ..., 1) combination of the
    vertices (only while the order is at most ``mixture_cap``; beyond that the
    chain falls back to hit-and-run), ``hit_and_run`` runs coordinate
    hit-and-run for ``burn_in`` updates (default ``64 * order``).
    """

    gamma: BaseMeasure = field(default_factory=BaseMeasure)
    policy: str = "vertex_mixture"
    seed: int = 0
    burn_in: int | None = None
    mixture_cap: int = MIXTURE_CAP

    def __post_init__(self):
        if self.policy not in ("vertex_mixture", "hit_and_run"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.burn_in is not None and self.burn_in < 1:
            raise ValueError("burn_in must be positive")

    def as_dict(self) -> dict:
        return {"gamma": str(self.gamma), "policy": self.policy, "seed": self.seed,
                "burn_in": self.burn_in, "mixture_cap": self.mixture_cap}


# -- sampling the compact part ----------------------------------------------

def small_vertices(arr: np.ndarray) -> np.ndarray:
    """Vertices of the compact part for orders 1-3 in closed form, else by enumeration.

    For a degenerate triangle some of the seven order-3 points coincide; the
    duplicates are harmless for mixtures.
    """
    n = arr.shape[0]
    if n == 1:
        return np.zeros((1, 1))
    if n == 2:
        d = arr[0, 1]
        return np.array([[d, 0.0], [0.0, d]])
    if n == 3:
        al, be, ga = arr[0, 1], arr[0, 2], arr[1, 2]
        de = (al + be + ga) / 2
        return np.array([
            [de - ga, de - be, de - al],
            # apex i: a_i - a_j = r_ij, a_i - a_k = r_ik, a_j + a_k = r_jk
            [de, de - al, de - be],
            [de - al, de, de - ga],
            [de - be, de - ga, de],
            [0.0, al, be],
            [al, 0.0, ga],
            [be, ga, 0.0],
        ])
    return vertices_float(arr, cap=max(n, 4))


@njit(cache=True)
def _har_kernel(R, x, cap, coords, uniforms):  # pragma: no cover - compiled
    n = R.shape[0]
    for t in range(coords.shape[0]):
        i = coords[t]
        lo = 0.0
        hi = cap
        for j in range(n):
            if j == i:
                continue
            d = R[i, j]
            aj = x[j]
            v = abs(aj - d)
            if v > lo:
                lo = v
            v = aj + d
            if v < hi:
                hi = v
        if hi < lo:
            hi = lo
        x[i] = lo + uniforms[t] * (hi - lo)
    return x


def _zero_classes(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Representatives and class labels of the zero-distance relation."""
    n = arr.shape[0]
    label = np.full(n, -1)
    reps = []
    for i in range(n):
        if label[i] >= 0:
            continue
        members = np.flatnonzero((arr[i] <= 0) & (label < 0))
        label[members] = len(reps)
        reps.append(i)
    return np.asarray(reps), label


def hit_and_run(arr: np.ndarray, rng: np.random.Generator, burn_in: int | None = None) -> np.ndarray:
    """Point of the compact part ``M_r`` from coordinate hit-and-run.

    The walk runs on ``A(r) ∩ [0, 3D/2]^n`` (``D`` the diameter); every vertex
    has coordinates at most ``3D/2``, so this set is compact and contains
    ``M_r``. It starts at ``D * (1, ..., 1)``. The final point is pushed down
    the diagonal onto the lower boundary of ``A(r)`` (see :func:`lower_point`),
    which lies inside ``M_r`` and contains every vertex. Without that push the
    new column sits near ``D`` and diameters grow geometrically along a chain.
    Points at distance zero must get equal coordinates, so the walk runs on
    the quotient by zero distances.
    """
    reps, label = _zero_classes(arr)
    R = np.ascontiguousarray(arr[np.ix_(reps, reps)], dtype=float)
    m = len(reps)
    D = float(R.max()) if m > 1 else 0.0
    steps = burn_in if burn_in is not None else 64 * m
    x = np.full(m, D)
    if m > 1 and D > 0:
        coords = rng.integers(0, m, size=steps)
        u = rng.random(steps)
        x = _har_kernel(R, x, 1.5 * D, coords, u)
        x = lower_point(R, x)
    return x[label]


def lower_point(arr: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``a - lam * (1, ..., 1)`` for the largest ``lam`` keeping it admissible."""
    n = len(a)
    lam = float(a.min())
    if n > 1:
        iu = np.triu_indices(n, 1)
        lam = min(lam, float(np.min(a[iu[0]] + a[iu[1]] - arr[iu])) / 2)
    return a - max(lam, 0.0)


class _Chain:
    """State of one growth chain; ``step`` attaches one admissible column."""

    def __init__(self, cfg: GrowthConfig):
        self.cfg = cfg
        self.r = DistanceMatrix.zero(1, FLOAT)
        self.steps = 0
        self._fallback_logged = False

    def _sample_mr(self, arr, rng):
        n = arr.shape[0]
        use_mixture = self.cfg.policy == "vertex_mixture" and n <= self.cfg.mixture_cap
        if self.cfg.policy == "vertex_mixture" and not use_mixture and not self._fallback_logged:
            logger.info("order %d above the mixture cap %d: falling back to hit-and-run",
                        n, self.cfg.mixture_cap)
            self._fallback_logged = True
        if use_mixture:
            V = small_vertices(arr)
            w = rng.dirichlet(np.ones(len(V)))
            return w @ V
        return hit_and_run(arr, rng, self.cfg.burn_in)

    def step(self):
        self.steps += 1
        rng = stream(self.cfg.seed, self.steps)
        arr = self.r.to_array()
        for _ in range(MAX_RESAMPLES):
            v = self._sample_mr(arr, rng)
            a = v + float(self.cfg.gamma.sample(rng))
            if _admissible(self.r, a, ADMISSIBLE_TOL):
                break
            logger.debug("step %d: rejected sample, resampling", self.steps)
        else:
            raise AssertionError(f"no admissible sample after {MAX_RESAMPLES} draws")
        self.r = _attach_unchecked(self.r, a)
        return self.r


def grow_random(cfg: GrowthConfig, steps: int) -> DistanceMatrix:
    """Order ``steps + 1`` matrix from the growth chain; deterministic given ``cfg.seed``.

    Each step uses its own random stream keyed by the step number, so the
    NW-corners of a longer run reproduce a shorter run exactly.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    chain = _Chain(cfg)
    for _ in range(steps):
        chain.step()
    return chain.r


def iter_growth(cfg: GrowthConfig) -> Iterator[DistanceMatrix]:
    chain = _Chain(cfg)
    while True:
        yield chain.step()


def iid_entry_matrix(n: int, lo: float = 0.5, hi: float = 1.0, seed: int = 0) -> DistanceMatrix:
    """Symmetric matrix with i.i.d. U(lo, hi) off-diagonal entries.

    Any such matrix is a proper distance matrix when ``hi <= 2 * lo``.
    """
    if not 0 < lo <= hi <= 2 * lo:
        raise ValueError("need 0 < lo <= hi <= 2*lo for the triangle inequality")
    rng = stream(seed, 0)
    arr = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    arr[iu] = rng.uniform(lo, hi, len(iu[0]))
    arr = arr + arr.T
    return DistanceMatrix._trusted(arr, FLOAT)


def random_graph_metric(n: int, p: float, seed: int) -> DistanceMatrix:
    """Entries 1 with probability ``p`` and 2 otherwise, independently."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be positive")
    rng = stream(seed, 0)
    arr = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    arr[iu] = np.where(rng.random(len(iu[0])) < p, 1.0, 2.0)
    arr = arr + arr.T
    # values in {1, 2} satisfy every triangle inequality
    return DistanceMatrix._trusted(arr, FLOAT)


# -- the universal constructor ----------------------------------------------

def diagonal_sequence() -> Iterator[int]:
    """1, 1, 2, 1, 2, 3, 1, 2, 3, 4, ...; every integer recurs infinitely often."""
    top = 1
    while True:
        yield from range(1, top + 1)
        top += 1


def parametrize(corner: np.ndarray, u: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Map a point of ``[0, 1)^m`` onto ``A(corner)``.

    The first coordinate ranges over the half-line through an exponential
    quantile with the given scale (default ``max(1, diameter)``); every later
    coordinate is placed at fraction ``u_k`` of its feasible interval given
    the earlier ones. Dense subsets of the cube map onto dense subsets of the
    admissible set.
    """
    m = corner.shape[0]
    if scale is None:
        scale = max(1.0, float(corner.max()) if m > 1 else 0.0)
    a = np.empty(m)
    a[0] = -math.log1p(-float(u[0])) * scale
    for k in range(1, m):
        col = corner[:k, k]
        prev = a[:k]
        lo = float(np.max(np.abs(prev - col)))
        hi = float(np.min(prev + col))
        if hi < lo:
            if lo - hi > CLAMP_TOL * max(1.0, scale):
                raise AssertionError(f"empty interval [{lo}, {hi}] in parametrization")
            hi = lo
        a[k] = lo + float(u[k]) * (hi - lo)
    return a


@dataclass
class UniversalSchedule:
    """Which corner to revisit at each step, and how its dense set is enumerated.

    ``dense_set_policy`` is ``"halton"`` (a scrambled Halton sequence pushed
    through :func:`parametrize`, one sequence per corner order) or
    ``"random"`` (i.i.d. uniform parameters). ``seed`` drives the scrambling,
    so different seeds give different enumeration orders of dense sets.
    """

    seed: int = 0
    dense_set_policy: str = "halton"
    m_sequence: str = "diagonal"

    def __post_init__(self):
        if self.dense_set_policy not in ("halton", "random"):
            raise ValueError(f"unknown dense set policy {self.dense_set_policy!r}")
        if self.m_sequence != "diagonal":
            raise ValueError(f"unknown m-sequence {self.m_sequence!r}")
        self._engines: dict[int, object] = {}

    def m_values(self) -> Iterator[int]:
        return diagonal_sequence()

    @staticmethod
    def tolerance(k: int) -> float:
        return 2.0 ** -k

    def parameters(self, m: int) -> np.ndarray:
        """Next parameter point for corner order ``m``."""
        eng = self._engines.get(m)
        if eng is None:
            if self.dense_set_policy == "halton":
                eng = qmc.Halton(d=m, scramble=True, seed=stream(self.seed, 1, m))
            else:
                eng = stream(self.seed, 2, m)
            self._engines[m] = eng
        if self.dense_set_policy == "halton":
            u = eng.random(1)[0]
        else:
            u = eng.random(m)
        # keep the exponential quantile finite
        return np.minimum(u, 1.0 - 2.0 ** -40)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "dense_set_policy": self.dense_set_policy,
                "m_sequence": self.m_sequence}


@dataclass
class UniversalRun:
    matrix: DistanceMatrix
    m_values: list
    occurrences: list
    projection_errors: list


def grow_universal(schedule: UniversalSchedule, steps: int, domain: str = FLOAT) -> UniversalRun:
    """Inductive universal construction.

    At step ``k`` the corner of order ``m_k`` receives its ``s``-th dense-set
    target (``s`` counting earlier visits of the same order); the target is
    extended to the whole current matrix with the midpoint rule and attached.
    The recorded projection error must stay below ``2**-k``.
    In the rational domain targets are converted to exact rationals first.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if domain not in (FLOAT, RATIONAL):
        raise ValueError(f"unknown domain {domain!r}")
    exact = domain == RATIONAL
    r = DistanceMatrix.zero(1, domain)
    seq = schedule.m_values()
    counts: dict[int, int] = {}
    ms, occ, errs = [], [], []
    for k in range(1, steps + 1):
        m = next(seq)
        counts[m] = counts.get(m, 0) + 1
        corner = nw_corner(r, m).to_array()
        target = parametrize(np.asarray(corner, dtype=float), schedule.parameters(m))
        if exact:
            target = np.array([Fraction(x) for x in target], dtype=object)
            target = _exact_repair(corner, target)
        b = _extend_prefix_array(r, target)
        err = float(max(abs(x - y) for x, y in zip(b[:m], target)))
        if not err < schedule.tolerance(k):
            raise AssertionError(f"step {k}: projection error {err} above 2^-{k}")
        if not _admissible(r, b, 0 if exact else ADMISSIBLE_TOL):
            raise AssertionError(f"step {k}: extended vector is not admissible")
        logger.debug("step %d: m=%d s=%d projection error %.3g", k, m, counts[m], err)
        r = _attach_unchecked(r, b)
        ms.append(m)
        occ.append(counts[m])
        errs.append(err)
    return UniversalRun(r, ms, occ, errs)


def _exact_repair(corner: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rebuild a rationalized float target so it is exactly admissible.

    The first coordinate is kept; later ones are clamped into their exact
    feasible intervals, which moves them by at most the float rounding.
    """
    out = target.copy()
    for k in range(1, len(out)):
        col = corner[:k, k]
        prev = out[:k]
        lo = max(abs(x - y) for x, y in zip(prev, col))
        hi = min(x + y for x, y in zip(prev, col))
        out[k] = min(max(out[k], lo), hi)
    return out
