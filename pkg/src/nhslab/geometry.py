"""Balls, doubling-ball search, and the discrete nesting coefficient.

The coefficient of a nested ball pair (B, S) is 1 plus the sum of
measure-to-dominating-function ratios along the dyadic enlargements of B up
to the scale of S; it measures how far the measure is from doubling between
the two scales.  This module provides the scalar primitives (used directly by
tests and small fixtures) and vectorized per-center tables (used by the norm
and operator suprema at larger sizes).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NotNested
from .mmspace import (
    DEFAULT_MULTIPLIERS,
    DominatingFunction,
    GeometryProfile,
    PointCloudSpace,
)
from .report import CheckReport


@dataclass(frozen=True)
class Ball:
    """Closed ball: membership is dist(center, y) <= radius, no tolerance."""

    center: int
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise NotNested(f"ball radius must be positive, got {self.radius!r}")

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, factor * self.radius)


def ball_members(space: PointCloudSpace, ball: Ball) -> np.ndarray:
    """Member indices in point-index order."""
    return np.nonzero(space.dist[ball.center] <= ball.radius)[0]


def ball_measure(space: PointCloudSpace, ball: Ball) -> float:
    """Total weight of the closed ball, summed in point-index order."""
    mask = space.dist[ball.center] <= ball.radius
    return float(np.sum(space.weights[mask]))


def floor_log(tau: float, value: float = 2.0) -> int:
    """floor(log_tau(value)) with a 1e-12 nudge so representable integer
    logs (tau = 2 gives exactly 1) are not misclassified downward."""
    return int(math.floor(math.log(value) / math.log(tau) + 1e-12))


def smallest_scale_index(tau: float, r_inner: float, r_outer: float) -> int:
    """Smallest integer N >= 0 with tau**N * r_inner >= r_outer."""
    if r_outer <= r_inner:
        return 0
    n = max(0, int(math.ceil(math.log(r_outer / r_inner) / math.log(tau) - 1e-12)))
    while tau ** n * r_inner < r_outer:
        n += 1
    while n > 0 and tau ** (n - 1) * r_inner >= r_outer:
        n -= 1
    return n


# ------------------------------------------------------------------------------
# Scalar coefficient
# ------------------------------------------------------------------------------
@dataclass
class CoefficientValue:
    """Discrete nesting coefficient with its summands exposed.

    ``value`` equals 1 plus the sum of ``terms``; ``N`` is the dyadic index of
    the outer scale and ``k_min`` the lowest summation index.
    """

    value: float
    N: int
    k_min: int
    terms: list


def discrete_coefficient(space: PointCloudSpace, lam: DominatingFunction,
                         inner: Ball, outer: Ball, tau: float) -> CoefficientValue:
    """Coefficient of the nested pair (inner, outer) at dilation step tau.

    Raises :class:`NotNested` unless the member set of ``inner`` is contained
    in ``outer``'s and the radii are ordered.
    """
    if not tau > 1.0:
        raise NotNested(f"tau must exceed 1, got {tau!r}")
    if outer.radius < inner.radius:
        raise NotNested("outer radius is smaller than inner radius")
    inner_mask = space.dist[inner.center] <= inner.radius
    outer_mask = space.dist[outer.center] <= outer.radius
    if np.any(inner_mask & ~outer_mask):
        raise NotNested("inner ball members are not contained in the outer ball")
    n_idx = smallest_scale_index(tau, inner.radius, outer.radius)
    k_min = -floor_log(tau)
    terms = []
    value = 1.0
    for k in range(k_min, n_idx + 1):
        r_k = tau ** k * inner.radius
        mu = ball_measure(space, Ball(inner.center, r_k))
        term = mu / lam(inner.center, r_k)
        terms.append(term)
        value += term
    return CoefficientValue(value=value, N=n_idx, k_min=k_min, terms=terms)


# ------------------------------------------------------------------------------
# Doubling balls
# ------------------------------------------------------------------------------
def smallest_doubling_ball(space: PointCloudSpace, profile: GeometryProfile,
                           ball: Ball, alpha: float) -> Ball:
    """Smallest enlargement alpha**i * B that is (alpha, beta_alpha)-doubling.

    Terminates structurally: once the radius reaches the diameter, enlarging
    no longer changes the measure and the doubling test passes.
    """
    if not alpha > 1.0:
        raise NotNested(f"alpha must exceed 1, got {alpha!r}")
    beta = profile.beta(alpha)
    cap = smallest_scale_index(alpha, ball.radius, max(space.diameter, ball.radius)) + 2
    for i in range(cap + 1):
        candidate = Ball(ball.center, alpha ** i * ball.radius)
        if ball_measure(space, candidate.scaled(alpha)) <= beta * ball_measure(space, candidate):
            return candidate
    raise AssertionError("doubling search failed to terminate; finite spaces always saturate")


# ------------------------------------------------------------------------------
# Vectorized per-center coefficient tables
# ------------------------------------------------------------------------------
class CoefficientTables:
    """Cumulative coefficient sums per center.

    For center c with candidate radii R, ``cumulative[c][i, j]`` is the sum of
    mu(B(c, tau**k R_i)) / lam(c, tau**k R_i) over k = -k_floor .. j - k_floor,
    so the coefficient of (R_i, tau**N R_i) is ``1 + cumulative[c][i, N + k_floor]``.
    """

    def __init__(self, space: PointCloudSpace, lam: DominatingFunction, tau: float,
                 multipliers: Sequence[float] = DEFAULT_MULTIPLIERS, extra_levels: int = 4):
        self.space = space
        self.lam = lam
        self.tau = float(tau)
        self.multipliers = tuple(multipliers)
        self.k_floor = floor_log(tau)
        self.cumulative: list = []
        self.radii: list = []
        self.kmax: list = []
        self._pair_indices: dict = {}
        for c in range(space.n):
            radii = space.candidate_radii(c, multipliers)
            span = smallest_scale_index(self.tau, float(radii[0]), float(radii[-1]))
            sat = smallest_scale_index(self.tau, float(radii[0]),
                                       max(space.diameter, float(radii[0])))
            kmax = max(span, sat) + extra_levels
            ks = np.arange(-self.k_floor, kmax + 1)
            scales = self.tau ** ks
            grid = radii[:, None] * scales[None, :]
            counts = np.searchsorted(space.sorted_dist[c], grid.ravel(), side="right")
            mus = space.prefix_weight[c][counts].reshape(grid.shape)
            lam_vals = np.empty_like(grid)
            for col in range(grid.shape[1]):
                lam_vals[:, col] = lam.table(c, grid[:, col])
            self.cumulative.append(np.cumsum(mus / lam_vals, axis=1))
            self.radii.append(radii)
            self.kmax.append(kmax)

    def concentric(self, center: int, radius_idx, n_index) -> np.ndarray:
        """Coefficients for pairs (R_i, tau**N * R_i), vectorized over inputs."""
        idx = np.asarray(n_index) + self.k_floor
        return 1.0 + self.cumulative[center][radius_idx, idx]

    def pair_scale_indices(self, center: int, cache_cells: int = 400_000) -> np.ndarray:
        """Matrix of scale indices for every concentric radius pair of a
        center; function-independent, so cached below a memory gate."""
        cached = self._pair_indices.get(center)
        if cached is not None:
            return cached
        radii = self.radii[center]
        mat = scale_index_array(self.tau, radii[:, None], radii[None, :]).astype(np.int16)
        if radii.size * radii.size <= cache_cells:
            self._pair_indices[center] = mat
        return mat


def scale_index_array(tau: float, inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
    """Vectorized smallest N >= 0 with tau**N * inner >= outer.

    ``inner`` and ``outer`` broadcast against each other; the float estimate
    is corrected exactly afterwards.
    """
    inner = np.asarray(inner, dtype=float)
    outer = np.asarray(outer, dtype=float)
    ratio = np.maximum(outer / inner, 1.0)
    n = np.ceil(np.log(ratio) / math.log(tau) - 1e-12).astype(np.int64)
    n = np.maximum(n, 0)
    # exact adjustment of the float estimate; one step each way suffices
    for _ in range(2):
        n = n + (tau ** n * inner < outer)
        back = (n > 0) & (tau ** np.maximum(n - 1, 0) * inner >= outer)
        n = n - back
    return n


def coefficient_tables(space: PointCloudSpace, lam: DominatingFunction, tau: float,
                       multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CoefficientTables:
    """Cached access to :class:`CoefficientTables` for (space, lam, tau)."""
    per_lam = space._coeff_cache.setdefault(lam, {})
    key = (float(tau), tuple(multipliers))
    if key not in per_lam:
        per_lam[key] = CoefficientTables(space, lam, tau, multipliers)
    return per_lam[key]


# ------------------------------------------------------------------------------
# Doubling flags and indices, vectorized
# ------------------------------------------------------------------------------
def doubling_flags(space: PointCloudSpace, profile: GeometryProfile, alpha: float,
                   multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> list:
    """Per center: boolean array marking candidate balls that are
    (alpha, beta_alpha)-doubling."""
    beta = profile.beta(alpha)
    flags = []
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        mu = space.prefix_weight[c][space.counts(c, radii)]
        mu_a = space.prefix_weight[c][space.counts(c, alpha * radii)]
        flags.append(mu_a <= beta * mu)
    return flags


def doubling_indices(space: PointCloudSpace, profile: GeometryProfile, alpha: float,
                     multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> list:
    """Per center: smallest i with alpha**i * B doubling, for every candidate ball."""
    beta = profile.beta(alpha)
    out = []
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        sat = smallest_scale_index(alpha, float(radii[0]), max(space.diameter, float(radii[0])))
        kmax = sat + 2
        scales = alpha ** np.arange(kmax + 2)
        grid = radii[:, None] * scales[None, :]
        counts = np.searchsorted(space.sorted_dist[c], grid.ravel(), side="right")
        mus = space.prefix_weight[c][counts].reshape(grid.shape)
        ok = mus[:, 1:] <= beta * mus[:, :-1]
        idx = np.argmax(ok, axis=1)
        # argmax returns 0 when no True exists; saturation guarantees one
        assert bool(np.all(np.take_along_axis(ok, idx[:, None], axis=1))), \
            "saturated balls are always doubling"
        out.append(idx)
    return out


# ------------------------------------------------------------------------------
# Sampled non-concentric nested pairs
# ------------------------------------------------------------------------------
@dataclass(eq=False)
class NestedPairSample:
    """Arrays describing accepted nested pairs (inner ball, outer ball).

    ``q1``/``q2`` are member counts (members of a ball are the first q points
    of its center's distance order), ``i1`` indexes the inner radius in its
    center's candidate grid, and ``coeff`` carries the discrete coefficient
    when a dominating function was supplied at sampling time.
    """

    c1: np.ndarray
    i1: np.ndarray
    r1: np.ndarray
    q1: np.ndarray
    c2: np.ndarray
    r2: np.ndarray
    q2: np.ndarray
    coeff: Optional[np.ndarray]

    def __len__(self) -> int:
        return int(self.c1.shape[0])


def sampled_nested_pairs(space: PointCloudSpace, budget: int, seed: int,
                         multipliers: Sequence[float] = DEFAULT_MULTIPLIERS,
                         lam: Optional[DominatingFunction] = None,
                         tau: Optional[float] = None,
                         doubling_profile: Optional[GeometryProfile] = None,
                         doubling_alpha: float = 6.0) -> NestedPairSample:
    """Draw up to ``budget`` non-concentric nested candidate-ball pairs with a
    fixed-seed generator, verifying member containment.

    The sample is function-independent, so callers cache it per space and
    reuse it across test functions.  When ``doubling_profile`` is given, both
    balls must be (doubling_alpha, beta)-doubling.
    """
    key = ("nested_pairs", budget, seed, tuple(multipliers),
           None if tau is None else float(tau),
           None if doubling_profile is None else (doubling_profile.N0, doubling_profile.nu, doubling_alpha))
    anchor = lam if lam is not None else space
    cache = space._coeff_cache.setdefault(anchor, {})
    if key in cache:
        return cache[key]
    rng = np.random.default_rng(seed)
    flags = None
    if doubling_profile is not None:
        flags = doubling_flags(space, doubling_profile, doubling_alpha, multipliers)
    cols: list = []
    n = space.n
    if n > 1:
        for _ in range(budget):
            c1, c2 = (int(v) for v in rng.choice(n, size=2, replace=False))
            radii1 = space.candidate_radii(c1, multipliers)
            radii2 = space.candidate_radii(c2, multipliers)
            i1 = int(rng.integers(radii1.size))
            i2 = int(rng.integers(radii2.size))
            if radii2[i2] < radii1[i1]:
                c1, c2, i1, i2, radii1, radii2 = c2, c1, i2, i1, radii2, radii1
            r1 = float(radii1[i1])
            r2 = float(radii2[i2])
            if flags is not None and not (flags[c1][i1] and flags[c2][i2]):
                continue
            q1 = int(np.searchsorted(space.sorted_dist[c1], r1, side="right"))
            members1 = space.order[c1][:q1]
            if not np.all(space.dist[c2][members1] <= r2):
                continue
            q2 = int(np.searchsorted(space.sorted_dist[c2], r2, side="right"))
            coeff = None
            if lam is not None and tau is not None:
                coeff = discrete_coefficient(space, lam, Ball(c1, r1), Ball(c2, r2), tau).value
            cols.append((c1, i1, r1, q1, c2, r2, q2, coeff))
    if cols:
        arr = np.asarray([[c[0], c[1], c[3], c[4], c[6]] for c in cols], dtype=np.int64)
        sample = NestedPairSample(
            c1=arr[:, 0], i1=arr[:, 1],
            r1=np.asarray([c[2] for c in cols]),
            q1=arr[:, 2], c2=arr[:, 3],
            r2=np.asarray([c[5] for c in cols]),
            q2=arr[:, 4],
            coeff=None if lam is None or tau is None else np.asarray([c[7] for c in cols]),
        )
    else:
        empty_i = np.zeros(0, dtype=np.int64)
        empty_f = np.zeros(0)
        sample = NestedPairSample(empty_i, empty_i, empty_f, empty_i, empty_i,
                                  empty_f, empty_i,
                                  None if lam is None or tau is None else empty_f)
    cache[key] = sample
    return sample


# ------------------------------------------------------------------------------
# Inequality suite for the coefficient
# ------------------------------------------------------------------------------
def check_coefficient_inequalities(space: PointCloudSpace, lam: DominatingFunction,
                                   tau_pair: tuple = (2.0, 6.0),
                                   sample_budget: int = 5000,
                                   seed: int = 0,
                                   multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Sample concentric nested triples B ⊆ R ⊆ S and check/record the
    coefficient inequalities.

    Exact (asserted): the coefficient grows with the outer ball, with
    constant 1, because the outer index only extends a nonnegative prefix sum.
    Recorded (empirical): bounded-enlargement maxima, the difference constant
    over triples, the inner-shrink constant, and the two-sided ratio band
    between the two dilation steps.
    """
    tau1, tau2 = float(tau_pair[0]), float(tau_pair[1])
    t1 = coefficient_tables(space, lam, tau1, multipliers)
    t2 = coefficient_tables(space, lam, tau2, multipliers)
    rng = np.random.default_rng(seed)

    monotone_ok = True
    monotone_witness: dict = {}
    diff_ratio_max = 0.0
    shrink_ratio_max = 0.0
    cross_max = -math.inf
    cross_min = math.inf
    bounded_max = {2.0: -math.inf, 6.0: -math.inf}
    ge_one_ok = True

    eligible = [c for c in range(space.n) if t1.radii[c].size >= 3]
    attempted = 0
    if eligible:
        for _ in range(sample_budget):
            attempted += 1
            c = int(rng.choice(eligible))
            m = t1.radii[c].size
            i, j, k = np.sort(rng.choice(m, size=3, replace=False))
            r_i, r_j, r_k = (float(t1.radii[c][x]) for x in (i, j, k))
            n_ij = smallest_scale_index(tau1, r_i, r_j)
            n_ik = smallest_scale_index(tau1, r_i, r_k)
            n_jk = smallest_scale_index(tau1, r_j, r_k)
            k_br = float(t1.concentric(c, i, n_ij))
            k_bs = float(t1.concentric(c, i, n_ik))
            k_rs = float(t1.concentric(c, j, n_jk))
            if not (k_br >= 1.0 and k_bs >= 1.0 and k_rs >= 1.0):
                ge_one_ok = False
            if k_br > k_bs:
                monotone_ok = False
                monotone_witness = {"center": c, "r_b": r_i, "r_r": r_j, "r_s": r_k,
                                    "inner": k_br, "outer": k_bs}
            diff_ratio_max = max(diff_ratio_max, (k_bs - k_br) / k_rs)
            shrink_ratio_max = max(shrink_ratio_max, k_rs / k_bs)
            n2_ik = smallest_scale_index(tau2, r_i, r_k)
            k2_bs = float(t2.concentric(c, i, n2_ik))
            cross = k_bs / k2_bs
            cross_max = max(cross_max, cross)
            cross_min = min(cross_min, cross)
            ratio = r_k / r_i
            for alpha in bounded_max:
                if ratio <= alpha:
                    bounded_max[alpha] = max(bounded_max[alpha], k_bs)

    # deterministic pass over pairs (B, alpha*B) for the bounded-enlargement record
    for alpha in (2.0, 6.0):
        for c in range(space.n):
            radii = t1.radii[c]
            n_idx = scale_index_array(tau1, radii, alpha * radii)
            vals = t1.concentric(c, np.arange(radii.size), n_idx)
            bounded_max[alpha] = max(bounded_max[alpha], float(vals.max()))

    passed = monotone_ok and ge_one_ok
    return CheckReport(
        check="coefficient_inequalities",
        passed=passed,
        value=diff_ratio_max,
        worst_witness=monotone_witness,
        details={
            "sampled_triples": attempted,
            "outer_monotone_exact": monotone_ok,
            "at_least_one_exact": ge_one_ok,
            "bounded_enlargement_max": {str(a): v for a, v in bounded_max.items()},
            "difference_constant": diff_ratio_max,
            "inner_shrink_constant": shrink_ratio_max,
            "cross_step_ratio_max": cross_max if cross_max > -math.inf else None,
            "cross_step_ratio_min": cross_min if cross_min < math.inf else None,
            "tau_pair": [tau1, tau2],
        },
    )


def check_coefficient_chain_bound(space: PointCloudSpace, lam: DominatingFunction,
                                  tau: float, chains: Sequence) -> CheckReport:
    """Check the chain inequality on concentric dyadic chains.

    A chain is (center, base_radius, exponents); the balls have radii
    tau**e * base_radius.  Chains whose links do not all exceed the threshold
    3 + floor(log_tau 2) are skipped and counted; qualifying chains must
    satisfy the strict inequality
    sum of link coefficients < threshold * end-to-end coefficient.
    """
    threshold = 3.0 + floor_log(tau)
    qualifying = 0
    passing = 0
    skipped = 0
    witness: dict = {}
    for chain in chains:
        center, base_radius, exponents = chain
        exps = sorted(int(e) for e in exponents)
        if len(exps) < 2:
            skipped += 1
            continue
        balls = [Ball(int(center), tau ** e * float(base_radius)) for e in exps]
        links = [
            discrete_coefficient(space, lam, balls[i], balls[i + 1], tau).value
            for i in range(len(balls) - 1)
        ]
        if not all(v > threshold for v in links):
            skipped += 1
            continue
        qualifying += 1
        total = discrete_coefficient(space, lam, balls[0], balls[-1], tau).value
        if sum(links) < threshold * total:
            passing += 1
        elif not witness:
            witness = {"center": int(center), "base_radius": float(base_radius),
                       "exponents": exps, "links": links, "total": total}
    return CheckReport(
        check="coefficient_chain_bound",
        passed=(qualifying == passing),
        value=float(qualifying),
        worst_witness=witness,
        details={"qualifying": qualifying, "passing": passing,
                 "skipped": skipped, "threshold": threshold},
    )


def check_doubling_coefficient_bound(space: PointCloudSpace, lam: DominatingFunction,
                                     profile: GeometryProfile, alpha: float,
                                     multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Record the maximal coefficient between a ball and its smallest
    doubling enlargement (an empirical constant for stability testing)."""
    tables = coefficient_tables(space, lam, alpha, multipliers)
    idx = doubling_indices(space, profile, alpha, multipliers)
    worst = -math.inf
    witness: dict = {}
    for c in range(space.n):
        vals = tables.concentric(c, np.arange(tables.radii[c].size), idx[c])
        j = int(np.argmax(vals))
        if vals[j] > worst:
            worst = float(vals[j])
            witness = {"center": c, "radius": float(tables.radii[c][j]),
                       "doubling_exponent": int(idx[c][j])}
    return CheckReport(
        check="doubling_coefficient_bound",
        passed=None,
        value=worst,
        worst_witness=witness,
        details={"alpha": alpha, "beta": profile.beta(alpha)},
    )


def validate_weak_doubling(space: PointCloudSpace, lam: DominatingFunction,
                           profile: GeometryProfile, tau: float,
                           multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Record the maximal dyadic index between a ball and its smallest
    doubling enlargement (the empirical weak-doubling constant)."""
    idx = doubling_indices(space, profile, tau, multipliers)
    worst = -1
    witness: dict = {}
    for c in range(space.n):
        j = int(np.argmax(idx[c]))
        if int(idx[c][j]) > worst:
            worst = int(idx[c][j])
            witness = {"center": c, "radius": float(space.candidate_radii(c, multipliers)[j])}
    return CheckReport(
        check="weak_doubling_index",
        passed=None,
        value=float(worst),
        worst_witness=witness,
        details={"tau": tau, "beta": profile.beta(tau)},
    )
