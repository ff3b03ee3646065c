"""Finite metric measure spaces and their dominating functions.

A :class:`PointCloudSpace` is a finite set of atoms with pairwise distances
and positive weights.  Everything downstream (coefficients, norms, operators)
enumerates *candidate balls*: for each center, the closed balls whose radii
come from the pairwise distances of that center, optionally rescaled.  On an
atomic space ball membership only changes at those distances, so the family
is finite and canonical.

A :class:`DominatingFunction` is a positive function of (center, radius),
nondecreasing in the radius, that dominates ball measures and at most doubles
when the radius halves.  ``fit_power_lambda`` produces one automatically;
the validators measure how well any candidate satisfies the requirements.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateRadii,
    DimensionMismatch,
    MetricViolation,
    NonPositiveWeight,
)
from .report import CheckReport

#: Default relative slack for validator comparisons (suprema of ratios
#: amplify rounding, so exact comparisons use this configurable cushion).
DEFAULT_REL_TOL = 1e-9

#: Relative tolerance used when deduplicating candidate radii.
RADIUS_DEDUP_TOL = 1e-12

#: Default rescalings applied to per-center distances when building the
#: candidate radius grid.  Half radii are needed by the doubling inequality
#: and by the lowest dyadic term of the discrete coefficient.
DEFAULT_MULTIPLIERS = (0.5, 1.0)

#: Radius assigned to a center with no positive distances (singleton space).
FALLBACK_RADIUS = 1.0


def _dedup_sorted(values: np.ndarray, rel: float = RADIUS_DEDUP_TOL) -> np.ndarray:
    """Collapse near-equal entries of an ascending array."""
    out = [float(values[0])]
    for v in values[1:]:
        if v > out[-1] * (1.0 + rel):
            out.append(float(v))
    return np.asarray(out, dtype=float)


class PointCloudSpace:
    """Finite metric measure space on weighted atoms.

    Instances are immutable after construction and safe to share across
    workers; the lazily built lookup tables are pure caches.
    """

    def __init__(self, dist: np.ndarray, weights: np.ndarray, coords: Optional[np.ndarray] = None):
        self.dist = np.ascontiguousarray(dist, dtype=float)
        self.weights = np.ascontiguousarray(weights, dtype=float)
        self.coords = None if coords is None else np.ascontiguousarray(coords, dtype=float)
        self.n = int(self.weights.shape[0])
        self.point_ids = list(range(self.n))
        self.diameter = float(self.dist.max()) if self.n else 0.0
        self.total_measure = float(self.weights.sum())
        self.dist.setflags(write=False)
        self.weights.setflags(write=False)
        self._order: Optional[np.ndarray] = None
        self._sorted_dist: Optional[np.ndarray] = None
        self._prefix_weight: Optional[np.ndarray] = None
        self._radii_cache: dict = {}
        self._union_cache: dict = {}
        self._fn_tables: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
        self._lam_matrices: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
        self._coeff_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()

    # -- sorted-distance machinery --------------------------------------------
    @property
    def order(self) -> np.ndarray:
        """Per-center point indices sorted by distance (stable ties)."""
        if self._order is None:
            self._order = np.argsort(self.dist, axis=1, kind="stable")
        return self._order

    @property
    def sorted_dist(self) -> np.ndarray:
        if self._sorted_dist is None:
            self._sorted_dist = np.take_along_axis(self.dist, self.order, axis=1)
        return self._sorted_dist

    @property
    def prefix_weight(self) -> np.ndarray:
        """``prefix_weight[c, q]`` is the weight of the q closest points to c."""
        if self._prefix_weight is None:
            cum = np.cumsum(self.weights[self.order], axis=1)
            self._prefix_weight = np.hstack([np.zeros((self.n, 1)), cum])
        return self._prefix_weight

    def prefix_of(self, values: np.ndarray) -> np.ndarray:
        """Prefix sums of an arbitrary field in per-center distance order."""
        cum = np.cumsum(np.asarray(values, dtype=float)[self.order], axis=1)
        return np.hstack([np.zeros((self.n, 1)), cum])

    def counts(self, center: int, radii) -> np.ndarray:
        """Number of members of the closed balls B(center, r) for each r."""
        return np.searchsorted(self.sorted_dist[center], radii, side="right")

    def ball_weight(self, center: int, radius: float) -> float:
        q = int(np.searchsorted(self.sorted_dist[center], radius, side="right"))
        return float(self.prefix_weight[center, q])

    # -- candidate radius grid -------------------------------------------------
    def candidate_radii(self, center: int, multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> np.ndarray:
        key = (center, tuple(multipliers))
        cached = self._radii_cache.get(key)
        if cached is not None:
            return cached
        row = self.dist[center]
        base = np.unique(row[row > 0.0])
        if base.size == 0:
            radii = np.asarray([FALLBACK_RADIUS])
        else:
            scaled = np.sort(np.concatenate([m * base for m in multipliers]))
            radii = _dedup_sorted(scaled)
        radii.setflags(write=False)
        self._radii_cache[key] = radii
        return radii

    def radius_union(self, multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> np.ndarray:
        """Sorted union of every center's candidate radii."""
        key = tuple(multipliers)
        cached = self._union_cache.get(key)
        if cached is None:
            allr = np.sort(np.concatenate([self.candidate_radii(c, multipliers) for c in range(self.n)]))
            cached = _dedup_sorted(allr)
            cached.setflags(write=False)
            self._union_cache[key] = cached
        return cached

    def fn_table(self, obj, multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> list:
        """Evaluate ``obj`` (anything with ``.table(center, radii)``) on the
        candidate grid of every center, caching by object identity."""
        per_obj = self._fn_tables.setdefault(obj, {})
        key = tuple(multipliers)
        if key not in per_obj:
            per_obj[key] = [
                np.asarray(obj.table(c, self.candidate_radii(c, multipliers)), dtype=float)
                for c in range(self.n)
            ]
        return per_obj[key]

    def pair_table(self, lam: "DominatingFunction") -> np.ndarray:
        """Matrix of lam(x, d(x, y)); entries with d == 0 hold a placeholder 1."""
        cached = self._lam_matrices.get(lam)
        if cached is None:
            mat = np.empty((self.n, self.n), dtype=float)
            for c in range(self.n):
                row = self.dist[c].copy()
                zero = row <= 0.0
                row[zero] = 1.0
                vals = lam.table(c, row)
                vals = np.asarray(vals, dtype=float).copy()
                vals[zero] = 1.0
                mat[c] = vals
            mat.setflags(write=False)
            cached = mat
            self._lam_matrices[lam] = cached
        return cached

    def __repr__(self) -> str:
        return f"PointCloudSpace(n={self.n}, diameter={self.diameter:.6g}, measure={self.total_measure:.6g})"


# ------------------------------------------------------------------------------
# Construction and metric validation
# ------------------------------------------------------------------------------
def _euclidean_matrix(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def build_space(
    points=None,
    weights=None,
    *,
    distances=None,
    rel_tol: float = 1e-12,
    exhaustive_limit: int = 2048,
    sample_factor: int = 10,
    seed: int = 0,
) -> PointCloudSpace:
    """Build and validate a finite metric measure space.

    Exactly one of ``points`` (coordinates; Euclidean metric) or ``distances``
    (a full square matrix) must be given.  The metric axioms are verified
    exhaustively up to ``exhaustive_limit`` points and by sampling at least
    ``sample_factor * n**2`` random triples above that.  The triangle check
    allows a relative slack of ``rel_tol`` to absorb coordinate rounding.
    """
    if (points is None) == (distances is None):
        raise DimensionMismatch("provide exactly one of points= or distances=")
    if weights is None:
        raise DimensionMismatch("weights are required")
    w = np.asarray(weights, dtype=float).ravel()
    n = w.shape[0]
    if n < 1:
        raise DimensionMismatch("a space needs at least one point")
    bad = np.nonzero(~(w > 0.0))[0]
    if bad.size:
        raise NonPositiveWeight(f"weight of point {int(bad[0])} is {w[bad[0]]!r}; weights must be positive")

    coords = None
    if points is not None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] != n:
            raise DimensionMismatch(f"{pts.shape[0]} points but {n} weights")
        coords = pts
        dist = _euclidean_matrix(pts)
    else:
        dist = np.asarray(distances, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise DimensionMismatch("distance matrix must be square")
        if dist.shape[0] != n:
            raise DimensionMismatch(f"{dist.shape[0]}x{dist.shape[0]} distances but {n} weights")
        scale = float(np.abs(dist).max()) if dist.size else 0.0
        if np.any(dist < 0):
            i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
            raise MetricViolation(f"negative distance d({i},{j}) = {dist[i, j]!r}")
        if np.any(np.abs(np.diag(dist)) > rel_tol * max(scale, 1.0)):
            i = int(np.argmax(np.abs(np.diag(dist))))
            raise MetricViolation(f"nonzero diagonal entry d({i},{i}) = {dist[i, i]!r}")
        asym = np.abs(dist - dist.T)
        if np.any(asym > rel_tol * max(scale, 1.0)):
            i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
            raise MetricViolation(f"asymmetry at ({i},{j}): {dist[i, j]!r} vs {dist[j, i]!r}")
        dist = 0.5 * (dist + dist.T)
        np.fill_diagonal(dist, 0.0)

    _check_triangle(dist, rel_tol, exhaustive_limit, sample_factor, seed)
    return PointCloudSpace(dist, w, coords)


def _check_triangle(dist: np.ndarray, rel_tol: float, exhaustive_limit: int,
                    sample_factor: int, seed: int) -> None:
    n = dist.shape[0]
    if n <= 2:
        return
    if n <= exhaustive_limit:
        for k in range(n):
            bound = dist[:, k : k + 1] + dist[k : k + 1, :]
            slack = rel_tol * np.maximum(dist, 1.0)
            viol = dist - bound - slack
            if np.any(viol > 0):
                i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
                raise MetricViolation(
                    f"triangle inequality fails on ({i},{k},{j}): "
                    f"d({i},{j})={dist[i, j]!r} > d({i},{k})+d({k},{j})={bound[i, j]!r}"
                )
        return
    rng = np.random.default_rng(seed)
    triples = rng.integers(0, n, size=(sample_factor * n * n, 3))
    i, k, j = triples[:, 0], triples[:, 1], triples[:, 2]
    lhs = dist[i, j]
    rhs = dist[i, k] + dist[k, j]
    viol = lhs - rhs - rel_tol * np.maximum(lhs, 1.0)
    if np.any(viol > 0):
        t = int(np.argmax(viol))
        raise MetricViolation(
            f"triangle inequality fails on sampled triple ({i[t]},{k[t]},{j[t]}): "
            f"{lhs[t]!r} > {rhs[t]!r}"
        )


# ------------------------------------------------------------------------------
# Geometric doubling estimate
# ------------------------------------------------------------------------------
def estimate_geometric_doubling(space: PointCloudSpace,
                                multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> int:
    """Upper bound the geometric doubling count of the space.

    For every candidate ball B(x, r), greedily covers its members with balls
    of radius r/2 centered at members (farthest-point traversal, ties broken
    by point index).  The greedy cover is a valid cover, so its maximal size
    is a valid, possibly non-tight, doubling count.
    """
    best = 1
    for c in range(space.n):
        row = space.dist[c]
        for r in space.candidate_radii(c, multipliers):
            members = np.nonzero(row <= r)[0]
            if members.size <= best:
                continue
            sub = space.dist[np.ix_(members, members)]
            start = int(np.searchsorted(members, c))
            if start >= members.size or members[start] != c:
                start = 0
            mind = sub[start].copy()
            count = 1
            half = r / 2.0
            while True:
                far = int(np.argmax(mind))
                if mind[far] <= half:
                    break
                count += 1
                np.minimum(mind, sub[far], out=mind)
            if count > best:
                best = count
    return best


# ------------------------------------------------------------------------------
# Dominating functions
# ------------------------------------------------------------------------------
@dataclass(eq=False)
class DominatingFunction:
    """Positive function of (center point, radius > 0) with declared doubling
    constant ``c_lambda`` (the factor allowed when the radius halves).

    ``validated`` is "unchecked" until a validator runs; validators flip it to
    "pass" or "fail" and store the worst witness.
    """

    fn: Callable[[int, float], float]
    c_lambda: float
    description: str = ""
    fn_vec: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    validated: str = "unchecked"
    witness: Optional[dict] = None

    def __post_init__(self):
        if not self.c_lambda >= 1.0:
            raise DimensionMismatch(f"c_lambda must be >= 1, got {self.c_lambda!r}")

    @property
    def nu(self) -> float:
        """Dyadic growth exponent log2(c_lambda)."""
        return math.log2(self.c_lambda)

    def __call__(self, center: int, radius: float) -> float:
        return float(self.fn(center, radius))

    def table(self, center: int, radii) -> np.ndarray:
        radii = np.asarray(radii, dtype=float)
        if self.fn_vec is not None:
            return np.asarray(self.fn_vec(center, radii), dtype=float)
        return np.asarray([self.fn(center, float(r)) for r in radii], dtype=float)


def fit_power_lambda(space: PointCloudSpace, kappa="auto", *, existing: Optional[DominatingFunction] = None,
                     multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> DominatingFunction:
    """Fit a center-independent power law C0 * r**kappa dominating all
    candidate ball measures, with equality at the tightest ball.

    With ``kappa="auto"`` the exponent is the least-squares slope of
    log-measure against log-radius over all candidate balls (clamped at 0 so
    the result is nondecreasing).  A caller-supplied dominating function
    passes through untouched.
    """
    if existing is not None:
        return existing
    logs_r = []
    logs_mu = []
    best_ratio = -math.inf
    rows = []
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        qs = space.counts(c, radii)
        mus = space.prefix_weight[c][qs]
        rows.append((radii, mus))
        logs_r.append(np.log(radii))
        logs_mu.append(np.log(mus))
    if kappa == "auto":
        lr = np.concatenate(logs_r)
        lm = np.concatenate(logs_mu)
        if np.ptp(lr) <= RADIUS_DEDUP_TOL:
            raise DegenerateRadii("automatic exponent fit needs at least two distinct radii")
        slope = float(np.polyfit(lr, lm, 1)[0])
        kappa_val = max(slope, 0.0)
    else:
        kappa_val = float(kappa)
        if kappa_val < 0:
            raise DegenerateRadii(f"kappa must be nonnegative, got {kappa_val!r}")
    for radii, mus in rows:
        ratio = float(np.max(mus / radii ** kappa_val))
        if ratio > best_ratio:
            best_ratio = ratio
    c0 = best_ratio

    def fn(_c: int, r: float) -> float:
        return c0 * r ** kappa_val

    def fn_vec(_c: int, r: np.ndarray) -> np.ndarray:
        return c0 * r ** kappa_val

    return DominatingFunction(
        fn,
        c_lambda=2.0 ** kappa_val,
        description=f"power(kappa={kappa_val:.12g}, c0={c0:.12g})",
        fn_vec=fn_vec,
    )


def validate_upper_doubling(space: PointCloudSpace, lam: DominatingFunction,
                            rel_tol: float = DEFAULT_REL_TOL,
                            multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Check measure domination, the half-radius inequality and radius
    monotonicity on every (center, candidate radius) pair."""
    worst_dom = -math.inf
    worst_half = -math.inf
    worst_mono = -math.inf
    witness: dict = {}
    required_c = 1.0
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        vals = lam.table(c, radii)
        half_vals = lam.table(c, radii / 2.0)
        mus = space.prefix_weight[c][space.counts(c, radii)]
        dom = mus / vals
        j = int(np.argmax(dom))
        if dom[j] > worst_dom:
            worst_dom = float(dom[j])
            if dom[j] > 1.0 + rel_tol:
                witness = {"kind": "domination", "center": c, "radius": float(radii[j]),
                           "mu": float(mus[j]), "lambda": float(vals[j])}
        half = vals / half_vals
        j = int(np.argmax(half))
        required_c = max(required_c, float(half[j]))
        if half[j] > worst_half:
            worst_half = float(half[j])
            if half[j] > lam.c_lambda * (1.0 + rel_tol):
                witness = {"kind": "half_radius", "center": c, "radius": float(radii[j]),
                           "ratio": float(half[j]), "c_lambda": lam.c_lambda}
        if radii.size > 1:
            mono = vals[:-1] / vals[1:]
            j = int(np.argmax(mono))
            if mono[j] > worst_mono:
                worst_mono = float(mono[j])
                if mono[j] > 1.0 + rel_tol:
                    witness = {"kind": "monotonicity", "center": c,
                               "radius": float(radii[j]), "next_radius": float(radii[j + 1])}
    ok = (
        worst_dom <= 1.0 + rel_tol
        and worst_half <= lam.c_lambda * (1.0 + rel_tol)
        and (worst_mono == -math.inf or worst_mono <= 1.0 + rel_tol)
    )
    lam.validated = "pass" if ok else "fail"
    lam.witness = None if ok else witness
    return CheckReport(
        check="upper_doubling",
        passed=ok,
        value=max(worst_dom, worst_half / lam.c_lambda),
        worst_witness=witness,
        details={
            "worst_domination_ratio": worst_dom,
            "worst_half_radius_ratio": worst_half,
            "required_c_lambda": required_c,
            "declared_c_lambda": lam.c_lambda,
        },
    )


def validate_lambda_comparability(space: PointCloudSpace, lam: DominatingFunction,
                                  rel_tol: float = DEFAULT_REL_TOL,
                                  multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Check lam(x, r) <= c_lambda * lam(y, r) over ordered pairs with
    d(x, y) <= r, for every candidate radius r in the global grid."""
    radii = space.radius_union(multipliers)
    table = np.empty((space.n, radii.size), dtype=float)
    for c in range(space.n):
        table[c] = lam.table(c, radii)
    worst = 1.0
    witness: dict = {}
    if space.n > 1:
        for k, r in enumerate(radii):
            admissible = space.dist <= r
            np.fill_diagonal(admissible, False)
            if not admissible.any():
                continue
            col = table[:, k]
            ratio = np.where(admissible, col[:, None] / col[None, :], 0.0)
            j = int(np.argmax(ratio))
            x, y = np.unravel_index(j, ratio.shape)
            if ratio[x, y] > worst:
                worst = float(ratio[x, y])
                witness = {"x": int(x), "y": int(y), "radius": float(r), "ratio": worst}
    ok = worst <= lam.c_lambda * (1.0 + rel_tol)
    return CheckReport(
        check="lambda_comparability",
        passed=ok,
        value=worst,
        worst_witness=witness,
        details={"c_lambda": lam.c_lambda},
    )


def validate_weak_reverse_doubling(lam: DominatingFunction, space: PointCloudSpace,
                                   sigma: float, a_grid: Sequence[float],
                                   tol: float = 1e-6,
                                   max_terms: int = 10000,
                                   multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Measure the dilation constants C_(a) = min lam(x, a*r)/lam(x, r) and
    check that the series of C_(a^j)**(-sigma) converges numerically.

    For each a the admissible radii satisfy r < 2*diam/a.  Measured constants
    are used for the dilations reachable on the grid; beyond that the series
    is continued with the geometric majorant C_(a)**j, and the truncation is
    chosen so the remaining geometric tail is below ``tol``.
    """
    if sigma <= 0:
        raise DegenerateRadii(f"sigma must be positive, got {sigma!r}")
    diam = space.diameter if space.diameter > 0 else FALLBACK_RADIUS
    rows = []
    all_converged = True
    monotone = True
    for a in a_grid:
        if not a > 1.0:
            raise DegenerateRadii(f"dilation factors must exceed 1, got {a!r}")

        def measure(factor: float) -> Optional[float]:
            best = math.inf
            for c in range(space.n):
                radii = space.candidate_radii(c, multipliers)
                keep = radii < 2.0 * diam / factor
                if not keep.any():
                    continue
                rr = radii[keep]
                ratio = lam.table(c, factor * rr) / lam.table(c, rr)
                best = min(best, float(ratio.min()))
            return None if best is math.inf else best

        c_a = measure(a)
        if c_a is None:
            rows.append({"a": a, "c_a": None, "partial_sum": None,
                         "converged": None, "measured_terms": 0})
            continue
        if c_a < 1.0 - DEFAULT_REL_TOL:
            monotone = False
        if c_a <= 1.0 + RADIUS_DEDUP_TOL:
            rows.append({"a": a, "c_a": c_a, "partial_sum": math.inf,
                         "converged": False, "measured_terms": 1})
            all_converged = False
            continue
        ratio = c_a ** (-sigma)
        # truncation with geometric tail ratio**(J+1)/(1-ratio) < tol
        j_cut = int(math.ceil(math.log(tol * (1.0 - ratio) / ratio) / math.log(ratio)))
        j_cut = max(1, min(j_cut, max_terms))
        partial = 0.0
        measured = 0
        for j in range(1, j_cut + 1):
            c_aj = measure(a ** j)
            if c_aj is not None:
                measured += 1
                partial += c_aj ** (-sigma)
            else:
                partial += c_a ** (-sigma * j)
        rows.append({"a": a, "c_a": c_a, "partial_sum": partial,
                     "converged": True, "measured_terms": measured})
    ok = all_converged and monotone
    value = min((r["c_a"] for r in rows if r["c_a"] is not None), default=None)
    return CheckReport(
        check="weak_reverse_doubling",
        passed=ok,
        value=value,
        worst_witness={} if ok else {"non_monotone": not monotone},
        details={"sigma": sigma, "rows": rows},
    )


# ------------------------------------------------------------------------------
# Geometry profile
# ------------------------------------------------------------------------------
@dataclass(eq=False)
class GeometryProfile:
    """Doubling data of a space: covering count N0 and dominating-function
    growth exponent nu, from which the doubling thresholds derive."""

    N0: int
    nu: float

    def __post_init__(self):
        if self.N0 < 1:
            raise DimensionMismatch(f"N0 must be >= 1, got {self.N0!r}")

    @property
    def n0(self) -> float:
        return math.log2(self.N0)

    def beta(self, alpha: float) -> float:
        """Doubling threshold for dilation factor alpha."""
        return alpha ** max(self.n0, self.nu) + 30.0 ** self.n0 + 30.0 ** self.nu


def make_profile(space: PointCloudSpace, lam: DominatingFunction,
                 N0: Optional[int] = None,
                 multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> GeometryProfile:
    if N0 is None:
        N0 = estimate_geometric_doubling(space, multipliers)
    return GeometryProfile(N0=N0, nu=lam.nu)
