"""Kernels, the fractional Marcinkiewicz integral, and maximal operators.

On an atomic space the truncated kernel sums are piecewise constant in the
truncation parameter, so the Marcinkiewicz integral evaluates in closed form:
between consecutive distances the inner sum is frozen and the remaining
one-dimensional integral is an explicit power integral.  The maximal
operators are suprema over candidate balls containing the evaluation point,
computed by per-center prefix sums and a scatter of per-ball values onto
members.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import (
    InvalidParams,
    NoDoublingBall,
    NonMonotoneTheta,
    NotNormalized,
    ZeroNormB,
)
from .geometry import (
    Ball,
    ball_measure,
    discrete_coefficient,
    doubling_flags,
    coefficient_tables,
    sampled_nested_pairs,
)
from .mmspace import (
    DEFAULT_MULTIPLIERS,
    DominatingFunction,
    GeometryProfile,
    PointCloudSpace,
)
from .report import CheckReport
from .spaces import (
    GrowthFunctionPhi,
    RegularityFunctionPsi,
    campanato_norm,
    morrey_norm,
    oscillation_sums,
)


# ------------------------------------------------------------------------------
# Parameters
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class OperatorParams:
    """Exponents and scales shared by the operator suite.

    ``tau`` is the enlargement of the maximal operators (at least 5); the
    dilation step of coefficient computations is passed separately where it
    matters.
    """

    l: float = 0.0
    rho: float = 1.0
    s: float = 2.0
    p: float = 2.0
    q: float = 2.0
    tau: float = 5.0
    eta: float = 2.0
    delta: float = 0.5
    sigma: float = 0.2
    gamma: float = 1.0

    def __post_init__(self):
        if self.l < 0:
            raise InvalidParams(f"l must be nonnegative, got {self.l!r}")
        if not self.rho > 0:
            raise InvalidParams(f"rho must be positive, got {self.rho!r}")
        if not self.s >= 1:
            raise InvalidParams(f"s must be at least 1, got {self.s!r}")
        if not 1.0 < self.p < math.inf:
            raise InvalidParams(f"p must lie in (1, inf), got {self.p!r}")
        if not self.p <= self.q < math.inf:
            raise InvalidParams(f"q must lie in [p, inf), got {self.q!r}")
        if not self.tau >= 5:
            raise InvalidParams(f"tau must be at least 5, got {self.tau!r}")
        if not self.eta > 1:
            raise InvalidParams(f"eta must exceed 1, got {self.eta!r}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidParams(f"delta must lie in (0, 1), got {self.delta!r}")
        if not self.sigma > 0:
            raise InvalidParams(f"sigma must be positive, got {self.sigma!r}")
        if not self.gamma >= 1:
            raise InvalidParams(f"gamma must be at least 1, got {self.gamma!r}")


# ------------------------------------------------------------------------------
# Kernel moduli and the log-weighted modulus integral
# ------------------------------------------------------------------------------
def power_theta(a: float) -> Callable:
    if not a > 0:
        raise InvalidParams(f"power modulus exponent must be positive, got {a!r}")

    def theta(t):
        return np.power(t, a)

    theta.family = f"power({a:g})"
    return theta


def zero_theta() -> Callable:
    def theta(t):
        return np.zeros_like(np.asarray(t, dtype=float))

    theta.family = "zero"
    return theta


def constant_theta(value: float = 1.0) -> Callable:
    def theta(t):
        return np.full_like(np.asarray(t, dtype=float), value)

    theta.family = f"constant({value:g})"
    return theta


def dini_integral(theta: Callable, tol: float = 1e-8, max_levels: int = 60) -> float:
    """Integral of theta(t)/t * log(1/t) over (0, 1] by dyadic pieces.

    Returns ``math.inf`` when the dyadic pieces admit no decaying geometric
    majorant within ``max_levels`` levels (a divergence declaration); the
    finite value is otherwise accurate within ``tol``.
    """
    ts = np.geomspace(1e-12, 1.0, 241)
    vals = np.asarray(theta(ts), dtype=float)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    if np.any(vals[1:] < vals[:-1] - slack):
        j = int(np.argmax(vals[1:] < vals[:-1] - slack))
        raise NonMonotoneTheta(
            f"theta decreases between t={ts[j]!r} and t={ts[j + 1]!r}")

    def integrand(t: float) -> float:
        return float(theta(t)) / t * math.log(1.0 / t)

    total = 0.0
    pieces: list = []
    for j in range(max_levels):
        a, b = 2.0 ** (-(j + 1)), 2.0 ** (-j)
        piece, _ = quad(integrand, a, b, epsabs=tol / 2.0 ** (j + 2), epsrel=1e-10, limit=200)
        pieces.append(piece)
        total += piece
        if j >= 2:
            recent = pieces[-3:]
            if max(recent) == 0.0:
                return total
            ratios = [recent[i + 1] / recent[i] for i in range(2) if recent[i] > 0]
            if ratios and max(ratios) < 0.95 and recent[1] > 0:
                r = max(ratios)
                if pieces[-1] * r / (1.0 - r) < tol:
                    return total
    return math.inf


# ------------------------------------------------------------------------------
# Kernels
# ------------------------------------------------------------------------------
@dataclass(eq=False)
class KernelSpec:
    """Off-diagonal kernel with size exponent l, modulus theta, and its
    measured size constant (the max of |K| against the reference envelope)."""

    l: float
    theta: Callable
    matrix: np.ndarray
    c_size: float
    dini_value: float
    family: str = "canonical"

    def __call__(self, x: int, y: int) -> float:
        return float(self.matrix[x, y])


def size_bound_matrix(space: PointCloudSpace, lam: DominatingFunction, l: float) -> np.ndarray:
    """Reference envelope d(x,y)**(1+l) / lam(x, d(x,y)), zero on the diagonal."""
    lam_mat = space.pair_table(lam)
    bound = space.dist ** (1.0 + l) / lam_mat
    np.fill_diagonal(bound, 0.0)
    return bound


def make_kernel(space: PointCloudSpace, lam: DominatingFunction, *,
                l: float = 0.0, theta: Optional[Callable] = None,
                family: str = "canonical", scale: float = 1.0, eps: float = 0.1,
                seed: int = 0, dini_tol: float = 1e-8, check_dini: bool = True) -> KernelSpec:
    """Build a kernel from a named family against the reference envelope.

    Families: "canonical" (the envelope itself), "scaled" (a constant multiple)
    and "perturbed" (the envelope times 1 + eps*h for a seeded bounded h).
    """
    if theta is None:
        theta = power_theta(1.0)
    dini = dini_integral(theta, dini_tol) if check_dini else math.nan
    if check_dini and not math.isfinite(dini):
        raise InvalidParams("the kernel modulus fails the log-weighted integrability test")
    bound = size_bound_matrix(space, lam, l)
    if family == "canonical":
        matrix = bound.copy()
    elif family == "scaled":
        matrix = scale * bound
    elif family == "perturbed":
        rng = np.random.default_rng(seed)
        h = rng.uniform(-1.0, 1.0, size=bound.shape)
        matrix = bound * (1.0 + eps * h)
    else:
        raise InvalidParams(f"unknown kernel family {family!r}")
    positive = bound > 0
    c_size = float(np.max(np.abs(matrix[positive]) / bound[positive])) if positive.any() else 0.0
    return KernelSpec(l=l, theta=theta, matrix=matrix, c_size=c_size,
                      dini_value=dini, family=family)


def validate_kernel(space: PointCloudSpace, lam: DominatingFunction, kernel: KernelSpec,
                    pair_budget: int = 8000, seed: int = 0) -> CheckReport:
    """Measure the size constant exactly over all ordered pairs and the
    smoothness constants over admissible triples.

    The smoothness display subtracts two kernel differences, so the left side
    can be negative; it is clamped at zero and the constant for the summed
    variant is reported alongside, neither asserted.
    """
    bound = size_bound_matrix(space, lam, kernel.l)
    positive = bound > 0
    c_size = float(np.max(np.abs(kernel.matrix[positive]) / bound[positive])) if positive.any() else 0.0
    lam_mat = space.pair_table(lam)
    n = space.n
    if n * n <= pair_budget:
        xz_pairs = [(x, z) for x in range(n) for z in range(n) if x != z]
    else:
        rng = np.random.default_rng(seed)
        xz_pairs = []
        for _ in range(pair_budget):
            x, z = rng.choice(n, size=2, replace=False)
            xz_pairs.append((int(x), int(z)))
    smooth_diff = 0.0
    smooth_sum = 0.0
    unbounded = False
    ys = np.arange(n)
    for x, z in xz_pairs:
        dxz = space.dist[x, z]
        if dxz <= 0:
            continue
        dxy = space.dist[x]
        mask = (ys != x) & (ys != z) & (dxy > 0) & (dxy >= dxz / 2.0)
        if not mask.any():
            continue
        row_diff = np.abs(kernel.matrix[x, mask] - kernel.matrix[z, mask])
        col_diff = np.abs(kernel.matrix[mask, x] - kernel.matrix[mask, z])
        lhs_diff = np.maximum(row_diff - col_diff, 0.0)
        lhs_sum = row_diff + col_diff
        rhs = np.asarray(kernel.theta(dxz / dxy[mask]), dtype=float) \
            * dxz ** (1.0 + kernel.l) / lam_mat[x, mask]
        ok = rhs > 0
        if np.any(~ok & (lhs_sum > 1e-300)):
            unbounded = True
        if ok.any():
            smooth_diff = max(smooth_diff, float(np.max(lhs_diff[ok] / rhs[ok])))
            smooth_sum = max(smooth_sum, float(np.max(lhs_sum[ok] / rhs[ok])))
    return CheckReport(
        check="kernel_constants",
        passed=None,
        value=c_size,
        details={
            "c_size": c_size,
            "smoothness_difference": math.inf if unbounded else smooth_diff,
            "smoothness_sum": math.inf if unbounded else smooth_sum,
            "dini_value": kernel.dini_value,
            "family": kernel.family,
        },
    )


# ------------------------------------------------------------------------------
# Integral operators
# ------------------------------------------------------------------------------
def t_lambda(space: PointCloudSpace, lam: DominatingFunction, f: np.ndarray,
             x: Optional[int] = None):
    """Sum of f(y) w(y) / lam(x, d(x, y)) over y at positive distance from x."""
    f = np.asarray(f, dtype=float)
    lam_mat = space.pair_table(lam)
    mask = space.dist > 0
    contrib = np.where(mask, (f * space.weights)[None, :] / lam_mat, 0.0)
    totals = contrib.sum(axis=1)
    return totals if x is None else float(totals[x])


def _marcinkiewicz_at(space: PointCloudSpace, kernel: KernelSpec, f: np.ndarray,
                      params: OperatorParams, x: int,
                      b: Optional[np.ndarray] = None) -> float:
    row = space.dist[x]
    sel = (row > 0) & (f != 0)
    if not sel.any():
        return 0.0
    d = row[sel]
    contrib = kernel.matrix[x, sel] * f[sel] * space.weights[sel] / d ** (1.0 - params.rho)
    if b is not None:
        contrib = contrib * (b[x] - b[sel])
    order = np.argsort(d, kind="stable")
    d = d[order]
    contrib = contrib[order]
    uniq, start = np.unique(d, return_index=True)
    sums = np.add.reduceat(contrib, start)
    partial = np.cumsum(sums)
    a_exp = (params.l + params.rho) * params.s
    rpow = uniq ** (-a_exp)
    upper = np.concatenate([rpow[1:], [0.0]])
    pieces = np.abs(partial) ** params.s * (rpow - upper) / a_exp
    return float(np.sum(pieces) ** (1.0 / params.s))


def marcinkiewicz(space: PointCloudSpace, kernel: KernelSpec, f: np.ndarray,
                  x: Optional[int] = None, params: Optional[OperatorParams] = None):
    """Closed-form evaluation of the fractional Marcinkiewicz integral.

    The truncation integral is summed exactly over the intervals between
    consecutive distinct distances from x to the support of f; atoms at equal
    distance merge into a single jump.
    """
    params = params or OperatorParams()
    f = np.asarray(f, dtype=float)
    if x is not None:
        return _marcinkiewicz_at(space, kernel, f, params, x)
    return np.asarray([_marcinkiewicz_at(space, kernel, f, params, i) for i in range(space.n)])


def marcinkiewicz_commutator(space: PointCloudSpace, kernel: KernelSpec,
                             b: np.ndarray, f: np.ndarray,
                             x: Optional[int] = None,
                             params: Optional[OperatorParams] = None):
    """Commutator variant: each summand is weighted by b(x) - b(y)."""
    params = params or OperatorParams()
    f = np.asarray(f, dtype=float)
    b = np.asarray(b, dtype=float)
    if x is not None:
        return _marcinkiewicz_at(space, kernel, f, params, x, b)
    return np.asarray([_marcinkiewicz_at(space, kernel, f, params, i, b) for i in range(space.n)])


# ------------------------------------------------------------------------------
# Maximal operators
# ------------------------------------------------------------------------------
def _scatter_sup(space: PointCloudSpace, per_center_values: list,
                 multipliers: Sequence[float]) -> np.ndarray:
    """Pointwise supremum over candidate balls containing each point, given
    one value per (center, radius); -inf marks excluded balls."""
    out = np.full(space.n, -math.inf)
    ranks = np.arange(1, space.n + 1)
    for c in range(space.n):
        vals = np.asarray(per_center_values[c], dtype=float)
        counts = space.counts(c, space.candidate_radii(c, multipliers))
        suffix = np.maximum.accumulate(vals[::-1])[::-1]
        first = np.searchsorted(counts, ranks, side="left")
        covered = first < counts.size
        members = space.order[c][covered]
        cur = out[members]
        out[members] = np.maximum(cur, suffix[first[covered]])
    return out


def maximal_p_tau(space: PointCloudSpace, f: np.ndarray, p: float, tau: float,
                  x: Optional[int] = None,
                  multipliers: Sequence[float] = DEFAULT_MULTIPLIERS):
    """Supremum over candidate balls containing x of the (1/mu(tau*B)
    normalized) p-mean of |f| on B."""
    if not p > 1:
        raise InvalidParams(f"p must exceed 1, got {p!r}")
    if not tau >= 5:
        raise InvalidParams(f"tau must be at least 5, got {tau!r}")
    f = np.asarray(f, dtype=float)
    power = space.prefix_of(np.abs(f) ** p * space.weights)
    vals = []
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        qs = space.counts(c, radii)
        mu_tau = space.prefix_weight[c][space.counts(c, tau * radii)]
        vals.append((power[c][qs] / mu_tau) ** (1.0 / p))
    out = _scatter_sup(space, vals, multipliers)
    return out if x is None else float(out[x])


def maximal_psi_p_tau(space: PointCloudSpace, psi: RegularityFunctionPsi,
                      f: np.ndarray, p: float, tau: float,
                      x: Optional[int] = None,
                      multipliers: Sequence[float] = DEFAULT_MULTIPLIERS):
    """As maximal_p_tau with the factor psi(B) inside the supremum."""
    if not p > 1:
        raise InvalidParams(f"p must exceed 1, got {p!r}")
    if not tau >= 5:
        raise InvalidParams(f"tau must be at least 5, got {tau!r}")
    f = np.asarray(f, dtype=float)
    power = space.prefix_of(np.abs(f) ** p * space.weights)
    psit = space.fn_table(psi, multipliers)
    vals = []
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        qs = space.counts(c, radii)
        mu_tau = space.prefix_weight[c][space.counts(c, tau * radii)]
        vals.append(psit[c] * (power[c][qs] / mu_tau) ** (1.0 / p))
    out = _scatter_sup(space, vals, multipliers)
    return out if x is None else float(out[x])


def doubling_maximal(space: PointCloudSpace, profile: GeometryProfile, f: np.ndarray,
                     x: Optional[int] = None,
                     multipliers: Sequence[float] = DEFAULT_MULTIPLIERS):
    """Supremum of plain means of |f| over doubling candidate balls containing
    the point.  Saturated balls are always doubling, so coverage is total."""
    f = np.asarray(f, dtype=float)
    flags = doubling_flags(space, profile, 6.0, multipliers)
    absf = space.prefix_of(np.abs(f) * space.weights)
    vals = []
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        qs = space.counts(c, radii)
        means = absf[c][qs] / space.prefix_weight[c][qs]
        means = np.where(flags[c], means, -math.inf)
        vals.append(means)
    out = _scatter_sup(space, vals, multipliers)
    if np.any(~np.isfinite(out)):
        raise NoDoublingBall("a point is covered by no doubling candidate ball")
    return out if x is None else float(out[x])


def _sharp_exhaustive(space, lam, profile, f, tau, multipliers) -> np.ndarray:
    beta = profile.beta(tau)
    f = np.asarray(f, dtype=float)
    balls = [Ball(c, float(r)) for c in range(space.n)
             for r in space.candidate_radii(c, multipliers)]
    means = {}
    masks = {}
    dbl = {}
    osc = np.zeros(space.n)
    for ball in balls:
        mask = space.dist[ball.center] <= ball.radius
        masks[ball] = mask
        w = space.weights[mask]
        m = float(np.sum(f[mask] * w) / np.sum(w))
        means[ball] = m
        dbl[ball] = ball_measure(space, ball.scaled(tau)) <= beta * ball_measure(space, ball)
        val = float(np.sum(np.abs(f[mask] - m) * w)) / ball_measure(space, ball.scaled(6.0))
        osc[mask] = np.maximum(osc[mask], val)
    pair = np.zeros(space.n)
    for b1 in balls:
        if not dbl[b1]:
            continue
        for b2 in balls:
            if not dbl[b2] or b2.radius < b1.radius:
                continue
            if np.any(masks[b1] & ~masks[b2]):
                continue
            coeff = discrete_coefficient(space, lam, b1, b2, 6.0).value
            val = abs(means[b1] - means[b2]) / coeff
            pair[masks[b1]] = np.maximum(pair[masks[b1]], val)
    return np.maximum(osc, pair)


def sharp_maximal(space: PointCloudSpace, lam: DominatingFunction,
                  profile: GeometryProfile, f: np.ndarray,
                  x: Optional[int] = None, *, pair_budget: int = 2000, seed: int = 0,
                  exhaustive_limit: int = 20000,
                  multipliers: Sequence[float] = DEFAULT_MULTIPLIERS):
    """Oscillation maximal function combined with the coefficient-normalized
    mean-jump supremum over nested doubling ball pairs containing the point.

    Concentric pairs are enumerated exhaustively; non-concentric containing
    pairs come from a fixed-seed budgeted sample (everything, when the family
    is small enough).
    """
    n_balls = _ball_count_cached(space, multipliers)
    f = np.asarray(f, dtype=float)
    if n_balls * n_balls <= exhaustive_limit:
        out = _sharp_exhaustive(space, lam, profile, f, 6.0, multipliers)
        return out if x is None else float(out[x])

    osc_s = oscillation_sums(space, f)
    pf = space.prefix_of(f * space.weights)
    pw = space.prefix_weight
    flags = doubling_flags(space, profile, 6.0, multipliers)
    tables = coefficient_tables(space, lam, 6.0, multipliers)
    kf = tables.k_floor

    vals = []
    pair_vals = []
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        qs = space.counts(c, radii)
        mu6 = pw[c][space.counts(c, 6.0 * radii)]
        vals.append(osc_s[c][qs - 1] / mu6)

        fm = pf[c][qs] / pw[c][qs]
        n_mat = tables.pair_scale_indices(c)
        coeff = 1.0 + np.take_along_axis(tables.cumulative[c], (n_mat + kf).astype(np.int64), axis=1)
        with np.errstate(invalid="ignore"):
            v = np.abs(fm[:, None] - fm[None, :]) / coeff
        allowed = radii[None, :] >= radii[:, None]
        allowed &= flags[c][None, :] & flags[c][:, None]
        v = np.where(allowed, v, -math.inf)
        pair_vals.append(v.max(axis=1))

    osc_part = _scatter_sup(space, vals, multipliers)
    pair_part = _scatter_sup(space, pair_vals, multipliers)
    pair_part = np.maximum(pair_part, 0.0)

    pairs = sampled_nested_pairs(space, pair_budget, seed, multipliers,
                                 lam=lam, tau=6.0,
                                 doubling_profile=profile, doubling_alpha=6.0)
    if len(pairs):
        m1 = pf[pairs.c1, pairs.q1] / pw[pairs.c1, pairs.q1]
        m2 = pf[pairs.c2, pairs.q2] / pw[pairs.c2, pairs.q2]
        ratio = np.abs(m1 - m2) / pairs.coeff
        for t in np.argsort(ratio):
            members = space.order[pairs.c1[t]][: pairs.q1[t]]
            pair_part[members] = np.maximum(pair_part[members], ratio[t])
    out = np.maximum(osc_part, pair_part)
    return out if x is None else float(out[x])


def _ball_count_cached(space: PointCloudSpace, multipliers) -> int:
    return sum(space.candidate_radii(c, multipliers).size for c in range(space.n))


# ------------------------------------------------------------------------------
# Pointwise estimates
# ------------------------------------------------------------------------------
def check_pointwise_domination(space: PointCloudSpace, lam: DominatingFunction,
                               kernel: KernelSpec, f: np.ndarray,
                               params: Optional[OperatorParams] = None,
                               rel_slack: float = 1e-9) -> CheckReport:
    """Assert, at every point, that the Marcinkiewicz integral is bounded by
    ((l+rho)s)**(-1/s) * c_size times the dominating potential of |f|.

    This is the exact triangle-inequality step of the operator bound: the
    truncation integral of each summand is an explicit power tail, so the
    inequality must hold identically up to rounding.
    """
    params = params or OperatorParams()
    f = np.asarray(f, dtype=float)
    lhs = marcinkiewicz(space, kernel, f, None, params)
    a_exp = (params.l + params.rho) * params.s
    rhs = a_exp ** (-1.0 / params.s) * kernel.c_size * t_lambda(space, lam, np.abs(f))
    slack = rel_slack * np.maximum(1.0, rhs)
    viol = lhs - rhs - slack
    worst = int(np.argmax(viol))
    passed = bool(np.all(viol <= 0))
    return CheckReport(
        check="pointwise_domination",
        passed=passed,
        value=float(np.max(lhs - rhs)),
        worst_witness={"x": worst, "lhs": float(lhs[worst]), "rhs": float(rhs[worst])},
        details={"constant": a_exp ** (-1.0 / params.s) * kernel.c_size},
    )


def check_sharp_maximal_estimate(space: PointCloudSpace, lam: DominatingFunction,
                                 profile: GeometryProfile, kernel: KernelSpec,
                                 psi: RegularityFunctionPsi, b: np.ndarray, f: np.ndarray,
                                 params: Optional[OperatorParams] = None,
                                 *, norm_tau: float = 2.0, pair_budget: int = 2000,
                                 seed: int = 0, b_norm: Optional[float] = None,
                                 multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Measure the pointwise ratio of the sharp maximal function of the
    commutator against the maximal-function bound; the max ratio is the
    empirical constant used in refinement-stability tests.

    ``b_norm`` skips recomputing the symbol's oscillation norm when the
    caller evaluates many functions against one symbol.
    """
    params = params or OperatorParams()
    b = np.asarray(b, dtype=float)
    f = np.asarray(f, dtype=float)
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    if b_norm is None:
        b_norm = campanato_norm(space, lam, b, psi, norm_tau, params.gamma,
                                pair_budget=pair_budget, seed=seed,
                                multipliers=multipliers).norm
    if b_norm <= 1e-13 * max(scale, 1.0):
        raise ZeroNormB("the commutator symbol has zero oscillation norm")
    mf = marcinkiewicz(space, kernel, f, None, params)
    g = marcinkiewicz_commutator(space, kernel, b, f, None, params)
    lhs = sharp_maximal(space, lam, profile, g, pair_budget=pair_budget,
                        seed=seed, multipliers=multipliers)
    den = b_norm * (maximal_psi_p_tau(space, psi, f, params.p, 5.0, None, multipliers)
                    + maximal_psi_p_tau(space, psi, mf, params.p, 6.0, None, multipliers))
    mask = den > 0
    skipped = int(np.sum(~mask))
    if not mask.any():
        return CheckReport(check="sharp_maximal_estimate", passed=None, value=0.0,
                           details={"skipped_points": skipped, "b_norm": b_norm})
    ratio = lhs[mask] / den[mask]
    j = int(np.argmax(ratio))
    witness_x = int(np.nonzero(mask)[0][j])
    return CheckReport(
        check="sharp_maximal_estimate",
        passed=None,
        value=float(np.max(ratio)),
        worst_witness={"x": witness_x},
        details={"skipped_points": skipped, "b_norm": b_norm},
    )


def maximal_embedding_constant(space: PointCloudSpace, psi: RegularityFunctionPsi,
                               phi: GrowthFunctionPhi, p: float, q: float,
                               multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> float:
    """Largest value of psi(B) * phi(B)**(1/p - 1/q) over candidate balls."""
    psit = space.fn_table(psi, multipliers)
    phit = space.fn_table(phi, multipliers)
    expo = 1.0 / p - 1.0 / q
    return float(max(np.max(psit[c] * phit[c] ** expo) for c in range(space.n)))


def check_maximal_morrey_pointwise(space: PointCloudSpace, psi: RegularityFunctionPsi,
                                   phi: GrowthFunctionPhi, f: np.ndarray,
                                   params: Optional[OperatorParams] = None,
                                   *, c10: Optional[float] = None, c_impl: float = 1.0,
                                   rel_slack: float = 1e-9,
                                   multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Check the pointwise maximal-function embedding for a function with
    Morrey norm at most 1 (normalized with the same enlargement).

    Splitting on whether phi at the witness ball exceeds the p-th power of
    the plain maximal function gives the bound with constant exactly c10, so
    the measured ratio must not exceed ``c_impl`` (tolerance tightens to
    1e-12 when p equals q, where the chain is a single exact comparison).
    """
    params = params or OperatorParams()
    f = np.asarray(f, dtype=float)
    p, q, tau = params.p, params.q, params.tau
    if c10 is None:
        c10 = maximal_embedding_constant(space, psi, phi, p, q, multipliers)
    norm = morrey_norm(space, f, p, phi, eta=tau, multipliers=multipliers)
    if norm > 1.0 + 1e-9:
        raise NotNormalized(f"Morrey norm is {norm!r}; rescale the input to at most 1")
    lhs = maximal_psi_p_tau(space, psi, f, p, tau, None, multipliers)
    base = maximal_p_tau(space, f, p, tau, None, multipliers)
    mask = base > 0
    bad_zero = bool(np.any(lhs[~mask] > 0))
    tol = 1e-12 if p == q else rel_slack
    if not mask.any():
        return CheckReport(check="maximal_morrey_pointwise", passed=not bad_zero,
                           value=0.0, details={"c10": c10, "c_impl": c_impl})
    ratio = lhs[mask] / (c10 * base[mask] ** (p / q))
    max_ratio = float(np.max(ratio))
    j = int(np.argmax(ratio))
    witness_x = int(np.nonzero(mask)[0][j])
    passed = (max_ratio <= c_impl * (1.0 + tol)) and not bad_zero
    return CheckReport(
        check="maximal_morrey_pointwise",
        passed=passed,
        value=max_ratio,
        worst_witness={"x": witness_x},
        details={"c10": c10, "c_impl": c_impl, "morrey_norm": norm},
    )
