"""Generalized Morrey and Campanato norms on finite weighted point clouds.

The Morrey norm is a supremum over candidate balls of normalized p-means;
the Campanato norm combines a normalized mean-oscillation supremum with a
regularity supremum over nested ball pairs, where mean jumps are divided by
a power of the discrete nesting coefficient.  Ball-pair enumeration is
exhaustive when the family is small, and otherwise uses the exhaustive
concentric dyadic ladder plus a budgeted, fixed-seed sample of non-concentric
containing pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidExponent, ZeroNorm
from .geometry import (
    Ball,
    ball_measure,
    ball_members,
    discrete_coefficient,
    coefficient_tables,
    sampled_nested_pairs,
    scale_index_array,
)
from .mmspace import (
    DEFAULT_MULTIPLIERS,
    DominatingFunction,
    PointCloudSpace,
)
from .report import CheckReport

_TINY = 1e-300


# ------------------------------------------------------------------------------
# Radial function families
# ------------------------------------------------------------------------------
@dataclass(eq=False)
class RadialFunction:
    """Positive function of (center point, radius)."""

    fn: Callable[[int, float], float]
    fn_vec: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    family: str = "custom"
    param: Optional[float] = None

    def __call__(self, center: int, radius: float) -> float:
        return float(self.fn(center, radius))

    def table(self, center: int, radii) -> np.ndarray:
        radii = np.asarray(radii, dtype=float)
        if self.fn_vec is not None:
            return np.asarray(self.fn_vec(center, radii), dtype=float)
        return np.asarray([self.fn(center, float(r)) for r in radii], dtype=float)


@dataclass(eq=False)
class RegularityFunctionPsi(RadialFunction):
    """Ball normalizer for the Campanato norm; ``c_psi`` is filled by
    :func:`validate_psi` with the measured doubling/comparability constant."""

    c_psi: Optional[float] = None


@dataclass(eq=False)
class GrowthFunctionPhi(RadialFunction):
    """Strictly decreasing Morrey normalizer with concavity exponent delta.

    ``eta_constants`` maps each tested enlargement factor to the measured
    (lower, upper) nested-ball constants."""

    delta: float = 0.5
    eta_constants: dict = field(default_factory=dict)


def constant_psi() -> RegularityFunctionPsi:
    return RegularityFunctionPsi(lambda c, r: 1.0, lambda c, r: np.ones_like(r),
                                 family="constant", param=None)


def radius_power_psi(exponent: float) -> RegularityFunctionPsi:
    return RegularityFunctionPsi(
        lambda c, r: float(r) ** exponent,
        lambda c, r: np.asarray(r, dtype=float) ** exponent,
        family="radius_power", param=exponent,
    )


def lambda_power_psi(lam: DominatingFunction, alpha: float) -> RegularityFunctionPsi:
    return RegularityFunctionPsi(
        lambda c, r: lam(c, r) ** alpha,
        lambda c, r: np.asarray(lam.table(c, r), dtype=float) ** alpha,
        family="lambda_power", param=alpha,
    )


def weight_psi(space: PointCloudSpace) -> RegularityFunctionPsi:
    """Center-dependent, radius-free normalizer; useful as a comparability
    stress case because wildly varying weights break the equal-radius bound."""
    w = space.weights
    return RegularityFunctionPsi(lambda c, r: float(w[c]),
                                 lambda c, r: np.full_like(np.asarray(r, float), float(w[c])),
                                 family="weight", param=None)


def power_phi(a: float, delta: float = 0.5) -> GrowthFunctionPhi:
    if not a > 0:
        raise InvalidExponent(f"power decay exponent must be positive, got {a!r}")
    return GrowthFunctionPhi(
        lambda c, r: float(r) ** (-a),
        lambda c, r: np.asarray(r, dtype=float) ** (-a),
        family="power", param=a, delta=delta,
    )


def shifted_power_phi(a: float, delta: float = 0.5) -> GrowthFunctionPhi:
    if not a > 0:
        raise InvalidExponent(f"power decay exponent must be positive, got {a!r}")
    return GrowthFunctionPhi(
        lambda c, r: (1.0 + float(r)) ** (-a),
        lambda c, r: (1.0 + np.asarray(r, dtype=float)) ** (-a),
        family="shifted_power", param=a, delta=delta,
    )


def constant_phi(delta: float = 0.5) -> GrowthFunctionPhi:
    return GrowthFunctionPhi(lambda c, r: 1.0, lambda c, r: np.ones_like(np.asarray(r, float)),
                             family="constant", param=None, delta=delta)


def phi_compatible_psi(phi: GrowthFunctionPhi, p: float, q: float) -> RegularityFunctionPsi:
    """The normalizer phi**(1/q - 1/p), which satisfies the maximal-operator
    embedding hypothesis with constant 1."""
    expo = 1.0 / q - 1.0 / p
    return RegularityFunctionPsi(
        lambda c, r: phi(c, r) ** expo,
        lambda c, r: np.asarray(phi.table(c, r), dtype=float) ** expo,
        family="phi_power", param=expo,
    )


# ------------------------------------------------------------------------------
# Means and oscillation machinery
# ------------------------------------------------------------------------------
def ball_mean(space: PointCloudSpace, f: np.ndarray, ball: Ball) -> float:
    """Weighted mean of f over the closed ball (point-index order)."""
    mask = space.dist[ball.center] <= ball.radius
    w = space.weights[mask]
    return float(np.sum(np.asarray(f)[mask] * w) / np.sum(w))


def oscillation_sums(space: PointCloudSpace, g: np.ndarray, p: float = 1.0) -> np.ndarray:
    """``out[c, q-1]`` is the weighted p-th oscillation sum of g around its
    mean over the q points closest to c."""
    n = space.n
    g = np.asarray(g, dtype=float)
    out = np.empty((n, n))
    tril = np.tril(np.ones((n, n)))
    for c in range(n):
        order = space.order[c]
        gs = g[order]
        ws = space.weights[order]
        pw = space.prefix_weight[c]
        pg = np.concatenate([[0.0], np.cumsum(gs * ws)])
        means = pg[1:] / pw[1:]
        diff = np.abs(gs[None, :] - means[:, None])
        if p != 1.0:
            diff **= p
        out[c] = (diff * ws[None, :] * tril).sum(axis=1)
    return out


def _ball_means(space: PointCloudSpace, f: np.ndarray):
    pf = space.prefix_of(np.asarray(f, dtype=float) * space.weights)
    pw = space.prefix_weight
    return pf, pw


# ------------------------------------------------------------------------------
# Morrey norm
# ------------------------------------------------------------------------------
def morrey_norm(space: PointCloudSpace, f: np.ndarray, p: float,
                phi: GrowthFunctionPhi, eta: float,
                *, with_witness: bool = False,
                multipliers: Sequence[float] = DEFAULT_MULTIPLIERS):
    """Supremum over candidate balls of the phi-and-enlargement normalized
    p-mean of |f|."""
    if p < 1:
        raise InvalidExponent(f"p must be at least 1, got {p!r}")
    if not eta > 1:
        raise InvalidExponent(f"eta must exceed 1, got {eta!r}")
    f = np.asarray(f, dtype=float)
    power = space.prefix_of(np.abs(f) ** p * space.weights)
    phit = space.fn_table(phi, multipliers)
    best = 0.0
    witness: dict = {}
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        qs = space.counts(c, radii)
        mass = power[c][qs]
        mu_eta = space.prefix_weight[c][space.counts(c, eta * radii)]
        vals = (mass / (phit[c] * mu_eta)) ** (1.0 / p)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best = float(vals[j])
            witness = {"center": c, "radius": float(radii[j])}
    if with_witness:
        return best, witness
    return best


# ------------------------------------------------------------------------------
# Campanato norm
# ------------------------------------------------------------------------------
@dataclass
class CampanatoNormReport:
    """The two suprema defining the oscillation-regularity norm, with argmax
    witnesses.  The norm is their maximum: it is the least constant bounding
    both the normalized oscillations and the coefficient-controlled jumps."""

    oscillation_sup: float
    regularity_sup: float
    norm: float
    tau: float
    gamma: float
    oscillation_witness: dict = field(default_factory=dict)
    regularity_witness: dict = field(default_factory=dict)


def _ball_count(space: PointCloudSpace, multipliers) -> int:
    return sum(space.candidate_radii(c, multipliers).size for c in range(space.n))


def _campanato_exhaustive(space, lam, f, psi, tau, gamma, multipliers) -> CampanatoNormReport:
    """Primitive-based enumeration over every candidate ball and every nested
    candidate pair; used when the family is small enough."""
    f = np.asarray(f, dtype=float)
    balls = [Ball(c, float(r)) for c in range(space.n)
             for r in space.candidate_radii(c, multipliers)]
    osc = 0.0
    osc_w: dict = {}
    means = {}
    masks = {}
    for b in balls:
        mask = space.dist[b.center] <= b.radius
        masks[b] = mask
        m = ball_mean(space, f, b)
        means[b] = m
        num = float(np.sum(np.abs(f[mask] - m) * space.weights[mask]))
        den = psi(b.center, b.radius) * ball_measure(space, b.scaled(tau))
        val = num / den
        if val > osc:
            osc = val
            osc_w = {"center": b.center, "radius": b.radius}
    reg = 0.0
    reg_w: dict = {}
    for b1 in balls:
        for b2 in balls:
            if b2.radius < b1.radius:
                continue
            if np.any(masks[b1] & ~masks[b2]):
                continue
            coeff = discrete_coefficient(space, lam, b1, b2, tau).value
            val = abs(means[b1] - means[b2]) / (psi(b1.center, b1.radius) * coeff ** gamma)
            if val > reg:
                reg = val
                reg_w = {"inner": {"center": b1.center, "radius": b1.radius},
                         "outer": {"center": b2.center, "radius": b2.radius}}
    return CampanatoNormReport(osc, reg, max(osc, reg), tau, gamma, osc_w, reg_w)


def campanato_norm_multi(space: PointCloudSpace, lam: DominatingFunction, f: np.ndarray,
                         psi: RegularityFunctionPsi, combos: Sequence[tuple],
                         *, pair_budget: int = 2000, seed: int = 0,
                         exhaustive_limit: int = 20000,
                         multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> list:
    """Oscillation-regularity norms for several (tau, gamma) combinations,
    sharing the per-function oscillation and mean tables across combos."""
    for tau, gamma in combos:
        if not tau > 1:
            raise InvalidExponent(f"tau must exceed 1, got {tau!r}")
        if not gamma >= 1:
            raise InvalidExponent(f"gamma must be at least 1, got {gamma!r}")
    n_balls = _ball_count(space, multipliers)
    if n_balls * n_balls <= exhaustive_limit:
        return [_campanato_exhaustive(space, lam, f, psi, tau, gamma, multipliers)
                for tau, gamma in combos]

    f = np.asarray(f, dtype=float)
    psit = space.fn_table(psi, multipliers)
    osc_sums = oscillation_sums(space, f)
    pf, pw = _ball_means(space, f)
    reports = []
    for tau, gamma in combos:
        tables = coefficient_tables(space, lam, tau, multipliers)
        osc = 0.0
        osc_w: dict = {}
        reg = 0.0
        reg_w: dict = {}
        for c in range(space.n):
            radii = space.candidate_radii(c, multipliers)
            qs = space.counts(c, radii)
            mu_tau = space.prefix_weight[c][space.counts(c, tau * radii)]
            vals = osc_sums[c][qs - 1] / (psit[c] * mu_tau)
            j = int(np.argmax(vals))
            if vals[j] > osc:
                osc = float(vals[j])
                osc_w = {"center": c, "radius": float(radii[j])}

            # concentric dyadic ladder, exhausted up to one step past saturation
            m_base = pf[c][qs] / pw[c][qs]
            sat = scale_index_array(tau, radii, max(space.diameter, float(radii[0])))
            k_cap = int(max(1, sat.max() + 1))
            for k in range(1, k_cap + 1):
                active = k <= sat + 1
                if not np.any(active):
                    break
                outer_r = (tau ** k) * radii
                q_out = space.counts(c, outer_r)
                m_out = pf[c][q_out] / pw[c][q_out]
                coeff = tables.concentric(c, np.arange(radii.size), np.full(radii.size, k))
                vals = np.abs(m_base - m_out) / (psit[c] * coeff ** gamma)
                vals[~active] = -np.inf
                j = int(np.argmax(vals))
                if vals[j] > reg:
                    reg = float(vals[j])
                    reg_w = {"inner": {"center": c, "radius": float(radii[j])},
                             "outer": {"center": c, "radius": float(outer_r[j])}}

        pairs = sampled_nested_pairs(space, pair_budget, seed, multipliers, lam=lam, tau=tau)
        if len(pairs):
            m1 = pf[pairs.c1, pairs.q1] / pw[pairs.c1, pairs.q1]
            m2 = pf[pairs.c2, pairs.q2] / pw[pairs.c2, pairs.q2]
            psi1 = np.asarray([psit[c][i] for c, i in zip(pairs.c1, pairs.i1)])
            vals = np.abs(m1 - m2) / (psi1 * pairs.coeff ** gamma)
            j = int(np.argmax(vals))
            if vals[j] > reg:
                reg = float(vals[j])
                reg_w = {"inner": {"center": int(pairs.c1[j]), "radius": float(pairs.r1[j])},
                         "outer": {"center": int(pairs.c2[j]), "radius": float(pairs.r2[j])}}
        reports.append(CampanatoNormReport(osc, reg, max(osc, reg), tau, gamma, osc_w, reg_w))
    return reports


def campanato_norm(space: PointCloudSpace, lam: DominatingFunction, f: np.ndarray,
                   psi: RegularityFunctionPsi, tau: float = 2.0, gamma: float = 1.0,
                   *, pair_budget: int = 2000, seed: int = 0,
                   exhaustive_limit: int = 20000,
                   multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CampanatoNormReport:
    """Oscillation-regularity norm of f.

    When the squared candidate-ball count is at most ``exhaustive_limit`` the
    nested-pair supremum enumerates every pair; otherwise it combines the
    exhaustive concentric ladder with ``pair_budget`` sampled containing pairs.
    """
    return campanato_norm_multi(space, lam, f, psi, [(tau, gamma)],
                                pair_budget=pair_budget, seed=seed,
                                exhaustive_limit=exhaustive_limit,
                                multipliers=multipliers)[0]


def p_oscillation_norm(space: PointCloudSpace, f: np.ndarray,
                       psi: RegularityFunctionPsi, p: float, tau: float,
                       *, with_witness: bool = False,
                       multipliers: Sequence[float] = DEFAULT_MULTIPLIERS):
    """Supremum over candidate balls of the normalized p-th mean oscillation."""
    if not p > 1:
        raise InvalidExponent(f"p must exceed 1, got {p!r}")
    if not tau > 1:
        raise InvalidExponent(f"tau must exceed 1, got {tau!r}")
    f = np.asarray(f, dtype=float)
    psit = space.fn_table(psi, multipliers)
    sums = oscillation_sums(space, f, p)
    best = 0.0
    witness: dict = {}
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        qs = space.counts(c, radii)
        mu_tau = space.prefix_weight[c][space.counts(c, tau * radii)]
        vals = (sums[c][qs - 1] / mu_tau) ** (1.0 / p) / psit[c]
        j = int(np.argmax(vals))
        if vals[j] > best:
            best = float(vals[j])
            witness = {"center": c, "radius": float(radii[j])}
    if with_witness:
        return best, witness
    return best


# ------------------------------------------------------------------------------
# Normalizer validation
# ------------------------------------------------------------------------------
_LIMIT_TABLE = {
    # family -> (limit at 0 is +inf, limit at +inf is 0)
    "power": (True, True),
    "shifted_power": (False, True),
    "constant": (False, False),
}


def _all_nested_ball_pairs(space: PointCloudSpace, multipliers) -> list:
    """Every nested candidate-ball pair (inner, outer), by brute force."""
    balls = [Ball(c, float(r)) for c in range(space.n)
             for r in space.candidate_radii(c, multipliers)]
    masks = {b: space.dist[b.center] <= b.radius for b in balls}
    out = []
    for b1 in balls:
        for b2 in balls:
            if b2.radius < b1.radius:
                continue
            if np.any(masks[b1] & ~masks[b2]):
                continue
            out.append((b1, b2))
    return out


def validate_phi_gdec(space: PointCloudSpace, phi: GrowthFunctionPhi,
                      etas: Sequence[float] = (2.0,), pair_budget: int = 2000,
                      seed: int = 0, max_concentric: int = 40,
                      exhaustive_limit: int = 20000,
                      multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Check strict radius decrease on the grid, measure the nested-ball
    constants for each enlargement factor, and resolve the asymptotic limits
    symbolically for the shipped families (reported as unchecked otherwise).

    Pair enumeration is exhaustive for small ball families, otherwise strided
    concentric pairs plus a budgeted non-concentric sample.
    """
    phit = space.fn_table(phi, multipliers)
    decreasing = True
    witness: dict = {}
    for c in range(space.n):
        vals = phit[c]
        if vals.size > 1 and np.any(vals[1:] >= vals[:-1]):
            j = int(np.argmax(vals[1:] >= vals[:-1]))
            decreasing = False
            witness = {"center": c,
                       "radius": float(space.candidate_radii(c, multipliers)[j]),
                       "next_radius": float(space.candidate_radii(c, multipliers)[j + 1])}
            break

    # nested pairs: (center, radius, count, phi value) per side
    pairs: list = []
    n_balls = _ball_count(space, multipliers)
    if n_balls * n_balls <= exhaustive_limit:
        for b1, b2 in _all_nested_ball_pairs(space, multipliers):
            pairs.append((b1.center, b1.radius, phi(b1.center, b1.radius),
                          b2.center, b2.radius, phi(b2.center, b2.radius)))
    else:
        for c in range(space.n):
            radii = space.candidate_radii(c, multipliers)
            m = radii.size
            stride = max(1, m // max_concentric)
            idx = np.arange(0, m, stride)
            for a_pos in range(idx.size):
                for b_pos in range(a_pos + 1, idx.size):
                    i, j = int(idx[a_pos]), int(idx[b_pos])
                    pairs.append((c, float(radii[i]), float(phit[c][i]),
                                  c, float(radii[j]), float(phit[c][j])))
        sample = sampled_nested_pairs(space, pair_budget, seed, multipliers)
        for t in range(len(sample)):
            c1, i1, c2 = int(sample.c1[t]), int(sample.i1[t]), int(sample.c2[t])
            r2 = float(sample.r2[t])
            pairs.append((c1, float(sample.r1[t]), float(phit[c1][i1]),
                          c2, r2, float(phi(c2, r2))))

    eta_constants = {}
    if pairs:
        c1 = np.asarray([p[0] for p in pairs], dtype=int)
        r1 = np.asarray([p[1] for p in pairs])
        p1 = np.asarray([p[2] for p in pairs])
        c2 = np.asarray([p[3] for p in pairs], dtype=int)
        r2 = np.asarray([p[4] for p in pairs])
        p2 = np.asarray([p[5] for p in pairs])
        for eta in etas:
            mu1 = np.asarray([space.ball_weight(int(c), eta * float(r))
                              for c, r in zip(c1, r1)])
            mu2 = np.asarray([space.ball_weight(int(c), eta * float(r))
                              for c, r in zip(c2, r2)])
            lower = float(np.min((p1 * mu1 ** phi.delta) / (p2 * mu2 ** phi.delta)))
            upper = float(np.max((p1 * mu1) / (p2 * mu2)))
            eta_constants[float(eta)] = (lower, upper)
            phi.eta_constants[float(eta)] = (lower, upper)

    limits = _LIMIT_TABLE.get(phi.family)
    limits_known = limits is not None
    limits_ok = None if not limits_known else bool(limits[0] and limits[1])
    passed = decreasing and (limits_ok is not False)
    return CheckReport(
        check="phi_decrease",
        passed=passed,
        value=min((v[0] for v in eta_constants.values()), default=None),
        worst_witness=witness,
        details={
            "strictly_decreasing": decreasing,
            "limits": ("unchecked" if not limits_known
                       else {"zero_radius": limits[0], "infinite_radius": limits[1]}),
            "eta_constants": {str(k): list(v) for k, v in eta_constants.items()},
            "family": phi.family,
        },
    )


def validate_psi(space: PointCloudSpace, psi: RegularityFunctionPsi,
                 multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Measure the doubling and equal-radius comparability constant of psi
    over the candidate family; finite on finite spaces, so it always passes
    and the value feeds cross-refinement stability tests."""
    psit = space.fn_table(psi, multipliers)
    worst = 1.0
    witness: dict = {}
    for c in range(space.n):
        radii = space.candidate_radii(c, multipliers)
        doubled = psi.table(c, 2.0 * radii)
        ratios = doubled / psit[c]
        j = int(np.argmax(ratios))
        if ratios[j] > worst:
            worst = float(ratios[j])
            witness = {"kind": "doubling", "center": c, "radius": float(radii[j])}
    if space.n > 1:
        union = space.radius_union(multipliers)
        table = np.empty((space.n, union.size))
        for c in range(space.n):
            table[c] = psi.table(c, union)
        for k, r in enumerate(union):
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
                witness = {"kind": "comparability", "x": int(x), "y": int(y), "radius": float(r)}
    psi.c_psi = worst
    return CheckReport(
        check="psi_regularity",
        passed=bool(math.isfinite(worst)),
        value=worst,
        worst_witness=witness,
        details={"family": psi.family},
    )


# ------------------------------------------------------------------------------
# Distribution of oscillations on a ball
# ------------------------------------------------------------------------------
@dataclass
class JNReport:
    """Measured level-set distribution of |f - f_B| / psi(B) on a ball, with
    the least-squares exponential rate fitted on its support."""

    ball: dict
    tau: float
    t_values: np.ndarray
    distribution: np.ndarray
    mu_tau_ball: float
    rate: float
    intercept: float
    n_fit_points: int


def jn_distribution(space: PointCloudSpace, f: np.ndarray,
                    psi: RegularityFunctionPsi, ball: Ball, tau: float,
                    t_grid: Optional[Sequence[float]] = None, n_t: int = 32) -> JNReport:
    """Measure mu({x in B : |f(x) - f_B| / psi(B) > t}) on a t-grid and fit an
    exponential envelope rate by least squares on the support."""
    f = np.asarray(f, dtype=float)
    members = ball_members(space, ball)
    w = space.weights[members]
    mean = float(np.sum(f[members] * w) / np.sum(w))
    devs = np.abs(f[members] - mean) / psi(ball.center, ball.radius)
    dev_max = float(devs.max())
    if dev_max <= 0.0:
        raise ZeroNorm("the function is constant on the ball; no distribution to fit")
    if t_grid is None:
        t_grid = np.linspace(0.0, dev_max, n_t)
    ts = np.asarray(t_grid, dtype=float)
    order = np.argsort(devs, kind="stable")
    sorted_devs = devs[order]
    cum = np.concatenate([[0.0], np.cumsum(w[order])])
    total = cum[-1]
    counts = np.searchsorted(sorted_devs, ts, side="right")
    dist = total - cum[counts]
    mu_tau = ball_measure(space, ball.scaled(tau))
    support = dist > 0
    if int(support.sum()) >= 2:
        slope, intercept = np.polyfit(ts[support], np.log(dist[support] / mu_tau), 1)
        rate = float(-slope)
        intercept = float(intercept)
    else:
        rate = math.inf
        intercept = 0.0
    return JNReport(
        ball={"center": ball.center, "radius": ball.radius},
        tau=tau,
        t_values=ts,
        distribution=dist,
        mu_tau_ball=mu_tau,
        rate=rate,
        intercept=intercept,
        n_fit_points=int(support.sum()),
    )


# ------------------------------------------------------------------------------
# Mean-jump constants
# ------------------------------------------------------------------------------
def check_mean_jump_bounds(space: PointCloudSpace, lam: DominatingFunction,
                           f: np.ndarray, psi: RegularityFunctionPsi,
                           k_values: Sequence[float] = (2.0, 6.0),
                           pair_budget: int = 2000, seed: int = 0,
                           tau: float = 2.0, gamma: float = 1.0,
                           norm: Optional[float] = None,
                           multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Record the normalized mean-jump suprema: single enlargements per k,
    iterated enlargements divided by the step count, and comparable-ball pairs
    whose larger radius equals the center distance.

    Constant functions yield the all-zero report rather than an error.  The
    oscillation-regularity norm is computed unless the caller passes it in.
    """
    f = np.asarray(f, dtype=float)
    scale = float(np.max(np.abs(f))) if f.size else 0.0
    if norm is None:
        norm = campanato_norm(space, lam, f, psi, tau, gamma,
                              pair_budget=pair_budget, seed=seed,
                              multipliers=multipliers).norm
    if norm <= 1e-13 * max(scale, 1.0):
        return CheckReport(
            check="mean_jump_bounds", passed=None, value=0.0,
            details={"constant_function": True, "per_k": {str(k): 0.0 for k in k_values},
                     "iterated": 0.0, "comparable": 0.0, "norm": norm},
        )
    pf, pw = _ball_means(space, f)
    psit = space.fn_table(psi, multipliers)
    per_k = {}
    iterated = 0.0
    for k in k_values:
        if k == 1.0:
            per_k[str(k)] = 0.0
            continue
        best = 0.0
        for c in range(space.n):
            radii = space.candidate_radii(c, multipliers)
            qs = space.counts(c, radii)
            m_base = pf[c][qs] / pw[c][qs]
            sat = scale_index_array(k, radii, max(space.diameter, float(radii[0])))
            j_cap = int(max(1, sat.max() + 1))
            for j in range(1, j_cap + 1):
                q_out = space.counts(c, (k ** j) * radii)
                m_out = pf[c][q_out] / pw[c][q_out]
                jumps = np.abs(m_out - m_base) / (psit[c] * norm)
                if j == 1:
                    best = max(best, float(jumps.max()))
                iterated = max(iterated, float(jumps.max()) / j)
        per_k[str(k)] = best
    comparable = 0.0
    comp_witness: dict = {}
    rng = np.random.default_rng(seed)
    if space.n > 1:
        for t in range(pair_budget):
            c1, c2 = (int(v) for v in rng.choice(space.n, size=2, replace=False))
            d = float(space.dist[c1, c2])
            if d <= 0:
                continue
            radii1 = space.candidate_radii(c1, multipliers)
            small = radii1[radii1 <= d]
            if small.size == 0:
                continue
            r1 = float(small[rng.integers(small.size)])
            q1 = int(np.searchsorted(space.sorted_dist[c1], r1, side="right"))
            q2 = int(np.searchsorted(space.sorted_dist[c2], d, side="right"))
            m1 = pf[c1][q1] / pw[c1][q1]
            m2 = pf[c2][q2] / pw[c2][q2]
            val = abs(m1 - m2) / (psi(c1, r1) * norm)
            if val > comparable:
                comparable = val
                comp_witness = {"b1": {"center": c1, "radius": r1},
                                "b2": {"center": c2, "radius": d}}
    return CheckReport(
        check="mean_jump_bounds",
        passed=None,
        value=max(max(per_k.values(), default=0.0), iterated, comparable),
        worst_witness=comp_witness,
        details={"constant_function": False, "per_k": per_k,
                 "iterated": iterated, "comparable": comparable, "norm": norm},
    )


# ------------------------------------------------------------------------------
# Parameter-independence bands
# ------------------------------------------------------------------------------
def equivalence_experiment(space: PointCloudSpace, lam: DominatingFunction,
                           psi: RegularityFunctionPsi, functions: Sequence[np.ndarray],
                           tau_pair: tuple = (2.0, 6.0), gamma_pair: tuple = (1.0, 2.0),
                           pair_budget: int = 2000, seed: int = 0,
                           multipliers: Sequence[float] = DEFAULT_MULTIPLIERS) -> CheckReport:
    """Compute the norm under the four (tau, gamma) combinations for a family
    of functions and record the min/max of every pairwise norm ratio.

    Constant functions are excluded (both sides vanish).
    """
    combos = [(tau_pair[0], gamma_pair[0]), (tau_pair[0], gamma_pair[1]),
              (tau_pair[1], gamma_pair[0]), (tau_pair[1], gamma_pair[1])]
    names = [f"tau{t:g}_gamma{g:g}" for t, g in combos]
    bands: dict = {}
    skipped = 0
    used = 0
    for f in functions:
        f = np.asarray(f, dtype=float)
        scale = float(np.max(np.abs(f))) if f.size else 0.0
        norms = [r.norm for r in campanato_norm_multi(
            space, lam, f, psi, combos, pair_budget=pair_budget, seed=seed,
            multipliers=multipliers)]
        if max(norms) <= 1e-13 * max(scale, 1.0):
            skipped += 1
            continue
        used += 1
        for a in range(len(combos)):
            for b in range(a + 1, len(combos)):
                key = f"{names[a]}_vs_{names[b]}"
                ratio = norms[a] / norms[b]
                lo, hi = bands.get(key, (math.inf, -math.inf))
                bands[key] = (min(lo, ratio), max(hi, ratio))
    return CheckReport(
        check="equivalence_bands",
        passed=None,
        value=None if not bands else max(v[1] for v in bands.values()),
        details={"bands": {k: list(v) for k, v in bands.items()},
                 "functions_used": used, "functions_skipped": skipped,
                 "tau_pair": list(tau_pair), "gamma_pair": list(gamma_pair)},
    )
