"""Space and function generators, experiment orchestration, report emission.

Functions are generated as samples of fixed continuous random fields (seeded
trigonometric polynomials evaluated at the point coordinates), so the same
(seed, index) pair produces discretizations of one underlying function at
every refinement level.  That is what makes cross-refinement constant
stability a meaningful experiment rather than a comparison of unrelated
random vectors.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np

from . import geometry, mmspace, operators, spaces
from .errors import SpecError
from .geometry import Ball
from .mmspace import DominatingFunction, GeometryProfile, PointCloudSpace
from .operators import KernelSpec, OperatorParams
from .spaces import GrowthFunctionPhi, RegularityFunctionPsi

ARTIFACT_VERSION = "0.1.0"

DEFAULT_MAX_N = 512

SEED_ENV_VAR = "NHS_LAB_SEED"


# ------------------------------------------------------------------------------
# Canonical fixtures and space generators
# ------------------------------------------------------------------------------
def two_point_space() -> PointCloudSpace:
    """The canonical two-atom fixture: unit distance, unit weights."""
    return mmspace.build_space(points=[[0.0], [1.0]], weights=[1.0, 1.0])


def two_point_lambda() -> DominatingFunction:
    """The dominating function 2*max(r, 1) used with the two-atom fixture."""
    return DominatingFunction(
        lambda c, r: 2.0 * max(r, 1.0),
        c_lambda=2.0,
        description="2*max(r,1)",
        fn_vec=lambda c, r: 2.0 * np.maximum(np.asarray(r, dtype=float), 1.0),
    )


def _grid_points(d: int, n: int) -> np.ndarray:
    if n == 1:
        axes = [np.zeros(1)]
    else:
        axes = [np.linspace(0.0, 1.0, n) for _ in range(d)]
    mesh = np.meshgrid(*([axes[0]] * d), indexing="ij") if d > 1 else [axes[0]]
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return pts


def generate_space(spec: dict) -> PointCloudSpace:
    """Build a space from a generator description.

    Kinds: ``grid`` (uniform lattice on the unit cube, ``n`` points per axis,
    with lebesgue / power / random weights), ``two_point`` (the canonical
    fixture) and ``atoms`` (explicit points or distances plus weights).
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise SpecError(f"generator spec must be a dict with a 'kind', got {spec!r}")
    kind = spec["kind"]
    if kind == "two_point":
        return two_point_space()
    if kind == "atoms":
        if "points" in spec:
            return mmspace.build_space(points=spec["points"], weights=spec["weights"])
        if "distances" in spec:
            return mmspace.build_space(distances=spec["distances"], weights=spec["weights"])
        raise SpecError("atoms generator needs 'points' or 'distances'")
    if kind != "grid":
        raise SpecError(f"unknown generator kind {kind!r}")
    d = int(spec.get("d", 1))
    n = int(spec.get("n", 64))
    if d < 1 or n < 1:
        raise SpecError(f"grid dimensions must be positive, got d={d}, n={n}")
    pts = _grid_points(d, n)
    total = pts.shape[0]
    wspec = spec.get("weights", "lebesgue")
    if wspec == "lebesgue":
        weights = np.full(total, float(n) ** (-d))
    elif isinstance(wspec, dict) and "power" in wspec:
        a = float(wspec["power"])
        raw = (np.linalg.norm(pts, axis=1) + 1.0 / n) ** a
        weights = raw / raw.sum()
    elif isinstance(wspec, dict) and "random" in wspec:
        rng = np.random.default_rng(int(wspec["random"]))
        weights = np.exp(rng.uniform(math.log(1e-3), 0.0, size=total))
    else:
        raise SpecError(f"unknown weight spec {wspec!r}")
    return mmspace.build_space(points=pts, weights=weights)


def generator_name(spec: dict) -> str:
    kind = spec.get("kind", "?")
    if kind == "grid":
        w = spec.get("weights", "lebesgue")
        wname = w if isinstance(w, str) else "_".join(f"{k}{v:g}" for k, v in w.items())
        return f"grid(d={spec.get('d', 1)},n={spec.get('n', 64)},{wname})"
    return str(kind)


# ------------------------------------------------------------------------------
# Function generators (refinement-consistent random fields)
# ------------------------------------------------------------------------------
def _random_field(seed: int, index: int, n_modes: int = 8, decay: float = 1.5) -> Callable:
    rng = np.random.default_rng([int(seed), int(index)])
    a0 = float(rng.normal())
    ks = np.arange(1, n_modes + 1, dtype=float)
    a = rng.normal(size=n_modes) / ks ** decay
    b = rng.normal(size=n_modes) / ks ** decay
    direction = rng.normal(size=8)

    def evaluate(coords: np.ndarray) -> np.ndarray:
        d = coords.shape[1]
        u = direction[:d]
        u = u / max(np.linalg.norm(u), 1e-12)
        t = coords @ u
        phase = 2.0 * math.pi * np.outer(t, ks)
        return a0 + np.cos(phase) @ a + np.sin(phase) @ b

    return evaluate


def generate_functions(space: PointCloudSpace, family, count: int, seed: int = 0,
                       *, lam: Optional[DominatingFunction] = None,
                       psi: Optional[RegularityFunctionPsi] = None,
                       tau: float = 2.0) -> list:
    """Generate ``count`` functions from a named family, deterministically in
    the seed.

    Families: ``random_bounded`` (random trigonometric fields),
    ``mean_zero_random`` (the same, projected to exact weighted mean zero),
    ``psi_adapted`` (normalized to unit oscillation-regularity norm), and
    ``indicator`` (ball indicators; the dict form fixes the ball, radii cycle
    over a deterministic ladder for count > 1).
    """
    name = family["kind"] if isinstance(family, dict) else str(family)
    out = []
    if name == "indicator":
        center_spec = family.get("center", 0.5) if isinstance(family, dict) else 0.5
        base_radius = float(family.get("radius", 0.25)) if isinstance(family, dict) else 0.25
        center = _resolve_center(space, center_spec)
        for i in range(count):
            radius = base_radius * (1.0 + 0.5 * (i % 4))
            mask = space.dist[center] <= radius
            out.append(mask.astype(float))
        return out
    if name not in ("random_bounded", "mean_zero_random", "psi_adapted"):
        raise SpecError(f"unknown function family {family!r}")
    for i in range(count):
        if space.coords is not None:
            f = _random_field(seed, i)(space.coords)
        else:
            rng = np.random.default_rng([int(seed), i])
            f = rng.uniform(-1.0, 1.0, size=space.n)
        if name == "mean_zero_random":
            f = f - float(np.sum(f * space.weights) / space.total_measure)
        elif name == "psi_adapted":
            if lam is None or psi is None:
                raise SpecError("psi_adapted functions need lam= and psi=")
            norm = spaces.campanato_norm(space, lam, f, psi, tau).norm
            if norm <= 1e-13:
                continue
            f = f / norm
        out.append(f)
    return out


def _resolve_center(space: PointCloudSpace, center_spec) -> int:
    if isinstance(center_spec, int):
        return center_spec
    if space.coords is None:
        raise SpecError("coordinate ball centers need a coordinate-backed space")
    target = np.full(space.coords.shape[1], float(center_spec)) \
        if np.isscalar(center_spec) else np.asarray(center_spec, dtype=float)
    return int(np.argmin(np.linalg.norm(space.coords - target[None, :], axis=1)))


def lp_norm(space: PointCloudSpace, f: np.ndarray, p: float) -> float:
    return float(np.sum(np.abs(np.asarray(f)) ** p * space.weights) ** (1.0 / p))


# ------------------------------------------------------------------------------
# Chain generation
# ------------------------------------------------------------------------------
def load_chains(path: str) -> list:
    """Chain file: a JSON list of [center, base_radius, [exponents...]] triples
    (or objects with those keys)."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    chains = []
    for item in raw:
        if isinstance(item, dict):
            chains.append((int(item["center"]), float(item["base_radius"]),
                           [int(e) for e in item["exponents"]]))
        else:
            center, base, exps = item
            chains.append((int(center), float(base), [int(e) for e in exps]))
    return chains


def generate_chains(space: PointCloudSpace, lam: DominatingFunction, tau: float,
                    count: int, seed: int = 0, lengths: Sequence[int] = (3, 4),
                    gaps: Sequence[int] = (3, 4, 5)) -> list:
    """Produce concentric dyadic chains whose every link coefficient exceeds
    the chain threshold; iterates deterministically until ``count`` qualify."""
    threshold = 3.0 + geometry.floor_log(tau)
    rng = np.random.default_rng(seed)
    chains = []
    order = rng.permutation(space.n)
    for c in order:
        radii = space.candidate_radii(int(c))
        base_candidates = radii[: max(1, radii.size // 4)]
        for base in base_candidates:
            for length in lengths:
                for gap in gaps:
                    exponents = [i * gap for i in range(length)]
                    balls = [Ball(int(c), tau ** e * float(base)) for e in exponents]
                    links = [
                        geometry.discrete_coefficient(space, lam, balls[i], balls[i + 1], tau).value
                        for i in range(len(balls) - 1)
                    ]
                    if all(v > threshold for v in links):
                        chains.append((int(c), float(base), exponents))
                        if len(chains) >= count:
                            return chains
    return chains


# ------------------------------------------------------------------------------
# Experiment configuration
# ------------------------------------------------------------------------------
def make_psi(config: Optional[dict], lam: DominatingFunction) -> RegularityFunctionPsi:
    config = config or {"family": "constant"}
    fam = config.get("family", "constant")
    if fam == "constant":
        return spaces.constant_psi()
    if fam == "lambda_power":
        return spaces.lambda_power_psi(lam, float(config.get("alpha", 0.5)))
    if fam == "radius_power":
        return spaces.radius_power_psi(float(config.get("exponent", 0.25)))
    raise SpecError(f"unknown psi family {fam!r}")


def make_phi(config: Optional[dict]) -> GrowthFunctionPhi:
    config = config or {"family": "power", "a": 1.0, "delta": 0.5}
    fam = config.get("family", "power")
    delta = float(config.get("delta", 0.5))
    if fam == "power":
        return spaces.power_phi(float(config.get("a", 1.0)), delta)
    if fam == "shifted_power":
        return spaces.shifted_power_phi(float(config.get("a", 1.0)), delta)
    if fam == "constant":
        return spaces.constant_phi(delta)
    raise SpecError(f"unknown phi family {fam!r}")


@dataclass
class ExperimentConfig:
    """Parsed experiment description."""

    generator: dict
    checks: list
    seed: int = 7
    params: OperatorParams = field(default_factory=OperatorParams)
    psi: Optional[dict] = None
    phi: Optional[dict] = None
    budgets: dict = field(default_factory=dict)
    output_path: Optional[str] = None
    max_n: int = DEFAULT_MAX_N

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise SpecError("experiment config must be a JSON object")
        if "generator" not in raw:
            raise SpecError("experiment config needs a 'generator'")
        checks = raw.get("checks", sorted(CHECKS))
        unknown = [c for c in checks if c not in CHECKS]
        if unknown:
            raise SpecError(f"unknown checks: {unknown}")
        params_raw = raw.get("params", {})
        try:
            params = OperatorParams(**params_raw)
        except TypeError as exc:
            raise SpecError(f"bad operator params: {exc}") from exc
        cfg = ExperimentConfig(
            generator=raw["generator"],
            checks=list(checks),
            seed=int(raw.get("seed", 7)),
            params=params,
            psi=raw.get("psi"),
            phi=raw.get("phi"),
            budgets=dict(raw.get("budgets", {})),
            output_path=raw.get("output_path"),
            max_n=int(raw.get("max_n", DEFAULT_MAX_N)),
        )
        n = int(cfg.generator.get("n", 1)) ** int(cfg.generator.get("d", 1)) \
            if cfg.generator.get("kind") == "grid" else 2
        if n > cfg.max_n:
            raise SpecError(f"generator produces {n} points, above the cap {cfg.max_n}")
        return cfg


@dataclass
class Row:
    check: str
    n: int
    generator: str
    value: Optional[float]
    lower: Optional[float] = None
    upper: Optional[float] = None
    witness: dict = field(default_factory=dict)
    status: str = "pass"


@dataclass
class ExperimentReport:
    rows: list
    config: dict
    runtime_seconds: float
    version: str = ARTIFACT_VERSION

    @property
    def exit_code(self) -> int:
        return 1 if any(r.status == "fail" for r in self.rows) else 0

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "runtime_seconds": self.runtime_seconds,
            "config": self.config,
            "rows": [asdict(r) for r in self.rows],
        }


# ------------------------------------------------------------------------------
# Experiment context and individual checks
# ------------------------------------------------------------------------------
@dataclass
class _Context:
    space: PointCloudSpace
    lam: DominatingFunction
    profile: GeometryProfile
    psi: RegularityFunctionPsi
    phi: GrowthFunctionPhi
    kernel: KernelSpec
    params: OperatorParams
    seed: int
    gen_name: str
    budgets: dict

    def budget(self, key: str, default: int) -> int:
        return int(self.budgets.get(key, default))

    def functions(self, count: int, family: str = "random_bounded"):
        return generate_functions(self.space, family, count, self.seed,
                                  lam=self.lam, psi=self.psi)


def _row(ctx: _Context, check: str, value, status: str, lower=None, upper=None, witness=None) -> Row:
    return Row(check=check, n=ctx.space.n, generator=ctx.gen_name,
               value=None if value is None else float(value),
               lower=lower, upper=upper, witness=witness or {}, status=status)


def _status(report) -> str:
    if report.passed is None:
        return "pass"
    return "pass" if report.passed else "fail"


def _check_upper_doubling(ctx: _Context) -> Row:
    rep = mmspace.validate_upper_doubling(ctx.space, ctx.lam)
    return _row(ctx, "upper_doubling", rep.value, _status(rep), witness=rep.worst_witness)


def _check_lambda_comparability(ctx: _Context) -> Row:
    rep = mmspace.validate_lambda_comparability(ctx.space, ctx.lam)
    return _row(ctx, "lambda_comparability", rep.value, _status(rep), witness=rep.worst_witness)


def _check_weak_reverse_doubling(ctx: _Context) -> Row:
    rep = mmspace.validate_weak_reverse_doubling(
        ctx.lam, ctx.space, ctx.params.sigma, a_grid=(2.0, 4.0))
    return _row(ctx, "weak_reverse_doubling", rep.value, _status(rep),
                witness={"rows": rep.details["rows"]})


def _check_geometric_doubling(ctx: _Context) -> Row:
    return _row(ctx, "geometric_doubling", float(ctx.profile.N0), "pass",
                witness={"beta6": ctx.profile.beta(6.0), "nu": ctx.profile.nu})


def _check_coefficient_inequalities(ctx: _Context) -> Row:
    rep = geometry.check_coefficient_inequalities(
        ctx.space, ctx.lam, (2.0, 6.0), ctx.budget("triples", 2000), ctx.seed)
    d = rep.details
    return _row(ctx, "coefficient_inequalities", rep.value, _status(rep),
                lower=d["cross_step_ratio_min"], upper=d["cross_step_ratio_max"],
                witness=d)


def _check_chain_bound(ctx: _Context) -> Row:
    chains = generate_chains(ctx.space, ctx.lam, 2.0, ctx.budget("chains", 50), ctx.seed)
    rep = geometry.check_coefficient_chain_bound(ctx.space, ctx.lam, 2.0, chains)
    return _row(ctx, "coefficient_chain_bound", rep.value, _status(rep), witness=rep.details)


def _check_doubling_coefficient(ctx: _Context) -> Row:
    rep = geometry.check_doubling_coefficient_bound(ctx.space, ctx.lam, ctx.profile, 6.0)
    return _row(ctx, "doubling_coefficient_bound", rep.value, "pass", witness=rep.worst_witness)


def _check_weak_doubling_index(ctx: _Context) -> Row:
    rep = geometry.validate_weak_doubling(ctx.space, ctx.lam, ctx.profile, 2.0)
    return _row(ctx, "weak_doubling_index", rep.value, "pass", witness=rep.worst_witness)


def _check_psi(ctx: _Context) -> Row:
    rep = spaces.validate_psi(ctx.space, ctx.psi)
    return _row(ctx, "psi_regularity", rep.value, _status(rep), witness=rep.worst_witness)


def _check_phi(ctx: _Context) -> Row:
    rep = spaces.validate_phi_gdec(ctx.space, ctx.phi, etas=(2.0, ctx.params.eta),
                                   pair_budget=ctx.budget("pairs", 500), seed=ctx.seed)
    return _row(ctx, "phi_decrease", rep.value, _status(rep), witness=rep.details)


def _check_identity_suite(ctx: _Context) -> Row:
    space, lam, psi = ctx.space, ctx.lam, ctx.psi
    params = ctx.params
    devs = []
    const = np.full(space.n, 3.25)
    devs.append(spaces.campanato_norm(space, lam, const, psi).norm)
    devs.append(float(np.max(operators.sharp_maximal(space, lam, ctx.profile, const))))
    f = ctx.functions(1)[0]
    g = ctx.functions(1, "mean_zero_random")[0]
    c, d = 2.5, -1.25
    base = spaces.campanato_norm(space, lam, f, psi).norm
    aff = spaces.campanato_norm(space, lam, c * f + d, psi).norm
    devs.append(abs(aff - abs(c) * base) / max(abs(c) * base, 1e-30))
    m_base = spaces.morrey_norm(space, f, params.p, ctx.phi, params.eta)
    m_scaled = spaces.morrey_norm(space, c * f, params.p, ctx.phi, params.eta)
    devs.append(abs(m_scaled - abs(c) * m_base) / max(abs(c) * m_base, 1e-30))
    tri = spaces.morrey_norm(space, f + g, params.p, ctx.phi, params.eta)
    devs.append(max(0.0, tri - m_base - spaces.morrey_norm(space, g, params.p, ctx.phi, params.eta)))
    comm = operators.marcinkiewicz_commutator(space, ctx.kernel, const, f, None, params)
    devs.append(float(np.max(np.abs(comm))))
    mc = operators.marcinkiewicz(space, ctx.kernel, c * f, None, params)
    m1 = operators.marcinkiewicz(space, ctx.kernel, f, None, params)
    devs.append(float(np.max(np.abs(mc - abs(c) * m1))) / max(float(np.max(m1)), 1e-30))
    ident = spaces.constant_psi()
    mp = operators.maximal_p_tau(space, f, params.p, 5.0)
    mpsi = operators.maximal_psi_p_tau(space, ident, f, params.p, 5.0)
    devs.append(float(np.max(np.abs(mp - mpsi))))
    worst = float(max(devs))
    return _row(ctx, "identity_suite", worst, "pass" if worst <= 1e-12 else "fail",
                witness={"deviations": devs})


def _check_hand_fixtures(ctx: _Context) -> Row:
    space = two_point_space()
    lam = two_point_lambda()
    coeff = geometry.discrete_coefficient(space, lam, Ball(0, 1.0), Ball(0, 4.0), 2.0).value
    kernel = operators.make_kernel(space, lam, l=0.0)
    params = OperatorParams(l=0.0, rho=1.0, s=2.0)
    f = np.array([0.0, 1.0])
    marc = operators.marcinkiewicz(space, kernel, f, 0, params)
    pot = operators.t_lambda(space, lam, f, 0)
    rhs = (2.0) ** (-0.5) * kernel.c_size * pot
    devs = [
        abs(coeff - 3.25) / 3.25,
        abs(marc - 1.0 / (2.0 * math.sqrt(2.0))) / (1.0 / (2.0 * math.sqrt(2.0))),
        abs(pot - 0.5) / 0.5,
        abs(marc - rhs) / rhs,
    ]
    worst = float(max(devs))
    return _row(ctx, "hand_fixtures", worst, "pass" if worst <= 1e-12 else "fail",
                witness={"coefficient": coeff, "marcinkiewicz": marc, "potential": pot})


def _check_pointwise_domination(ctx: _Context) -> Row:
    worst = -math.inf
    status = "pass"
    for f in ctx.functions(ctx.budget("domination_functions", 10)):
        rep = operators.check_pointwise_domination(ctx.space, ctx.lam, ctx.kernel, f, ctx.params)
        worst = max(worst, rep.value)
        if not rep.passed:
            status = "fail"
    return _row(ctx, "pointwise_domination", worst, status)


def _check_jn_envelope(ctx: _Context) -> Row:
    count = ctx.budget("jn_functions", 5)
    fs = generate_functions(ctx.space, "psi_adapted", count, ctx.seed,
                            lam=ctx.lam, psi=ctx.psi)
    center = _resolve_center(ctx.space, 0.5) if ctx.space.coords is not None else 0
    ball = Ball(center, max(0.25, ctx.space.diameter / 4.0))
    dominated = 0
    total = 0
    rates = []
    for f in fs:
        rep = spaces.jn_distribution(ctx.space, f, ctx.psi, ball, 2.0)
        envelope = 2.0 * np.exp(-rep.rate * rep.t_values) * rep.mu_tau_ball
        dominated += int(np.sum(rep.distribution <= envelope * (1.0 + 1e-12)))
        total += rep.t_values.size
        rates.append(rep.rate)
    frac = dominated / max(total, 1)
    return _row(ctx, "jn_envelope", frac, "pass",
                witness={"rates": rates, "points": total})


def _check_mean_jumps(ctx: _Context) -> Row:
    worst = 0.0
    details = {}
    for f in ctx.functions(ctx.budget("functions", 5)):
        rep = spaces.check_mean_jump_bounds(ctx.space, ctx.lam, f, ctx.psi,
                                            pair_budget=ctx.budget("pairs", 500),
                                            seed=ctx.seed)
        if rep.value > worst:
            worst = rep.value
            details = rep.details
    return _row(ctx, "mean_jump_bounds", worst, "pass", witness=details)


def _check_equivalence(ctx: _Context) -> Row:
    fs = ctx.functions(ctx.budget("functions", 5))
    rep = spaces.equivalence_experiment(ctx.space, ctx.lam, ctx.psi, fs,
                                        pair_budget=ctx.budget("pairs", 500), seed=ctx.seed)
    bands = rep.details["bands"]
    key = next(iter(bands)) if bands else None
    lower, upper = bands.get(key, (None, None)) if key else (None, None)
    return _row(ctx, "equivalence_bands", rep.value, "pass",
                lower=lower, upper=upper, witness=rep.details)


def _check_p_oscillation_bands(ctx: _Context) -> Row:
    fs = ctx.functions(ctx.budget("functions", 5))
    bands = {}
    for p in (2.0, 4.0):
        lo, hi = math.inf, -math.inf
        for f in fs:
            norm = spaces.campanato_norm(ctx.space, ctx.lam, f, ctx.psi,
                                         pair_budget=ctx.budget("pairs", 500),
                                         seed=ctx.seed).norm
            if norm <= 1e-13:
                continue
            posc = spaces.p_oscillation_norm(ctx.space, f, ctx.psi, p, 2.0)
            ratio = posc / norm
            lo, hi = min(lo, ratio), max(hi, ratio)
        bands[f"p{p:g}"] = [lo, hi]
    return _row(ctx, "p_oscillation_bands", bands["p2"][1], "pass",
                lower=bands["p2"][0], upper=bands["p2"][1], witness=bands)


def _check_operator_norm_ratios(ctx: _Context) -> Row:
    fs = ctx.functions(ctx.budget("functions", 5))
    mz = ctx.functions(ctx.budget("functions", 5), "mean_zero_random")
    b = ctx.functions(1)[0]
    ratios = operator_norm_ratios(ctx.space, ctx.lam, ctx.profile, ctx.psi, ctx.phi,
                                  ctx.kernel, ctx.params, fs, mz, b,
                                  seed=ctx.seed, pair_budget=ctx.budget("pairs", 500))
    return _row(ctx, "operator_norm_ratios", ratios["marcinkiewicz_morrey_ratio"],
                "pass", witness=ratios)


def _check_sharp_estimate(ctx: _Context) -> Row:
    fs = ctx.functions(ctx.budget("sharp_functions", 3))
    b = ctx.functions(1)[0]
    worst = 0.0
    for f in fs:
        rep = operators.check_sharp_maximal_estimate(
            ctx.space, ctx.lam, ctx.profile, ctx.kernel, ctx.psi, b, f, ctx.params,
            pair_budget=ctx.budget("pairs", 500), seed=ctx.seed)
        worst = max(worst, rep.value)
    return _row(ctx, "sharp_maximal_estimate", worst, "pass")


def _check_maximal_embedding(ctx: _Context) -> Row:
    params = ctx.params
    psi_emb = spaces.phi_compatible_psi(ctx.phi, params.p, params.q)
    fs = ctx.functions(2 * ctx.budget("embedding_functions", 3))
    half = len(fs) // 2
    c10 = operators.maximal_embedding_constant(ctx.space, psi_emb, ctx.phi, params.p, params.q)
    cal = 0.0
    status = "pass"
    for f in fs[:half]:
        norm = spaces.morrey_norm(ctx.space, f, params.p, ctx.phi, eta=params.tau)
        if norm <= 1e-13:
            continue
        rep = operators.check_maximal_morrey_pointwise(
            ctx.space, psi_emb, ctx.phi, np.asarray(f) / norm, params, c10=c10)
        cal = max(cal, rep.value)
    for f in fs[half:]:
        norm = spaces.morrey_norm(ctx.space, f, params.p, ctx.phi, eta=params.tau)
        if norm <= 1e-13:
            continue
        rep = operators.check_maximal_morrey_pointwise(
            ctx.space, psi_emb, ctx.phi, np.asarray(f) / norm, params, c10=c10)
        if not rep.passed:
            status = "fail"
        cal = max(cal, rep.value)
    return _row(ctx, "maximal_morrey_pointwise", cal, status, witness={"c10": c10})


def operator_norm_ratios(space, lam, profile, psi, phi, kernel, params,
                         fs, mean_zero_fs, b, *, seed=0, pair_budget=2000) -> dict:
    """Suprema over a function family of the operator norm ratios used in the
    refinement-stability experiments."""
    p, q, eta = params.p, params.q, params.eta
    pot = 0.0
    marc = 0.0
    comm = 0.0
    maximal = 0.0
    doubling = 0.0
    b_norm = spaces.campanato_norm(space, lam, b, psi, pair_budget=pair_budget,
                                   seed=seed).norm
    for f in fs:
        mn = spaces.morrey_norm(space, f, p, phi, eta)
        if mn <= 1e-13:
            continue
        tl = operators.t_lambda(space, lam, np.abs(f))
        pot = max(pot, _morrey_of_values(space, tl, p, phi, eta) / mn)
        mf = operators.marcinkiewicz(space, kernel, f, None, params)
        marc = max(marc, _morrey_of_values(space, mf, p, phi, eta) / mn)
        cf = operators.marcinkiewicz_commutator(space, kernel, b, f, None, params)
        comm = max(comm, _morrey_of_values(space, cf, q, phi, eta) / (b_norm * mn))
        lpn = lp_norm(space, f, p)
        if lpn > 1e-13:
            maximal = max(maximal, lp_norm(space, operators.maximal_p_tau(space, f, p, 5.0), p) / lpn)
            doubling = max(doubling, lp_norm(space, operators.doubling_maximal(space, profile, f), p) / lpn)
    sharp_control = 0.0
    for f in mean_zero_fs:
        sharp = operators.sharp_maximal(space, lam, profile, f,
                                        pair_budget=pair_budget, seed=seed)
        den = lp_norm(space, sharp, p)
        num = lp_norm(space, operators.doubling_maximal(space, profile, f), p)
        if den > 1e-13:
            sharp_control = max(sharp_control, num / den)
    return {
        "potential_morrey_ratio": pot,
        "marcinkiewicz_morrey_ratio": marc,
        "commutator_morrey_ratio": comm,
        "maximal_lp_ratio": maximal,
        "doubling_maximal_lp_ratio": doubling,
        "sharp_control_ratio": sharp_control,
        "b_norm": b_norm,
    }


def _morrey_of_values(space, values, p, phi, eta) -> float:
    return spaces.morrey_norm(space, values, p, phi, eta)


CHECKS: dict = {
    "upper_doubling": _check_upper_doubling,
    "lambda_comparability": _check_lambda_comparability,
    "weak_reverse_doubling": _check_weak_reverse_doubling,
    "geometric_doubling": _check_geometric_doubling,
    "coefficient_inequalities": _check_coefficient_inequalities,
    "coefficient_chain_bound": _check_chain_bound,
    "doubling_coefficient_bound": _check_doubling_coefficient,
    "weak_doubling_index": _check_weak_doubling_index,
    "psi_regularity": _check_psi,
    "phi_decrease": _check_phi,
    "identity_suite": _check_identity_suite,
    "hand_fixtures": _check_hand_fixtures,
    "pointwise_domination": _check_pointwise_domination,
    "jn_envelope": _check_jn_envelope,
    "mean_jump_bounds": _check_mean_jumps,
    "equivalence_bands": _check_equivalence,
    "p_oscillation_bands": _check_p_oscillation_bands,
    "operator_norm_ratios": _check_operator_norm_ratios,
    "sharp_maximal_estimate": _check_sharp_estimate,
    "maximal_morrey_pointwise": _check_maximal_embedding,
}


def run_experiments(config: ExperimentConfig) -> ExperimentReport:
    """Execute the configured checks in declared order on a freshly generated
    space; the seed can be overridden with the NHS_LAB_SEED variable."""
    start = time.perf_counter()
    seed = config.seed
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise SpecError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc
    space = generate_space(config.generator)
    lam = mmspace.fit_power_lambda(space)
    profile = mmspace.make_profile(space, lam)
    psi = make_psi(config.psi, lam)
    phi = make_phi(config.phi)
    kernel = operators.make_kernel(space, lam, l=config.params.l)
    ctx = _Context(space=space, lam=lam, profile=profile, psi=psi, phi=phi,
                   kernel=kernel, params=config.params, seed=seed,
                   gen_name=generator_name(config.generator), budgets=config.budgets)
    rows = []
    for name in config.checks:
        try:
            rows.append(CHECKS[name](ctx))
        except Exception as exc:  # surfaced as a failed row, not a crash
            rows.append(_row(ctx, name, None, "fail", witness={"error": repr(exc)}))
    elapsed = time.perf_counter() - start
    cfg_echo = {
        "generator": config.generator,
        "checks": config.checks,
        "seed": seed,
        "params": asdict(config.params),
        "psi": config.psi,
        "phi": config.phi,
        "budgets": config.budgets,
    }
    return ExperimentReport(rows=rows, config=cfg_echo, runtime_seconds=elapsed)


# ------------------------------------------------------------------------------
# Report emission
# ------------------------------------------------------------------------------
CSV_COLUMNS = ["check", "n", "generator", "value", "lower", "upper", "witness", "pass"]


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def emit_report(report: ExperimentReport, fmt: str = "json",
                path: Optional[str] = None) -> str:
    """Serialize a report to JSON or CSV; returns the text and optionally
    writes it (files end with a single newline)."""
    if fmt == "json":
        text = json.dumps(report.to_json(), indent=2, default=_json_default) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in report.rows:
            writer.writerow([
                r.check, r.n, r.generator,
                "" if r.value is None else repr(float(r.value)),
                "" if r.lower is None else repr(float(r.lower)),
                "" if r.upper is None else repr(float(r.upper)),
                json.dumps(r.witness, default=_json_default, sort_keys=True),
                r.status,
            ])
        text = buf.getvalue()
    else:
        raise SpecError(f"unknown report format {fmt!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ------------------------------------------------------------------------------
# Cross-refinement experiments
# ------------------------------------------------------------------------------
def jn_envelope_experiment(generator_small: dict, generator_large: dict,
                           count: int = 20, seed: int = 7, tau: float = 2.0,
                           ball_center=0.5, ball_radius: float = 0.25,
                           n_t: int = 32, kappa: float = 0.8) -> dict:
    """Fit exponential envelope rates on the coarse space and measure how often
    the envelope dominates the re-measured distribution on the fine space."""
    results = {"functions": 0, "dominated": 0, "total": 0}
    spc_small = generate_space(generator_small)
    spc_large = generate_space(generator_large)
    for spc in (spc_small, spc_large):
        if spc.coords is None:
            raise SpecError("the envelope experiment needs coordinate-backed spaces")
    lam_s = mmspace.fit_power_lambda(spc_small, kappa)
    lam_l = mmspace.fit_power_lambda(spc_large, kappa)
    psi_s = spaces.constant_psi()
    psi_l = spaces.constant_psi()
    fs_small = generate_functions(spc_small, "psi_adapted", count, seed, lam=lam_s, psi=psi_s)
    fs_large = generate_functions(spc_large, "psi_adapted", count, seed, lam=lam_l, psi=psi_l)
    c_small = _resolve_center(spc_small, ball_center)
    c_large = _resolve_center(spc_large, ball_center)
    rates = []
    for f_s, f_l in zip(fs_small, fs_large):
        rep_s = spaces.jn_distribution(spc_small, f_s, psi_s, Ball(c_small, ball_radius), tau, n_t=n_t)
        rep_l = spaces.jn_distribution(spc_large, f_l, psi_l, Ball(c_large, ball_radius), tau, n_t=n_t)
        envelope = 2.0 * np.exp(-rep_s.rate * rep_l.t_values) * rep_l.mu_tau_ball
        results["dominated"] += int(np.sum(rep_l.distribution <= envelope * (1.0 + 1e-12)))
        results["total"] += int(rep_l.t_values.size)
        results["functions"] += 1
        rates.append(rep_s.rate)
    results["fraction"] = results["dominated"] / max(results["total"], 1)
    results["rates"] = rates
    return results


def constant_battery(generator: dict, count: int = 100, seed: int = 7,
                     params: Optional[OperatorParams] = None,
                     budgets: Optional[dict] = None, kappa: float = 0.8) -> dict:
    """All refinement-stability constants for one generator, as a flat dict.

    A single pass over the function family shares the expensive per-function
    quantities (norms, operator images) between the individual constants.
    The dominating-function exponent is pinned (only its tight constant is
    refitted per space) so that every refinement level runs the same
    power-law family; with a per-scale exponent fit the potential operator's
    constants inherit the drift of the exponent itself.
    """
    params = params or OperatorParams()
    budgets = budgets or {}
    space = generate_space(generator)
    lam = mmspace.fit_power_lambda(space, kappa)
    profile = mmspace.make_profile(space, lam)
    psi = spaces.constant_psi()
    phi = make_phi(None)
    psi_emb = spaces.phi_compatible_psi(phi, params.p, params.q)
    kernel = operators.make_kernel(space, lam, l=params.l)
    pair_budget = int(budgets.get("pairs", 2000))
    p, q, eta = params.p, params.q, params.eta
    combos = [(2.0, 1.0), (2.0, 2.0), (6.0, 1.0), (6.0, 2.0)]

    out: dict = {}
    rep = geometry.check_coefficient_inequalities(space, lam, (2.0, 6.0),
                                                  int(budgets.get("triples", 5000)), seed)
    out["coeff_difference"] = rep.details["difference_constant"]
    out["coeff_cross_ratio_max"] = rep.details["cross_step_ratio_max"]
    out["coeff_cross_ratio_min"] = rep.details["cross_step_ratio_min"]
    out["doubling_coeff_max"] = geometry.check_doubling_coefficient_bound(
        space, lam, profile, 6.0).value

    fs = generate_functions(space, "random_bounded", count, seed)
    mz = generate_functions(space, "mean_zero_random", count, seed)
    b = generate_functions(space, "random_bounded", 1, seed + 104729)[0]
    b_norm = spaces.campanato_norm(space, lam, b, psi,
                                   pair_budget=pair_budget, seed=seed).norm
    c10 = operators.maximal_embedding_constant(space, psi_emb, phi, p, q)

    jump = {"k2": 0.0, "k6": 0.0, "iterated": 0.0, "comparable": 0.0}
    band_tau = [math.inf, -math.inf]
    band_gamma = [math.inf, -math.inf]
    p_osc = {2.0: [math.inf, -math.inf], 4.0: [math.inf, -math.inf]}
    sharp_ratio = 0.0
    emb = 0.0
    pot = marc = comm = maximal = doubling = 0.0

    for f in fs:
        norms = campanato_reports = spaces.campanato_norm_multi(
            space, lam, f, psi, combos, pair_budget=pair_budget, seed=seed)
        n21, n22, n61, n62 = (r.norm for r in campanato_reports)
        if n21 > 1e-13:
            band_tau = [min(band_tau[0], n21 / n61), max(band_tau[1], n21 / n61)]
            band_gamma = [min(band_gamma[0], n21 / n22), max(band_gamma[1], n21 / n22)]
            for pp in p_osc:
                ratio = spaces.p_oscillation_norm(space, f, psi, pp, 2.0) / n21
                p_osc[pp] = [min(p_osc[pp][0], ratio), max(p_osc[pp][1], ratio)]
            d = spaces.check_mean_jump_bounds(space, lam, f, psi, (2.0, 6.0),
                                              pair_budget, seed, norm=n21).details
            jump["k2"] = max(jump["k2"], d["per_k"]["2.0"])
            jump["k6"] = max(jump["k6"], d["per_k"]["6.0"])
            jump["iterated"] = max(jump["iterated"], d["iterated"])
            jump["comparable"] = max(jump["comparable"], d["comparable"])

        rep = operators.check_sharp_maximal_estimate(
            space, lam, profile, kernel, psi, b, f, params,
            pair_budget=pair_budget, seed=seed, b_norm=b_norm)
        sharp_ratio = max(sharp_ratio, rep.value)

        mn = spaces.morrey_norm(space, f, p, phi, eta)
        if mn > 1e-13:
            rep = operators.check_maximal_morrey_pointwise(
                space, psi_emb, phi, np.asarray(f) / spaces.morrey_norm(space, f, p, phi, eta=params.tau),
                params, c10=c10)
            emb = max(emb, rep.value)
            tl = operators.t_lambda(space, lam, np.abs(f))
            pot = max(pot, spaces.morrey_norm(space, tl, p, phi, eta) / mn)
            mf = operators.marcinkiewicz(space, kernel, f, None, params)
            marc = max(marc, spaces.morrey_norm(space, mf, p, phi, eta) / mn)
            cf = operators.marcinkiewicz_commutator(space, kernel, b, f, None, params)
            comm = max(comm, spaces.morrey_norm(space, cf, q, phi, eta) / (b_norm * mn))
        lpn = lp_norm(space, f, p)
        if lpn > 1e-13:
            maximal = max(maximal, lp_norm(space, operators.maximal_p_tau(space, f, p, 5.0), p) / lpn)
            doubling = max(doubling, lp_norm(space, operators.doubling_maximal(space, profile, f), p) / lpn)

    sharp_control = 0.0
    for f in mz:
        sharp = operators.sharp_maximal(space, lam, profile, f,
                                        pair_budget=pair_budget, seed=seed)
        den = lp_norm(space, sharp, p)
        num = lp_norm(space, operators.doubling_maximal(space, profile, f), p)
        if den > 1e-13:
            sharp_control = max(sharp_control, num / den)

    out["mean_jump_k2"] = jump["k2"]
    out["mean_jump_k6"] = jump["k6"]
    out["mean_jump_iterated"] = jump["iterated"]
    out["mean_jump_comparable"] = jump["comparable"]
    out["norm_band_tau_min"], out["norm_band_tau_max"] = band_tau
    out["norm_band_gamma_min"], out["norm_band_gamma_max"] = band_gamma
    out["p_osc_band_p2_min"], out["p_osc_band_p2_max"] = p_osc[2.0]
    out["p_osc_band_p4_min"], out["p_osc_band_p4_max"] = p_osc[4.0]
    out["sharp_commutator_ratio"] = sharp_ratio
    out["maximal_embedding_ratio"] = emb
    out["potential_morrey_ratio"] = pot
    out["marcinkiewicz_morrey_ratio"] = marc
    out["commutator_morrey_ratio"] = comm
    out["maximal_lp_ratio"] = maximal
    out["doubling_maximal_lp_ratio"] = doubling
    out["sharp_control_ratio"] = sharp_control
    return out


def stability_experiment(generator_small: dict, generator_large: dict,
                         count: int = 100, seed: int = 7,
                         params: Optional[OperatorParams] = None,
                         budgets: Optional[dict] = None, kappa: float = 0.8) -> dict:
    """Constants at two refinement levels plus their max/min drift ratio."""
    small = constant_battery(generator_small, count, seed, params, budgets, kappa)
    large = constant_battery(generator_large, count, seed, params, budgets, kappa)
    out = {}
    for key in small:
        a, bval = small[key], large[key]
        if a is None or bval is None:
            ratio = math.inf
        elif min(a, bval) <= 0:
            ratio = math.inf if max(a, bval) > 0 else 1.0
        else:
            ratio = max(a, bval) / min(a, bval)
        out[key] = {"small": a, "large": bval, "drift": ratio}
    return out
