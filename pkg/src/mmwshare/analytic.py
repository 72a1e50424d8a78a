"""Coverage analysis by numerical integration (Rayleigh fading only).

The SINR distribution of a typical user is obtained by conditioning on
the serving sub-block (operator subset x LOS/NLOS) and serving distance,
multiplying the noise factor by the interference Laplace transform, and
integrating against the association-distance density.

Interference Laplace transforms reduce to products of exponentials of
semi-infinite integrals; those are mapped onto [0, 1) by the
substitution t = lower + v/(1-v) and evaluated with an adaptive
21-point Gauss-Kronrod rule that handles all integrals of one transform
in a single vectorized pass.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .core import (
    BlockModel,
    ConfigError,
    DataError,
    NumericalError,
    OperatorSet,
    SystemParams,
    TwoOpSpec,
    load_factor,
    rate_sinr_threshold,
)


# ---------------------------------------------------------------------------
# Blockage-aware intensity measures and exclusion radii

def los_measure(density: float, beta: float, r):
    """Expected LOS sites of a block of ``density`` within distance r.

    2*pi*lam * int_0^r exp(-beta t) t dt = (2*pi*lam/beta^2) * gamma(2, beta r);
    gammainc is the regularized lower incomplete gamma and Gamma(2) = 1.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ConfigError("measure radius must be >= 0")
    val = (2.0 * np.pi * density / beta**2) * special.gammainc(2.0, beta * r)
    return val if val.ndim else float(val)


def nlos_measure(density: float, beta: float, r):
    """Expected NLOS sites within r; complements los_measure to pi*lam*r^2."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ConfigError("measure radius must be >= 0")
    val = np.pi * density * r**2 - los_measure(density, beta, r)
    return val if val.ndim else float(val)


def exclusion_radius(params: SystemParams, r, serving_los: bool):
    """Closest possible opposite-link-type home site given the serving link.

    Defined by path-loss equality: the returned D satisfies
    c_other * D^(-alpha_other) = c_serving * r^(-alpha_serving), so any
    opposite-type site closer than D would have been the serving one.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ConfigError("serving distance must be positive")
    if serving_los:
        val = (params.c_nlos / params.c_los) ** (1.0 / params.alpha_nlos) * r ** (
            params.alpha_los / params.alpha_nlos
        )
    else:
        val = (params.c_los / params.c_nlos) ** (1.0 / params.alpha_los) * r ** (
            params.alpha_nlos / params.alpha_los
        )
    return val if val.ndim else float(val)


def interference_kernel(params: SystemParams, s, t, los: bool):
    """Laplace transform of one interferer's fade*gain at distance t.

    E[exp(-s * c_tau * H * G_b * t^(-alpha_tau))] for Exp(1) H and the
    Bernoulli beam gain: a two-term mixture over main/side lobes.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    c = params.c_los if los else params.c_nlos
    al = params.alpha_los if los else params.alpha_nlos
    pb = params.main_lobe_prob
    with np.errstate(divide="ignore", over="ignore"):
        x = s * c * t ** (-al)
        val = pb / (1.0 + x * params.gain_main) + (1.0 - pb) / (1.0 + x * params.gain_side)
    return val if val.ndim else float(val)


# ---------------------------------------------------------------------------
# Scenario plumbing shared with the simulator

def blocks_of(scenario) -> list[tuple[OperatorSet, float]]:
    """Positive-density (subset, density) pairs in bitmask order."""
    if isinstance(scenario, BlockModel):
        return scenario.blocks()
    if isinstance(scenario, TwoOpSpec):
        return sorted(scenario.block_densities().items(), key=lambda kv: kv[0].bits)
    raise ConfigError(
        f"scenario must be a BlockModel or TwoOpSpec, got {type(scenario).__name__}"
    )


def operator_density_of(scenario, m: int) -> float:
    if isinstance(scenario, (BlockModel, TwoOpSpec)):
        return scenario.operator_density(m)
    raise ConfigError(
        f"scenario must be a BlockModel or TwoOpSpec, got {type(scenario).__name__}"
    )


def truncation_radius(lambda_home, params: SystemParams, tail_mass: float = 1e-8) -> float:
    """Radius beyond which the association-distance tail mass is < tail_mass.

    Uses closed-form void-probability bounds: the LOS tail is below
    (2*pi*lam/beta^2)(1+beta r)exp(-beta r) and the NLOS tail below
    exp(2*pi*lam/beta^2 - pi*lam*r^2); the bound is evaluated in log
    space and inverted by root finding.
    """
    lam = lambda_home if isinstance(lambda_home, float) else float(lambda_home)
    if not (math.isfinite(lam) and lam > 0):
        raise ConfigError(f"home-operator density must be positive, got {lam}")
    if not 0 < tail_mass < 1:
        raise ConfigError("tail_mass must lie in (0, 1)")
    k = 2.0 * math.pi * lam / params.beta_per_m**2
    log_tail = math.log(tail_mass)

    def log_bound_excess(r: float) -> float:
        log_los = math.log(k) + math.log1p(params.beta_per_m * r) - params.beta_per_m * r
        log_nlos = k - math.pi * lam * r * r
        return np.logaddexp(log_los, log_nlos) - log_tail

    lo, hi = 1.0, 1e8
    if log_bound_excess(lo) <= 0:
        return lo
    if log_bound_excess(hi) > 0:
        raise NumericalError("could not bracket the association-tail truncation radius")
    return float(optimize.brentq(log_bound_excess, lo, hi, xtol=1e-3))


def association_pdf(scenario, params: SystemParams, subset: OperatorSet, serving_los: bool,
                    r, home_operator: int = 1):
    """Density (over serving distance r) of associating with ``subset``'s
    LOS (or NLOS) sub-block.

    2*pi*lam_S r p_tau(r) times the void probability of every better
    home-network candidate: same-type sites within r and opposite-type
    sites within the exclusion radius, which depends only on the home
    operator's total density.
    """
    if home_operator not in subset:
        raise ConfigError(f"association subset {subset} must contain operator {home_operator}")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ConfigError("serving distance must be positive")
    lam_sub = dict(blocks_of(scenario)).get(subset, 0.0)
    lam_home = operator_density_of(scenario, home_operator)
    beta = params.beta_per_m
    d = exclusion_radius(params, r, serving_los)
    if serving_los:
        expo = los_measure(lam_home, beta, r) + nlos_measure(lam_home, beta, d)
        p = np.exp(-beta * r)
    else:
        expo = nlos_measure(lam_home, beta, r) + los_measure(lam_home, beta, d)
        p = -np.expm1(-beta * r)
    val = 2.0 * np.pi * lam_sub * r * p * np.exp(-expo)
    return val if val.ndim else float(val)


# ---------------------------------------------------------------------------
# Adaptive vector Gauss-Kronrod quadrature (21 point), batched components

# QUADPACK qk21 abscissae/weights (symmetric half, extreme node first).
_XGK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])          # 21 ascending nodes
_WEIGHTS_K = np.concatenate([_WGK[:-1], _WGK[::-1]])       # Kronrod weights
_GAUSS_IDX = np.array([1, 3, 5, 7, 9, 11, 13, 15, 17, 19])  # embedded Gauss-10
_GAUSS_W = np.concatenate([_WG, _WG[::-1]])


def _gk21(f, a: float, b: float):
    """One 21-point Gauss-Kronrod panel of a vector integrand on [a, b].

    Returns (kronrod (k,), error estimate (k,)) using the QUADPACK
    roughness-scaled error model, which deliberately over-reports so that
    the adaptive loop converges well past the requested tolerance.
    """
    mid = 0.5 * (a + b)
    h = 0.5 * (b - a)
    fx = f(mid + h * _NODES)                    # (21, k)
    resk = _WEIGHTS_K @ fx
    resg = _GAUSS_W @ fx[_GAUSS_IDX]
    resasc = _WEIGHTS_K @ np.abs(fx - 0.5 * resk)
    err = np.abs(resk - resg) * h
    resasc = resasc * h
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(
            resasc > 0.0,
            resasc * np.minimum(1.0, (200.0 * err / np.where(resasc > 0, resasc, 1.0)) ** 1.5),
            err,
        )
    return resk * h, scaled


def adaptive_gk21(f, a: float, b: float, epsabs: float = 1e-9, epsrel: float = 1e-7,
                  max_panels: int = 256) -> np.ndarray:
    """Adaptive Gauss-Kronrod integration of a vector integrand.

    ``f`` maps an (n,) array of abscissae to an (n, k) array; every
    component is integrated over [a, b] and refined until each satisfies
    err_i <= max(epsabs, epsrel*|I_i|).  The panel with the largest
    component error is bisected first.
    """
    val, err = _gk21(f, a, b)
    panels = [(a, b, val, err)]
    while len(panels) < max_panels:
        total = np.sum([p[2] for p in panels], axis=0)
        toterr = np.sum([p[3] for p in panels], axis=0)
        if np.all(toterr <= np.maximum(epsabs, epsrel * np.abs(total))):
            return total
        worst = max(range(len(panels)), key=lambda i: float(panels[i][3].max()))
        pa, pb, _, _ = panels.pop(worst)
        pm = 0.5 * (pa + pb)
        v1, e1 = _gk21(f, pa, pm)
        v2, e2 = _gk21(f, pm, pb)
        panels.append((pa, pm, v1, e1))
        panels.append((pm, pb, v2, e2))
    raise NumericalError("vector quadrature failed to converge within the panel budget")


class _Segment(NamedTuple):
    """One exponent integral of an interference Laplace transform.

    Contributes weight * int (1 - u^power)(1 + mix*u) p_tau(t) t dt over
    [lower, upper] (upper=None means +infinity) to the log transform,
    where u is the single-interferer kernel of the segment's link type.
    """

    weight: float
    power: int
    mix: float
    los: bool
    lower: float
    upper: float | None


def _exponent_each(segments: Sequence[_Segment], params: SystemParams, s,
                   epsabs: float = 1e-9, epsrel: float = 1e-7) -> np.ndarray:
    """Per-segment exponent integrals, evaluated in one adaptive pass.

    ``s`` may be a scalar or one value per segment.  Zero-weight segments
    cost nothing and return exactly 0, preserving factor identities.
    """
    out = np.zeros(len(segments))
    s_all = np.broadcast_to(np.asarray(s, dtype=float), (len(segments),))
    live = [i for i, g in enumerate(segments) if g.weight > 0.0 and s_all[i] > 0.0]
    if not live:
        return out
    segs = [segments[i] for i in live]
    s_arr = s_all[live]
    w = np.array([g.weight for g in segs])
    power = np.array([float(g.power) for g in segs])
    mix = np.array([g.mix for g in segs])
    c = np.array([params.c_los if g.los else params.c_nlos for g in segs])
    al = np.array([params.alpha_los if g.los else params.alpha_nlos for g in segs])
    is_los = np.array([g.los for g in segs])
    lo = np.array([g.lower for g in segs])
    fin = np.array([g.upper is not None for g in segs])
    span = np.array([(g.upper - g.lower) if g.upper is not None else 1.0 for g in segs])
    beta = params.beta_per_m
    pb = params.main_lobe_prob
    g_main, g_side = params.gain_main, params.gain_side

    # Unbounded segments are truncated where an analytic bound on the
    # remainder drops below a tenth of the absolute tolerance, using
    # (1 - u^k)(1 + mix*u) <= k*(1 + |mix|) * min(1, s*c*gbar*t^(-alpha)):
    # a power-law bound for NLOS tails and an exp(-beta*t) bound for LOS.
    gbar = pb * g_main + (1.0 - pb) * g_side
    tol_tail = max(0.1 * epsabs, 1e-300)
    pref = w * power * (1.0 + np.abs(mix))
    with np.errstate(over="ignore", divide="ignore"):
        t_far = np.where(
            is_los | fin,
            1.0,
            (pref * s_arr * c * gbar / (np.maximum(al - 2.0, 1e-12) * tol_tail))
            ** (1.0 / np.maximum(al - 2.0, 1e-12)),
        )
    c_los_bound = pref / beta**2
    t_exp = np.maximum(lo, 1.0 / beta)
    for _ in range(8):
        need = c_los_bound * (1.0 + beta * t_exp) * np.exp(-beta * t_exp) > tol_tail
        t_exp = np.where(
            need,
            np.log(np.maximum(c_los_bound * (1.0 + beta * t_exp) / tol_tail, 1.0)) / beta,
            t_exp,
        )
    t_far = np.where(is_los & ~fin, t_exp, t_far)
    t_far = np.minimum(t_far, 1e30)
    # Exponentially stretched map t = lo + q*(exp(Y*v) - 1): q is the
    # kernel transition radius (where the interferer term turns over),
    # so the integrand's structure sits at moderate v for any s.
    with np.errstate(over="ignore"):
        transition = (s_arr * c * g_main) ** (1.0 / al)
    cap = np.where(is_los, lo + 4.0 / beta, np.inf)
    q = np.maximum(1.0, np.maximum(lo, np.minimum(transition, cap)))
    t_far = np.maximum(t_far, lo + 1e-6 * q)
    y_span = np.log1p((t_far - lo) / q)

    def f(v: np.ndarray) -> np.ndarray:
        vv = v[:, None]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            stretch = np.exp(y_span * vv)
            t = np.where(fin, lo + span * vv, lo + q * (stretch - 1.0))
            jac = np.where(fin, span, q * y_span * stretch)
            x = s_arr * c * t ** (-al)
            xm = x * g_main
            xs = x * g_side
            # 1 - u without cancellation at small x; 1 - u^k via log1p/expm1
            # so the integrand stays smooth to machine precision in the tail
            y = pb * xm / (1.0 + xm) + (1.0 - pb) * xs / (1.0 + xs)
            one_minus_uk = -np.expm1(power * np.log1p(-y))
            p_l = np.exp(-beta * t)
            p = np.where(is_los, p_l, 1.0 - p_l)
            vals = w * one_minus_uk * (1.0 + mix * (1.0 - y)) * p * t * jac
        # t = 0 endpoints produce transient non-finite intermediates
        return np.where(np.isfinite(vals), vals, 0.0)

    out[live] = adaptive_gk21(f, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel)
    return out


def _segments_general(blocks, params: SystemParams, r: float, serving_los: bool,
                      home_operator: int) -> list[_Segment]:
    d = exclusion_radius(params, r, serving_los)
    lo_los, lo_nlos = (r, d) if serving_los else (d, r)
    segs = []
    for subset, lam in blocks:
        home = home_operator in subset
        k = len(subset)
        segs.append(_Segment(2.0 * np.pi * lam, k, 0.0, True, lo_los if home else 0.0, None))
        segs.append(_Segment(2.0 * np.pi * lam, k, 0.0, False, lo_nlos if home else 0.0, None))
    return segs


def _segments_two_op(spec: TwoOpSpec, params: SystemParams, r: float,
                     serving_los: bool) -> list[_Segment]:
    lam = spec.lambda_total
    one_minus_a = 1.0 - spec.retain_a
    rho = spec.rho
    d = exclusion_radius(params, r, serving_los)
    near_los, near_nlos = (r, d) if serving_los else (d, r)
    two_pi_lam = 2.0 * np.pi * lam
    return [
        _Segment(two_pi_lam * one_minus_a, 1, 0.0, True, 0.0, near_los),
        _Segment(two_pi_lam, 1, rho, True, near_los, None),
        _Segment(two_pi_lam * one_minus_a, 1, 0.0, False, 0.0, near_nlos),
        _Segment(two_pi_lam, 1, rho, False, near_nlos, None),
    ]


def laplace_general(scenario, params: SystemParams, subset: OperatorSet, serving_los: bool,
                    r: float, s: float, home_operator: int = 1, *,
                    epsabs: float = 1e-11, epsrel: float = 1e-9) -> float:
    """Interference Laplace transform, general block decomposition.

    Conditioned on serving the user from ``subset``'s LOS (or NLOS)
    sub-block at distance r.  Product over blocks of the thinned-PPP
    exponentials (home blocks see the serving-side exclusion holes) times
    the co-location factor u^(|subset|-1) for the serving site's other
    occupants.
    """
    if home_operator not in subset:
        raise ConfigError(f"serving subset {subset} must contain operator {home_operator}")
    if r <= 0:
        raise ConfigError("serving distance must be positive")
    if s < 0:
        raise ConfigError("Laplace argument must be >= 0")
    blocks = blocks_of(scenario)
    segs = _segments_general(blocks, params, r, serving_los, home_operator)
    total = float(_exponent_each(segs, params, s, epsabs, epsrel).sum())
    co = interference_kernel(params, s, r, serving_los) ** (len(subset) - 1)
    return float(co * math.exp(-total))


def laplace_two_op_factors(spec: TwoOpSpec, params: SystemParams, serving_los: bool,
                           r: float, s: float, *, epsabs: float = 1e-11,
                           epsrel: float = 1e-9) -> tuple[float, float, float, float]:
    """The four exponential factors of the two-operator transform.

    Factors 1/3 cover the exclusive-competitor sites inside the LOS/NLOS
    exclusion regions (weight 1-a); factors 2/4 the tails where shared
    sites add the (1 + rho*u) correction.  Their product equals
    laplace_two_op without the co-location factor.
    """
    if r <= 0 or s < 0:
        raise ConfigError("need r > 0 and s >= 0")
    segs = _segments_two_op(spec, params, r, serving_los)
    expo = _exponent_each(segs, params, s, epsabs, epsrel)
    return tuple(float(math.exp(-e)) for e in expo)


def laplace_two_op(spec: TwoOpSpec, params: SystemParams, serving_los: bool, r: float,
                   s: float, co_located: bool, *, epsabs: float = 1e-11,
                   epsrel: float = 1e-9) -> float:
    """Two-operator interference Laplace transform (fast path).

    Algebraically identical to laplace_general on the {1},{2},{1,2}
    decomposition; co_located says whether the serving site also hosts
    operator 2, adding one interferer at the serving distance.
    """
    if r <= 0 or s < 0:
        raise ConfigError("need r > 0 and s >= 0")
    segs = _segments_two_op(spec, params, r, serving_los)
    total = float(_exponent_each(segs, params, s, epsabs, epsrel).sum())
    val = math.exp(-total)
    if co_located:
        val *= interference_kernel(params, s, r, serving_los)
    return float(val)


# ---------------------------------------------------------------------------
# Coverage curves

@dataclass(frozen=True, eq=False)
class CoverageCurve:
    """Ordered (threshold, probability) pairs with provenance.

    unit "db" marks SINR thresholds in dB; unit "bps" marks rate
    thresholds in bits/s.  Empirical curves carry Wilson 95% confidence
    half-widths.
    """

    thresholds: np.ndarray
    probabilities: np.ndarray
    kind: str
    unit: str
    ci_halfwidth: np.ndarray | None = None

    def __post_init__(self):
        thr = np.asarray(self.thresholds, dtype=float).reshape(-1)
        prob = np.asarray(self.probabilities, dtype=float).reshape(-1)
        if thr.shape != prob.shape:
            raise DataError("thresholds and probabilities must have equal length")
        if thr.size == 0:
            raise DataError("curve must contain at least one point")
        if np.any(np.diff(thr) <= 0):
            raise DataError("thresholds must be strictly increasing")
        if self.kind not in ("analytic", "empirical"):
            raise DataError(f"unknown curve kind {self.kind!r}")
        if self.unit not in ("db", "bps"):
            raise DataError(f"unknown threshold unit {self.unit!r}")
        if np.any(prob < -1e-9) or np.any(prob > 1.0 + 1e-9):
            raise NumericalError("coverage probabilities escaped [0, 1]")
        if np.any(np.diff(prob) > 1e-6):
            raise NumericalError("coverage probabilities are not non-increasing")
        prob = np.clip(prob, 0.0, 1.0)
        ci = self.ci_halfwidth
        if ci is not None:
            if self.kind != "empirical":
                raise DataError("confidence intervals only apply to empirical curves")
            ci = np.asarray(ci, dtype=float).reshape(-1)
            if ci.shape != thr.shape or np.any(ci < 0):
                raise DataError("ci_halfwidth must be non-negative and match the grid")
        object.__setattr__(self, "thresholds", thr)
        object.__setattr__(self, "probabilities", prob)
        object.__setattr__(self, "ci_halfwidth", ci)

    def __len__(self) -> int:
        return int(self.thresholds.size)

    def to_csv(self, path: str | Path) -> None:
        name = "threshold_db" if self.unit == "db" else "rate_bps"
        cols = [name, "probability"] + (["ci_halfwidth"] if self.ci_halfwidth is not None else [])
        with Path(path).open("w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self)):
                row = [repr(float(self.thresholds[i])), repr(float(self.probabilities[i]))]
                if self.ci_halfwidth is not None:
                    row.append(repr(float(self.ci_halfwidth[i])))
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "CoverageCurve":
        path = Path(path)
        try:
            rows = list(csv.reader(path.read_text().splitlines()))
        except OSError as exc:
            raise DataError(f"cannot read curve file {path}: {exc}") from exc
        rows = [r for r in rows if r]
        if not rows:
            raise DataError(f"{path}: empty curve file")
        header = [h.strip() for h in rows[0]]
        if header[:1] == ["threshold_db"]:
            unit = "db"
        elif header[:1] == ["rate_bps"]:
            unit = "bps"
        else:
            raise DataError(f"{path}: unknown curve header {rows[0]!r}")
        with_ci = header == [header[0], "probability", "ci_halfwidth"]
        if not with_ci and header != [header[0], "probability"]:
            raise DataError(f"{path}: unknown curve header {rows[0]!r}")
        try:
            data = np.array([[float(v) for v in row] for row in rows[1:]])
        except ValueError as exc:
            raise DataError(f"{path}: bad numeric value: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != len(header):
            raise DataError(f"{path}: ragged curve rows")
        kind = "empirical" if with_ci else "analytic"
        ci = data[:, 2] if with_ci else None
        return cls(data[:, 0], data[:, 1], kind=kind, unit=unit, ci_halfwidth=ci)


# ---------------------------------------------------------------------------
# SINR / rate coverage

def _coverage_integrand(r: float, t_lin: float, scenario, params: SystemParams,
                        home_operator: int, lam_home: float, home_blocks,
                        include_interference: bool, epsabs: float, epsrel: float) -> float:
    beta = params.beta_per_m
    sigma2 = params.sigma2
    two_op = isinstance(scenario, TwoOpSpec)
    out = 0.0
    for serving_los in (True, False):
        c = params.c_los if serving_los else params.c_nlos
        al = params.alpha_los if serving_los else params.alpha_nlos
        s = t_lin * r**al / (c * params.gain_main)
        d = exclusion_radius(params, r, serving_los)
        if serving_los:
            expo = los_measure(lam_home, beta, r) + nlos_measure(lam_home, beta, d)
            p = math.exp(-beta * r)
        else:
            expo = nlos_measure(lam_home, beta, r) + los_measure(lam_home, beta, d)
            p = -math.expm1(-beta * r)
        pref = 2.0 * math.pi * r * p * math.exp(-expo - sigma2 * s)
        if pref < 1e-300:
            continue
        if include_interference:
            if two_op:
                segs = _segments_two_op(scenario, params, r, serving_los)
            else:
                segs = _segments_general(blocks_of(scenario), params, r, serving_los,
                                         home_operator)
            total = float(_exponent_each(segs, params, s, epsabs, epsrel).sum())
            u_r = interference_kernel(params, s, r, serving_los)
            weighted = sum(lam * u_r ** (k - 1) for k, lam in home_blocks)
            out += pref * math.exp(-total) * weighted
        else:
            out += pref * lam_home
    return out


def _coverage_one(args) -> float:
    (scenario, params, t_lin, home_operator, lam_home, home_blocks,
     include_interference, r_max, epsabs, epsrel, outer_epsabs, outer_epsrel) = args
    val, _ = integrate.quad(
        _coverage_integrand,
        0.0,
        r_max,
        args=(t_lin, scenario, params, home_operator, lam_home, home_blocks,
              include_interference, epsabs, epsrel),
        epsabs=outer_epsabs,
        epsrel=outer_epsrel,
        limit=200,
    )
    return min(max(val, 0.0), 1.0)


def _coverage_linear(scenario, params: SystemParams, thresholds_lin: np.ndarray,
                     home_operator: int = 1, *, include_interference: bool = True,
                     workers: int = 1, epsabs: float = 1e-9, epsrel: float = 1e-7,
                     outer_epsabs: float = 1e-7, outer_epsrel: float = 1e-6,
                     tail_mass: float = 1e-8) -> np.ndarray:
    if params.fading.kind != "rayleigh":
        raise ConfigError(
            "the analytic engine supports Rayleigh fading only; "
            "use the Monte Carlo simulator for other fading models"
        )
    if home_operator != 1 and isinstance(scenario, TwoOpSpec) and home_operator != 2:
        raise ConfigError("two-operator scenarios have operators 1 and 2 only")
    thresholds_lin = np.asarray(thresholds_lin, dtype=float)
    if np.any(thresholds_lin < 0):
        raise ConfigError("SINR thresholds must be >= 0 in linear scale")
    lam_home = operator_density_of(scenario, home_operator)
    if lam_home <= 0:
        raise ConfigError(f"operator {home_operator} has zero density")
    if isinstance(scenario, TwoOpSpec) and home_operator == 2:
        # coverage is symmetric in the operator labels; swap 1<->2
        scenario = TwoOpSpec(scenario.lambda_total, 1.0 - scenario.retain_b,
                             1.0 - scenario.retain_a)
        home_operator = 1
    blocks = blocks_of(scenario)
    home_blocks = tuple(
        (len(sub), lam) for sub, lam in blocks if home_operator in sub
    )
    r_max = truncation_radius(lam_home, params, tail_mass)
    tasks = [
        (scenario, params, float(t), home_operator, lam_home, home_blocks,
         include_interference, r_max, epsabs, epsrel, outer_epsabs, outer_epsrel)
        for t in thresholds_lin
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            probs = list(pool.map(_coverage_one, tasks))
    else:
        probs = [_coverage_one(t) for t in tasks]
    return np.asarray(probs)


def sinr_coverage(scenario, params: SystemParams, thresholds_db, home_operator: int = 1,
                  **kwargs) -> CoverageCurve:
    """P(SINR > T) over a strictly increasing grid of thresholds in dB."""
    thr_db = np.asarray(thresholds_db, dtype=float).reshape(-1)
    if thr_db.size == 0 or np.any(np.diff(thr_db) <= 0):
        raise ConfigError("thresholds must be a non-empty strictly increasing grid")
    probs = _coverage_linear(scenario, params, 10.0 ** (thr_db / 10.0), home_operator,
                             **kwargs)
    # independent quadratures can wiggle below resolution; tidy for the curve
    probs = np.minimum.accumulate(np.round(probs, 12))
    return CoverageCurve(thr_db, probs, kind="analytic", unit="db")


def rate_coverage(scenario, params: SystemParams, rates_bps, home_operator: int = 1,
                  **kwargs) -> CoverageCurve:
    """P(Rate > R): rate targets map to SINR thresholds via the load model."""
    rates = np.asarray(rates_bps, dtype=float).reshape(-1)
    if rates.size == 0 or np.any(np.diff(rates) <= 0) or np.any(rates < 0):
        raise ConfigError("rates must be a non-empty strictly increasing grid of >= 0 values")
    lam_home = operator_density_of(scenario, home_operator)
    thr_lin = np.array([rate_sinr_threshold(rr, params, lam_home) for rr in rates])
    probs = _coverage_linear(scenario, params, thr_lin, home_operator, **kwargs)
    probs = np.minimum.accumulate(np.round(probs, 12))
    return CoverageCurve(rates, probs, kind="analytic", unit="bps")


def median_rate(scenario, params: SystemParams, home_operator: int = 1, *,
                sinr_cap: float = 1e4, rtol: float = 1e-3, **kwargs) -> float:
    """The rate R solving P(Rate > R) = 1/2, by bracketed root finding.

    Raises NumericalError when the coverage curve does not cross 1/2
    below the rate equivalent of ``sinr_cap``.
    """
    lam_home = operator_density_of(scenario, home_operator)
    n_u = load_factor(params, lam_home)

    def excess(rate_bps: float) -> float:
        thr = rate_sinr_threshold(rate_bps, params, lam_home)
        p = _coverage_linear(scenario, params, np.array([thr]), home_operator, **kwargs)
        return float(p[0]) - 0.5

    hi = params.bandwidth_hz * math.log2(1.0 + sinr_cap) / n_u
    if excess(hi) >= 0.0:
        raise NumericalError(
            f"median rate not bracketed: coverage still >= 0.5 at {hi:.3e} bps"
        )
    return float(optimize.brentq(excess, 0.0, hi, rtol=rtol, xtol=1.0))
