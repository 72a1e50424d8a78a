"""Propagation and radio primitives: path loss, antenna gain, fading, SINR.

The SINR of a user is assembled from a labeled deployment (per-site
LOS/NLOS labels relative to that user).  Association is closed access:
the serving site is the home operator's site with the smallest path
loss; the serving beam is aligned (gain exactly G).  Every other
(site, occupant-operator) pair contributes one interference term with
its own independent fade and independent Bernoulli beam gain; a shared
serving site contributes its remaining occupants as interferers at the
serving distance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, FadingSpec, SystemParams
from .geometry import Deployment


class LinkType(enum.IntEnum):
    LOS = 0
    NLOS = 1


class HomeOperatorAbsent(RuntimeError):
    """The home operator has no site in the deployment."""


def los_probability(beta: float, r):
    """P(link of length r is LOS) = exp(-beta * r)."""
    return np.exp(-beta * np.asarray(r, dtype=float))


def path_loss(link: LinkType, r, params: SystemParams):
    """Linear path gain c_tau * r^(-alpha_tau); scalar or elementwise."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ConfigError("path loss is defined for r > 0 only")
    if link == LinkType.LOS:
        out = params.c_los * r ** (-params.alpha_los)
    else:
        out = params.c_nlos * r ** (-params.alpha_nlos)
    return out if out.ndim else float(out)


def _path_gain(params: SystemParams, r: np.ndarray, los: np.ndarray) -> np.ndarray:
    # hot-path variant: per-site link types, no validation
    return np.where(
        los,
        params.c_los * r ** (-params.alpha_los),
        params.c_nlos * r ** (-params.alpha_nlos),
    )


def gain_pmf(params: SystemParams) -> tuple[tuple[float, float], tuple[float, float]]:
    """Exact PMF of an interferer's beam gain: ((G, p_main), (g, 1 - p_main))."""
    p = params.main_lobe_prob
    return ((params.gain_main, p), (params.gain_side, 1.0 - p))


def sample_gain(params: SystemParams, rng: np.random.Generator, size: int | None = None):
    """Bernoulli beam gain draw(s): G w.p. theta_b/pi, else g."""
    u = rng.random(size)
    out = np.where(u < params.main_lobe_prob, params.gain_main, params.gain_side)
    return out if size is not None else float(out)


def sample_fading(spec: FadingSpec, link: LinkType, rng: np.random.Generator,
                  size: int | None = None):
    """Fading power draw(s) for one link type.

    Rayleigh: Exp(1).  Nakagami-lognormal: Gamma(m, 1/m) times 10^(X/10)
    with X ~ Normal(0, sigma_dB); the Gamma factor has unit mean.
    """
    los = np.full(size if size is not None else 1, link == LinkType.LOS)
    out = _sample_fading_mask(spec, los, rng)
    return out if size is not None else float(out[0])


def _sample_fading_mask(spec: FadingSpec, los: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = los.shape[0]
    if spec.kind == "rayleigh":
        return rng.exponential(1.0, n)
    m = np.where(los, spec.nakagami_m_los, spec.nakagami_m_nlos)
    sigma = np.where(los, spec.shadow_sigma_db_los, spec.shadow_sigma_db_nlos)
    small_scale = rng.gamma(m, 1.0 / m)
    shadow_db = rng.normal(0.0, 1.0, n) * sigma
    return small_scale * 10.0 ** (shadow_db / 10.0)


@dataclass(frozen=True)
class Association:
    """Outcome of the closed-access association for one user."""

    site_index: int
    link: LinkType
    distance: float
    co_located: bool


def _interference_expansion(occupants: np.ndarray, serving_index: int) -> np.ndarray:
    """Site index of every interfering BS, one entry per (site, operator).

    Each site contributes as many terms as it has occupants; the serving
    site contributes one fewer (its aligned home-operator BS).
    """
    counts = np.bitwise_count(occupants).astype(np.int64)
    counts[serving_index] -= 1
    return np.repeat(np.arange(occupants.shape[0]), counts)


def sinr_at_user(dep: Deployment, user: tuple[float, float], home_operator: int,
                 params: SystemParams, rng: np.random.Generator,
                 include_interference: bool = True) -> tuple[float, Association]:
    """SINR of one user against a labeled deployment.

    Draw order (fixed for reproducibility): serving fade, interferer
    fades, interferer gains.  Fading model comes from params.fading.
    """
    if dep.link_los is None:
        raise ConfigError("deployment lacks LOS labels; call thin_blockage first")
    los = np.asarray(dep.link_los, dtype=bool)
    d = np.hypot(dep.xy[:, 0] - user[0], dep.xy[:, 1] - user[1])
    d = np.maximum(d, 1e-3)  # coincident-site guard
    ell = _path_gain(params, d, los)

    home = dep.operator_mask(home_operator)
    if not home.any():
        raise HomeOperatorAbsent(f"operator {home_operator} has no site in the deployment")
    home_idx = np.flatnonzero(home)
    serving = int(home_idx[np.argmax(ell[home_idx])])  # ties: lowest site id

    link = LinkType.LOS if los[serving] else LinkType.NLOS
    h_serv = float(_sample_fading_mask(params.fading, los[serving:serving + 1], rng)[0])
    signal = ell[serving] * h_serv * params.gain_main

    interference = 0.0
    if include_interference:
        idx = _interference_expansion(dep.occupants, serving)
        if idx.size:
            fades = _sample_fading_mask(params.fading, los[idx], rng)
            gains = sample_gain(params, rng, idx.size)
            interference = float(np.sum(ell[idx] * fades * gains))

    assoc = Association(
        site_index=serving,
        link=link,
        distance=float(d[serving]),
        co_located=int(np.bitwise_count(dep.occupants[serving])) > 1,
    )
    return float(signal / (params.sigma2 + interference)), assoc
