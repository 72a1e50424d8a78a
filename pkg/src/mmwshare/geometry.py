"""Point-process sampling and deployment transforms.

Deployments hold realized site positions plus each site's occupant set.
Sampling functions are pure in (inputs, seed): the same seed always
reproduces the same realization, and distinct blocks/replications use
explicitly spawned RNG streams so parallel use is order-independent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.spatial import cKDTree

from .core import BlockModel, ConfigError, DataError, OperatorSet, TwoOpSpec, Window


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(_as_seed_sequence(seed))


@dataclass(frozen=True)
class Site:
    """Single-site view (convenience for inspection and small data)."""

    site_id: int
    x: float
    y: float
    occupants: OperatorSet
    mark: float | None = None


@dataclass(frozen=True, eq=False)
class Deployment:
    """Realized sites in a window.

    xy is an (n, 2) float array of positions in meters; occupants an (n,)
    uint16 array of occupant bitmasks (non-empty).  marks carries the
    coupling marks when the deployment came from the two-operator
    construction.  link_los, when present, labels each site LOS/NLOS as
    seen from one particular user position (see thin_blockage).
    """

    window: Window
    xy: np.ndarray
    occupants: np.ndarray
    marks: np.ndarray | None = None
    link_los: np.ndarray | None = None

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        occ = np.asarray(self.occupants, dtype=np.uint16).reshape(-1)
        if xy.shape[0] != occ.shape[0]:
            raise DataError(f"{xy.shape[0]} positions but {occ.shape[0]} occupant sets")
        if occ.size and int(occ.min()) == 0:
            raise DataError("every site needs a non-empty occupant set")
        inside = self.window.contains(xy[:, 0], xy[:, 1])
        if occ.size and not bool(np.all(inside)):
            k = int(np.flatnonzero(~inside)[0])
            raise DataError(f"site {k} at ({xy[k, 0]}, {xy[k, 1]}) lies outside the window")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "occupants", occ)
        for name in ("marks", "link_los"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr).reshape(-1)
                if arr.shape[0] != occ.shape[0]:
                    raise DataError(f"{name} length {arr.shape[0]} != site count {occ.shape[0]}")
                object.__setattr__(self, name, arr)

    @property
    def n_sites(self) -> int:
        return int(self.occupants.shape[0])

    def operator_mask(self, m: int) -> np.ndarray:
        """Boolean mask of sites whose occupants contain operator m."""
        bit = OperatorSet.of(m).bits
        return (self.occupants & np.uint16(bit)) != 0

    def subset_mask(self, subset: OperatorSet) -> np.ndarray:
        """Boolean mask of sites whose occupants equal ``subset`` exactly."""
        return self.occupants == np.uint16(subset.bits)

    def operators(self) -> tuple[int, ...]:
        """Ascending operator indices present anywhere in the deployment."""
        if self.n_sites == 0:
            return ()
        union = int(np.bitwise_or.reduce(self.occupants))
        return OperatorSet(union).operators

    def site(self, i: int) -> Site:
        mark = float(self.marks[i]) if self.marks is not None else None
        return Site(i, float(self.xy[i, 0]), float(self.xy[i, 1]),
                    OperatorSet(int(self.occupants[i])), mark)

    def sites(self) -> Iterator[Site]:
        return (self.site(i) for i in range(self.n_sites))

    def with_labels(self, link_los: np.ndarray) -> "Deployment":
        return replace(self, link_los=link_los)

    def keep(self, mask: np.ndarray) -> "Deployment":
        """Deployment restricted to sites where mask is True."""
        return Deployment(
            self.window,
            self.xy[mask],
            self.occupants[mask],
            None if self.marks is None else self.marks[mask],
            None if self.link_los is None else self.link_los[mask],
        )


def _uniform_in_window(rng: np.random.Generator, window: Window, n: int) -> np.ndarray:
    xy = np.empty((n, 2))
    xy[:, 0] = rng.uniform(window.x_min, window.x_max, n)
    xy[:, 1] = rng.uniform(window.y_min, window.y_max, n)
    return xy


# A density given per km^2 instead of per m^2 inflates the sample a
# million-fold; fail with a message instead of letting the OOM killer
# end the process.
_MAX_EXPECTED_POINTS = 2.0e7


def _guard_point_budget(mean: float) -> None:
    if mean > _MAX_EXPECTED_POINTS:
        raise ConfigError(
            f"expected point count {mean:.3g} exceeds the sampling budget "
            f"{_MAX_EXPECTED_POINTS:.0e}; densities are per square meter "
            "(divide per-km^2 values by 1e6), check units and window size"
        )


def sample_block_model(model: BlockModel, seed) -> Deployment:
    """One realization: independent Poisson count + uniform positions per block.

    Each block gets its own spawned RNG stream (in bitmask order), so a
    block's realization does not depend on the other blocks' densities.
    """
    root = _as_seed_sequence(seed)
    blocks = model.blocks(include_zero=True)
    streams = root.spawn(len(blocks))
    area = model.window.area()
    _guard_point_budget(sum(lam for _, lam in blocks) * area)
    parts_xy = []
    parts_occ = []
    for (subset, lam), stream in zip(blocks, streams):
        rng = np.random.default_rng(stream)
        n = int(rng.poisson(lam * area))
        if n == 0:
            continue
        parts_xy.append(_uniform_in_window(rng, model.window, n))
        parts_occ.append(np.full(n, subset.bits, dtype=np.uint16))
    if parts_xy:
        xy = np.concatenate(parts_xy)
        occ = np.concatenate(parts_occ)
    else:
        xy = np.empty((0, 2))
        occ = np.empty(0, dtype=np.uint16)
    return Deployment(model.window, xy, occ)


def couple_two_operators(spec: TwoOpSpec, window: Window, seed) -> Deployment:
    """Sample the coupled two-operator construction.

    A mother PPP of density lambda_total is marked with IID uniforms U;
    operator 1 takes sites with U <= a, operator 2 takes sites with U > b.
    For b <= a no site is left unclaimed, and the shared process has
    density (a-b)*lambda_total.
    """
    rng = _as_generator(seed)
    _guard_point_budget(spec.lambda_total * window.area())
    n = int(rng.poisson(spec.lambda_total * window.area()))
    xy = _uniform_in_window(rng, window, n)
    u = rng.random(n)
    occ = np.where(u <= spec.retain_a, 1, 0) | np.where(u > spec.retain_b, 2, 0)
    keep = occ > 0  # vacuous when b <= a, kept as a guard
    return Deployment(window, xy[keep], occ[keep].astype(np.uint16), marks=u[keep])


def label_los(xy: np.ndarray, origin: tuple[float, float], beta: float,
              rng: np.random.Generator) -> np.ndarray:
    """Independent LOS labels: site at distance d is LOS w.p. exp(-beta*d)."""
    d = np.hypot(xy[:, 0] - origin[0], xy[:, 1] - origin[1])
    return rng.random(d.shape[0]) < np.exp(-beta * d)


def thin_blockage(dep: Deployment, origin: tuple[float, float], beta: float, seed) -> Deployment:
    """Label every site LOS/NLOS as seen from ``origin``.

    Labels are independent across sites and never cached: they are valid
    for this origin only.
    """
    if beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    rng = _as_generator(seed)
    return dep.with_labels(label_los(dep.xy, origin, beta, rng))


def press(dep: Deployment, target_density: float, operator: int | None = None) -> Deployment:
    """Affine density-matching rescale about the window center.

    Scales coordinates and window by s = sqrt(current/target), where
    current is the density of the selected operator (or of all distinct
    sites when operator is None).  Occupant sets are untouched, so every
    count ratio -- in particular the overlap -- is preserved exactly.
    """
    if not (math.isfinite(target_density) and target_density > 0):
        raise ConfigError(f"target density must be positive, got {target_density}")
    if operator is None:
        count = dep.n_sites
    else:
        count = int(dep.operator_mask(operator).sum())
    if count == 0:
        raise DataError("no sites for the selected operator; cannot press")
    current = count / dep.window.area()
    s = math.sqrt(current / target_density)
    cx, cy = dep.window.center()
    xy = (dep.xy - (cx, cy)) * s + (cx, cy)
    return Deployment(dep.window.scaled(s), xy, dep.occupants.copy(), marks=dep.marks)


def clustered_thinning(dep: Deployment, parent_density: float, keep_radius: float,
                       seed) -> Deployment:
    """Cox-style perturbation: keep only sites near random cluster centers.

    Centers form a PPP of ``parent_density`` over the window; a site
    survives iff it lies within ``keep_radius`` of some center.  Occupant
    sets ride along untouched, so subset count *ratios* are preserved in
    expectation while the surviving pattern is clustered (non-Poisson).
    Useful for studying estimator behavior off the Poisson assumption.
    """
    if parent_density <= 0 or keep_radius <= 0:
        raise ConfigError("parent_density and keep_radius must be positive")
    rng = _as_generator(seed)
    n_centers = int(rng.poisson(parent_density * dep.window.area()))
    if n_centers == 0 or dep.n_sites == 0:
        return dep.keep(np.zeros(dep.n_sites, dtype=bool))
    centers = _uniform_in_window(rng, dep.window, n_centers)
    dist, _ = cKDTree(centers).query(dep.xy, k=1)
    return dep.keep(dist <= keep_radius)


# ---------------------------------------------------------------------------
# CSV interchange

CSV_HEADER = ("site_id", "x_m", "y_m", "operators")
_WINDOW_COMMENT = "# window_m"


def write_deployment_csv(dep: Deployment, path: str | Path) -> None:
    """Write `site_id,x_m,y_m,operators` rows.

    A leading comment line records the window so round-trips preserve the
    observation area (readers without it fall back to a bounding box).
    """
    path = Path(path)
    w = dep.window
    with path.open("w", newline="") as fh:
        fh.write(
            f"{_WINDOW_COMMENT},{float(w.x_min)!r},{float(w.x_max)!r},"
            f"{float(w.y_min)!r},{float(w.y_max)!r}\n"
        )
        fh.write(",".join(CSV_HEADER) + "\n")
        for i in range(dep.n_sites):
            ops = OperatorSet(int(dep.occupants[i])).to_text()
            fh.write(f"{i},{float(dep.xy[i, 0])!r},{float(dep.xy[i, 1])!r},{ops}\n")


def read_deployment_csv(path: str | Path, window: Window | None = None) -> Deployment:
    """Read a deployment CSV (schema of write_deployment_csv).

    Window resolution order: explicit argument, the optional window
    comment line, else the sites' bounding box (padded to positive area).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read deployment file {path}: {exc}") from exc
    lines = text.splitlines()
    file_window = None
    if lines and lines[0].startswith(_WINDOW_COMMENT):
        parts = lines[0].split(",")
        if len(parts) != 5:
            raise DataError(f"{path}: malformed window comment line")
        try:
            file_window = Window(*[float(p) for p in parts[1:]])
        except (ValueError, ConfigError) as exc:
            raise DataError(f"{path}: bad window comment: {exc}") from exc
        lines = lines[1:]
    rows = list(csv.reader(lines))
    rows = [r for r in rows if r and any(f.strip() for f in r)]
    if not rows:
        raise DataError(f"{path}: empty file (missing header)")
    if tuple(f.strip() for f in rows[0]) != CSV_HEADER:
        raise DataError(
            f"{path}: expected header {','.join(CSV_HEADER)!r}, got {','.join(rows[0])!r}"
        )
    xs, ys, occ = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
        try:
            xs.append(float(row[1]))
            ys.append(float(row[2]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad coordinate: {exc}") from exc
        try:
            occ.append(OperatorSet.parse(row[3]).bits)
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    xy = np.column_stack([xs, ys]) if xs else np.empty((0, 2))
    if window is None:
        window = file_window
    if window is None:
        if not xs:
            raise DataError(f"{path}: empty deployment with no window metadata")
        window = _bounding_window(xy)
    try:
        return Deployment(window, xy, np.asarray(occ, dtype=np.uint16))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _bounding_window(xy: np.ndarray, pad: float = 1.0) -> Window:
    x0, y0 = xy.min(axis=0)
    x1, y1 = xy.max(axis=0)
    if x1 - x0 <= 0:
        x0, x1 = x0 - pad, x1 + pad
    if y1 - y0 <= 0:
        y0, y1 = y0 - pad, y1 + pad
    return Window(float(x0), float(x1), float(y0), float(y1))
