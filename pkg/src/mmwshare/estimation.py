"""Estimating densities and the sharing fraction from deployment data.

Density estimates are plain counts over the observation window.  The
sharing fraction rho (shared density over per-operator density for the
symmetric two-operator model) has two estimators:

* indirect: count sites carrying both operators after co-location
  merging, divide by the total number of physical sites;
* direct: a cross-moment statistic over a square grid of counting
  cells that needs no co-location merging at all, only per-operator
  counts per cell.

The direct estimator converges to the indirect one as the grid is
refined; scanning a ladder of grid sizes and looking for the plateau
gives an estimate that is robust to the choice of cell size and doubles
as a diagnostic: if the two estimators disagree, the deployments are
correlated in a way the coupled-homogeneous model cannot express.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import ConfigError, DataError, OperatorSet
from .geometry import Deployment

DEFAULT_BIN_COUNTS = (4, 9, 25, 64, 144, 400, 1024, 2500)
DEFAULT_MERGE_EPS_M = 10.0
SMOOTH_WINDOW = 5


def estimate_density(dep: Deployment, which=None) -> float:
    """Sites per square meter over the deployment window.

    which=None counts every physical site, an int counts sites carrying
    that operator, an OperatorSet counts sites with exactly that
    occupant set.
    """
    area = dep.window.area()
    if which is None:
        n = dep.n_sites
    elif isinstance(which, OperatorSet):
        n = int(np.count_nonzero(dep.occupants == np.uint16(which.bits)))
    elif isinstance(which, int):
        n = int(np.count_nonzero(dep.operator_mask(which)))
    else:
        raise ConfigError(f"which must be None, an operator index or an OperatorSet, got {which!r}")
    return n / area


# ---------------------------------------------------------------------------
# Co-location merging

def merge_colocated(dep: Deployment, eps_m: float = DEFAULT_MERGE_EPS_M) -> Deployment:
    """Collapse sites within eps_m of each other into single multi-operator sites.

    Merging is transitive (connected components of the within-eps graph);
    the merged site sits at the group centroid and carries the union of
    the occupants.  eps_m = 0 merges exactly coincident coordinates only.
    Blockage labels and coupling marks do not survive the merge.
    """
    if eps_m < 0:
        raise ConfigError("merge radius must be >= 0")
    n = dep.n_sites
    if n == 0:
        return Deployment(dep.window, dep.xy[:0], dep.occupants[:0])
    if eps_m == 0:
        _, labels = np.unique(dep.xy, axis=0, return_inverse=True)
    else:
        pairs = cKDTree(dep.xy).query_pairs(eps_m, output_type="ndarray")
        if pairs.size:
            adj = sparse.coo_matrix(
                (np.ones(pairs.shape[0]), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
            )
            _, labels = connected_components(adj, directed=False)
        else:
            labels = np.arange(n)
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    pos = np.zeros((k, 2))
    np.add.at(pos, labels, dep.xy)
    sizes = np.bincount(labels, minlength=k).astype(float)
    pos /= sizes[:, None]
    occ = np.zeros(k, dtype=np.uint16)
    np.bitwise_or.at(occ, labels, dep.occupants)
    # stable ordering: groups in order of their first member
    first = np.full(k, n, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(n))
    order = np.argsort(first, kind="stable")
    # centroids can drift outside a tight window; clamp to stay loadable
    pos = np.column_stack(
        (
            np.clip(pos[:, 0], dep.window.x_min, dep.window.x_max),
            np.clip(pos[:, 1], dep.window.y_min, dep.window.y_max),
        )
    )
    return Deployment(dep.window, pos[order], occ[order])


# ---------------------------------------------------------------------------
# Overlap estimators

def estimate_overlap_indirect(dep: Deployment, op1: int = 1, op2: int = 2) -> float:
    """Shared sites over all physical sites: requires co-located occupancy."""
    if dep.n_sites == 0:
        raise DataError("cannot estimate overlap of an empty deployment")
    both = dep.operator_mask(op1) & dep.operator_mask(op2)
    return float(np.count_nonzero(both)) / dep.n_sites


def estimate_overlap_direct(dep: Deployment, n_bins: int, op1: int = 1,
                            op2: int = 2) -> float:
    """Cross-moment overlap estimate on a k x k grid (n_bins = k^2).

    (sum over cells of count1*count2 - N1*N2/n_bins) / N; the subtracted
    term removes the independent cross-product so only the co-located
    intensity remains.  Unbiased up to a (1 - 1/n_bins) factor under the
    coupled model and needs no site merging.
    """
    if dep.n_sites == 0:
        raise DataError("cannot estimate overlap of an empty deployment")
    k = math.isqrt(n_bins)
    if k * k != n_bins or n_bins < 1:
        raise ConfigError(f"bin count must be a perfect square, got {n_bins}")
    w = dep.window
    grid = [
        np.linspace(w.x_min, w.x_max, k + 1),
        np.linspace(w.y_min, w.y_max, k + 1),
    ]
    m1 = dep.operator_mask(op1)
    m2 = dep.operator_mask(op2)
    c1, _, _ = np.histogram2d(dep.xy[m1, 0], dep.xy[m1, 1], bins=grid)
    c2, _, _ = np.histogram2d(dep.xy[m2, 0], dep.xy[m2, 1], bins=grid)
    n1 = float(np.count_nonzero(m1))
    n2 = float(np.count_nonzero(m2))
    cross = float(np.sum(c1 * c2))
    return (cross - n1 * n2 / n_bins) / dep.n_sites


def _smooth(values: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Centered moving average, truncated at the ends."""
    half = window // 2
    out = np.empty_like(values, dtype=float)
    for i in range(values.size):
        lo = max(0, i - half)
        hi = min(values.size, i + half + 1)
        out[i] = values[lo:hi].mean()
    return out


@dataclass(frozen=True)
class OverlapReport:
    """Overlap estimates for an operator pair, across a grid-size ladder."""

    op1: int
    op2: int
    window_area_m2: float
    n_sites: int
    n_op1: int
    n_op2: int
    n_shared: int
    rho_indirect: float
    bin_counts: tuple[int, ...]
    rho_direct_raw: tuple[float, ...]
    rho_direct_smoothed: tuple[float, ...]
    rho_plateau: float

    def to_text(self) -> str:
        km2 = self.window_area_m2 / 1e6
        lines = [
            f"operators: {self.op1} and {self.op2}",
            f"window_area_km2: {km2!r}",
            f"sites_total: {self.n_sites}",
            f"sites_op{self.op1}: {self.n_op1}",
            f"sites_op{self.op2}: {self.n_op2}",
            f"sites_shared: {self.n_shared}",
            f"lambda_op{self.op1}_per_km2: {self.n_op1 / km2!r}",
            f"lambda_op{self.op2}_per_km2: {self.n_op2 / km2!r}",
            f"rho_indirect: {self.rho_indirect!r}",
            f"rho_direct_plateau: {self.rho_plateau!r}",
            "rho_direct_by_bins:",
        ]
        for nb, raw, sm in zip(self.bin_counts, self.rho_direct_raw, self.rho_direct_smoothed):
            lines.append(f"  {nb}: raw={raw!r} smoothed={sm!r}")
        return "\n".join(lines) + "\n"

    def bins_csv_rows(self) -> list[tuple[int, float, float]]:
        return [
            (nb, raw, sm)
            for nb, raw, sm in zip(self.bin_counts, self.rho_direct_raw, self.rho_direct_smoothed)
        ]


def overlap_report(dep: Deployment, bin_counts=DEFAULT_BIN_COUNTS, op1: int = 1,
                   op2: int = 2) -> OverlapReport:
    """Run both overlap estimators; the plateau summarizes the direct ladder.

    The plateau statistic is the median of the smoothed direct estimates
    over the larger half of the bin ladder, where the (1 - 1/n) bias is
    negligible.
    """
    bins = tuple(int(b) for b in bin_counts)
    if len(bins) == 0:
        raise ConfigError("need at least one bin count")
    if any(b < 1 or math.isqrt(b) ** 2 != b for b in bins):
        raise ConfigError(f"bin counts must be perfect squares, got {bins}")
    if list(bins) != sorted(set(bins)):
        raise ConfigError("bin counts must be strictly increasing")
    raw = np.array([estimate_overlap_direct(dep, nb, op1, op2) for nb in bins])
    smoothed = _smooth(raw)
    upper = smoothed[len(bins) // 2 :]
    m1 = dep.operator_mask(op1)
    m2 = dep.operator_mask(op2)
    return OverlapReport(
        op1=op1,
        op2=op2,
        window_area_m2=dep.window.area(),
        n_sites=dep.n_sites,
        n_op1=int(np.count_nonzero(m1)),
        n_op2=int(np.count_nonzero(m2)),
        n_shared=int(np.count_nonzero(m1 & m2)),
        rho_indirect=estimate_overlap_indirect(dep, op1, op2),
        bin_counts=bins,
        rho_direct_raw=tuple(float(v) for v in raw),
        rho_direct_smoothed=tuple(float(v) for v in smoothed),
        rho_plateau=float(np.median(upper)),
    )


# ---------------------------------------------------------------------------
# Sharing structure summary

@dataclass(frozen=True)
class SharingSummary:
    """Exact-subset site counts and per-operator sharing ratios."""

    n_sites: int
    subset_counts: tuple[tuple[OperatorSet, int], ...]
    operator_totals: tuple[tuple[int, int, int], ...]  # (operator, total, shared)

    def to_text(self) -> str:
        lines = [f"sites_total: {self.n_sites}", "sites_by_occupants:"]
        for subset, count in self.subset_counts:
            lines.append(f"  {subset.to_text()}: {count}")
        lines.append("operator_sharing:")
        for op, total, shared in self.operator_totals:
            frac = shared / total if total else 0.0
            lines.append(f"  {op}: total={total} shared={shared} fraction={frac!r}")
        return "\n".join(lines) + "\n"


def sharing_summary(dep: Deployment) -> SharingSummary:
    values, counts = np.unique(dep.occupants, return_counts=True)
    subset_counts = tuple(
        (OperatorSet(int(v)), int(c)) for v, c in zip(values, counts)
    )
    totals = []
    for op in dep.operators():
        mask = dep.operator_mask(op)
        shared = mask & (np.bitwise_count(dep.occupants) > 1)
        totals.append((op, int(np.count_nonzero(mask)), int(np.count_nonzero(shared))))
    return SharingSummary(
        n_sites=dep.n_sites,
        subset_counts=subset_counts,
        operator_totals=tuple(totals),
    )
