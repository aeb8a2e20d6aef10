"""Chamfer distance, its adjoint, and the completion/similarity objectives.

CD(X1, X2) = mean over X1 of the squared distance to its nearest neighbor in
X2, plus the same with the roles swapped. Nearest neighbors are exact: the
k-d tree is used for the queries only and the squared distances are
recomputed from the matched coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud


def _nearest(query: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Index into `target` of each query point's exact nearest neighbor."""
    _, idx = cKDTree(target).query(query, k=1)
    return np.asarray(idx, dtype=np.int64)


def _one_sided(src: np.ndarray, dst: np.ndarray) -> tuple[float, np.ndarray]:
    idx = _nearest(src, dst)
    sq = ((src - dst[idx]) ** 2).sum(axis=1)
    return float(sq.mean()), idx


def chamfer(x1: PointCloud, x2: PointCloud) -> float:
    """Symmetric mean-of-minimum squared distances between two clouds."""
    if len(x1) == 0 or len(x2) == 0:
        raise ValueError("empty input")
    a, _ = _one_sided(x1.points, x2.points)
    b, _ = _one_sided(x2.points, x1.points)
    return a + b


def chamfer_grad(
    x1: PointCloud, x2: PointCloud, upstream: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of upstream * CD w.r.t. both clouds' coordinates.

    Nearest-neighbor assignments are treated as locally constant; each
    matched pair (p, q) contributes 2 (p - q) / |side| to p per direction
    term. Argmin ties go to the index the tree returns (lowest for
    coincident points; general ties are measure-zero).
    """
    if len(x1) == 0 or len(x2) == 0:
        raise ValueError("empty input")
    p1, p2 = x1.points, x2.points
    idx12 = _nearest(p1, p2)
    idx21 = _nearest(p2, p1)
    t1 = 2.0 * (p1 - p2[idx12]) / len(p1)
    t2 = 2.0 * (p2 - p1[idx21]) / len(p2)
    # Each direction term pulls on both sides of its matched pairs.
    g1 = t1.copy()
    np.add.at(g1, idx21, -t2)
    g2 = t2.copy()
    np.add.at(g2, idx12, -t1)
    return upstream * g1, upstream * g2


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term values of the total objective total = comp + alpha * sim."""

    comp: float
    sim: float
    alpha: float
    cd_coarse: float
    cd_dense: float
    variant_cds: tuple[tuple[float, float], ...] = ()

    @property
    def total(self) -> float:
        return self.comp + self.alpha * self.sim


def loss_comp(coarse: PointCloud, dense: PointCloud, gt: PointCloud) -> float:
    """Completion loss: CD(coarse, gt) + CD(dense, gt)."""
    return chamfer(coarse, gt) + chamfer(dense, gt)


def loss_sim(
    variant_coarse: list[PointCloud],
    variant_dense: list[PointCloud],
    anchor_coarse: PointCloud,
    anchor_dense: PointCloud,
) -> float:
    """Similarity loss: sum over variants of CD(C_i, C) + CD(Q_i, Q)."""
    if len(variant_coarse) != len(variant_dense):
        raise ValueError("variant lists must have equal length")
    total = 0.0
    for c_i, q_i in zip(variant_coarse, variant_dense):
        total += chamfer(c_i, anchor_coarse) + chamfer(q_i, anchor_dense)
    return total
