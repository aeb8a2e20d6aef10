"""Finite-difference verification of every analytic adjoint in the pipeline.

Each check builds seeded random instances (float64, grids <= 8^3, clouds
<= 64 points, scores kept >= 1e-3 away from the carve threshold), forms the
scalar phi = <upstream, op(x)> and compares the analytic gradient against
central differences with step 1e-5 on a random subset of coordinates.

Reported relative error is max_i |analytic_i - fd_i| / max(max_i |fd_i|, 1e-10).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .carving import CarveModelParams, KernelField, cell_conv, cell_conv_grads
from .cloud import BoundingRange, PointCloud
from .gridding import (
    FeatureGrid,
    VoxelGrid,
    feature_sample,
    feature_sample_grad,
    gridding_reverse,
    gridding_reverse_grad,
)
from .losses import chamfer, chamfer_grad
from .refine import RefineHeadParams, refine, refine_grads

FD_STEP = 1e-5
TOL_DEFAULT = 1e-4
TOL_CHAMFER = 1e-3
MAX_PROBES = 48


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_rel_err: float
    tolerance: float
    instances: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    denom = max(float(np.max(np.abs(fd))), 1e-10)
    return float(np.max(np.abs(analytic - fd))) / denom


def _fd_compare(
    phi: Callable[[np.ndarray], float],
    x0: np.ndarray,
    analytic: np.ndarray,
    rng: np.random.Generator,
    h: float = FD_STEP,
) -> float:
    """Max relative error between analytic and central-difference gradients
    on a random coordinate subset of up to MAX_PROBES entries."""
    flat0 = x0.ravel()
    aflat = analytic.ravel()
    n = flat0.size
    probes = np.arange(n) if n <= MAX_PROBES else rng.choice(n, MAX_PROBES, replace=False)
    fd = np.empty(len(probes))
    for k, i in enumerate(probes):
        xp = flat0.copy()
        xp[i] += h
        up = phi(xp.reshape(x0.shape))
        xp[i] -= 2 * h
        down = phi(xp.reshape(x0.shape))
        fd[k] = (up - down) / (2 * h)
    return _rel_err(aflat[probes], fd)


def _unit_range() -> BoundingRange:
    return BoundingRange(np.zeros(3), np.ones(3))


def _margin_scores(rng: np.random.Generator, shape, threshold: float, margin: float = 1e-3):
    s = rng.uniform(-0.5, 0.5, size=shape)
    return threshold + np.where(
        s >= 0, np.maximum(s, margin), np.minimum(s, -margin)
    )


def check_gridding_reverse(seed: int, instances: int = 20) -> GradCheckResult:
    worst = 0.0
    for i in range(instances):
        rng = np.random.default_rng((seed, i))
        res = int(rng.integers(3, 6))
        threshold = float(rng.uniform(-0.2, 0.2))
        values = _margin_scores(rng, (res, res, res), threshold)
        m = (res - 1) ** 3  # select every qualifying cell: selection is stable
        grid = VoxelGrid(values, _unit_range())
        upstream = rng.standard_normal((m, 3))
        analytic = gridding_reverse_grad(grid, m, threshold, upstream)

        def phi(v):
            pts = gridding_reverse(VoxelGrid(v, _unit_range()), m, threshold).points
            return float(np.sum(upstream * pts))

        worst = max(worst, _fd_compare(phi, values, analytic, rng))
    return GradCheckResult("gridding_reverse_grad", worst, TOL_DEFAULT, instances)


def check_feature_sample(seed: int, instances: int = 20) -> GradCheckResult:
    worst = 0.0
    for i in range(instances):
        rng = np.random.default_rng((seed, 1000 + i))
        res = int(rng.integers(3, 6))
        channels = int(rng.integers(2, 5))
        values = rng.standard_normal((res, res, res, channels))
        grid = FeatureGrid(values, _unit_range())
        query = PointCloud(rng.uniform(0.05, 0.95, size=(int(rng.integers(4, 17)), 3)))
        upstream = rng.standard_normal((len(query), channels))
        analytic = feature_sample_grad(grid, query, upstream)

        def phi(v):
            out = feature_sample(FeatureGrid(v, _unit_range()), query).features
            return float(np.sum(upstream * out))

        worst = max(worst, _fd_compare(phi, values, analytic, rng))
    return GradCheckResult("feature_sample_grad", worst, TOL_DEFAULT, instances)


def check_cell_conv(seed: int, instances: int = 20) -> GradCheckResult:
    worst = 0.0
    for i in range(instances):
        rng = np.random.default_rng((seed, 2000 + i))
        res = int(rng.integers(4, 7))
        g = rng.standard_normal((res, res, res))
        kern = rng.standard_normal((res, res, res, 27))
        upstream = rng.standard_normal((res, res, res))
        grid = VoxelGrid(g, _unit_range())
        field = KernelField(kern, 3)
        grad_g, grad_k = cell_conv_grads(grid, field, upstream)

        def phi_g(v):
            out = cell_conv(VoxelGrid(v, _unit_range()), field).values
            return float(np.sum(upstream * out))

        def phi_k(v):
            out = cell_conv(grid, KernelField(v, 3)).values
            return float(np.sum(upstream * out))

        worst = max(worst, _fd_compare(phi_g, g, grad_g, rng))
        worst = max(worst, _fd_compare(phi_k, kern, grad_k, rng))
    return GradCheckResult("cell_conv_grads", worst, TOL_DEFAULT, instances)


def _tiny_refine_instance(rng: np.random.Generator):
    res, channels = 4, 3
    features = FeatureGrid(rng.standard_normal((res, res, res, channels)), _unit_range())
    params = RefineHeadParams.initialize(channels + 3, (8, 6), seed=int(rng.integers(2**31)))
    # Keep coarse points clear of cell boundaries so the coordinate path is smooth.
    cell = rng.integers(0, res - 1, size=(5, 3))
    frac = rng.uniform(0.1, 0.9, size=(5, 3))
    coarse = PointCloud((cell + frac) / (res - 1))
    upstream = rng.standard_normal((len(coarse) * params.expansion, 3))
    return features, params, coarse, upstream


def check_refine(seed: int, instances: int = 20) -> GradCheckResult:
    worst = 0.0
    for i in range(instances):
        rng = np.random.default_rng((seed, 3000 + i))
        features, params, coarse, upstream = _tiny_refine_instance(rng)
        grads, grad_feat, grad_coarse = refine_grads(coarse, features, params, upstream)

        def phi_with_params(weights, biases):
            p = RefineHeadParams(weights, biases)
            return float(np.sum(upstream * refine(coarse, features, p).points))

        for layer in range(len(params.weights)):
            for which in ("w", "b"):
                tensor = params.weights[layer] if which == "w" else params.biases[layer]
                analytic = grads.weights[layer] if which == "w" else grads.biases[layer]

                def phi(v, _layer=layer, _which=which):
                    ws = [w.copy() for w in params.weights]
                    bs = [b.copy() for b in params.biases]
                    (ws if _which == "w" else bs)[_layer] = v
                    return phi_with_params(ws, bs)

                worst = max(worst, _fd_compare(phi, tensor, analytic, rng))

        def phi_feat(v):
            return float(np.sum(
                upstream * refine(coarse, FeatureGrid(v, features.range), params).points
            ))

        worst = max(worst, _fd_compare(phi_feat, features.values, grad_feat, rng))

        def phi_coarse(v):
            return float(np.sum(upstream * refine(PointCloud(v), features, params).points))

        worst = max(worst, _fd_compare(phi_coarse, coarse.points.copy(), grad_coarse, rng))
    return GradCheckResult("refine_grads", worst, TOL_DEFAULT, instances)


def check_chamfer(seed: int, instances: int = 20) -> GradCheckResult:
    worst = 0.0
    for i in range(instances):
        rng = np.random.default_rng((seed, 4000 + i))
        a = rng.random((int(rng.integers(6, 17)), 3))
        b = rng.random((int(rng.integers(6, 17)), 3))
        g1, g2 = chamfer_grad(PointCloud(a), PointCloud(b))

        def phi_a(v):
            return chamfer(PointCloud(v), PointCloud(b))

        def phi_b(v):
            return chamfer(PointCloud(a), PointCloud(v))

        worst = max(worst, _fd_compare(phi_a, a, g1, rng))
        worst = max(worst, _fd_compare(phi_b, b, g2, rng))
    return GradCheckResult("chamfer_grad", worst, TOL_CHAMFER, instances)


def check_end_to_end(seed: int) -> GradCheckResult:
    """Total-loss gradient on a tiny model vs finite differences over a
    random 16-parameter subset (grid 8^3, m=64, r=2)."""
    from .config import RunConfig
    from .shapes import SyntheticShapeSpec, gen_shape
    from .training import loss_and_grads_sample

    rng = np.random.default_rng((seed, 5000))
    config = RunConfig(
        grid_res=8,
        unet_stages=2,
        unet_base_width=2,
        feature_dim=4,
        refine_widths=(8, 6),
        coarse_m=64,
        n_per_axis=4,
        dtype="float64",
        sensoraug=False,
        alpha=0.0,
        val_count=0,
    )
    gt, _ = gen_shape(SyntheticShapeSpec("box", count=96, seed=seed))
    partial = PointCloud(gt.points[: len(gt) // 2])
    params = CarveModelParams.initialize(config.carve_config(), seed)

    result = loss_and_grads_sample(partial, gt, params, config, aug_seed=0)
    analytic_flat = params.flatten_grads(result.grads)
    flat0 = params.flat()
    probes = rng.choice(flat0.size, 16, replace=False)

    def phi(vec):
        p = params.with_flat(vec)
        return loss_and_grads_sample(partial, gt, p, config, aug_seed=0).loss.total

    fd = np.empty(len(probes))
    for k, idx in enumerate(probes):
        vp = flat0.copy()
        vp[idx] += FD_STEP
        up = phi(vp)
        vp[idx] -= 2 * FD_STEP
        down = phi(vp)
        fd[k] = (up - down) / (2 * FD_STEP)
    err = _rel_err(analytic_flat[probes], fd)
    return GradCheckResult("end_to_end_loss", err, TOL_CHAMFER, 1)


def run_all(seed: int = 0, instances: int = 20) -> list[GradCheckResult]:
    return [
        check_gridding_reverse(seed, instances),
        check_feature_sample(seed, instances),
        check_cell_conv(seed, instances),
        check_refine(seed, instances),
        check_chamfer(seed, instances),
    ]
