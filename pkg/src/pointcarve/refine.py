"""Coarse-to-dense refinement: per-point features through a small
fully-connected stack produce r offset vectors per coarse point.

The dense cloud replicates each coarse point r times and displaces the
copies, so |dense| = r * |coarse| and a zero-initialized final layer leaves
every copy on its source point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .cloud import PointCloud
from .gridding import (
    FeatureGrid,
    _feature_sample_values,
    feature_sample_grad,
    feature_sample_query_grad,
)


@dataclass
class RefineHeadParams:
    """Weights/biases of the refinement MLP; final width is 3 * expansion."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be equal-length, non-empty lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} shapes inconsistent: {w.shape} / {b.shape}")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} input width does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} contains non-finite values")
        if self.weights[-1].shape[1] % 3:
            raise ValueError("final layer width must be divisible by 3")

    @property
    def expansion(self) -> int:
        return self.weights[-1].shape[1] // 3

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @staticmethod
    def initialize(
        input_dim: int, widths: tuple[int, ...], seed: int = 0, dtype=np.float64
    ) -> "RefineHeadParams":
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        d = input_dim
        for width in widths:
            weights.append(nn.fan_in_uniform(rng, (d, width), d, np.dtype(dtype)))
            biases.append(np.zeros(width, dtype=dtype))
            d = width
        return RefineHeadParams(weights, biases)


def _refine_forward(coarse: PointCloud, features: FeatureGrid, params: RefineHeadParams):
    dtype = params.weights[0].dtype
    feats = _feature_sample_values(features, coarse.points).astype(dtype, copy=False)
    if feats.shape[1] + 3 != params.input_dim:
        raise ValueError(
            f"feature dim {feats.shape[1]} + 3 coordinates does not match "
            f"first-layer input width {params.input_dim}"
        )
    x = np.concatenate([feats, coarse.points.astype(dtype)], axis=1)
    pres = []
    acts = [x]
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        pre = nn.linear(acts[-1], w, b)
        pres.append(pre)
        acts.append(nn.leaky_relu(pre) if i < n - 1 else pre)
    offsets = acts[-1].astype(np.float64).reshape(len(coarse), -1, 3)
    dense = (coarse.points[:, None, :] + offsets).reshape(-1, 3)
    return dense, pres, acts


def refine(coarse: PointCloud, features: FeatureGrid, params: RefineHeadParams) -> PointCloud:
    """Expand the coarse cloud to r points per input point via learned offsets.

    Output ordering: dense index = coarse index * r + offset index.
    """
    if len(coarse) == 0:
        raise ValueError("empty input")
    dense, _, _ = _refine_forward(coarse, features, params)
    return PointCloud(dense)


def refine_grads(
    coarse: PointCloud,
    features: FeatureGrid,
    params: RefineHeadParams,
    upstream: np.ndarray,
) -> tuple[RefineHeadParams, np.ndarray, np.ndarray]:
    """Adjoints of `refine` w.r.t. (head parameters, feature grid, coarse coords).

    The coarse-coordinate gradient has two paths: the identity path (each
    dense point starts at its source) and the feature-sampling path (moving
    the point changes the sampled feature).
    """
    if len(coarse) == 0:
        raise ValueError("empty input")
    m = len(coarse)
    r = params.expansion
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (m * r, 3):
        raise ValueError(f"upstream must have shape ({m * r}, 3), got {upstream.shape}")
    _, pres, acts = _refine_forward(coarse, features, params)

    dtype = params.weights[0].dtype
    d_coarse_identity = upstream.reshape(m, r, 3).sum(axis=1)
    d_out = upstream.reshape(m, r * 3).astype(dtype)

    n = len(params.weights)
    grad_w: list[np.ndarray] = [None] * n
    grad_b: list[np.ndarray] = [None] * n
    d = d_out
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            d = nn.leaky_relu_grad(pres[i], d)
        d, grad_w[i], grad_b[i] = nn.linear_grads(acts[i], params.weights[i], d)
    feat_dim = params.input_dim - 3
    d_feats = d[:, :feat_dim]
    d_coords_concat = d[:, feat_dim:].astype(np.float64)

    grad_features = feature_sample_grad(features, coarse, d_feats)
    d_coarse_sampling = feature_sample_query_grad(
        features, coarse, d_feats.astype(np.float64)
    )
    grad_coarse = d_coarse_identity + d_coords_concat + d_coarse_sampling
    param_grads = RefineHeadParams(grad_w, grad_b)
    return param_grads, grad_features, grad_coarse
