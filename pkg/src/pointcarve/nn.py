"""Minimal volumetric network layers with hand-written backward passes.

All tensors are channels-last: activations (H, W, M, C), conv weights
(3, 3, 3, C_in, C_out), pointwise weights (C_in, C_out). Convolutions use
"same" zero padding; the 3x3x3 kernels are realized as 27 shifted GEMMs,
which is the fastest arrangement for numpy on small grids.
"""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.1


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * np.where(x > 0, 1.0, LEAKY_SLOPE).astype(x.dtype)


def conv3(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """3x3x3 convolution, zero padding 1, stride 1 or 2."""
    H, W, M, cin = x.shape
    cout = w.shape[-1]
    xp = np.pad(x, ((1, 1), (1, 1), (1, 1), (0, 0)))
    Ho, Wo, Mo = H // stride, W // stride, M // stride
    out = np.broadcast_to(b, (Ho * Wo * Mo, cout)).astype(x.dtype)
    for dx in range(3):
        for dy in range(3):
            for dz in range(3):
                sl = np.ascontiguousarray(
                    xp[dx : dx + H : stride, dy : dy + W : stride, dz : dz + M : stride]
                ).reshape(-1, cin)
                out += sl @ w[dx, dy, dz]
    return out.reshape(Ho, Wo, Mo, cout)


def conv3_grads(
    x: np.ndarray, w: np.ndarray, upstream: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv3 w.r.t. (input, weights, bias)."""
    H, W, M, cin = x.shape
    cout = w.shape[-1]
    up = upstream.reshape(-1, cout)
    gb = up.sum(axis=0)

    xp = np.pad(x, ((1, 1), (1, 1), (1, 1), (0, 0)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    up_spatial = upstream.shape[:3]
    for dx in range(3):
        for dy in range(3):
            for dz in range(3):
                view = xp[dx : dx + H : stride, dy : dy + W : stride, dz : dz + M : stride]
                sl = np.ascontiguousarray(view).reshape(-1, cin)
                gw[dx, dy, dz] = sl.T @ up
                contrib = (up @ w[dx, dy, dz].T).reshape(*up_spatial, cin)
                gxp[dx : dx + H : stride, dy : dy + W : stride, dz : dz + M : stride] += contrib
    return gxp[1:-1, 1:-1, 1:-1], gw, gb


def conv1(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise (1x1x1) convolution."""
    H, W, M, cin = x.shape
    out = x.reshape(-1, cin) @ w + b
    return out.reshape(H, W, M, -1)


def conv1_grads(x: np.ndarray, w: np.ndarray, upstream: np.ndarray):
    H, W, M, cin = x.shape
    up = upstream.reshape(-1, w.shape[-1])
    flat = x.reshape(-1, cin)
    gx = (up @ w.T).reshape(x.shape)
    return gx, flat.T @ up, up.sum(axis=0)


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor x2 upsampling on the three spatial axes."""
    return x.repeat(2, axis=0).repeat(2, axis=1).repeat(2, axis=2)


def upsample2_grad(upstream: np.ndarray) -> np.ndarray:
    H, W, M, c = upstream.shape
    return upstream.reshape(H // 2, 2, W // 2, 2, M // 2, 2, c).sum(axis=(1, 3, 5))


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_grads(x: np.ndarray, w: np.ndarray, upstream: np.ndarray):
    return upstream @ w.T, x.T @ upstream, upstream.sum(axis=0)
