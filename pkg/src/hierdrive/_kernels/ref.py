"""Reference numpy implementations of the hot numeric kernels.

Semantics here define the contract; the compiled module in ``_fastkern.pyx``
must agree to float64 round-off. All inputs are C-contiguous float64 arrays.
"""

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def sdpa_forward(q, k, v, scale):
    """Scaled dot-product attention over a head batch.

    q: (H, Nq, dh), k/v: (H, Nk, dh). Returns (out (H, Nq, dh), attn (H, Nq, Nk)).
    Softmax rows are max-shifted for stability.
    """
    s = scale * (q @ k.transpose(0, 2, 1))
    s -= s.max(axis=2, keepdims=True)
    e = np.exp(s)
    attn = e / e.sum(axis=2, keepdims=True)
    return attn @ v, attn


def sdpa_backward(q, k, v, attn, scale, d_out):
    """Gradients of sdpa_forward w.r.t. q, k, v given the saved attn weights."""
    dv = attn.transpose(0, 2, 1) @ d_out
    da = d_out @ v.transpose(0, 2, 1)
    ds = attn * (da - (da * attn).sum(axis=2, keepdims=True))
    dq = scale * (ds @ k)
    dk = scale * (ds.transpose(0, 2, 1) @ q)
    return dq, dk, dv


def layer_norm_forward(x, eps):
    """Row-wise normalization of x (N, D), no affine terms.

    Returns (y, rstd) where y = (x - mean) * rstd and rstd = 1/sqrt(var + eps).
    """
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    return xc * rstd, rstd


def layer_norm_backward(y, rstd, dy):
    m1 = dy.mean(axis=1, keepdims=True)
    m2 = (dy * y).mean(axis=1, keepdims=True)
    return rstd * (dy - m1 - y * m2)


def gelu_forward(x):
    """Exact (erf-based) GELU."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_backward(x, dy):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def obb_overlap_pairs(a, b):
    """Separating-axis overlap test for paired oriented boxes.

    a, b: (N, 5) rows of [cx, cy, heading, length, width]. Returns
    (overlap uint8 (N,), margin float64 (N,)) where margin is the largest
    axis gap over the four candidate axes: positive means separated by at
    least that much along some axis, negative means every axis overlaps
    (the value is minus the smallest penetration). Touching boxes
    (margin == 0) count as overlapping.
    """
    n = a.shape[0]
    margin = np.full(n, -np.inf)
    ca, cb = a[:, :2], b[:, :2]
    d = cb - ca
    ua = np.stack([np.cos(a[:, 2]), np.sin(a[:, 2])], axis=1)
    va = np.stack([-ua[:, 1], ua[:, 0]], axis=1)
    ub = np.stack([np.cos(b[:, 2]), np.sin(b[:, 2])], axis=1)
    vb = np.stack([-ub[:, 1], ub[:, 0]], axis=1)
    ha_l, ha_w = 0.5 * a[:, 3], 0.5 * a[:, 4]
    hb_l, hb_w = 0.5 * b[:, 3], 0.5 * b[:, 4]
    for axis in (ua, va, ub, vb):
        dist = np.abs(np.sum(d * axis, axis=1))
        ra = ha_l * np.abs(np.sum(ua * axis, axis=1)) + ha_w * np.abs(np.sum(va * axis, axis=1))
        rb = hb_l * np.abs(np.sum(ub * axis, axis=1)) + hb_w * np.abs(np.sum(vb * axis, axis=1))
        margin = np.maximum(margin, dist - ra - rb)
    return (margin <= 0.0).astype(np.uint8), margin


def fill_oriented_boxes(grid, boxes, values, x0, y0, cell_x, cell_y, accumulate):
    """Write values into grid cells whose centers fall inside oriented boxes.

    grid: (H, W) with row index over x and column index over y; cell (i, j)
    center is (x0 + (i+0.5)*cell_x, y0 + (j+0.5)*cell_y). boxes: (N, 5) as in
    obb_overlap_pairs. accumulate: 0 -> max-write, nonzero -> add. Mutates
    grid in place.
    """
    h, w = grid.shape
    for box, val in zip(boxes, values):
        cx, cy, heading, length, width = box
        ch, sh = np.cos(heading), np.sin(heading)
        reach = 0.5 * np.hypot(length, width)
        i0 = max(int(np.floor((cx - reach - x0) / cell_x)), 0)
        i1 = min(int(np.floor((cx + reach - x0) / cell_x)), h - 1)
        j0 = max(int(np.floor((cy - reach - y0) / cell_y)), 0)
        j1 = min(int(np.floor((cy + reach - y0) / cell_y)), w - 1)
        if i1 < i0 or j1 < j0:
            continue
        ii = x0 + (np.arange(i0, i1 + 1) + 0.5) * cell_x - cx
        jj = y0 + (np.arange(j0, j1 + 1) + 0.5) * cell_y - cy
        px = ii[:, None]
        py = jj[None, :]
        lon = px * ch + py * sh
        lat = -px * sh + py * ch
        inside = (np.abs(lon) <= 0.5 * length) & (np.abs(lat) <= 0.5 * width)
        sub = grid[i0 : i1 + 1, j0 : j1 + 1]
        if accumulate:
            sub[inside] += val
        else:
            sub[inside] = np.maximum(sub[inside], val)
    return grid
