"""2D geometry helpers: oriented boxes, polylines, curvature."""

import numpy as np

from . import _kernels


def obb_corners(cx, cy, heading, length, width):
    """Corner coordinates (4, 2), counter-clockwise."""
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def boxes_overlap(box_a, box_b):
    """Separating-axis overlap test on [cx, cy, heading, length, width] rows."""
    a = np.asarray(box_a, dtype=np.float64).reshape(1, 5)
    b = np.asarray(box_b, dtype=np.float64).reshape(1, 5)
    flags, _ = _kernels.obb_overlap_pairs(a, b)
    return bool(flags[0])


def boxes_overlap_many(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    flags, margins = _kernels.obb_overlap_pairs(a, b)
    return flags.astype(bool), margins


def point_in_obb(points, box):
    """Vectorized containment of points (N, 2) in one oriented box."""
    cx, cy, heading, length, width = box
    d = np.asarray(points) - np.array([cx, cy])
    c, s = np.cos(heading), np.sin(heading)
    lon = d[:, 0] * c + d[:, 1] * s
    lat = -d[:, 0] * s + d[:, 1] * c
    return (np.abs(lon) <= 0.5 * length) & (np.abs(lat) <= 0.5 * width)


def point_segment_info(p, a, b):
    """Closest point on segment ab to p: returns (point, distance, tangent)."""
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom < 1e-12 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    q = a + t * ab
    norm = np.linalg.norm(ab)
    tangent = ab / norm if norm > 1e-12 else np.array([1.0, 0.0])
    return q, float(np.linalg.norm(p - q)), tangent


def nearest_on_polyline(p, points):
    """Nearest point over all segments of a polyline (N>=2, 2)."""
    p = np.asarray(p, dtype=np.float64)
    a = points[:-1]
    b = points[1:]
    ab = b - a
    denom = np.maximum((ab * ab).sum(axis=1), 1e-12)
    t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
    q = a + t[:, None] * ab
    d2 = ((p - q) ** 2).sum(axis=1)
    i = int(np.argmin(d2))
    norm = np.sqrt(denom[i])
    tangent = ab[i] / norm if norm > 1e-6 else np.array([1.0, 0.0])
    return q[i], float(np.sqrt(d2[i])), tangent


def nearest_on_polylines(p, polylines):
    """Nearest point over a list of point arrays; returns (q, dist, tangent, index)."""
    best = (None, np.inf, None, -1)
    for i, pts in enumerate(polylines):
        q, d, tang = nearest_on_polyline(p, pts)
        if d < best[1]:
            best = (q, d, tang, i)
    return best


def polyline_arclength(points):
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(points, n):
    """n points uniformly spaced in arclength along the polyline."""
    points = np.asarray(points, dtype=np.float64)
    s = polyline_arclength(points)
    total = s[-1]
    if total < 1e-12:
        return np.repeat(points[:1], n, axis=0)
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, 2))
    out[:, 0] = np.interp(targets, s, points[:, 0])
    out[:, 1] = np.interp(targets, s, points[:, 1])
    return out


def menger_curvature(p1, p2, p3):
    """Curvature of the circle through three points (0 for collinear)."""
    a = np.linalg.norm(p2 - p1)
    b = np.linalg.norm(p3 - p2)
    c = np.linalg.norm(p3 - p1)
    if a * b * c < 1e-9:
        return 0.0
    cross = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p2[1] - p1[1]) * (p3[0] - p1[0])
    return float(2.0 * abs(cross) / (a * b * c))


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    w = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    if np.isscalar(theta):
        return float(w) if w != -np.pi else np.pi
    w = np.asarray(w)
    w[w == -np.pi] = np.pi
    return w


def headings_along(points, prepend_origin=True, fallback=0.0):
    """Tangent headings from consecutive points; near-zero steps reuse the last heading."""
    pts = np.asarray(points, dtype=np.float64)
    if prepend_origin:
        pts = np.vstack([[0.0, 0.0], pts])
    d = np.diff(pts, axis=0)
    out = np.empty(len(d))
    prev = fallback
    for i, (dx, dy) in enumerate(d):
        if dx * dx + dy * dy > 1e-8:
            prev = np.arctan2(dy, dx)
        out[i] = prev
    return out


def chamfer_distance(a, b):
    """Symmetric mean nearest-neighbor distance between two point sets."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())
