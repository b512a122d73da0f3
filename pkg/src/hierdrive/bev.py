"""Ground-truth BEV rasterization and per-task adapters.

Channel order (documented contract, see docs/formats.md):

    0  vehicle occupancy at t=0
    1  pedestrian occupancy at t=0
    2  velocity x / 10 (summed over overlapping agents)
    3  velocity y / 10
    4  occupancy one step back (all classes)
    5  occupancy two steps back
    6  lane-center raster
    7  boundary raster
    8  cell-center x / half-extent (constant coordinate ramp)
    9  cell-center y / half-extent
    10 agent-center x splat, (x - x0)/extent in [0, 1] over the agent box
    11 agent-center y splat

Grid rows index the longitudinal axis (x), columns the lateral axis (y).
The coordinate ramps let attention values carry location, without which
the decode heads cannot regress positions from attended content; the
center splats carry sub-cell agent positions past the cell quantization.
The ego vehicle contributes to no channel; an agent whose current center
lies outside the extent is dropped entirely (including its history).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .autodiff import Tensor
from .nn import Linear, Module, normal_param

N_CHANNELS = 12
VEL_SCALE = 0.1
TASKS = ("ego", "map", "agent")


@dataclass
class GridSpec:
    h: int = 40
    w: int = 20
    extent_long: float = 60.0
    extent_lat: float = 30.0

    @property
    def x0(self):
        return -0.5 * self.extent_long

    @property
    def y0(self):
        return -0.5 * self.extent_lat

    @property
    def cell_x(self):
        return self.extent_long / self.h

    @property
    def cell_y(self):
        return self.extent_lat / self.w


@dataclass
class BevGrid:
    values: np.ndarray  # (C, H, W)
    spec: GridSpec

    def flat(self):
        """(H*W, C) row-major cell order, cached."""
        if not hasattr(self, "_flat"):
            c, h, w = self.values.shape
            self._flat = np.ascontiguousarray(self.values.reshape(c, h * w).T)
        return self._flat

    def cell_of(self, x, y):
        s = self.spec
        return int(np.floor((x - s.x0) / s.cell_x)), int(np.floor((y - s.y0) / s.cell_y))


def _in_extent(spec, x, y):
    return (spec.x0 <= x < spec.x0 + spec.extent_long) and (
        spec.y0 <= y < spec.y0 + spec.extent_lat
    )


def rasterize(scene, spec=None):
    """Render a Scene into occupancy/velocity/map channels."""
    spec = spec or GridSpec()
    values = np.zeros((N_CHANNELS, spec.h, spec.w))

    def fill(channel, boxes, vals, accumulate=False):
        if boxes:
            _kernels.fill_oriented_boxes(
                values[channel],
                np.ascontiguousarray(boxes, dtype=np.float64),
                np.ascontiguousarray(vals, dtype=np.float64),
                spec.x0, spec.y0, spec.cell_x, spec.cell_y, int(accumulate),
            )

    # sub-cell agents (pedestrians) must still cover at least one cell
    # center, so raster boxes never shrink below ~one cell per axis
    min_l = 1.05 * spec.cell_x
    min_w = 1.05 * spec.cell_y

    veh, ped, vx_b, vx_v, vy_v, hist1, hist2 = [], [], [], [], [], [], []
    cx_v, cy_v = [], []
    for agent in scene.agents:
        cur = agent.current
        if not _in_extent(spec, cur[0], cur[1]):
            continue
        length = max(agent.extent[0], min_l)
        width = max(agent.extent[1], min_w)
        box = [cur[0], cur[1], cur[2], length, width]
        (veh if agent.cls == "vehicle" else ped).append(box)
        vx_b.append(box)
        vx_v.append(cur[3] * np.cos(cur[2]) * VEL_SCALE)
        vy_v.append(cur[3] * np.sin(cur[2]) * VEL_SCALE)
        cx_v.append((cur[0] - spec.x0) / spec.extent_long)
        cy_v.append((cur[1] - spec.y0) / spec.extent_lat)
        for dest, k in ((hist1, 1), (hist2, 2)):
            past = agent.states[agent.history_len - k]
            dest.append([past[0], past[1], past[2], length, width])
    fill(0, veh, np.ones(len(veh)))
    fill(1, ped, np.ones(len(ped)))
    fill(2, vx_b, vx_v, accumulate=True)
    fill(3, vx_b, vy_v, accumulate=True)
    fill(4, hist1, np.ones(len(hist1)))
    fill(5, hist2, np.ones(len(hist2)))
    fill(10, vx_b, cx_v)
    fill(11, vx_b, cy_v)

    for poly in scene.polylines:
        channel = 6 if poly.kind == "lane_center" else 7
        step = 0.5 * min(spec.cell_x, spec.cell_y)
        pts = poly.points
        for a, b in zip(pts[:-1], pts[1:]):
            seg = np.linalg.norm(b - a)
            n = max(int(np.ceil(seg / step)) + 1, 2)
            for t in np.linspace(0.0, 1.0, n):
                p = a + t * (b - a)
                if _in_extent(spec, p[0], p[1]):
                    i = int(np.floor((p[0] - spec.x0) / spec.cell_x))
                    j = int(np.floor((p[1] - spec.y0) / spec.cell_y))
                    values[channel, i, j] = 1.0
    values[8], values[9] = coordinate_ramps(spec)
    return BevGrid(values, spec)


def coordinate_ramps(spec):
    """Constant per-cell center coordinates, normalized by the half-extents."""
    xs = (spec.x0 + (np.arange(spec.h) + 0.5) * spec.cell_x) / (0.5 * spec.extent_long)
    ys = (spec.y0 + (np.arange(spec.w) + 0.5) * spec.cell_y) / (0.5 * spec.extent_lat)
    return np.repeat(xs[:, None], spec.w, axis=1), np.repeat(ys[None, :], spec.h, axis=0)


def propose_agents(grid, n_max):
    """Candidate agent positions from the occupancy raster.

    Connected components of the current-occupancy channels, read out through
    the center-splat channels (which carry exact agent centers). Returns
    (n_max, 3) rows of [x_norm, y_norm, present_flag], ordered by x then y,
    zero-padded. Value-level plumbing: no gradients flow through proposals.
    """
    from scipy import ndimage

    occ = (grid.values[0] + grid.values[1]) > 0
    labels, n = ndimage.label(occ)
    rows = []
    for comp in range(1, n + 1):
        mask = labels == comp
        x_norm = float(grid.values[10][mask].mean())
        y_norm = float(grid.values[11][mask].mean())
        rows.append((x_norm, y_norm, 1.0))
    rows.sort()
    rows = rows[:n_max]
    out = np.zeros((n_max, 3))
    for i, r in enumerate(rows):
        out[i] = r
    return out


def sinusoid_table(spec, dim):
    """2D sinusoidal position features (used to initialize the learned table)."""
    half = dim // 2
    xs, ys = coordinate_ramps(spec)
    flat = np.stack([xs.ravel(), ys.ravel()], axis=1)
    freqs = np.pi * 2.0 ** np.arange(max(half // 2, 1))
    out = np.zeros((spec.h * spec.w, dim))
    for axis in (0, 1):
        block = flat[:, axis : axis + 1] * freqs[None, :]
        cols = np.concatenate([np.sin(block), np.cos(block)], axis=1)[:, : half or 1]
        out[:, axis * half : axis * half + cols.shape[1]] = cols
    return out


class AdapterBank(Module):
    """One projection per task plus a shared learned positional table."""

    def __init__(self, spec, dim, rng):
        self.spec = spec
        self.dim = dim
        self.proj_ego = Linear(N_CHANNELS, dim, rng)
        self.proj_map = Linear(N_CHANNELS, dim, rng)
        self.proj_agent = Linear(N_CHANNELS, dim, rng)
        # learned, but started at smooth sinusoids so attention can address
        # metric space before any geometry has been absorbed from data
        self.pos = normal_param(
            rng, (spec.h * spec.w, dim), 0.02
        )
        self.pos.data += 0.5 * sinusoid_table(spec, dim)

    def adapt(self, grid, task):
        """Flattened (H*W, dim) keys/values; positional embedding on keys only."""
        if task not in TASKS:
            raise ValueError(f"unknown adapter task {task!r}")
        proj = getattr(self, f"proj_{task}")
        vals = proj(Tensor(grid.flat()))
        return vals + self.pos, vals
