"""Scripted driving worlds behind the scene generator.

Each world is a closed-form script: a road spine, lane polylines in a fixed
canonical order (ego lane center first, then any second center, then
boundaries), agent scripts, and an expert ego path + speed profile. Scenes
are snapshots of a world at a seeded phase, expressed in the ego frame at
the snapshot instant. Closed-loop evaluation drives the same worlds live.
"""

import numpy as np

from .scenes import (
    AGENT_HISTORY,
    DT,
    SCENARIO_KINDS,
    T_FUTURE,
    AgentTrack,
    MapPolyline,
    Scene,
)
from .geometry import wrap_angle

LANE_WIDTH = 3.5
HALF_LANE = 0.5 * LANE_WIDTH
EGO_START_S = 30.0  # map extends this far behind the ego start
MAP_WINDOW = 36.0  # polylines are clipped to this box around the snapshot frame


class SpeedProfile:
    """Piecewise-constant acceleration; extrapolates with the end speeds."""

    def __init__(self, v0, phases):
        self.v0 = float(v0)
        self.times = [0.0]
        self.speeds = [self.v0]
        self.dists = [0.0]
        v, s = self.v0, 0.0
        for accel, duration in phases:
            v_end = max(v + accel * duration, 0.0)
            s += 0.5 * (v + v_end) * duration
            v = v_end
            self.times.append(self.times[-1] + duration)
            self.speeds.append(v)
            self.dists.append(s)

    def speed(self, t):
        if t <= 0.0:
            return self.v0
        if t >= self.times[-1]:
            return self.speeds[-1]
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        frac = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return self.speeds[i] + frac * (self.speeds[i + 1] - self.speeds[i])

    def dist(self, t):
        if t <= 0.0:
            return self.v0 * t
        if t >= self.times[-1]:
            return self.dists[-1] + self.speeds[-1] * (t - self.times[-1])
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        dt_in = t - self.times[i]
        v = self.speeds[i]
        a = (self.speeds[i + 1] - self.speeds[i]) / (self.times[i + 1] - self.times[i])
        return self.dists[i] + v * dt_in + 0.5 * a * dt_in * dt_in


class Path:
    """Piecewise path with exact poses; extrapolates straight at both ends."""

    def __init__(self, segments):
        self.segments = segments
        self.length = sum(seg["length"] for seg in segments)

    def pose_at(self, s):
        if s < 0.0:
            x, y, h = self._segment_pose(self.segments[0], 0.0)
            return x + s * np.cos(h), y + s * np.sin(h), h
        rem = s
        for seg in self.segments:
            if rem <= seg["length"] or seg is self.segments[-1]:
                if rem > seg["length"]:
                    x, y, h = self._segment_pose(seg, seg["length"])
                    extra = rem - seg["length"]
                    return x + extra * np.cos(h), y + extra * np.sin(h), h
                return self._segment_pose(seg, rem)
            rem -= seg["length"]
        raise AssertionError("unreachable")

    @staticmethod
    def _segment_pose(seg, u):
        if seg["type"] == "line":
            x0, y0 = seg["p0"]
            h = seg["heading"]
            return x0 + u * np.cos(h), y0 + u * np.sin(h), h
        if seg["type"] == "arc":
            cx, cy = seg["center"]
            r, a0, sign = seg["radius"], seg["a0"], seg["sign"]
            ang = a0 + sign * u / r
            return cx + r * np.cos(ang), cy + r * np.sin(ang), ang + sign * 0.5 * np.pi
        # dense polyline with precomputed arclength
        s_tab, pts, heads = seg["s"], seg["points"], seg["headings"]
        x = np.interp(u, s_tab, pts[:, 0])
        y = np.interp(u, s_tab, pts[:, 1])
        i = min(int(np.searchsorted(s_tab, u, side="right")) - 1, len(heads) - 1)
        return x, y, heads[max(i, 0)]

    def point_at(self, s):
        x, y, _ = self.pose_at(s)
        return np.array([x, y])

    def sample(self, step=2.0, s0=0.0, s1=None):
        s1 = self.length if s1 is None else s1
        n = max(int(np.ceil((s1 - s0) / step)) + 1, 2)
        return np.array([self.point_at(s) for s in np.linspace(s0, s1, n)])

    def offset_points(self, offset, step=2.0, s0=0.0, s1=None):
        """Polyline at constant left-positive lateral offset."""
        s1 = self.length if s1 is None else s1
        n = max(int(np.ceil((s1 - s0) / step)) + 1, 2)
        out = np.empty((n, 2))
        for i, s in enumerate(np.linspace(s0, s1, n)):
            x, y, h = self.pose_at(s)
            out[i] = (x - offset * np.sin(h), y + offset * np.cos(h))
        return out


class PathBuilder:
    def __init__(self, x=0.0, y=0.0, heading=0.0):
        self.x, self.y, self.heading = x, y, heading
        self.segments = []

    def straight(self, length):
        self.segments.append(
            {"type": "line", "p0": (self.x, self.y), "heading": self.heading, "length": length}
        )
        self.x += length * np.cos(self.heading)
        self.y += length * np.sin(self.heading)
        return self

    def arc(self, radius, sweep):
        """Circular arc; positive sweep turns left."""
        sign = 1.0 if sweep >= 0 else -1.0
        cx = self.x - sign * radius * np.sin(self.heading)
        cy = self.y + sign * radius * np.cos(self.heading)
        a0 = np.arctan2(self.y - cy, self.x - cx)
        length = radius * abs(sweep)
        self.segments.append(
            {"type": "arc", "center": (cx, cy), "radius": radius, "a0": a0,
             "sign": sign, "length": length}
        )
        ang = a0 + sign * abs(sweep)
        self.x = cx + radius * np.cos(ang)
        self.y = cy + radius * np.sin(ang)
        self.heading = wrap_angle(ang + sign * 0.5 * np.pi)
        return self

    def lateral_blend(self, forward, offset, step=0.25):
        """Quintic lateral shift by `offset` over `forward` meters, parallel-out."""
        u = np.linspace(0.0, 1.0, max(int(forward / step), 8) + 1)
        q = 10 * u**3 - 15 * u**4 + 6 * u**5
        local = np.stack([u * forward, q * offset], axis=1)
        c, s = np.cos(self.heading), np.sin(self.heading)
        pts = np.stack(
            [self.x + local[:, 0] * c - local[:, 1] * s,
             self.y + local[:, 0] * s + local[:, 1] * c], axis=1)
        d = np.diff(pts, axis=0)
        seg_len = np.hypot(d[:, 0], d[:, 1])
        s_tab = np.concatenate([[0.0], np.cumsum(seg_len)])
        heads = np.arctan2(d[:, 1], d[:, 0])
        self.segments.append(
            {"type": "poly", "points": pts, "s": s_tab, "headings": heads,
             "length": float(s_tab[-1])}
        )
        self.x, self.y = pts[-1]
        return self

    def build(self):
        return Path(self.segments)


# agent scripts --------------------------------------------------------------

class StaticAgent:
    def __init__(self, x, y, heading):
        self.pose = (x, y, heading)

    def state(self, t):
        return (*self.pose, 0.0)


class LinearAgent:
    def __init__(self, x, y, heading, speed):
        self.x, self.y, self.heading, self.speed = x, y, heading, speed

    def state(self, t):
        return (
            self.x + self.speed * t * np.cos(self.heading),
            self.y + self.speed * t * np.sin(self.heading),
            self.heading,
            self.speed,
        )


class LaneAgent:
    def __init__(self, path, s0, speed):
        self.path, self.s0, self.speed = path, s0, speed

    def state(self, t):
        x, y, h = self.path.pose_at(self.s0 + self.speed * t)
        return (x, y, h, self.speed)


class AgentSpec:
    def __init__(self, cls, extent, script):
        self.cls = cls
        self.extent = extent
        self.script = script


# world -----------------------------------------------------------------------

class World:
    """One scripted scenario episode; pure function of (seed, kind)."""

    def __init__(self, seed, kind):
        if seed < 0:
            raise ValueError("seed must be >= 0")
        if kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {kind!r}")
        self.seed = seed
        self.kind = kind
        rng = np.random.default_rng([seed, SCENARIO_KINDS.index(kind)])
        builder = globals()[f"_build_{kind}"]
        builder(self, rng)

    # builders fill: ego_path, ego_profile, polylines, agents, command,
    # snapshot_time, goal_s
    def ego_pose(self, t):
        return self.ego_path.pose_at(EGO_START_S + self.ego_profile.dist(t))

    def ego_speed(self, t):
        return self.ego_profile.speed(t)

    def ego_arclength(self, t):
        return EGO_START_S + self.ego_profile.dist(t)

    def goal_xy(self):
        return self.ego_path.point_at(self.goal_s)

    def route_progress(self, xy):
        """Fraction of the expert route covered at the nearest route point."""
        samples = self.ego_path.sample(1.0, EGO_START_S, self.goal_s)
        d = np.linalg.norm(samples - np.asarray(xy), axis=1)
        i = int(np.argmin(d))
        return i / (len(samples) - 1)

    def snapshot(self, t0=None, frame=None, scene_id=None, recovery=None):
        """Scene in the frame of `frame` (default: scripted ego pose at t0).

        recovery=(dy, dh) perturbs the frame off the expert path (lateral
        offset dy, heading offset dh); the expert future then merges back
        onto the path with a quintic lateral blend. Closed-loop stability
        depends on training over such states.
        """
        if t0 is None:
            t0 = self.snapshot_time
        merge_gt = None
        if recovery is not None and frame is None:
            dy, dh = recovery
            ex, ey, eh = self.ego_pose(t0)
            frame = (ex - dy * np.sin(eh), ey + dy * np.cos(eh), wrap_angle(eh + dh))
            merge_gt = self._merge_back_gt(t0, dy, dh)
        if frame is None:
            frame = self.ego_pose(t0)
        fx, fy, fh = frame
        c, s = np.cos(-fh), np.sin(-fh)

        def to_frame(pts):
            pts = np.asarray(pts, dtype=np.float64) - (fx, fy)
            return np.stack([pts[..., 0] * c - pts[..., 1] * s,
                             pts[..., 0] * s + pts[..., 1] * c], axis=-1)

        polylines = []
        for p in self.polylines:
            pts = to_frame(p.points)
            keep = (np.abs(pts[:, 0]) <= MAP_WINDOW) & (np.abs(pts[:, 1]) <= MAP_WINDOW)
            # longest contiguous kept run, so each polyline stays ordered
            pts = _longest_run(pts, keep)
            if pts is not None:
                polylines.append(MapPolyline(p.kind, pts))
        agents = []
        for spec in self.agents:
            states = np.empty((AGENT_HISTORY + 1 + T_FUTURE, 4))
            for k in range(states.shape[0]):
                t = t0 + (k - AGENT_HISTORY) * DT
                x, y, h, v = spec.script.state(t)
                states[k, :2] = to_frame([x, y])
                states[k, 2] = wrap_angle(h - fh)
                states[k, 3] = v
            agents.append(AgentTrack(spec.cls, spec.extent, AGENT_HISTORY, T_FUTURE, states))
        if merge_gt is not None:
            ego_gt = to_frame(merge_gt)
        else:
            ego_gt = to_frame([self.ego_pose(t0 + (i + 1) * DT)[:2] for i in range(T_FUTURE)])
        hist = np.empty((AGENT_HISTORY, 3))
        for k in range(AGENT_HISTORY):
            x, y, h = self.ego_pose(t0 - (AGENT_HISTORY - k) * DT)
            hist[k, :2] = to_frame([x, y])
            hist[k, 2] = wrap_angle(h - fh)
        sid = scene_id or f"{self.kind}-{self.seed:06d}"
        return Scene(sid, DT, self.command, polylines, agents, ego_gt, hist)

    def _merge_back_gt(self, t0, dy, dh, t_merge=2.0):
        """Expert future from a perturbed pose: quintic lateral merge onto the path."""
        v0 = max(self.ego_speed(t0), 0.1)
        vy0 = v0 * np.sin(dh)
        # quintic e(tau) with e(0)=dy, e'(0)=vy0, e''(0)=0 -> 0, 0, 0 at t_merge
        tm = t_merge
        rhs = np.array([-dy - vy0 * tm, -vy0, 0.0])
        mat = np.array([
            [tm**3, tm**4, tm**5],
            [3 * tm**2, 4 * tm**3, 5 * tm**4],
            [6 * tm, 12 * tm**2, 20 * tm**3],
        ])
        a3, a4, a5 = np.linalg.solve(mat, rhs)
        s_base = self.ego_arclength(t0)
        out = []
        for i in range(T_FUTURE):
            tau = (i + 1) * DT
            s_i = s_base + self.ego_profile.dist(t0 + tau) - self.ego_profile.dist(t0)
            bx, by, bh = self.ego_path.pose_at(s_i)
            if tau >= tm:
                e = 0.0
            else:
                e = dy + vy0 * tau + a3 * tau**3 + a4 * tau**4 + a5 * tau**5
            out.append((bx - e * np.sin(bh), by + e * np.cos(bh)))
        return out


def _longest_run(points, keep):
    """Longest contiguous True run of rows, or None if fewer than 2 survive."""
    best_start, best_len, start = 0, 0, None
    for i, flag in enumerate(list(keep) + [False]):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best_len:
                best_start, best_len = start, i - start
            start = None
    if best_len < 2:
        return None
    return points[best_start : best_start + best_len]


def _lane_polylines(path, offsets_center, offsets_boundary, step=2.0):
    polys = [MapPolyline("lane_center", path.offset_points(off, step)) for off in offsets_center]
    polys += [MapPolyline("boundary", path.offset_points(off, step)) for off in offsets_boundary]
    return polys


def _vehicle_extent(rng):
    return (float(rng.uniform(4.3, 4.8)), float(rng.uniform(1.8, 2.0)))


def _maybe_roadside_extras(world, rng, spine, s_lo, s_hi):
    """Optional parked car / sidewalk pedestrian well outside the lane."""
    if rng.random() < 0.5:
        s = rng.uniform(s_lo, s_hi)
        side = rng.choice([-1.0, 1.0])
        x, y, h = spine.pose_at(s)
        off = side * rng.uniform(4.6, 6.5)
        world.agents.append(
            AgentSpec("vehicle", _vehicle_extent(rng),
                      StaticAgent(x - off * np.sin(h), y + off * np.cos(h), h))
        )
    if rng.random() < 0.5:
        s = rng.uniform(s_lo, s_hi)
        side = rng.choice([-1.0, 1.0])
        x, y, h = spine.pose_at(s)
        off = side * rng.uniform(4.2, 6.0)
        along = rng.choice([-1.0, 1.0])
        world.agents.append(
            AgentSpec("pedestrian", (0.6, 0.6),
                      LinearAgent(x - off * np.sin(h), y + off * np.cos(h),
                                  wrap_angle(h + (0.0 if along > 0 else np.pi)),
                                  float(rng.uniform(0.8, 1.5))))
        )


def _build_lane_keep(w, rng):
    curvature = rng.uniform(-0.015, 0.015)
    v0 = rng.uniform(6.5, 9.5)
    b = PathBuilder()
    if abs(curvature) < 0.003:
        b.straight(110.0)
    else:
        radius = 1.0 / abs(curvature)
        b.straight(20.0).arc(radius, np.sign(curvature) * 70.0 / radius).straight(40.0)
    w.ego_path = b.build()
    w.polylines = _lane_polylines(w.ego_path, [0.0], [HALF_LANE, -HALF_LANE])
    w.ego_profile = SpeedProfile(v0, [(0.0, 60.0)])
    w.command = "lane_keep"
    w.agents = []
    if rng.random() < 0.6:
        gap = rng.uniform(16.0, 28.0)
        w.agents.append(
            AgentSpec("vehicle", _vehicle_extent(rng),
                      LaneAgent(w.ego_path, EGO_START_S + gap, v0 * rng.uniform(1.0, 1.15)))
        )
    _maybe_roadside_extras(w, rng, w.ego_path, EGO_START_S + 5.0, EGO_START_S + 30.0)
    w.snapshot_time = float(rng.choice([0.0, 0.5, 1.0, 1.5, 2.0]))
    w.goal_s = EGO_START_S + 35.0


def _build_turn(w, rng, left):
    radius = rng.uniform(9.0, 14.0) if left else rng.uniform(8.0, 12.0)
    sweep = np.deg2rad(rng.uniform(80.0, 95.0)) * (1.0 if left else -1.0)
    v = float(np.sqrt(rng.uniform(1.5, 2.2) * radius))
    # arc entry within ~1.5 s of every snapshot phase, so the 3 s horizon
    # always includes a visible stretch of the turn
    d_turn = v * rng.uniform(0.4, 1.5)
    b = PathBuilder()
    b.straight(EGO_START_S + d_turn).arc(radius, sweep).straight(40.0)
    w.ego_path = b.build()
    w.polylines = _lane_polylines(w.ego_path, [0.0], [HALF_LANE, -HALF_LANE])
    w.ego_profile = SpeedProfile(v, [(0.0, 60.0)])
    w.command = "turn_left" if left else "turn_right"
    w.agents = []
    _maybe_roadside_extras(w, rng, w.ego_path, EGO_START_S + 2.0, EGO_START_S + d_turn + 6.0)
    t_mid_arc = (d_turn + radius * abs(sweep) * 0.5) / v
    phases = np.arange(0.0, max(t_mid_arc, 0.5), 0.5)
    w.snapshot_time = float(rng.choice(phases))
    w.goal_s = EGO_START_S + d_turn + radius * abs(sweep) + 20.0


def _build_turn_left(w, rng):
    _build_turn(w, rng, left=True)


def _build_turn_right(w, rng):
    _build_turn(w, rng, left=False)


def _build_lane_change(w, rng):
    side = float(rng.choice([-1.0, 1.0]))
    v0 = rng.uniform(6.0, 8.0)
    gap = rng.uniform(15.0, 20.0)
    d_lc = rng.uniform(3.0, 6.0)
    t_lc = rng.uniform(2.0, 2.5)
    spine = PathBuilder().straight(130.0).build()
    b = PathBuilder()
    b.straight(EGO_START_S + d_lc).lateral_blend(v0 * t_lc, side * LANE_WIDTH).straight(60.0)
    w.ego_path = b.build()
    w.polylines = _lane_polylines(
        spine, [0.0, side * LANE_WIDTH],
        [-side * HALF_LANE, side * (LANE_WIDTH + HALF_LANE)],
    )
    w.ego_profile = SpeedProfile(v0, [(0.0, 60.0)])
    w.command = "lane_keep"
    w.agents = [
        AgentSpec("vehicle", _vehicle_extent(rng),
                  LaneAgent(spine, EGO_START_S + gap, v0 * rng.uniform(0.2, 0.35)))
    ]
    if rng.random() < 0.4:
        # non-conflicting vehicle well ahead in the target lane
        w.agents.append(
            AgentSpec("vehicle", _vehicle_extent(rng),
                      LinearAgent(EGO_START_S + gap + rng.uniform(22.0, 30.0),
                                  side * LANE_WIDTH, 0.0, v0 * 0.9))
        )
    w.snapshot_time = float(rng.choice([0.0, 0.5, 1.0, 1.5, 2.0]))
    w.goal_s = EGO_START_S + d_lc + v0 * t_lc + 30.0


def _build_stop_resume(w, rng):
    hold = float(rng.choice([0.5, 1.0, 1.5]))
    accel = rng.uniform(1.6, 2.4)
    v_max = rng.uniform(5.0, 7.0)
    w.ego_path = PathBuilder().straight(120.0).build()
    w.polylines = _lane_polylines(w.ego_path, [0.0], [HALF_LANE, -HALF_LANE])
    w.ego_profile = SpeedProfile(0.0, [(0.0, hold), (accel, v_max / accel), (0.0, 60.0)])
    w.command = "lane_keep"
    d_ped = rng.uniform(4.0, 7.0)
    y_ped = rng.uniform(0.3, 1.2) * rng.choice([-1.0, 1.0])
    w.agents = [
        AgentSpec("pedestrian", (0.6, 0.6),
                  LinearAgent(EGO_START_S + d_ped, y_ped,
                              np.pi / 2 * np.sign(y_ped) if y_ped != 0 else np.pi / 2,
                              float(rng.uniform(1.2, 1.6))))
    ]
    _maybe_roadside_extras(w, rng, w.ego_path, EGO_START_S + 10.0, EGO_START_S + 30.0)
    w.snapshot_time = 0.0
    w.goal_s = EGO_START_S + 25.0


def _build_overtake(w, rng):
    v0 = rng.uniform(4.5, 6.0)
    d_car = rng.uniform(9.0, 13.0)
    y_off = rng.uniform(3.0, 3.4)
    extent = _vehicle_extent(rng)
    second = rng.random() < 0.4
    gap2 = rng.uniform(7.0, 10.0) if second else 0.0
    extent2 = _vehicle_extent(rng) if second else None
    # swerve geometry: fully offset before the lead car's front bumper
    swerve_lead = 9.0
    blend = float(np.clip(v0 * 1.7, 7.0, 10.0))
    swerve_start = EGO_START_S + d_car - swerve_lead
    pass_end = EGO_START_S + d_car + gap2 + 0.5 * extent[0] + 6.0
    hold = max(pass_end - (swerve_start + blend), 4.0)
    b = PathBuilder()
    b.straight(swerve_start).lateral_blend(blend, y_off).straight(hold)
    b.lateral_blend(blend, -y_off).straight(50.0)
    w.ego_path = b.build()
    spine = PathBuilder().straight(150.0).build()
    w.polylines = _lane_polylines(
        spine, [0.0, LANE_WIDTH], [-HALF_LANE, LANE_WIDTH + HALF_LANE]
    )
    w.ego_profile = SpeedProfile(v0, [(0.0, 60.0)])
    w.command = "lane_keep"
    w.agents = [
        AgentSpec("vehicle", extent, StaticAgent(EGO_START_S + d_car, 0.0, 0.0))
    ]
    if second:
        w.agents.append(
            AgentSpec("vehicle", extent2,
                      StaticAgent(EGO_START_S + d_car + gap2, rng.uniform(-0.2, 0.2), 0.0))
        )
    w.snapshot_time = float(rng.choice([0.0, 0.5, 1.0, 1.5, 2.0]))
    w.goal_s = pass_end + blend + 12.0


def _build_three_point_turn(w, rng):
    d_end = rng.uniform(10.0, 14.0)
    radius = rng.uniform(3.8, 5.0)
    v0 = rng.uniform(2.5, 3.5)
    b = PathBuilder()
    b.straight(EGO_START_S + 2.0).arc(radius, np.deg2rad(80.0)).straight(5.0)
    w.ego_path = b.build()
    spine = PathBuilder().straight(EGO_START_S + d_end).build()
    polys = _lane_polylines(spine, [0.0], [HALF_LANE, -HALF_LANE])
    cap_x = EGO_START_S + d_end + 2.0
    polys.append(MapPolyline("boundary", np.array([[cap_x, -4.0], [cap_x, 4.0]])))
    w.polylines = polys
    w.ego_profile = SpeedProfile(v0, [(-1.2, v0 / 1.2), (0.0, 60.0)])
    w.command = "turn_left"
    w.agents = []
    if rng.random() < 0.5:
        w.agents.append(
            AgentSpec("vehicle", _vehicle_extent(rng),
                      StaticAgent(EGO_START_S + rng.uniform(2.0, 6.0), -(LANE_WIDTH + 1.2), 0.0))
        )
    w.snapshot_time = 0.0
    w.goal_s = EGO_START_S + 2.0 + radius * np.deg2rad(80.0) + 2.0


def generate_scene(seed, kind):
    """Deterministic scene snapshot for (seed, kind)."""
    return World(seed, kind).snapshot()
