"""Closed-loop rollout: replan at 2 Hz, execute under kinematic clamps."""

from dataclasses import dataclass

import numpy as np

from .bev import rasterize
from .geometry import boxes_overlap_many, wrap_angle
from .inference import InferenceMode, infer
from .scenes import DT
from .worlds import World

MAX_ACCEL = 4.0  # m/s^2
MAX_CURVATURE = 0.3  # 1/m
GOAL_RADIUS = 2.0
EGO_BOX = (4.1, 1.8)


@dataclass
class ClosedLoopReport:
    completion: float
    collisions: int
    success: bool
    steps: int


def _advance(pose, speed, target, dt):
    """Pure-pursuit arc toward the target point under accel/curvature clamps."""
    x, y, h = pose
    dist = float(np.hypot(target[0], target[1]))
    v_des = dist / dt
    v_new = float(np.clip(v_des, max(speed - MAX_ACCEL * dt, 0.0), speed + MAX_ACCEL * dt))
    if dist < 1e-6:
        kappa = 0.0
    else:
        kappa = float(np.clip(2.0 * target[1] / (dist * dist), -MAX_CURVATURE, MAX_CURVATURE))
    travel = v_new * dt
    if abs(kappa) < 1e-9:
        nx = x + travel * np.cos(h)
        ny = y + travel * np.sin(h)
        nh = h
    else:
        dtheta = kappa * travel
        r = 1.0 / kappa
        nx = x + r * (np.sin(h + dtheta) - np.sin(h))
        ny = y - r * (np.cos(h + dtheta) - np.cos(h))
        nh = wrap_angle(h + dtheta)
    return (float(nx), float(ny), float(nh)), v_new, kappa


def closed_loop_rollout(model, anchors, kind, seed, mode=None, budget_steps=40,
                        drop_agents=False, trace=None):
    """Roll one scripted world with the model in the loop.

    Agents follow their scripts; the ego executes the first planned waypoint
    of each replanned trajectory under |accel| <= 4 and |curvature| <= 0.3.
    Terminates on goal, collision, or budget. Sampled inference modes draw
    from one generator seeded by mode.seed for the whole rollout.
    """
    mode = mode or InferenceMode()
    world = World(seed, kind)
    rng = np.random.default_rng(mode.seed)
    pose = world.ego_pose(0.0)
    speed = world.ego_speed(0.0)
    goal = world.goal_xy()
    progress = world.route_progress(pose[:2])
    collisions = 0
    steps = 0
    for step in range(budget_steps):
        t = step * DT
        scene = world.snapshot(t, frame=pose)
        if drop_agents:
            scene.agents = []
        grid = rasterize(scene, model.grid_spec)
        plan, _, _ = infer(model, anchors, scene, mode, rng=rng, grid=grid)
        pose, speed, _ = _advance(pose, speed, plan[0], DT)
        steps = step + 1
        if trace is not None:
            trace.append((pose, speed))
        progress = max(progress, world.route_progress(pose[:2]))
        if not drop_agents:
            ego_box = np.array([[pose[0], pose[1], pose[2], EGO_BOX[0], EGO_BOX[1]]])
            for spec in world.agents:
                ax, ay, ah, _ = spec.script.state(t + DT)
                other = np.array([[ax, ay, ah, spec.extent[0], spec.extent[1]]])
                flags, _ = boxes_overlap_many(ego_box, other)
                if flags[0]:
                    collisions += 1
            if collisions:
                break
        if np.hypot(pose[0] - goal[0], pose[1] - goal[1]) < GOAL_RADIUS:
            progress = 1.0
            break
    success = collisions == 0 and progress >= 1.0 and steps <= budget_steps
    return ClosedLoopReport(float(progress), collisions, bool(success), steps)
