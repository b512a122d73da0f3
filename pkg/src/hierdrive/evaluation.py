"""Open-loop metrics, report records, and the long-tail family suite."""

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import boxes_overlap_many, headings_along
from .inference import InferenceMode, infer
from .worlds import generate_scene

EGO_BOX = (4.1, 1.8)  # length, width used for planned-ego collision checks
HORIZON_STEPS = (1, 3, 5)  # waypoint indices closest to 1s / 2s / 3s at 2 Hz


def l2_metric(plan, gt):
    """L2 error at the 1s/2s/3s waypoints plus their mean."""
    plan = np.asarray(plan, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if plan.shape != gt.shape:
        raise ValueError(f"trajectory shapes differ: {plan.shape} vs {gt.shape}")
    errs = np.linalg.norm(plan - gt, axis=1)
    at = [float(errs[i]) for i in HORIZON_STEPS]
    return (*at, float(np.mean(at)))


def collision_metric(plan, scene, ego_box=EGO_BOX):
    """Cumulative planned-ego collision flags at 1s/2s/3s plus their mean.

    The planned ego box takes its heading from consecutive-waypoint tangents
    and is tested against every agent's logged future box per step.
    """
    plan = np.asarray(plan, dtype=np.float64)
    t = plan.shape[0]
    heads = headings_along(plan)
    hit_at_step = np.zeros(t, dtype=bool)
    if scene.agents:
        ego_boxes = []
        agent_boxes = []
        for step in range(t):
            ego = [plan[step, 0], plan[step, 1], heads[step], ego_box[0], ego_box[1]]
            for agent in scene.agents:
                ego_boxes.append(ego)
                agent_boxes.append(agent.box_at_step(step + 1))
        flags, _ = boxes_overlap_many(np.array(ego_boxes), np.array(agent_boxes))
        flags = flags.reshape(t, len(scene.agents))
        hit_at_step = flags.any(axis=1)
    cum = np.cumsum(hit_at_step) > 0
    at = [bool(cum[i]) for i in HORIZON_STEPS]
    return (*at, float(np.mean(at)))


@dataclass
class OpenLoopReport:
    l2: tuple = (0.0, 0.0, 0.0, 0.0)  # 1s, 2s, 3s, avg
    collision: tuple = (0.0, 0.0, 0.0, 0.0)
    n_scenes: int = 0

    def as_record(self):
        return {
            "aggregate": True,
            "n_scenes": self.n_scenes,
            "l2_1s": self.l2[0], "l2_2s": self.l2[1], "l2_3s": self.l2[2],
            "l2_avg": self.l2[3],
            "cr_1s": self.collision[0], "cr_2s": self.collision[1],
            "cr_3s": self.collision[2], "cr_avg": self.collision[3],
        }


def open_loop_eval(model, anchors, scenes, mode=None, plan_fn=None):
    """Evaluate plans against expert futures; returns (report, per-scene records).

    plan_fn overrides the planner (scene -> (T, 2)); used for baselines.
    """
    mode = mode or InferenceMode()
    records = []
    l2s, crs = [], []
    for scene in scenes:
        if plan_fn is not None:
            plan = plan_fn(scene)
        else:
            plan, _, _ = infer(model, anchors, scene, mode)
        l2 = l2_metric(plan, scene.ego_gt)
        cr = collision_metric(plan, scene)
        l2s.append(l2)
        crs.append(cr)
        records.append({
            "scene_id": scene.id,
            "l2_1s": l2[0], "l2_2s": l2[1], "l2_3s": l2[2], "l2_avg": l2[3],
            "col_1s": cr[0], "col_2s": cr[1], "col_3s": cr[2],
        })
    l2s = np.array(l2s) if l2s else np.zeros((0, 4))
    crs = np.array(crs, dtype=np.float64) if crs else np.zeros((0, 4))
    report = OpenLoopReport(
        tuple(l2s.mean(axis=0)) if len(l2s) else (0.0,) * 4,
        tuple(crs.mean(axis=0)) if len(crs) else (0.0,) * 4,
        len(scenes),
    )
    return report, records


def static_plan(scene):
    """Zero-motion baseline: stay at the origin for the whole horizon."""
    return np.zeros_like(scene.ego_gt)


LONG_TAIL_FAMILIES = ("three_point_turn", "stop_resume", "overtake")


def long_tail_eval(model, anchors, families=LONG_TAIL_FAMILIES, n_scenes=25,
                   seed0=10_000, mode=None):
    """Open-loop reports per long-tail family, plus the static baseline."""
    out = {}
    for family in families:
        scenes = [generate_scene(seed0 + i, family) for i in range(n_scenes)]
        report, records = open_loop_eval(model, anchors, scenes, mode)
        baseline, _ = open_loop_eval(None, None, scenes, plan_fn=static_plan)
        out[family] = {"report": report, "records": records, "static": baseline}
    return out


def write_report(path, records, aggregate):
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
        f.write(json.dumps(aggregate.as_record() if hasattr(aggregate, "as_record") else aggregate))
        f.write("\n")
