"""Inference-time selection over the dual-level hypothesis set."""

from dataclasses import dataclass

import numpy as np

from .bev import rasterize

MODES = ("deterministic", "intent_sample", "traj_sample", "dual_sample")


@dataclass
class InferenceMode:
    kind: str = "deterministic"
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown inference mode {self.kind!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def _pick(logits, sample, temperature, rng):
    """Argmax (ties to lowest index) or temperature softmax sample."""
    if not sample:
        return int(np.argmax(logits))
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def select_plan(plan, mode, rng=None):
    """(anchor index, mode index) chosen from a PlanOutput under `mode`."""
    rng = rng if rng is not None else np.random.default_rng(mode.seed)
    sample_intent = mode.kind in ("intent_sample", "dual_sample")
    sample_traj = mode.kind in ("traj_sample", "dual_sample")
    k = _pick(plan.intent_logits, sample_intent, mode.temperature, rng)
    m = _pick(plan.mode_logits[k], sample_traj, mode.temperature, rng)
    return k, m


def infer(model, anchors, scene, mode=None, rng=None, grid=None):
    """Run the model on a scene and select one trajectory.

    Returns (trajectory (T, 2), PlanOutput, (k, m)). Sampling draws come
    from `rng` when given, else from a generator seeded by mode.seed, so
    repeated calls with the same seed reproduce exactly.
    """
    mode = mode or InferenceMode()
    grid = grid if grid is not None else rasterize(scene, model.grid_spec)
    plan = model.forward(grid, scene.command, anchors).plan()
    k, m = select_plan(plan, mode, rng)
    return plan.trajectories[k, m].copy(), plan, (k, m)
