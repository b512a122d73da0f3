"""Full pipeline: BEV interaction, cross-task interaction, task heads."""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat
from .bev import AdapterBank, GridSpec, propose_agents, rasterize
from .checkpoint import load_checkpoint, save_checkpoint
from .config import MODEL_FIELDS, TrainConfig
from .nn import Linear, Module, TransformerBlock
from .perception import (
    DetHead,
    EmbeddingBank,
    IntentHead,
    MapHead,
    MotionHead,
    TrajectoryHead,
    cross_task_interact,
    init_ego_queries,
)
from .planner import IntentAnchorSet, PlanOutput
from .scenes import COMMANDS

MAP_KIND_LABELS = ("lane_center", "boundary", "none")
DET_CLASSES = ("vehicle", "pedestrian")


@dataclass
class ModelOutput:
    intent_logits: object  # (K,)
    plan_trajs: object  # (K, M, T, 2)
    plan_mode_logits: object  # (K, M)
    det: dict  # center / heading / extent / cls_logits / obj_logits tensors
    motion_trajs: object  # (Na, M, T, 2)
    motion_mode_logits: object  # (Na, M)
    map_points: object  # (Nm, Np, 2)
    map_kind_logits: object  # (Nm, n_kinds)
    stages: list  # [(ego, mot)] for the three interaction stages

    def plan(self):
        return PlanOutput(
            self.intent_logits.data.copy(),
            self.plan_trajs.data.copy(),
            self.plan_mode_logits.data.copy(),
        )


class DrivingModel(Module):
    def __init__(self, cfg, rng):
        self.cfg = cfg
        dim, heads = cfg.dim, cfg.heads
        self.grid_spec = GridSpec(cfg.grid_h, cfg.grid_w, cfg.extent_long, cfg.extent_lat)
        self.adapters = AdapterBank(self.grid_spec, dim, rng)
        self.bank = EmbeddingBank(dim, cfg.m_modes, cfg.t_future, rng)
        self.map_queries = Tensor(rng.normal(0.0, 0.3, (cfg.n_map_queries, dim)), requires_grad=True)
        self.agent_queries = Tensor(
            rng.normal(0.0, 0.3, (cfg.n_agent_queries, dim)), requires_grad=True
        )
        # occupancy-derived proposals seed the agent queries with positions;
        # pure learned queries localize too slowly at this step budget
        self.proposal_encoder = Linear(3, dim, rng)
        # the adapters already produce the attention memory for these blocks
        self.ego_bev = [TransformerBlock(dim, heads, rng, project_kv=False)]
        self.map_bev = [
            TransformerBlock(dim, heads, rng, project_kv=False)
            for _ in range(cfg.n_map_blocks)
        ]
        self.agent_bev = [
            TransformerBlock(dim, heads, rng, project_kv=False)
            for _ in range(cfg.n_agent_blocks)
        ]
        self.joint_attn = TransformerBlock(dim, heads, rng)
        self.map_distill = TransformerBlock(dim, heads, rng)
        self.joint_attn2 = TransformerBlock(dim, heads, rng)
        self.fuse_ego = Linear(3 * dim, dim, rng)
        self.fuse_mot = Linear(3 * dim, dim, rng)
        self.map_head = MapHead(dim, cfg.map_points, len(MAP_KIND_LABELS), rng)
        self.det_head = DetHead(dim, len(DET_CLASSES), rng)
        self.motion_head = MotionHead(dim, cfg.m_modes, cfg.t_future, rng)
        self.intent_head = IntentHead(dim, cfg.m_modes, rng)
        self.traj_head = TrajectoryHead(dim, cfg.m_modes, cfg.t_future, rng)

    def bev_interact(self, queries, task, grid):
        """Cross-attention of task queries over the adapted BEV field.

        The adapter runs once per task; refinement rounds reattend the same
        memory from the updated queries.
        """
        keys, values = self.adapters.adapt(grid, task)
        out = queries
        for block in getattr(self, f"{task}_bev"):
            out = block(out, keys, values)
        return out

    def forward(self, grid, command, anchors):
        command_idx = COMMANDS.index(command) if isinstance(command, str) else int(command)
        ego0 = self.bev_interact(init_ego_queries(self.bank, command_idx, anchors), "ego", grid)
        map_tokens = self.bev_interact(self.map_queries, "map", grid)
        proposals = propose_agents(grid, self.cfg.n_agent_queries)
        agent_queries = self.agent_queries + self.proposal_encoder(Tensor(proposals))
        agent_tokens = self.bev_interact(agent_queries, "agent", grid)
        spec = grid.spec
        proposal_xy = np.stack(
            [proposals[:, 0] * spec.extent_long + spec.x0,
             proposals[:, 1] * spec.extent_lat + spec.y0], axis=1)
        proposal_xy[proposals[:, 2] == 0.0] = 1e6  # absent slots never win a match
        stages = cross_task_interact(
            ego0, agent_tokens, map_tokens, self.bank.e_mode,
            self.joint_attn, self.map_distill, self.joint_attn2,
        )
        ego_feats = self.fuse_ego(concat([s[0] for s in stages], axis=1))
        mot_feats = self.fuse_mot(concat([s[1] for s in stages], axis=1))
        det = self.det_head(agent_tokens)
        det["proposals"] = proposal_xy
        map_points, map_kind_logits = self.map_head(map_tokens)
        motion_trajs, motion_mode_logits = self.motion_head(mot_feats, det["center"])
        intent_logits = self.intent_head(ego_feats)
        plan_trajs, plan_mode_logits = self.traj_head(ego_feats, anchors)
        return ModelOutput(
            intent_logits, plan_trajs, plan_mode_logits, det,
            motion_trajs, motion_mode_logits, map_points, map_kind_logits, stages,
        )

    def forward_scene(self, scene, anchors, grid=None):
        grid = grid if grid is not None else rasterize(scene, self.grid_spec)
        return self.forward(grid, scene.command, anchors)


def model_config_meta(cfg):
    return {name: getattr(cfg, name) for name in MODEL_FIELDS}


def save_model(path, model, anchors, cfg, optimizer=None, extra_meta=None):
    meta = {"kind": "hierdrive-model", "config": model_config_meta(cfg)}
    if extra_meta:
        meta.update(extra_meta)
    arrays = {f"param/{name}": p.data for name, p in model.named_parameters()}
    arrays["anchors/waypoints"] = anchors.anchors
    arrays["anchors/counts"] = anchors.counts
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    save_checkpoint(path, meta, arrays)


def load_model(path):
    """Rebuild (model, anchors, cfg) from a checkpoint."""
    meta, arrays = load_checkpoint(path)
    cfg = TrainConfig().replace(**meta["config"])
    model = DrivingModel(cfg, np.random.default_rng(0))
    for name, p in model.named_parameters():
        key = f"param/{name}"
        if key not in arrays:
            raise KeyError(f"checkpoint missing parameter {name}")
        p.data = arrays[key].reshape(p.data.shape).copy()
    anchors = IntentAnchorSet(
        arrays["anchors/waypoints"].reshape(cfg.k_anchors, cfg.t_future, 2).copy(),
        arrays["anchors/counts"].copy(),
    )
    return model, anchors, cfg
