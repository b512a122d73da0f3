import numpy as np
import pytest

from hierdrive.autodiff import Tensor, tsum
from hierdrive.bev import GridSpec, rasterize
from hierdrive.config import TrainConfig
from hierdrive.model import DrivingModel
from hierdrive.nn import zero_module
from hierdrive.perception import (
    EmbeddingBank,
    cross_task_interact,
    expand_modes,
    init_ego_queries,
)
from hierdrive.planner import IntentAnchorSet
from hierdrive.worlds import generate_scene

TINY = TrainConfig(k_anchors=3, m_modes=2, dim=16, heads=2, n_map_queries=3,
                   n_agent_queries=3, grid_h=10, grid_w=6)


def _anchors(rng, k=3, t=6):
    return IntentAnchorSet(rng.normal(scale=4.0, size=(k, t, 2)), np.zeros(k))


def _model(cfg=TINY, seed=0):
    return DrivingModel(cfg, np.random.default_rng(seed))


def test_identical_anchors_give_identical_queries():
    rng = np.random.default_rng(0)
    bank = EmbeddingBank(16, 2, 6, rng)
    anchors = _anchors(rng)
    anchors.anchors[2] = anchors.anchors[0]
    q = init_ego_queries(bank, 0, anchors)
    assert np.allclose(q.data[0], q.data[2])
    assert not np.allclose(q.data[0], q.data[1])


def test_zero_intent_encoder_collapses_to_shared_terms():
    rng = np.random.default_rng(1)
    bank = EmbeddingBank(16, 2, 6, rng)
    zero_module(bank.intent_encoder)
    anchors = _anchors(rng)
    q = init_ego_queries(bank, 1, anchors)
    expected = bank.e_ego.data + bank.e_cmd.data[1]
    assert np.allclose(q.data, np.tile(expected, (3, 1)))


def test_command_shifts_all_rows_by_same_vector():
    rng = np.random.default_rng(2)
    bank = EmbeddingBank(16, 2, 6, rng)
    anchors = _anchors(rng)
    q0 = init_ego_queries(bank, 0, anchors).data
    q2 = init_ego_queries(bank, 2, anchors).data
    deltas = q2 - q0
    assert np.allclose(deltas, deltas[0])
    assert np.linalg.norm(deltas[0]) > 1e-6


def test_bev_interact_degenerate_attention_is_mean_of_values():
    model = _model()
    block = model.ego_bev[0]
    dim = TINY.dim
    block.attn.wq.w.data[...] = 0.0
    block.attn.wq.b.data[...] = 0.0
    block.attn.wo.w.data = np.eye(dim)
    block.attn.wo.b.data[...] = 0.0
    zero_module(block.ffn)
    scene = generate_scene(0, "lane_keep")
    grid = rasterize(scene, model.grid_spec)
    keys, values = model.adapters.adapt(grid, "ego")
    rng = np.random.default_rng(3)
    q = Tensor(rng.normal(size=(3, dim)))
    out = model.bev_interact(q, "ego", grid)
    expected = q.data + values.data.mean(axis=0)
    assert np.allclose(out.data, expected, atol=1e-12)


def test_bev_interact_preserves_shape():
    model = _model()
    scene = generate_scene(0, "turn_left")
    grid = rasterize(scene, model.grid_spec)
    q = Tensor(np.random.default_rng(0).normal(size=(5, TINY.dim)))
    out = model.bev_interact(q, "map", grid)
    assert out.shape == (5, TINY.dim)


def test_mode_expansion_layout_and_identity():
    rng = np.random.default_rng(4)
    tokens = Tensor(rng.normal(size=(3, 8)))
    e_mode = Tensor(rng.normal(size=(2, 8)))
    out = expand_modes(tokens, e_mode)
    assert out.shape == (6, 8)
    # anchor-major layout: rows [k*M + m]
    assert np.allclose(out.data[2 * 1 + 0], tokens.data[1] + e_mode.data[0])
    assert np.allclose(out.data[2 * 2 + 1], tokens.data[2] + e_mode.data[1])
    # single zero mode embedding: expansion is the identity
    ident = expand_modes(tokens, Tensor(np.zeros((1, 8))))
    assert np.array_equal(ident.data, tokens.data)


def test_cross_task_token_counts_and_empty_agents():
    model = _model()
    rng = np.random.default_rng(5)
    ego = Tensor(rng.normal(size=(3, TINY.dim)))
    map_tokens = Tensor(rng.normal(size=(3, TINY.dim)))
    agents = Tensor(rng.normal(size=(4, TINY.dim)))
    stages = cross_task_interact(ego, agents, map_tokens, model.bank.e_mode,
                                 model.joint_attn, model.map_distill, model.joint_attn2)
    assert len(stages) == 3
    for ego_s, mot_s in stages:
        assert ego_s.shape == (3 * TINY.m_modes, TINY.dim)
        assert mot_s.shape == (4 * TINY.m_modes, TINY.dim)
    empty = Tensor(np.zeros((0, TINY.dim)))
    stages0 = cross_task_interact(ego, empty, map_tokens, model.bank.e_mode,
                                  model.joint_attn, model.map_distill, model.joint_attn2)
    for ego_s, mot_s in stages0:
        assert ego_s.shape == (3 * TINY.m_modes, TINY.dim)
        assert mot_s.shape == (0, TINY.dim)


def test_mode_embeddings_shared_between_tasks():
    model = _model()
    names = [n for n, p in model.named_parameters() if "e_mode" in n]
    assert names == ["bank.e_mode"]
    scene = generate_scene(1, "overtake")
    anchors = _anchors(np.random.default_rng(0))
    out = model.forward_scene(scene, anchors)
    # gradient reaches the shared mode embeddings from both heads
    tsum(out.plan_trajs).backward()
    g_plan = model.bank.e_mode.grad.copy()
    for p in model.parameters():
        p.grad = None
    out2 = model.forward_scene(scene, anchors)
    tsum(out2.motion_trajs).backward()
    g_mot = model.bank.e_mode.grad
    assert g_plan is not None and g_mot is not None
    assert np.any(g_plan != 0) and np.any(g_mot != 0)


def test_skip_stages_all_feed_heads():
    model = _model()
    scene = generate_scene(2, "lane_change")
    anchors = _anchors(np.random.default_rng(1))
    grid = rasterize(scene, model.grid_spec)
    out = model.forward(grid, scene.command, anchors)
    assert len(out.stages) == 3
    # ablating any stage must change the head inputs (no aliasing)
    base_logits = out.intent_logits.data.copy()
    for idx in range(3):
        w = model.fuse_ego.w.data.copy()
        model.fuse_ego.w.data[idx * TINY.dim : (idx + 1) * TINY.dim, :] = 0.0
        changed = model.forward(grid, scene.command, anchors).intent_logits.data
        assert not np.allclose(changed, base_logits), f"stage {idx} had no effect"
        model.fuse_ego.w.data = w


def test_agent_permutation_leaves_outputs_unchanged():
    model = _model()
    scene = generate_scene(3, "lane_change")
    assert len(scene.agents) >= 2
    anchors = _anchors(np.random.default_rng(2))
    out1 = model.forward_scene(scene, anchors)
    scene.agents = scene.agents[::-1]
    out2 = model.forward_scene(scene, anchors)
    assert np.array_equal(out1.plan_trajs.data, out2.plan_trajs.data)
    assert np.array_equal(out1.motion_trajs.data, out2.motion_trajs.data)


def test_zero_heads_trivial_outputs():
    model = _model()
    zero_module(model.map_head)
    zero_module(model.det_head)
    zero_module(model.motion_head)
    zero_module(model.traj_head.offsets)
    scene = generate_scene(4, "overtake")
    anchors = _anchors(np.random.default_rng(3))
    out = model.forward_scene(scene, anchors)
    assert np.array_equal(out.map_points.data, np.zeros_like(out.map_points.data))
    assert np.array_equal(out.det["center"].data, np.zeros((TINY.n_agent_queries, 2)))
    obj = 1 / (1 + np.exp(-out.det["obj_logits"].data))
    assert np.allclose(obj, 0.5)
    # motion frozen at (zero-head) predicted centers
    expect = np.broadcast_to(
        out.det["center"].data[:, None, None, :], out.motion_trajs.data.shape
    )
    assert np.allclose(out.motion_trajs.data, expect)
    # trajectories collapse to the anchors exactly
    assert np.allclose(out.plan_trajs.data, np.broadcast_to(
        anchors.anchors[:, None], out.plan_trajs.data.shape))


def test_output_shapes():
    model = _model()
    scene = generate_scene(5, "turn_right")
    anchors = _anchors(np.random.default_rng(4))
    out = model.forward_scene(scene, anchors)
    k, m, t = TINY.k_anchors, TINY.m_modes, TINY.t_future
    na, nm, np_pts = TINY.n_agent_queries, TINY.n_map_queries, TINY.map_points
    assert out.intent_logits.shape == (k,)
    assert out.plan_trajs.shape == (k, m, t, 2)
    assert out.plan_mode_logits.shape == (k, m)
    assert out.det["center"].shape == (na, 2)
    assert out.det["cls_logits"].shape == (na, 2)
    assert out.motion_trajs.shape == (na, m, t, 2)
    assert out.motion_mode_logits.shape == (na, m)
    assert out.map_points.shape == (nm, np_pts, 2)
    assert out.map_kind_logits.shape == (nm, 3)


def test_intent_head_uniform_on_identical_features():
    model = _model()
    feats = Tensor(np.tile(np.random.default_rng(5).normal(size=(1, TINY.dim)),
                           (TINY.k_anchors * TINY.m_modes, 1)))
    logits = model.intent_head(feats)
    assert logits.shape == (TINY.k_anchors,)
    assert np.allclose(logits.data, logits.data[0])
