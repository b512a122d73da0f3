import json

import numpy as np
import pytest

from hierdrive.config import TrainConfig
from hierdrive.model import load_model, save_model
from hierdrive.scenes import build_dataset
from hierdrive.train import fit

TINY = TrainConfig(epochs=2, batch_size=4, k_anchors=3, m_modes=2, dim=16, heads=2,
                   n_map_queries=3, n_agent_queries=4, grid_h=10, grid_w=6,
                   n_agent_blocks=1, n_map_blocks=1, seed=7)

MIX = [("lane_keep", 1.0), ("turn_left", 1.0), ("overtake", 1.0), ("stop_resume", 1.0)]


@pytest.fixture(scope="module")
def tiny_scenes():
    train, _ = build_dataset(range(8), MIX, (1.0, 0.0))
    return train


def test_fit_smoke_writes_checkpoint(tiny_scenes, tmp_path):
    result = fit(tiny_scenes, TINY, out_dir=str(tmp_path), log_file=str(tmp_path / "log.jsonl"))
    assert result.checkpoint_path is not None
    model, anchors, cfg = load_model(result.checkpoint_path)
    assert cfg.dim == TINY.dim
    assert anchors.anchors.shape == (3, 6, 2)
    lines = (tmp_path / "log.jsonl").read_text().strip().split("\n")
    assert len(lines) == TINY.epochs
    rec = json.loads(lines[0])
    for key in ("epoch", "map", "det", "mot", "plan_intent", "plan_wta",
                "plan_constr", "kmeans", "total", "lr"):
        assert key in rec


def test_fit_requires_scenes():
    with pytest.raises(ValueError, match="empty dataset"):
        fit([], TINY)


def test_fit_deterministic_checkpoints(tiny_scenes, tmp_path):
    r1 = fit(tiny_scenes, TINY)
    r2 = fit(tiny_scenes, TINY)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_model(p1, r1.model, r1.anchors, TINY)
    save_model(p2, r2.model, r2.anchors, TINY)
    assert p1.read_bytes() == p2.read_bytes()


def test_fit_different_seed_differs(tiny_scenes, tmp_path):
    r1 = fit(tiny_scenes, TINY)
    r2 = fit(tiny_scenes, TINY.replace(seed=8))
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_model(p1, r1.model, r1.anchors, TINY)
    save_model(p2, r2.model, r2.anchors, TINY.replace(seed=8))
    assert p1.read_bytes() != p2.read_bytes()


def test_fit_aborts_on_poisoned_parameters(tiny_scenes):
    bad = TINY.replace(lr0=1e6, lr_min=1e6, epochs=3)  # force divergence
    with pytest.raises(RuntimeError, match="non-finite"):
        fit(tiny_scenes, bad)


def test_training_reduces_loss(tiny_scenes):
    cfg = TINY.replace(epochs=12)
    result = fit(tiny_scenes, cfg)
    assert result.metrics[-1]["total"] < result.metrics[0]["total"]


def test_model_checkpoint_roundtrip_preserves_outputs(tiny_scenes, tmp_path):
    from hierdrive.inference import InferenceMode, infer

    result = fit(tiny_scenes, TINY)
    path = tmp_path / "m.ckpt"
    save_model(path, result.model, result.anchors, TINY)
    model2, anchors2, _ = load_model(path)
    scene = tiny_scenes[0]
    t1, plan1, _ = infer(result.model, result.anchors, scene, InferenceMode())
    t2, plan2, _ = infer(model2, anchors2, scene, InferenceMode())
    assert np.array_equal(t1, t2)
    assert np.array_equal(plan1.intent_logits, plan2.intent_logits)
