"""End-to-end training: joint losses, online anchor updates, AdamW."""

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .bev import rasterize
from .losses import LOSS_TERMS, scene_losses, total_loss
from .model import DrivingModel, save_model
from .optim import AdamW
from .planner import init_anchors, kmeans_update
from .train_utils import batches_of

__all__ = ["fit", "TrainResult"]


@dataclass
class TrainResult:
    model: DrivingModel
    anchors: object
    metrics: list  # one dict per epoch
    checkpoint_path: str or None


def fit(train_scenes, cfg, out_dir=None, log_file=None, progress=False):
    """Train a fresh model on the given scenes; deterministic given cfg.seed.

    Per step: forward the batch, compute all loss terms with the anchors as
    of the step start, fold in the k-means quantization loss, update the
    anchors, then backward and one optimizer step. Aborts on a non-finite
    term, naming it.
    """
    if not train_scenes:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    model = DrivingModel(cfg, rng)
    anchors = init_anchors(train_scenes, cfg.k_anchors)
    grids = [rasterize(s, model.grid_spec) for s in train_scenes]
    for g in grids:
        g.flat()
    steps_per_epoch = int(np.ceil(len(train_scenes) / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    opt = AdamW(
        model.named_parameters(),
        lr0=cfg.lr0,
        lr_min=cfg.lr_min,
        total_steps=max(total_steps - 1, 1),
        weight_decay=cfg.weight_decay,
    )
    metrics = []
    log_handle = open(log_file, "w") if log_file else None
    step = 0
    t_start = time.time()
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(train_scenes))
            sums = {name: 0.0 for name in LOSS_TERMS}
            sums["total"] = 0.0
            lr = cfg.lr0
            for batch_idx in batches_of(order, cfg.batch_size):
                terms_acc = {}
                for i in batch_idx:
                    out = model.forward(grids[i], train_scenes[i].command, anchors)
                    terms, _ = scene_losses(out, train_scenes[i], anchors, cfg)
                    for name, t in terms.items():
                        terms_acc.setdefault(name, []).append(t)
                scale = 1.0 / len(batch_idx)
                terms = {}
                for name, parts in terms_acc.items():
                    acc = parts[0]
                    for p in parts[1:]:
                        acc = acc + p
                    terms[name] = acc * scale
                batch_gts = np.stack([train_scenes[i].ego_gt for i in batch_idx])
                quant = kmeans_update(batch_gts, anchors, cfg.kmeans_momentum)
                terms["kmeans"] = Tensor(quant)
                loss = total_loss(terms, cfg)
                for name in LOSS_TERMS:
                    value = terms[name].item()
                    if not np.isfinite(value):
                        raise RuntimeError(f"non-finite loss term {name!r} at step {step}")
                    sums[name] += value
                sums["total"] += loss.item()
                loss.backward()
                lr = opt.step(step)
                step += 1
            record = {"epoch": epoch, "lr": lr}
            record.update({name: sums[name] / steps_per_epoch for name in sums})
            metrics.append(record)
            if log_handle:
                log_handle.write(json.dumps(record) + "\n")
                log_handle.flush()
            if progress:
                print(
                    f"epoch {epoch + 1}/{cfg.epochs} total {record['total']:.4f} "
                    f"lr {lr:.2e} elapsed {time.time() - t_start:.0f}s"
                )
    finally:
        if log_handle:
            log_handle.close()
    ckpt_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        ckpt_path = os.path.join(out_dir, "model.ckpt")
        save_model(ckpt_path, model, anchors, cfg, optimizer=opt)
    return TrainResult(model, anchors, metrics, ckpt_path)
