"""Query initialization, BEV/instance interactions, and task decode heads."""

import numpy as np

from .autodiff import Tensor, concat, cumsum, reshape, tmean, transpose
from .nn import MLP, Linear, Module, TransformerBlock, normal_param
from .scenes import COMMANDS


class EmbeddingBank(Module):
    """Learned embeddings shared across the pipeline.

    The mode embeddings are a single parameter set injected into both the
    planning and the motion token streams.
    """

    # waypoint meters are ~O(20); keep encoder inputs O(1)
    INTENT_INPUT_SCALE = 0.05

    def __init__(self, dim, m_modes, t_future, rng):
        self.e_ego = normal_param(rng, (dim,), 0.3)
        self.e_cmd = normal_param(rng, (len(COMMANDS), dim), 0.3)
        self.e_mode = normal_param(rng, (m_modes, dim), 0.3)
        self.intent_encoder = MLP([t_future * 2, dim, dim], rng)


def init_ego_queries(bank, command_idx, anchors):
    """One query per intent anchor: shared ego/command terms + anchor encoding."""
    k, t, _ = anchors.anchors.shape
    flat = anchors.anchors.reshape(k, t * 2) * bank.INTENT_INPUT_SCALE
    enc = bank.intent_encoder(Tensor(flat))
    return enc + bank.e_ego + bank.e_cmd[int(command_idx)]


def expand_modes(tokens, e_mode):
    """(N, D) tokens -> (N*M, D) by adding each mode embedding to each token."""
    n, d = tokens.shape
    m = e_mode.shape[0]
    out = reshape(tokens, (n, 1, d)) + reshape(e_mode, (1, m, d))
    return reshape(out, (n * m, d))


def cross_task_interact(ego, agents, map_tokens, e_mode, joint_block, map_block, joint_block2):
    """Mode expansion, joint self-attention, then map distillation.

    Returns per-stream stage tensors: (ego0, mot0), (ego1, mot1), (ego2, mot2),
    where stage 0 is the mode-expanded BEV output, stage 1 the first joint
    self-attention, and stage 2 the output of the map cross-attention composed
    with a second joint self-attention.
    """
    k_tokens = expand_modes(ego, e_mode)
    m_tokens = expand_modes(agents, e_mode) if agents.shape[0] else Tensor(np.zeros((0, ego.shape[1])))
    n_ego = k_tokens.shape[0]
    joint0 = concat([k_tokens, m_tokens]) if m_tokens.shape[0] else k_tokens
    joint1 = joint_block(joint0)
    distilled = map_block(joint1, *_kv(map_tokens))
    joint2 = joint_block2(distilled)
    stages = []
    for j in (joint0, joint1, joint2):
        stages.append((j[:n_ego], j[n_ego:]))
    return stages


def _kv(tokens):
    return tokens, tokens


def fuse_stages(stage_list, fuse_layer):
    """Concatenate per-stage features and project back to model width."""
    return fuse_layer(concat(list(stage_list), axis=1))


class MapHead(Module):
    """Polyline points + kind logits per map query.

    Point outputs carry a x10 gain so freshly initialized heads can reach
    far-away targets within the step budget; zero weights still decode to
    the origin.
    """

    GAIN = 10.0

    def __init__(self, dim, n_points, n_kinds, rng, zero=False):
        self.n_points = n_points
        self.n_kinds = n_kinds
        self.mlp = MLP([dim, dim, n_points * 2 + n_kinds], rng, zero=zero)

    def __call__(self, tokens):
        out = self.mlp(tokens)
        n = tokens.shape[0]
        points = reshape(out[:, : self.n_points * 2] * self.GAIN, (n, self.n_points, 2))
        return points, out[:, self.n_points * 2 :]


class DetHead(Module):
    """Center, heading, extent, class logits, and objectness logit per query."""

    GAIN = 10.0

    def __init__(self, dim, n_classes, rng, zero=False):
        self.n_classes = n_classes
        self.mlp = MLP([dim, dim, 2 + 1 + 2 + n_classes + 1], rng, zero=zero)

    def __call__(self, tokens):
        out = self.mlp(tokens)
        nc = self.n_classes
        return {
            "center": out[:, 0:2] * self.GAIN,
            "heading": out[:, 2],
            "extent": out[:, 3:5] * self.GAIN,
            "cls_logits": out[:, 5 : 5 + nc],
            "obj_logits": out[:, 5 + nc],
        }


class MotionHead(Module):
    """Per-mode agent trajectories as cumulative offsets from the current center."""

    GAIN = 5.0

    def __init__(self, dim, m_modes, t_future, rng, zero=False):
        self.m = m_modes
        self.t = t_future
        self.offsets = MLP([dim, dim, t_future * 2], rng, zero=zero)
        self.logit = Linear(dim, 1, rng, zero=zero)

    def __call__(self, tokens, centers):
        """tokens (Na*M, D), centers (Na, 2) -> trajs (Na, M, T, 2), logits (Na, M)."""
        na = centers.shape[0]
        steps = reshape(self.offsets(tokens) * self.GAIN, (na, self.m, self.t, 2))
        trajs = cumsum(steps, axis=2) + reshape(centers, (na, 1, 1, 2))
        logits = reshape(self.logit(tokens), (na, self.m))
        return trajs, logits


class IntentHead(Module):
    """Mode-pooled anchor features to one confidence logit per anchor."""

    def __init__(self, dim, m_modes, rng, zero=False):
        self.m = m_modes
        self.mlp = MLP([dim, dim, 1], rng, zero=zero)

    def __call__(self, ego_tokens):
        km, d = ego_tokens.shape
        k = km // self.m
        pooled = tmean(reshape(ego_tokens, (k, self.m, d)), axis=1)
        return reshape(self.mlp(pooled), (k,))


class TrajectoryHead(Module):
    """Anchor-residual trajectories and mode logits per (anchor, mode) token."""

    GAIN = 2.5

    def __init__(self, dim, m_modes, t_future, rng, zero=False):
        self.m = m_modes
        self.t = t_future
        self.offsets = MLP([dim, dim, t_future * 2], rng, zero=zero)
        self.logit = Linear(dim, 1, rng, zero=zero)

    def __call__(self, ego_tokens, anchors):
        km, _ = ego_tokens.shape
        k = km // self.m
        res = reshape(self.offsets(ego_tokens) * self.GAIN, (k, self.m, self.t, 2))
        trajs = res + Tensor(anchors.anchors[:, None, :, :])
        logits = reshape(self.logit(ego_tokens), (k, self.m))
        return trajs, logits
