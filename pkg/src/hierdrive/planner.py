"""Intent anchors: prototype trajectories maintained by online k-means."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class IntentAnchorSet:
    anchors: np.ndarray  # (K, T, 2)
    counts: np.ndarray  # (K,) running assignment counts

    @property
    def k(self):
        return self.anchors.shape[0]

    def copy(self):
        return IntentAnchorSet(self.anchors.copy(), self.counts.copy())


def init_anchors(scenes, k):
    """Seed anchors from expert trajectories of as many distinct kinds as possible.

    Scene ids carry their scenario kind as a prefix; picking one trajectory
    per kind first avoids an all-straight initialization.
    """
    if len(scenes) < 1:
        raise ValueError("need at least one scene to initialize anchors")
    by_kind = {}
    for s in scenes:
        by_kind.setdefault(s.id.rsplit("-", 1)[0], []).append(s)
    picks = []
    pools = sorted(by_kind.values(), key=lambda pool: pool[0].id)
    i = 0
    while len(picks) < k:
        pool = pools[i % len(pools)]
        picks.append(pool[(i // len(pools)) % len(pool)])
        i += 1
    anchors = np.stack([s.ego_gt for s in picks[:k]])
    return IntentAnchorSet(anchors, np.zeros(k))


def assignment_costs(gt, anchors):
    """Mean point-wise L2 from one trajectory to every anchor, shape (K,)."""
    diff = anchors.anchors - np.asarray(gt)[None]
    return np.linalg.norm(diff, axis=2).mean(axis=1)


def kmeans_assign(gt, anchors):
    """Index of the anchor with minimum mean point-wise deviation (ties: lowest)."""
    return int(np.argmin(assignment_costs(gt, anchors)))


def _cluster_labels(gts, anchors):
    """Standard k-means assignment: argmin mean squared point deviation.

    Distinct from kmeans_assign, which is the intent-label rule (mean
    point-wise distance); clustering by the squared metric makes the EMA
    update a descent step on the quantization objective.
    """
    dev = ((gts[:, None] - anchors.anchors[None]) ** 2).sum(axis=3).mean(axis=2)
    return dev.argmin(axis=1), dev


def quantization_loss(gts, anchors):
    """Mean squared point deviation of trajectories to their assigned anchors."""
    gts = np.asarray(gts, dtype=np.float64)
    labels, dev = _cluster_labels(gts, anchors)
    return float(dev[np.arange(len(gts)), labels].mean())


def kmeans_update(gts, anchors, momentum=0.99):
    """EMA minibatch update toward per-cluster means; returns quantization loss.

    The loss is the mean squared point deviation of the batch to its assigned
    anchors, measured before the update (it is reported, never differentiated).
    Empty clusters are re-seeded to the batch sample farthest from its own
    assigned anchor.
    """
    gts = np.asarray(gts, dtype=np.float64)
    if gts.ndim != 3 or len(gts) == 0:
        raise ValueError("kmeans_update needs a non-empty (N, T, 2) batch")
    labels, dev = _cluster_labels(gts, anchors)
    sq_dev = dev[np.arange(len(gts)), labels]
    loss = float(sq_dev.mean())
    k = anchors.k
    for c in range(k):
        members = gts[labels == c]
        if len(members):
            mean = members.mean(axis=0)
            anchors.anchors[c] = momentum * anchors.anchors[c] + (1.0 - momentum) * mean
            anchors.counts[c] += len(members)
    empty = [c for c in range(k) if not np.any(labels == c) and anchors.counts[c] == 0]
    if empty:
        far_order = np.argsort(-sq_dev)
        for c, idx in zip(empty, far_order):
            anchors.anchors[c] = gts[idx]
    return loss


@dataclass
class PlanOutput:
    """Full planning hypothesis set as plain arrays (inference-side view)."""

    intent_logits: np.ndarray  # (K,)
    trajectories: np.ndarray  # (K, M, T, 2)
    mode_logits: np.ndarray  # (K, M)

    def intent_probs(self, temperature=1.0):
        return stable_softmax(self.intent_logits / temperature)

    def mode_probs(self, k, temperature=1.0):
        return stable_softmax(self.mode_logits[k] / temperature)


def stable_softmax(x):
    z = np.asarray(x, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()
