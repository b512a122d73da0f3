"""Training loss terms and their weighted combination.

Geometric matching decisions (winners, detection assignment, nearest
segments, side signs) are computed on plain values and frozen; gradients
flow only through the differentiable metric built on top of them.
"""

import numpy as np

from .autodiff import (
    Tensor,
    absolute,
    atan2,
    bce_with_logits,
    concat,
    cross_entropy,
    maximum,
    relu,
    smooth_l1,
    sqrt,
    tmean,
    tsum,
)
from .geometry import nearest_on_polylines, resample_polyline, wrap_angle
from .planner import kmeans_assign

SMOOTH_L1_BETA = 1.0


def wta_loss(pred_trajs, mode_logits, gt):
    """Winner-takes-all imitation: regression on the closest mode only.

    pred_trajs (M, T, 2) tensor, mode_logits (M,) tensor, gt (T, 2) array.
    Returns (loss, winner_index); gradients reach only the winning
    trajectory and the mode logits.
    """
    gt = np.asarray(gt, dtype=np.float64)
    ades = np.linalg.norm(pred_trajs.data - gt[None], axis=2).mean(axis=1)
    winner = int(np.argmin(ades))
    reg = tmean(smooth_l1(pred_trajs[winner], Tensor(gt), SMOOTH_L1_BETA))
    cls = cross_entropy(mode_logits, winner)
    return reg + cls, winner


def intent_grounding_loss(intent_logits, gt, anchors):
    """Cross-entropy against the anchor of minimum deviation from the expert."""
    label = kmeans_assign(gt, anchors)
    return cross_entropy(intent_logits, label), label


def _norm_rows(delta, eps=1e-12):
    """Row norms of an (N, 2) tensor, differentiable at nonzero rows."""
    return sqrt(tsum(delta * delta, axis=1) + eps)


def collision_penalty(plan, agent_waypoints, margin_long, margin_lat):
    """Hinge on the scaled box distance to each agent's predicted waypoints.

    agent_waypoints: list of (T, 2) value arrays (one per considered agent).
    Penalty per step: relu(1 - max(|dx|/margin_long, |dy|/margin_lat)),
    meaned over steps and summed over agents.
    """
    if not agent_waypoints:
        return Tensor(0.0)
    terms = []
    for wps in agent_waypoints:
        delta = plan - Tensor(np.asarray(wps))
        dx = absolute(delta[:, 0]) * (1.0 / margin_long)
        dy = absolute(delta[:, 1]) * (1.0 / margin_lat)
        terms.append(tmean(relu(1.0 - maximum(dx, dy))))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def boundary_penalty(plan, scene, margin):
    """Hinge on the signed distance to the nearest boundary polyline.

    The nearest boundary point and the inside/outside sign (same side as the
    nearest lane center or not) are frozen; the distance differentiates.
    """
    boundaries = scene.boundaries()
    centers = scene.lane_centers()
    if not boundaries:
        return Tensor(0.0)
    if not np.all(np.isfinite(plan.data)) or np.abs(plan.data).max() > 1e9:
        return Tensor(np.nan)  # surfaces as a non-finite term upstream
    terms = []
    for t in range(plan.shape[0]):
        p = plan.data[t]
        q, dist, tang = nearest_on_polylines(p, boundaries)[:3]
        normal = np.array([-tang[1], tang[0]])
        side_p = np.dot(p - q, normal)
        inside = 1.0
        if centers:
            c = nearest_on_polylines(p, centers)[0]
            side_c = np.dot(c - q, normal)
            inside = 1.0 if side_p * side_c >= 0 else -1.0
        d = _norm_rows(plan[t : t + 1] - Tensor(q[None]))[0]
        terms.append(relu(margin - inside * d))
    return tmean(concat([t.reshape(1) for t in terms]))


def direction_penalty(plan, scene, margin_rad, min_step=0.1):
    """Hinge on heading deviation from the nearest lane-center tangent.

    Steps shorter than min_step (near-stopped) are skipped; the nearest
    tangent and the branch of the angle difference are frozen.
    """
    centers = scene.lane_centers()
    if not centers:
        return Tensor(0.0)
    if not np.all(np.isfinite(plan.data)) or np.abs(plan.data).max() > 1e9:
        return Tensor(np.nan)
    prev = Tensor(np.zeros((1, 2)))
    terms = []
    for t in range(plan.shape[0]):
        cur = plan[t : t + 1]
        step_vec = cur - prev
        dx, dy = step_vec.data[0]
        if dx * dx + dy * dy >= min_step * min_step:
            tang = nearest_on_polylines(plan.data[t], centers)[2]
            phi = np.arctan2(tang[1], tang[0])
            theta = atan2(step_vec[0, 1], step_vec[0, 0])
            branch = -2.0 * np.pi * np.round((theta.data - phi) / (2.0 * np.pi))
            terms.append(relu(absolute(theta + (branch - phi)) - margin_rad))
        prev = cur
    if not terms:
        return Tensor(0.0)
    return tmean(concat([t.reshape(1) for t in terms]))


def best_mode_waypoints(motion_trajs, motion_mode_logits, obj_logits, threshold=0.5):
    """Frozen highest-scored predicted waypoints of confident agent queries."""
    out = []
    if motion_trajs.shape[0] == 0:
        return out
    probs = 1.0 / (1.0 + np.exp(-obj_logits.data))
    best = np.argmax(motion_mode_logits.data, axis=1)
    for i in range(motion_trajs.shape[0]):
        if probs[i] > threshold:
            out.append(motion_trajs.data[i, best[i]].copy())
    return out


def constraint_loss(plan, motion_trajs, motion_mode_logits, obj_logits, scene, cfg):
    """VAD-style planning constraints: collision, boundary, direction hinges."""
    agents = best_mode_waypoints(motion_trajs, motion_mode_logits, obj_logits)
    col = collision_penalty(plan, agents, cfg.col_margin_long, cfg.col_margin_lat)
    bound = boundary_penalty(plan, scene, cfg.boundary_margin)
    direct = direction_penalty(plan, scene, np.deg2rad(cfg.direction_margin_deg))
    return col + bound + direct


def greedy_match(pred_centers, gt_centers, radius=3.0, match_leftovers=False):
    """Globally-greedy nearest-center assignment within `radius` meters.

    With match_leftovers=True, ground-truth agents that found no query
    within the radius are then assigned ungated to the nearest remaining
    query. Training needs this second phase to bootstrap (freshly
    initialized centers start at the origin, far from every agent); it is
    a no-op once predictions are within the radius.
    """
    matches = []
    if len(pred_centers) == 0 or len(gt_centers) == 0:
        return matches
    d = np.linalg.norm(pred_centers[:, None, :] - gt_centers[None, :, :], axis=2)
    limits = (radius, np.inf) if match_leftovers else (radius,)
    for limit in limits:
        while len(matches) < min(len(pred_centers), len(gt_centers)):
            i, j = np.unravel_index(np.argmin(d), d.shape)
            if not np.isfinite(d[i, j]) or d[i, j] > limit:
                break
            matches.append((int(i), int(j)))
            d[i, :] = np.inf
            d[:, j] = np.inf
    return matches


def detection_loss(det, scene, radius=3.0):
    """Greedy-matched L1 regression plus objectness/class terms.

    The in-radius phase follows predicted centers; leftover ground truth is
    bootstrapped against the occupancy proposals when the model provides
    them (stable assignment from step 0), else against the raw predictions.
    """
    gt_centers = np.array([a.current[:2] for a in scene.agents]).reshape(-1, 2)
    pred_centers = det["center"].data
    matches = greedy_match(pred_centers, gt_centers, radius)
    taken_q = {qi for qi, _ in matches}
    taken_g = {gi for _, gi in matches}
    left_q = [i for i in range(len(pred_centers)) if i not in taken_q]
    left_g = [j for j in range(len(gt_centers)) if j not in taken_g]
    if left_q and left_g:
        anchor_pts = det.get("proposals")
        ref = anchor_pts if anchor_pts is not None else pred_centers
        sub = greedy_match(np.asarray(ref)[left_q], gt_centers[left_g], np.inf)
        matches = matches + [(left_q[i], left_g[j]) for i, j in sub]
    obj_targets = np.zeros(det["obj_logits"].shape[0])
    terms = []
    if matches:
        cls_labels = []
        for qi, gi in matches:
            agent = scene.agents[gi]
            obj_targets[qi] = 1.0
            cur = agent.current
            # center accuracy gates the motion head too; weight it up
            terms.append(tmean(absolute(det["center"][qi] - Tensor(cur[:2]))) * 2.0)
            dh = det["heading"][qi] - float(cur[2])
            branch = -2.0 * np.pi * np.round(dh.data / (2.0 * np.pi))
            terms.append(absolute(dh + branch))
            terms.append(tmean(absolute(det["extent"][qi] - Tensor(np.array(agent.extent)))))
            cls_labels.append((qi, 0 if agent.cls == "vehicle" else 1))
        qis = [qi for qi, _ in cls_labels]
        labels = np.array([lab for _, lab in cls_labels])
        terms.append(cross_entropy(det["cls_logits"][qis], labels))
    reg = Tensor(0.0)
    for t in terms:
        reg = reg + t * (1.0 / max(len(matches), 1))
    return reg + bce_with_logits(det["obj_logits"], obj_targets), matches


def map_loss(map_points, map_kind_logits, scene, n_points):
    """Canonical-slot matching: polyline i supervises query i, extras are 'none'."""
    n_queries = map_points.shape[0]
    kind_labels = np.full(n_queries, 2, dtype=np.intp)  # none
    point_terms = []
    for i, poly in enumerate(scene.polylines[:n_queries]):
        kind_labels[i] = 0 if poly.kind == "lane_center" else 1
        target = resample_polyline(poly.points, n_points)
        point_terms.append(tmean(absolute(map_points[i] - Tensor(target))))
    loss = cross_entropy(map_kind_logits, kind_labels)
    for t in point_terms:
        loss = loss + t * (1.0 / max(len(point_terms), 1))
    return loss


def motion_loss(motion_trajs, motion_mode_logits, matches, scene):
    """Per-matched-agent winner-takes-all against the agent's logged future."""
    terms = []
    for qi, gi in matches:
        gt_future = scene.agents[gi].future[:, :2]
        loss, _ = wta_loss(motion_trajs[qi], motion_mode_logits[qi], gt_future)
        terms.append(loss)
    if not terms:
        return Tensor(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


LOSS_TERMS = ("map", "det", "mot", "plan_intent", "plan_wta", "plan_constr", "kmeans")


def total_loss(terms, cfg):
    """Weighted sum of the seven training terms (missing entries count as 0)."""
    weights = {
        "map": cfg.w_map,
        "det": cfg.w_det,
        "mot": cfg.w_mot,
        "plan_intent": cfg.w_intent,
        "plan_wta": cfg.w_wta,
        "plan_constr": cfg.w_constr,
        "kmeans": cfg.w_kmeans,
    }
    total = Tensor(0.0)
    for name in LOSS_TERMS:
        term = terms.get(name)
        if term is None:
            continue
        if not isinstance(term, Tensor):
            term = Tensor(float(term))
        total = total + term * float(weights[name])
    return total


def scene_losses(output, scene, anchors, cfg):
    """All per-scene loss terms (k-means excluded; it is batch-level).

    Returns (terms dict, aux dict with frozen decisions for oracles/tests).
    """
    gt = scene.ego_gt
    l_intent, label = intent_grounding_loss(output.intent_logits, gt, anchors)
    l_wta, winner = wta_loss(output.plan_trajs[label], output.plan_mode_logits[label], gt)
    plan = output.plan_trajs[label, winner]
    l_constr = constraint_loss(
        plan, output.motion_trajs, output.motion_mode_logits, output.det["obj_logits"], scene, cfg
    )
    l_det, matches = detection_loss(output.det, scene)
    l_map = map_loss(output.map_points, output.map_kind_logits, scene, cfg.map_points)
    l_mot = motion_loss(output.motion_trajs, output.motion_mode_logits, matches, scene)
    terms = {
        "map": l_map,
        "det": l_det,
        "mot": l_mot,
        "plan_intent": l_intent,
        "plan_wta": l_wta,
        "plan_constr": l_constr,
    }
    aux = {"label": label, "winner": winner, "matches": matches}
    return terms, aux
