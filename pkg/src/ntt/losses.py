"""Training objectives. All functions reduce over their trailing axes, so a leading
batch axis yields per-sample values."""

from __future__ import annotations

import numpy as np
import torch

from .config import LossWeights
from .nn import DTYPE

PROB_FLOOR = 1e-7


def _t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def safe_norm(v: torch.Tensor) -> torch.Tensor:
    """Euclidean norm over the last axis with a zero (not NaN) gradient at the origin."""
    sq = (v * v).sum(-1)
    pos = sq > 0
    return torch.where(pos, torch.sqrt(torch.where(pos, sq, torch.ones_like(sq))), torch.zeros_like(sq))


def point_segment_distance(p: torch.Tensor, segs: torch.Tensor) -> torch.Tensor:
    """Distances [..., P, S] from points [..., P, 2] to segments [..., S, 2, 2]."""
    a = segs[..., :, 0, :].unsqueeze(-3)
    ab = (segs[..., :, 1, :] - segs[..., :, 0, :]).unsqueeze(-3)
    ap = p.unsqueeze(-2) - a
    L2 = (ab * ab).sum(-1)
    t = ((ap * ab).sum(-1) / torch.where(L2 > 0, L2, torch.ones_like(L2))).clamp(0.0, 1.0)
    return safe_norm(ap - t.unsqueeze(-1) * ab)


def polylines_to_segments(lines) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack a list of (N_i, 2) polylines into segments [S, 2, 2] and a validity mask."""
    if not lines:
        return torch.zeros((0, 2, 2), dtype=DTYPE), torch.zeros(0, dtype=torch.bool)
    segs = np.concatenate([np.stack([np.asarray(p)[:-1], np.asarray(p)[1:]], axis=1) for p in lines])
    mask = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1) > 0
    return _t(segs), torch.from_numpy(mask)


def target_label(coords, gt_endpoint) -> np.ndarray:
    """One-hot over candidates at the one nearest ``gt_endpoint`` (lowest index on ties)."""
    coords = np.asarray(coords, dtype=np.float64)
    if len(coords) == 0:
        raise ValueError("target_label needs at least one candidate")
    out = np.zeros(len(coords))
    out[int(np.argmin(np.linalg.norm(coords - np.asarray(gt_endpoint), axis=1)))] = 1.0
    return out


def target_bce(probs, label, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean binary cross-entropy over (valid) candidates; probabilities clamped to
    [1e-7, 1 - 1e-7]."""
    probs, label = _t(probs), _t(label)
    p = probs.clamp(PROB_FLOOR, 1 - PROB_FLOOR)
    per = -(label * torch.log(p) + (1 - label) * torch.log(1 - p))
    if mask is None:
        return per.mean(-1)
    m = mask.to(per.dtype)
    return (per * m).sum(-1) / m.sum(-1).clamp(min=1.0)


def collision_term(traj, agent_futures, agent_mask: torch.Tensor | None = None,
                   alpha_col: float = 3.0) -> torch.Tensor:
    """Sum over steps of max(0, alpha_col - distance to the nearest agent centre).

    ``traj`` is [..., k, 2]; ``agent_futures`` is [..., A, k, 2] in the same frame.
    """
    traj, fut = _t(traj), _t(agent_futures)
    if fut.shape[-3] == 0:
        return traj.sum((-1, -2)) * 0.0
    dist = safe_norm(traj.unsqueeze(-3) - fut)  # [..., A, k]
    if agent_mask is not None:
        dist = torch.where(agent_mask.unsqueeze(-1), dist, torch.full_like(dist, torch.inf))
    nearest = dist.amin(dim=-2)
    return torch.clamp(alpha_col - nearest, min=0.0).sum(-1)


def boundary_term(traj, boundary_segments, seg_mask: torch.Tensor | None = None,
                  alpha_bd: float = 1.0) -> torch.Tensor:
    """Sum over steps of max(0, alpha_bd - distance to the nearest boundary segment).

    ``boundary_segments`` is [..., S, 2, 2] or a list of polylines.
    """
    traj = _t(traj)
    if isinstance(boundary_segments, (list, tuple)):
        boundary_segments, seg_mask = polylines_to_segments(boundary_segments)
    segs = _t(boundary_segments)
    if segs.shape[-3] == 0:
        return traj.sum((-1, -2)) * 0.0
    dist = point_segment_distance(traj, segs)  # [..., k, S]
    if seg_mask is not None:
        dist = torch.where(seg_mask.unsqueeze(-2), dist, torch.full_like(dist, torch.inf))
    return torch.clamp(alpha_bd - dist.amin(dim=-1), min=0.0).sum(-1)


def direction_term(traj, divider_segments, seg_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean over trajectory segments of the folded angle in [0, pi/2] to the divider segment
    nearest the trajectory segment's midpoint. Zero-length trajectory segments are skipped."""
    traj = _t(traj)
    if isinstance(divider_segments, (list, tuple)):
        divider_segments, seg_mask = polylines_to_segments(divider_segments)
    segs = _t(divider_segments)
    if segs.shape[-3] == 0:
        return traj.sum((-1, -2)) * 0.0
    u = traj[..., 1:, :] - traj[..., :-1, :]
    mid = 0.5 * (traj[..., 1:, :] + traj[..., :-1, :])
    with torch.no_grad():
        dist = point_segment_distance(mid, segs)
        if seg_mask is not None:
            dist = torch.where(seg_mask.unsqueeze(-2), dist, torch.full_like(dist, torch.inf))
        idx = dist.argmin(dim=-1)  # [..., k-1]
        has_div = torch.isfinite(dist.amin(dim=-1))
    seg_vec = segs[..., 1, :] - segs[..., 0, :]  # [..., S, 2]
    v = torch.gather(seg_vec, -2, idx.unsqueeze(-1).expand(*idx.shape, 2))
    cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    dot = (u * v).sum(-1)
    valid = ((u * u).sum(-1) > 0) & has_div
    safe_cross = torch.where(valid, cross.abs(), torch.zeros_like(cross))
    safe_dot = torch.where(valid, dot.abs(), torch.ones_like(dot))
    ang = torch.atan2(safe_cross, safe_dot)
    w = valid.to(ang.dtype)
    return (ang * w).sum(-1) / w.sum(-1).clamp(min=1.0)


def regression_term(traj, gt) -> torch.Tensor:
    traj, gt = _t(traj), _t(gt)
    if traj.shape != gt.shape:
        raise ValueError(f"trajectory shape {tuple(traj.shape)} != ground truth {tuple(gt.shape)}")
    return (traj - gt).abs().mean((-1, -2))


def planning_loss(col, bd, dirn, reg, weights: tuple[float, ...] = (1.0, 1.0, 0.5, 1.0)):
    w1, w2, w3, w4 = weights
    return w1 * col + w2 * bd + w3 * dirn + w4 * reg


def focal_loss(probs, positive_index, gamma: float = 2.0, alpha: float = 0.25) -> torch.Tensor:
    """-alpha (1-p_pos)^gamma log p_pos - sum_{j != pos} (1-alpha) p_j^gamma log(1-p_j)."""
    probs = _t(probs)
    pos = torch.as_tensor(positive_index, dtype=torch.long)
    p = probs.clamp(PROB_FLOOR, 1 - PROB_FLOOR)
    onehot = torch.nn.functional.one_hot(pos, probs.shape[-1]).to(probs.dtype)
    pos_term = -alpha * (1 - p) ** gamma * torch.log(p)
    neg_term = -(1 - alpha) * p ** gamma * torch.log(1 - p)
    return (onehot * pos_term + (1 - onehot) * neg_term).sum(-1)


def overall_loss(map_loss, agent_loss, target_loss, plan_loss, stage: int,
                 weights: LossWeights = LossWeights()):
    wm, wa, wt, wp = weights.stage(stage)
    return wm * map_loss + wa * agent_loss + wt * target_loss + wp * plan_loss
