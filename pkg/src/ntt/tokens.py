"""Instance-level scene tokens from vectorized ground truth (map elements, agents and one
ego-status token), plus a small multimodal motion-forecast head on the agent tokens."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .config import LossWeights, ModelConfig
from .features import AGENT_FEAT, EGO_FEAT, MAP_FEAT, agent_features, map_features
from .losses import focal_loss, safe_norm
from .nn import DTYPE, AttentionSpec, MLPSpec, ParamStore, cross_attention, max_pool_rows, mlp_apply, softmax
from .scene import Scene

STAGE1_PREFIXES = ("map_enc.", "agent_enc.", "ego_enc.", "motion.")


def specs(cfg: ModelConfig) -> dict:
    d = cfg.d
    return {
        "map_enc": MLPSpec("map_enc", (MAP_FEAT, d, d)),
        "agent_enc": MLPSpec("agent_enc", (AGENT_FEAT, d, d)),
        "ego_enc": MLPSpec("ego_enc", (EGO_FEAT, d, d)),
        "motion_attn": AttentionSpec("motion.attn", d),
        "motion_head": MLPSpec("motion.head", (2 * d, d, cfg.n_modes * (2 * cfg.k + 1))),
    }


def register(store: ParamStore, cfg: ModelConfig) -> None:
    for s in specs(cfg).values():
        s.register(store)


@dataclass
class SceneTokens:
    map_tokens: torch.Tensor    # [..., n_map, d]
    agent_tokens: torch.Tensor  # [..., n_agents, d]
    map_mask: torch.Tensor
    agent_mask: torch.Tensor
    ego_token: torch.Tensor     # [..., 1, d]

    @property
    def combined(self) -> torch.Tensor:
        return torch.cat([self.map_tokens, self.agent_tokens, self.ego_token], dim=-2)

    @property
    def mask(self) -> torch.Tensor:
        ego = torch.ones(self.ego_token.shape[:-1], dtype=torch.bool)
        return torch.cat([self.map_mask, self.agent_mask, ego], dim=-1)


@dataclass
class MotionForecast:
    trajectories: torch.Tensor  # [..., n_agents, n_modes, k, 2] displacement from current position
    scores: torch.Tensor        # [..., n_agents, n_modes]


def map_tokens_from_features(params: ParamStore, cfg: ModelConfig, feats: torch.Tensor,
                             seg_mask: torch.Tensor) -> torch.Tensor:
    """Per-segment perceptron then max-pool per element; empty slots stay zero."""
    h = mlp_apply(params, specs(cfg)["map_enc"], feats)
    return max_pool_rows(h, seg_mask)


def agent_tokens_from_features(params: ParamStore, cfg: ModelConfig, feats: torch.Tensor,
                               mask: torch.Tensor) -> torch.Tensor:
    h = mlp_apply(params, specs(cfg)["agent_enc"], feats)
    return h * mask.unsqueeze(-1).to(h.dtype)


def scene_tokens(params: ParamStore, cfg: ModelConfig, batch: dict) -> SceneTokens:
    return SceneTokens(
        map_tokens=map_tokens_from_features(params, cfg, batch["map_feats"], batch["map_seg_mask"]),
        agent_tokens=agent_tokens_from_features(params, cfg, batch["agent_feats"], batch["agent_mask"]),
        map_mask=batch["map_mask"],
        agent_mask=batch["agent_mask"],
        ego_token=mlp_apply(params, specs(cfg)["ego_enc"], batch["ego_feats"]).unsqueeze(-2),
    )


def encode_map_tokens(scene: Scene, params: ParamStore, cfg: ModelConfig) -> tuple[torch.Tensor, torch.Tensor]:
    """Map tokens [n_map, d] and their validity mask for one scene."""
    feats, seg_mask, mask = map_features(scene, cfg)
    tok = map_tokens_from_features(params, cfg, torch.as_tensor(feats, dtype=DTYPE), torch.from_numpy(seg_mask))
    return tok, torch.from_numpy(mask)


def encode_agent_tokens(scene: Scene, params: ParamStore, cfg: ModelConfig) -> tuple[torch.Tensor, torch.Tensor]:
    feats, mask, _, _ = agent_features(scene, cfg)
    m = torch.from_numpy(mask)
    return agent_tokens_from_features(params, cfg, torch.as_tensor(feats, dtype=DTYPE), m), m


def forecast_agents(params: ParamStore, cfg: ModelConfig, tokens: SceneTokens) -> MotionForecast:
    """One cross-attention round of agent tokens over all scene tokens, then a head that
    emits n_modes trajectories (as displacements) and mode scores per agent."""
    sp = specs(cfg)
    ctx = cross_attention(params, sp["motion_attn"], tokens.agent_tokens, tokens.combined,
                          tokens.combined, tokens.mask)
    out = mlp_apply(params, sp["motion_head"], torch.cat([tokens.agent_tokens, ctx], dim=-1))
    n, k = cfg.n_modes, cfg.k
    traj = out[..., : n * k * 2].reshape(*out.shape[:-1], n, k, 2) * cfg.coord_scale
    scores = softmax(out[..., n * k * 2:])
    return MotionForecast(trajectories=traj, scores=scores)


def min_fde_mode(trajectories: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mode index whose final point is closest to the gt final point (lowest on ties)."""
    with torch.no_grad():
        fde = safe_norm(trajectories[..., -1, :] - gt[..., None, -1, :])
        return fde.argmin(dim=-1)


def motion_loss(forecast: MotionForecast, gt: torch.Tensor, agent_mask: torch.Tensor | None = None,
                weights: LossWeights = LossWeights()) -> torch.Tensor:
    """l1 on the minFDE mode plus focal classification with that mode as positive,
    averaged over valid agents (0 when there are none).

    ``gt`` holds displacements [..., n_agents, k, 2] matching ``forecast.trajectories``.
    """
    traj = forecast.trajectories
    if agent_mask is None:
        agent_mask = torch.ones(traj.shape[:-3], dtype=torch.bool)
    best = min_fde_mode(traj, gt)
    sel = torch.gather(traj, -3, best[..., None, None, None].expand(*best.shape, 1, *traj.shape[-2:])).squeeze(-3)
    reg = (sel - gt).abs().mean((-1, -2))
    cls = focal_loss(forecast.scores, best, weights.focal_gamma, weights.focal_alpha)
    m = agent_mask.to(reg.dtype)
    return ((reg + cls) * m).sum(-1) / m.sum(-1).clamp(min=1.0)
