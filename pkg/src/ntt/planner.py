"""Navigation-conditioned target generation and target-conditioned trajectory completion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import tokens as tok
from .candidates import CandidateSet
from .config import ModelConfig, check_mode
from .features import collate, featurize
from .navpath import COMMANDS
from .nn import AttentionSpec, MLPSpec, ParamStore, cross_attention, max_pool_rows, mlp_apply, softmax
from .scene import PlannedTrajectory, Scene

PLANNER_PREFIXES = ("nav.", "scorer.", "complete.", "cmd_emb", "intent_emb")
NO_TARGET = np.array([np.nan, np.nan])


def specs(cfg: ModelConfig) -> dict:
    d, h = cfg.d, cfg.d // 2
    return {
        "g_n0": MLPSpec("nav.g_n0", (4, h), final_activation=True),
        "g_n1": MLPSpec("nav.g_n1", (2 * h, h), final_activation=True),
        "g_e": MLPSpec("nav.g_e", (2, 2 * h), final_activation=True),
        "g_1": MLPSpec("scorer.g_1", (2, d), final_activation=True),
        "g_2": MLPSpec("scorer.g_2", (2 * d, d), final_activation=True),
        "score_attn": AttentionSpec("scorer.attn", d),
        "g_3": MLPSpec("scorer.g_3", (3 * d, 1)),
        "g_4": MLPSpec("complete.g_4", (2, d, d)),
        "complete_attn": AttentionSpec("complete.attn", d),
        "g_5": MLPSpec("complete.g_5", (2 * d, d, d, 2 * cfg.k)),
    }


def register(store: ParamStore, cfg: ModelConfig) -> None:
    if cfg.d % 2:
        raise ValueError("hidden width must be even")
    for s in specs(cfg).values():
        s.register(store)
    store.add("cmd_emb", (len(COMMANDS), cfg.d), fan_in=cfg.d)
    store.add("intent_emb", (cfg.d,), fan_in=cfg.d)


def build_params(cfg: ModelConfig, seed: int = 0) -> ParamStore:
    store = ParamStore(seed)
    tok.register(store, cfg)
    register(store, cfg)
    return store


def mode_prefixes(mode: str) -> tuple[str, ...]:
    """Parameter-name prefixes that a mode's planner actually uses."""
    check_mode(mode)
    intent = {"tgt_path": ("nav.",), "tgt_cmd": ("cmd_emb",), "tgt_emb": ("intent_emb",),
              "no_target": ("nav.",)}[mode]
    heads = ("complete.attn", "complete.g_5") if mode == "no_target" else ("scorer.", "complete.")
    return tok.STAGE1_PREFIXES + intent + heads


def _pool_concat(x: torch.Tensor) -> torch.Tensor:
    pooled = max_pool_rows(x).unsqueeze(-2).expand_as(x)
    return torch.cat([x, pooled], dim=-1)


def encode_nav_instance(params: ParamStore, cfg: ModelConfig, nodes: torch.Tensor,
                        ego_nav: torch.Tensor) -> torch.Tensor:
    """Instance-level navigation feature from [..., m, 4] node features.

    Two layers of concat(g(F), maxpool(g(F))) then maxpool, plus g_e of the ego position
    in the window frame.
    """
    if nodes.shape[-2] == 0:
        raise ValueError("navigation path has no nodes")
    sp = specs(cfg)
    x = torch.cat([nodes[..., :2] / cfg.coord_scale, nodes[..., 2:]], dim=-1)
    f1 = _pool_concat(mlp_apply(params, sp["g_n0"], x))
    f2 = _pool_concat(mlp_apply(params, sp["g_n1"], f1))
    return max_pool_rows(f2) + mlp_apply(params, sp["g_e"], ego_nav / cfg.coord_scale)


def intent_feature(params: ParamStore, cfg: ModelConfig, mode: str, batch: dict) -> torch.Tensor:
    """The navigation feature for ``mode``: path encoding, command embedding or a single
    learned embedding."""
    check_mode(mode)
    if mode in ("tgt_path", "no_target"):
        return encode_nav_instance(params, cfg, batch["nav_nodes"], batch["nav_ego"])
    if mode == "tgt_cmd":
        return params["cmd_emb"][batch["cmd"]]
    lead = batch["nav_nodes"].shape[:-2]
    return params["intent_emb"].expand(*lead, cfg.d)


def _affine_parts(params: ParamStore, name: str, parts: list[torch.Tensor]) -> torch.Tensor:
    """concat(parts) @ W + b without materializing the concatenation; parts broadcast."""
    w = params[f"{name}.0.w"]
    out, row = params[f"{name}.0.b"], 0
    for x in parts:
        out = out + x @ w[row:row + x.shape[-1]]
        row += x.shape[-1]
    return out


def candidate_logits(params: ParamStore, cfg: ModelConfig, cands: torch.Tensor, nav: torch.Tensor,
                     scene_tok: torch.Tensor, tok_mask: torch.Tensor | None = None) -> torch.Tensor:
    # g_2 and g_3 act on concatenations with the per-scene P; applying their weights
    # blockwise lets P broadcast over candidates instead of being copied per row.
    sp = specs(cfg)
    f = mlp_apply(params, sp["g_1"], cands / cfg.coord_scale)
    p = nav.unsqueeze(-2)
    f1 = torch.relu(_affine_parts(params, "scorer.g_2", [f, p]))
    f2 = cross_attention(params, sp["score_attn"], f1, scene_tok, scene_tok, tok_mask)
    return _affine_parts(params, "scorer.g_3", [p, f1, f2]).squeeze(-1)


def score_candidates(params: ParamStore, cfg: ModelConfig, cands: torch.Tensor, nav: torch.Tensor,
                     scene_tok: torch.Tensor, tok_mask: torch.Tensor | None = None,
                     cand_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Probability over candidates [..., N_t]; padded candidates get 0. Permuting the
    candidates permutes the result exactly."""
    return softmax(candidate_logits(params, cfg, cands, nav, scene_tok, tok_mask), cand_mask,
                   order_invariant=True)


def select_target(probs, coords):
    """Coordinates of the highest-probability candidate (lowest index on ties)."""
    if isinstance(probs, torch.Tensor):
        idx = probs.argmax(dim=-1)
        return torch.gather(coords, -2, idx[..., None, None].expand(*idx.shape, 1, 2)).squeeze(-2)
    probs = np.asarray(probs)
    return np.asarray(coords)[int(np.argmax(probs))]


def complete_trajectory(params: ParamStore, cfg: ModelConfig, target: torch.Tensor, nav: torch.Tensor,
                        scene_tok: torch.Tensor, tok_mask: torch.Tensor | None = None) -> torch.Tensor:
    """[..., k, 2] ego-frame trajectory from the target point and navigation feature."""
    sp = specs(cfg)
    q = nav + mlp_apply(params, sp["g_4"], target / cfg.coord_scale)
    return _decode(params, cfg, q, scene_tok, tok_mask)


def direct_trajectory(params: ParamStore, cfg: ModelConfig, nav: torch.Tensor, scene_tok: torch.Tensor,
                      tok_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Ablation without a target: the navigation feature itself is the query."""
    return _decode(params, cfg, nav, scene_tok, tok_mask)


def _decode(params, cfg, q, scene_tok, tok_mask):
    sp = specs(cfg)
    q1 = cross_attention(params, sp["complete_attn"], q.unsqueeze(-2), scene_tok, scene_tok,
                         None if tok_mask is None else tok_mask).squeeze(-2)
    out = mlp_apply(params, sp["g_5"], torch.cat([q, q1], dim=-1))
    return out.reshape(*out.shape[:-1], cfg.k, 2) * cfg.coord_scale


def forward(params: ParamStore, cfg: ModelConfig, batch: dict, mode: str, teacher_forcing: bool = False,
            with_motion: bool = True, with_plan: bool = True) -> dict:
    """Full network on a collated batch.

    With ``teacher_forcing`` the trajectory is conditioned on the labelled candidate
    instead of the argmax.
    """
    check_mode(mode)
    st = tok.scene_tokens(params, cfg, batch)
    out: dict = {"tokens": st}
    if with_motion:
        out["forecast"] = tok.forecast_agents(params, cfg, st)
    if not with_plan:
        return out
    nav = intent_feature(params, cfg, mode, batch)
    es, es_mask = st.combined, st.mask
    if mode == "no_target":
        out["traj"] = direct_trajectory(params, cfg, nav, es, es_mask)
        return out
    probs = score_candidates(params, cfg, batch["cands"], nav, es, es_mask, batch["cand_mask"])
    if teacher_forcing:
        idx = batch["label"]
        target = torch.gather(batch["cands"], -2, idx[..., None, None].expand(*idx.shape, 1, 2)).squeeze(-2)
    else:
        target = select_target(probs.detach(), batch["cands"])
    out.update(probs=probs, target=target,
               traj=complete_trajectory(params, cfg, target, nav, es, es_mask))
    return out


@dataclass
class PlanResult:
    scene_id: str
    mode: str
    trajectory: PlannedTrajectory
    probs: np.ndarray
    candidates: CandidateSet
    target: np.ndarray

    def record(self, top: int = 10) -> dict:
        order = np.argsort(-self.probs, kind="stable")[:top]
        return {
            "scene_id": self.scene_id,
            "mode": self.mode,
            "target": None if np.isnan(self.target).any() else [float(v) for v in self.target],
            "top_candidates": [
                {"x": float(self.candidates.coords[i, 0]), "y": float(self.candidates.coords[i, 1]),
                 "prob": float(self.probs[i])}
                for i in order
            ],
            "trajectory": [[float(x), float(y)] for x, y in self.trajectory.points],
        }


def plan_batch(params: ParamStore, cfg: ModelConfig, scenes: list[Scene], mode: str) -> list[PlanResult]:
    feats = [featurize(s, cfg) for s in scenes]
    with torch.no_grad():
        out = forward(params, cfg, collate(feats), mode, with_motion=False)
    results = []
    for i, s in enumerate(scenes):
        traj = PlannedTrajectory(out["traj"][i].numpy().copy())
        if mode == "no_target":
            empty = CandidateSet(coords=np.zeros((0, 2)), source=np.zeros(0, dtype=int))
            results.append(PlanResult(s.scene_id, mode, traj, np.zeros(0), empty, NO_TARGET.copy()))
            continue
        n = int(feats[i].cand_mask.sum())
        cset = CandidateSet(coords=feats[i].cands[:n].copy(), source=feats[i].cand_source[:n].copy())
        results.append(PlanResult(s.scene_id, mode, traj, out["probs"][i, :n].numpy().copy(), cset,
                                  out["target"][i].numpy().copy()))
    return results


def plan(scene: Scene, params: ParamStore, cfg: ModelConfig, mode: str = "tgt_path") -> PlanResult:
    """Window -> nodes -> navigation feature -> candidates -> scores -> argmax target -> trajectory."""
    return plan_batch(params, cfg, [scene], mode)[0]
