"""Two-stage training: scene/motion first, then everything with the full weighted loss."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses as L
from .config import LossWeights, ModelConfig, TrainConfig
from .features import SceneFeatures, collate, featurize
from .nn import AdamState, LrSchedule, ParamStore, adamw_step, backward, cosine_lr, load_checkpoint, save_checkpoint
from .planner import build_params, forward, mode_prefixes
from .scene import Scene
from .tokens import STAGE1_PREFIXES, motion_loss

CURVE_FIELDS = ("step", "stage", "epoch", "lr", "total", "agent", "target", "plan", "col", "bd", "dir", "reg")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, stage: int):
        super().__init__(f"non-finite loss at stage {stage} step {step}")
        self.step = step
        self.stage = stage


@dataclass
class Checkpoint:
    params: ParamStore
    config: TrainConfig
    history: list[dict] = field(default_factory=list)

    @property
    def mode(self) -> str:
        return self.config.mode

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.params, {"train_config": self.config.to_dict(),
                                            "schedule": {"steps": len(self.history)}})

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        params, doc = load_checkpoint(path)
        c = doc["train_config"]
        cfg = TrainConfig(
            epochs1=c["epochs1"], epochs2=c["epochs2"], batch_size=c["batch_size"], base_lr=c["base_lr"],
            min_lr=c["min_lr"], weight_decay=c["weight_decay"], seed=c["seed"], mode=c["mode"],
            target_source=c["target_source"],
            weights=LossWeights.from_dict(c["weights"]), model=ModelConfig.from_dict(c["model"]),
        )
        return cls(params=params, config=cfg)


def compute_losses(params: ParamStore, cfg: ModelConfig, batch: dict, mode: str, stage: int,
                   weights: LossWeights, with_plan: bool | None = None,
                   target_source: str = "predicted") -> tuple[torch.Tensor, dict]:
    """Batch-mean overall loss and its parts. The planner branch is skipped in stage 1
    unless ``with_plan`` forces it."""
    with_plan = (stage == 2) if with_plan is None else with_plan
    out = forward(params, cfg, batch, mode, teacher_forcing=target_source == "label", with_plan=with_plan)
    agent = motion_loss(out["forecast"], batch["agent_fut_rel"], batch["agent_mask"], weights).mean()
    zero = agent * 0.0
    parts = {"agent": agent, "target": zero, "plan": zero, "col": zero, "bd": zero, "dir": zero, "reg": zero}
    if with_plan:
        traj = out["traj"]
        if "probs" in out:
            onehot = torch.nn.functional.one_hot(batch["label"], batch["cands"].shape[-2]).to(traj.dtype)
            parts["target"] = L.target_bce(out["probs"], onehot, batch["cand_mask"]).mean()
        if weights.gt_agent_futures:
            fut = batch["agent_fut"]
        else:
            fc = out["forecast"]
            best = fc.scores.argmax(-1)
            sel = torch.gather(fc.trajectories, -3,
                               best[..., None, None, None].expand(*best.shape, 1, cfg.k, 2)).squeeze(-3)
            fut = sel + (batch["agent_fut"] - batch["agent_fut_rel"])
        parts["col"] = L.collision_term(traj, fut, batch["agent_mask"], weights.alpha_col).mean()
        parts["bd"] = L.boundary_term(traj, batch["bd_segs"], batch["bd_mask"], weights.alpha_bd).mean()
        parts["dir"] = L.direction_term(traj, batch["div_segs"], batch["div_mask"]).mean()
        parts["reg"] = L.regression_term(traj, batch["ego_gt"]).mean()
        parts["plan"] = L.planning_loss(parts["col"], parts["bd"], parts["dir"], parts["reg"], weights.plan)
    total = L.overall_loss(zero, parts["agent"], parts["target"], parts["plan"], stage, weights)
    return total, parts


def stage_parameters(params: ParamStore, stage: int, mode: str) -> list[str]:
    """Parameters updated in ``stage``: scene and motion only in stage 1, everything the
    mode uses in stage 2."""
    return params.names(STAGE1_PREFIXES if stage == 1 else mode_prefixes(mode))


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def train_stage(cfg: TrainConfig, feats: list[SceneFeatures], params: ParamStore, stage: int,
                first_step: int = 0) -> list[dict]:
    """Run one stage in place on ``params`` and return its loss rows.

    Each stage has its own AdamW state, its own cosine schedule over that stage's steps
    and its own shuffling stream, so stage 2 can resume from a shared stage-1 snapshot.
    """
    epochs = cfg.epochs1 if stage == 1 else cfg.epochs2
    names = stage_parameters(params, stage, cfg.mode)
    rng = np.random.default_rng([cfg.seed, stage])
    state = AdamState()
    sched = LrSchedule(cfg.base_lr, cfg.min_lr, max(1, epochs * math.ceil(len(feats) / cfg.batch_size)))
    rows: list[dict] = []
    for epoch in range(epochs):
        for idx in _batches(len(feats), cfg.batch_size, rng):
            lr = cosine_lr(len(rows), sched)
            total, parts = compute_losses(params, cfg.model, collate([feats[i] for i in idx]),
                                          cfg.mode, stage, cfg.weights, target_source=cfg.target_source)
            step = first_step + len(rows)
            if not math.isfinite(total.item()):
                raise TrainingDiverged(step, stage)
            grads = backward(total, params, names)
            adamw_step(params, grads, state, lr, weight_decay=cfg.weight_decay)
            row = {"step": step, "stage": stage, "epoch": epoch, "lr": lr, "total": total.item()}
            row.update({k: v.item() for k, v in parts.items()})
            rows.append(row)
    return rows


def featurize_all(scenes, cfg: ModelConfig) -> list[SceneFeatures]:
    return [s if isinstance(s, SceneFeatures) else featurize(s, cfg) for s in scenes]


def train(cfg: TrainConfig, scenes: list[Scene] | list[SceneFeatures], curve_path: str | Path | None = None,
          stages: tuple[int, ...] = (1, 2)) -> Checkpoint:
    """Train from the seed's initialization and return a checkpoint."""
    if not scenes:
        raise ValueError("training set is empty")
    feats = featurize_all(scenes, cfg.model)
    params = build_params(cfg.model, cfg.seed)
    history: list[dict] = []
    for stage in stages:
        history += train_stage(cfg, feats, params, stage, len(history))
    if curve_path is not None:
        write_curve(history, curve_path)
    return Checkpoint(params=params, config=cfg, history=history)


def write_curve(history: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CURVE_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in CURVE_FIELDS})


def epoch_means(history: list[dict], stage: int, key: str = "total") -> list[float]:
    by_epoch: dict[int, list[float]] = {}
    for row in history:
        if row["stage"] == stage:
            by_epoch.setdefault(row["epoch"], []).append(row[key])
    return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


def config_json(cfg: TrainConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)
