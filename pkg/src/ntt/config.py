from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    k: int = 6
    n_modes: int = 6
    m: int = 10
    n_map: int = 16
    n_agents: int = 16
    max_segments: int = 24
    route_spacing: float = 5.0
    cmd_threshold_deg: float = 15.0
    # input/output normalization
    coord_scale: float = 10.0
    speed_scale: float = 10.0
    size_scale: float = 5.0
    # target candidates
    along_step: float = 2.0
    lateral_offsets: tuple[float, ...] = (-1.0, 0.0, 1.0)
    centerline_range: float = 35.0
    fallback_range: float = 30.0
    fallback_halfwidth: float = 3.0
    grid_step: float = 2.0
    dedup_radius: float = 0.1
    n_cand_max: int = 320
    # loss geometry padding
    max_boundary_segments: int = 128
    max_divider_segments: int = 256

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "lateral_offsets" in d:
            d["lateral_offsets"] = tuple(d["lateral_offsets"])
        return cls(**d)


MODES = ("tgt_path", "tgt_cmd", "tgt_emb", "no_target")
TARGET_SOURCES = ("predicted", "label")


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown plan mode {mode!r}; expected one of {MODES}")
    return mode


@dataclass(frozen=True)
class LossWeights:
    plan: tuple[float, float, float, float] = (1.0, 1.0, 0.5, 1.0)  # col, bd, dir, reg
    stage1: tuple[float, float, float, float] = (1.0, 0.25, 0.0, 0.0)  # map, agent, target, plan
    stage2: tuple[float, float, float, float] = (1.0, 0.25, 0.2, 1.0)
    alpha_col: float = 3.0
    alpha_bd: float = 1.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    gt_agent_futures: bool = True

    def __post_init__(self):
        vals = (*self.plan, *self.stage1, *self.stage2, self.alpha_col, self.alpha_bd)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights and thresholds must be non-negative")

    def stage(self, stage: int) -> tuple[float, float, float, float]:
        if stage == 1:
            return self.stage1
        if stage == 2:
            return self.stage2
        raise ValueError(f"invalid training stage {stage!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class TrainConfig:
    epochs1: int = 20
    epochs2: int = 40
    batch_size: int = 8
    base_lr: float = 1e-4
    min_lr: float = 0.0
    weight_decay: float = 0.01
    seed: int = 0
    mode: str = "tgt_path"
    # which candidate conditions trajectory completion during training:
    # "predicted" (argmax, as at inference) or "label" (teacher forcing)
    target_source: str = "predicted"
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        check_mode(self.mode)
        if self.epochs1 < 1 or self.epochs2 < 1 or self.batch_size < 1:
            raise ValueError("need epochs1 >= 1, epochs2 >= 1, batch_size >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.target_source not in TARGET_SOURCES:
            raise ValueError(f"target_source must be one of {TARGET_SOURCES}")

    def to_dict(self) -> dict:
        return {
            "epochs1": self.epochs1, "epochs2": self.epochs2, "batch_size": self.batch_size,
            "base_lr": self.base_lr, "min_lr": self.min_lr, "weight_decay": self.weight_decay,
            "seed": self.seed, "mode": self.mode, "target_source": self.target_source, "weights": self.weights.to_dict(),
            "model": self.model.to_dict(),
        }
