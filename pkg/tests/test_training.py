import csv
import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from ntt import training
from ntt.ablation import ABLATION_FIELDS, median_over_seeds, run_ablation
from ntt.config import LossWeights, TrainConfig
from ntt.features import collate, featurize
from ntt.metrics import evaluate
from ntt.nn import backward
from ntt.planner import PLANNER_PREFIXES, build_params
from ntt.tokens import STAGE1_PREFIXES
from ntt.training import CURVE_FIELDS, Checkpoint, TrainingDiverged, compute_losses, epoch_means, train


@pytest.fixture
def cfg(small_cfg):
    return TrainConfig(epochs1=1, epochs2=1, batch_size=4, base_lr=1e-3, model=small_cfg)


def test_smoke_four_scenes(tiny_dataset, cfg):
    ck = train(cfg, tiny_dataset.train[:4])
    assert len(ck.history) == 2
    assert all(math.isfinite(r["total"]) for r in ck.history)
    assert [r["stage"] for r in ck.history] == [1, 2]


def test_stage1_leaves_planner_bit_identical(tiny_dataset, cfg):
    init = build_params(cfg.model, cfg.seed).snapshot()
    ck = train(replace(cfg, epochs1=2), tiny_dataset.train[:8], stages=(1,))
    after = ck.params.snapshot()
    planner = ck.params.names(PLANNER_PREFIXES)
    assert planner and all(np.array_equal(init[n], after[n]) for n in planner)
    assert any(not np.array_equal(init[n], after[n]) for n in ck.params.names(STAGE1_PREFIXES))


def test_stage1_planner_gradient_is_zero(tiny_dataset, cfg):
    params = build_params(cfg.model, 0)
    batch = collate([featurize(s, cfg.model) for s in tiny_dataset.train[:4]])
    total, parts = compute_losses(params, cfg.model, batch, "tgt_path", 1, LossWeights(), with_plan=True)
    assert float(parts["plan"].detach()) > 0
    grads = backward(total, params, params.names(PLANNER_PREFIXES))
    assert all(torch.equal(g, torch.zeros_like(g)) for g in grads.values())


def test_loss_decreases_on_32_scenes(tiny_dataset, cfg):
    ok = 0
    for seed in range(3):
        c = replace(cfg, seed=seed, epochs2=20, batch_size=8)
        hist = train(c, tiny_dataset.train[:32]).history
        means = epoch_means(hist, 2)
        ok += means[-1] < means[0]
    assert ok >= 2


def test_training_is_deterministic(tiny_dataset, cfg):
    a = train(cfg, tiny_dataset.train[:8])
    b = train(cfg, tiny_dataset.train[:8])
    assert a.history == b.history
    sa, sb = a.params.snapshot(), b.params.snapshot()
    assert all(np.array_equal(sa[n], sb[n]) for n in sa)


def test_divergence_guard(tiny_dataset, cfg, monkeypatch):
    real = training.compute_losses

    def poisoned(*args, **kwargs):
        total, parts = real(*args, **kwargs)
        return total * float("nan"), parts

    monkeypatch.setattr(training, "compute_losses", poisoned)
    with pytest.raises(TrainingDiverged) as err:
        train(cfg, tiny_dataset.train[:4])
    assert err.value.step == 0 and err.value.stage == 1


def test_checkpoint_and_curve_round_trip(tiny_dataset, cfg, tmp_path):
    ck = train(replace(cfg, mode="tgt_cmd", target_source="label"), tiny_dataset.train[:4],
               curve_path=tmp_path / "curve.csv")
    ck.save(tmp_path / "ck")
    back = Checkpoint.load(tmp_path / "ck")
    assert back.config == ck.config and back.mode == "tgt_cmd"
    assert all(torch.equal(back.params[n], ck.params[n].detach()) for n in ck.params.names())
    rows = list(csv.DictReader(open(tmp_path / "curve.csv")))
    assert tuple(rows[0]) == CURVE_FIELDS and len(rows) == len(ck.history)
    assert float(rows[-1]["total"]) == ck.history[-1]["total"]


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs1=0)
    with pytest.raises(ValueError):
        TrainConfig(base_lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(mode="tgt_map")
    with pytest.raises(ValueError):
        TrainConfig(target_source="oracle")
    with pytest.raises(ValueError):
        train(TrainConfig(), [])


def test_predicted_agent_futures_switch(tiny_dataset, cfg):
    params = build_params(cfg.model, 0)
    batch = collate([featurize(s, cfg.model) for s in tiny_dataset.train[:4] if s.agents] or
                    [featurize(tiny_dataset.train[0], cfg.model)])
    gt = compute_losses(params, cfg.model, batch, "tgt_path", 2, LossWeights())[1]["col"]
    pred = compute_losses(params, cfg.model, batch, "tgt_path", 2, LossWeights(gt_agent_futures=False))[1]["col"]
    assert torch.isfinite(pred) and float(pred.detach()) != float(gt.detach())


def test_ablation_rows_match_training_from_scratch(tiny_dataset, cfg, tmp_path):
    rows = run_ablation(tiny_dataset, ["tgt_path", "tgt_cmd"], [1], cfg, out_csv=tmp_path / "abl.csv")
    assert [(r["mode"], r["subset"]) for r in rows] == [
        ("tgt_path", "all"), ("tgt_path", "turning"), ("tgt_cmd", "all"), ("tgt_cmd", "turning")]
    ck = train(replace(cfg, seed=1, mode="tgt_cmd"), tiny_dataset.train)
    rep = evaluate(ck, list(tiny_dataset.val), "tgt_cmd")
    assert rows[2]["l2_avg"] == rep.l2_avg and rows[2]["col_avg"] == rep.collision_avg
    with open(tmp_path / "abl.csv") as f:
        back = list(csv.DictReader(f))
    assert tuple(back[0]) == ABLATION_FIELDS and float(back[2]["l2_avg"]) == rep.l2_avg
    assert median_over_seeds(rows, "tgt_cmd", "all", "l2_avg") == rep.l2_avg
    with pytest.raises(ValueError):
        run_ablation(tiny_dataset, [], [0], cfg)
