"""Train one model per (mode, seed) on the same data and tabulate full-set and turning-subset metrics."""

from __future__ import annotations

import csv
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig, check_mode
from .metrics import MetricsReport, evaluate
from .planner import build_params
from .simworld import Dataset, turning_subset
from .training import Checkpoint, featurize_all, train_stage

ABLATION_FIELDS = ("mode", "seed", "subset", "n", "l2_1s", "l2_2s", "l2_3s", "l2_avg",
                   "col_1s", "col_2s", "col_3s", "col_avg")


def report_row(mode: str, seed: int, rep: MetricsReport) -> dict:
    return {
        "mode": mode, "seed": seed, "subset": rep.subset, "n": rep.n,
        "l2_1s": rep.l2[0], "l2_2s": rep.l2[1], "l2_3s": rep.l2[2], "l2_avg": rep.l2_avg,
        "col_1s": rep.collision[0], "col_2s": rep.collision[1], "col_3s": rep.collision[2],
        "col_avg": rep.collision_avg,
    }


def _seed_rows(feats, subsets: dict, base: TrainConfig, modes: list[str], seed: int, l2_mode: str,
               log=None) -> list[dict]:
    params = build_params(base.model, seed)
    hist1 = train_stage(replace(base, seed=seed, mode=modes[0]), feats, params, 1)
    rows = []
    for mode in modes:
        cfg = replace(base, seed=seed, mode=mode)
        p = params.clone()
        hist = hist1 + train_stage(cfg, feats, p, 2, len(hist1))
        ck = Checkpoint(params=p, config=cfg, history=hist)
        for name, scenes in subsets.items():
            rows.append(report_row(mode, seed, evaluate(ck, scenes, mode, subset=name, l2_mode=l2_mode)))
            if log:
                log(rows[-1])
    return rows


def _worker(args) -> list[dict]:
    torch.set_num_threads(1)
    return _seed_rows(*args)


def run_ablation(dataset: Dataset, modes: list[str], seeds: list[int], base: TrainConfig | None = None,
                 out_csv: str | Path | None = None, l2_mode: str = "instant", log=None,
                 workers: int = 1) -> list[dict]:
    """Rows keyed (mode, seed, subset) for subsets "all" and "turning" of the validation split.

    Stage 1 never touches planner parameters and does not depend on the mode, so it runs
    once per seed and every mode's stage 2 starts from a copy of that result. This is
    bit-identical to training each (mode, seed) from scratch. With ``workers`` > 1 the
    seeds train in separate processes; rows come back in (seed, mode) order either way.
    """
    if not modes or not seeds:
        raise ValueError("need at least one mode and one seed")
    for m in modes:
        check_mode(m)
    base = base or TrainConfig()
    val = list(dataset.val)
    subsets = {"all": val, "turning": turning_subset(val)}
    feats = featurize_all(dataset.train, base.model)
    rows = []
    if workers <= 1 or len(seeds) == 1:
        for seed in seeds:
            rows += _seed_rows(feats, subsets, base, modes, seed, l2_mode, log)
    else:
        ctx = multiprocessing.get_context("spawn")
        jobs = [(feats, subsets, base, modes, seed, l2_mode) for seed in seeds]
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds)), mp_context=ctx) as pool:
            for seed_rows in pool.map(_worker, jobs):
                for r in seed_rows:
                    if log:
                        log(r)
                rows += seed_rows
    if out_csv is not None:
        write_rows(rows, out_csv)
    return rows


def write_rows(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=ABLATION_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def median_over_seeds(rows: list[dict], mode: str, subset: str, key: str) -> float:
    vals = [r[key] for r in rows if r["mode"] == mode and r["subset"] == subset]
    if not vals:
        raise KeyError(f"no rows for {mode}/{subset}")
    return float(np.median(vals))
