"""Command-line entry point: data generation, training, evaluation, ablation, grad check, plan export."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import MODES, TrainConfig
from .simworld import DatasetConfig, generate_dataset, load_dataset, turning_subset

EXIT_ERROR = 1
GRAD_TOL = 1e-4


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def cmd_gen_data(a) -> int:
    n_val = a.val_scenes if a.val_scenes is not None else max(1, a.scenes // 4)
    ds = generate_dataset(DatasetConfig(n_train=a.scenes, n_val=n_val, seed=a.seed,
                                        turn_fraction=a.turn_fraction), a.out)
    _emit({"out": str(a.out), "counts": ds.manifest["counts"], "config_hash": ds.manifest["config_hash"]})
    return 0


def _train_config(a) -> TrainConfig:
    cfg = TrainConfig(mode=a.mode, seed=a.seed)
    updates = {k: getattr(a, k) for k in ("epochs1", "epochs2", "batch_size", "base_lr")
               if getattr(a, k) is not None}
    return replace(cfg, **updates)


def cmd_train(a) -> int:
    from .training import train

    ds = load_dataset(a.data)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    ck = train(_train_config(a), ds.train, curve_path=out / "loss_curve.csv")
    ck.save(out / "checkpoint")
    _emit({"checkpoint": str(out / "checkpoint"), "curve": str(out / "loss_curve.csv"),
           "steps": len(ck.history), "final_loss": ck.history[-1]["total"]})
    return 0


def cmd_eval(a) -> int:
    from .metrics import evaluate
    from .training import Checkpoint

    ck = Checkpoint.load(a.ckpt)
    scenes = load_dataset(a.data).split(a.split)
    if a.subset == "turning":
        scenes = turning_subset(scenes)
    rep = evaluate(ck, scenes, a.mode, subset=a.subset, l2_mode=a.l2_mode)
    text = rep.to_json() + "\n"
    if a.out:
        Path(a.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_ablate(a) -> int:
    from .ablation import run_ablation

    ds = load_dataset(a.data)
    base = TrainConfig()
    updates = {k: getattr(a, k) for k in ("epochs1", "epochs2", "batch_size", "base_lr")
               if getattr(a, k) is not None}
    rows = run_ablation(ds, a.modes.split(","), [int(s) for s in a.seeds.split(",")],
                        replace(base, **updates), out_csv=a.out, l2_mode=a.l2_mode,
                        workers=a.workers)
    _emit({"out": str(a.out), "rows": len(rows)})
    return 0


def cmd_grad_check(a) -> int:
    from .gradcheck import grad_check

    err = grad_check(a.seed, a.mode)
    _emit({"seed": a.seed, "mode": a.mode, "max_rel_error": err, "tolerance": GRAD_TOL, "ok": err < GRAD_TOL})
    return 0 if err < GRAD_TOL else EXIT_ERROR


def cmd_plan(a) -> int:
    from .planner import plan
    from .training import Checkpoint

    ck = Checkpoint.load(a.ckpt)
    ds = load_dataset(a.data)
    scene = next((s for s in ds.train + ds.val if s.scene_id == a.scene_id), None)
    if scene is None:
        raise KeyError(f"scene {a.scene_id!r} not found")
    rec = plan(scene, ck.params, ck.config.model, a.mode or ck.mode).record(top=10)
    text = json.dumps(rec, sort_keys=True, indent=2) + "\n"
    if a.out:
        Path(a.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs1", type=int)
    p.add_argument("--epochs2", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--base-lr", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ntt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic train/val dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=512, help="training scenes")
    p.add_argument("--val-scenes", type=int, help="validation scenes (default scenes/4)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--turn-fraction", type=float, default=0.75)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="two-stage training")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=MODES, default="tgt_path")
    p.add_argument("--seed", type=int, default=0)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--subset", choices=("all", "turning"), default="all")
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--l2-mode", choices=("instant", "cumulative"), default="instant")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate every (mode, seed)")
    p.add_argument("--data", required=True)
    p.add_argument("--modes", default=",".join(MODES))
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", required=True)
    p.add_argument("--l2-mode", choices=("instant", "cumulative"), default="instant")
    p.add_argument("--workers", type=int, default=1, help="processes, one seed each")
    _train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("grad-check", help="finite-difference check of the stage-2 loss")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=MODES, default="tgt_path")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("plan", help="export one plan record with the top-10 candidates")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scene-id", required=True)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "command": args.command}, sort_keys=True) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
