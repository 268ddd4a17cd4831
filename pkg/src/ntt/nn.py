"""Small float64 neural toolkit: named parameters, perceptrons, pooling, attention,
AdamW with decoupled decay, cosine schedule, gradient checking and checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np
import torch

DTYPE = torch.float64
CKPT_VERSION = "ckpt_v1"


class ParamStore:
    """Named float64 parameters, initialized uniformly in +-1/sqrt(fan_in) from ``seed``."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.tensors: dict[str, torch.Tensor] = {}

    def add(self, name: str, shape: tuple[int, ...], fan_in: int | None = None) -> torch.Tensor:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter {name!r}")
        fan_in = fan_in or shape[0]
        bound = 1.0 / math.sqrt(fan_in)
        values = self._rng.uniform(-bound, bound, size=shape)
        t = torch.tensor(values, dtype=DTYPE, requires_grad=True)
        self.tensors[name] = t
        return t

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self, prefixes: Iterable[str] | None = None) -> list[str]:
        if prefixes is None:
            return list(self.tensors)
        prefixes = tuple(prefixes)
        return [n for n in self.tensors if n.startswith(prefixes)]

    def numel(self) -> int:
        return sum(t.numel() for t in self.tensors.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.detach().numpy().copy() for n, t in self.tensors.items()}

    def clone(self) -> "ParamStore":
        out = ParamStore(self.seed)
        out.tensors = {n: t.detach().clone().requires_grad_(True) for n, t in self.tensors.items()}
        return out

    def zero_(self, prefixes: Iterable[str] | None = None) -> None:
        with torch.no_grad():
            for n in self.names(prefixes):
                self.tensors[n].zero_()


@dataclass(frozen=True)
class MLPSpec:
    """Stack of affine layers; ReLU after every layer except the last unless
    ``final_activation``."""

    name: str
    widths: tuple[int, ...]
    final_activation: bool = False

    def register(self, store: ParamStore) -> None:
        for i, (a, b) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            store.add(f"{self.name}.{i}.w", (a, b), fan_in=a)
            store.add(f"{self.name}.{i}.b", (b,), fan_in=a)

    @property
    def depth(self) -> int:
        return len(self.widths) - 1


def mlp_apply(params: ParamStore, spec: MLPSpec, x: torch.Tensor) -> torch.Tensor:
    if x.shape[-1] != spec.widths[0]:
        raise ValueError(f"{spec.name}: expected input width {spec.widths[0]}, got {x.shape[-1]}")
    for i in range(spec.depth):
        x = x @ params[f"{spec.name}.{i}.w"] + params[f"{spec.name}.{i}.b"]
        if i < spec.depth - 1 or spec.final_activation:
            x = torch.relu(x)
    return x


def max_pool_rows(x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Column-wise max over the row axis (-2). Rows with ``mask`` False are ignored;
    a batch entry with no valid rows pools to zeros."""
    if x.shape[-2] == 0:
        raise ValueError("max_pool_rows needs at least one row")
    if mask is None:
        return x.amax(dim=-2)
    m = mask.unsqueeze(-1)
    pooled = torch.where(m, x, torch.full_like(x, -torch.inf)).amax(dim=-2)
    return torch.where(m.any(dim=-2), pooled, torch.zeros_like(pooled))


def softmax(logits: torch.Tensor, mask: torch.Tensor | None = None, dim: int = -1,
            order_invariant: bool = False) -> torch.Tensor:
    """Max-subtracted softmax. Masked entries get probability 0; a fully masked row is all 0.

    With ``order_invariant`` the normalizer is summed in sorted order, so permuting the
    inputs permutes the output bit for bit.
    """
    if logits.shape[dim] == 0:
        raise ValueError("softmax over an empty axis")
    live = torch.ones_like(logits, dtype=torch.bool) if mask is None else mask
    if not bool(torch.isfinite(logits[live]).all()):
        raise ValueError("softmax received non-finite logits")
    z = torch.where(live, logits, torch.full_like(logits, -torch.inf))
    zmax = z.amax(dim=dim, keepdim=True)
    zmax = torch.where(torch.isfinite(zmax), zmax, torch.zeros_like(zmax)).detach()
    e = torch.where(live, torch.exp(z - zmax), torch.zeros_like(z))
    total = (e.sort(dim=dim).values if order_invariant else e).sum(dim=dim, keepdim=True)
    return e / torch.where(total > 0, total, torch.ones_like(total))


@dataclass(frozen=True)
class AttentionSpec:
    """Single-head scaled dot-product cross-attention with an output projection."""

    name: str
    d: int

    def register(self, store: ParamStore) -> None:
        for w in ("wq", "wk", "wv", "wo"):
            store.add(f"{self.name}.{w}", (self.d, self.d), fan_in=self.d)
        store.add(f"{self.name}.bo", (self.d,), fan_in=self.d)


def attention_weights(params: ParamStore, spec: AttentionSpec, q: torch.Tensor, k: torch.Tensor,
                      key_mask: torch.Tensor | None = None) -> torch.Tensor:
    qp = q @ params[f"{spec.name}.wq"]
    kp = k @ params[f"{spec.name}.wk"]
    logits = qp @ kp.transpose(-1, -2) / math.sqrt(spec.d)
    mask = None if key_mask is None else key_mask.unsqueeze(-2).expand_as(logits)
    return softmax(logits, mask)


def cross_attention(params: ParamStore, spec: AttentionSpec, q: torch.Tensor, k: torch.Tensor,
                    v: torch.Tensor, key_mask: torch.Tensor | None = None) -> torch.Tensor:
    """softmax(Q Wq (K Wk)^T / sqrt(d)) V Wv, then Wo, bo. Rows of Q are independent."""
    if k.shape[-2] == 0:
        raise ValueError("cross_attention needs at least one key")
    if not (q.shape[-1] == k.shape[-1] == v.shape[-1] == spec.d):
        raise ValueError("cross_attention width mismatch")
    w = attention_weights(params, spec, q, k, key_mask)
    out = w @ (v @ params[f"{spec.name}.wv"])
    return out @ params[f"{spec.name}.wo"] + params[f"{spec.name}.bo"]


def backward(loss: torch.Tensor, params: ParamStore | Mapping[str, torch.Tensor],
             names: Iterable[str] | None = None) -> dict[str, torch.Tensor]:
    """Gradients of a scalar ``loss``; parameters it does not touch get exact zeros."""
    if loss.numel() != 1:
        raise ValueError("backward needs a scalar loss")
    tensors = params.tensors if isinstance(params, ParamStore) else params
    names = list(tensors) if names is None else list(names)
    grads = torch.autograd.grad(loss, [tensors[n] for n in names], allow_unused=True)
    return {n: (torch.zeros_like(tensors[n]) if g is None else g) for n, g in zip(names, grads)}


@dataclass
class AdamState:
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: ParamStore | Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor],
               state: AdamState, lr: float, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8, weight_decay: float = 0.01) -> None:
    """In-place AdamW update of the parameters named in ``grads``."""
    tensors = params.tensors if isinstance(params, ParamStore) else params
    state.step += 1
    bc1 = 1 - beta1 ** state.step
    bc2 = 1 - beta2 ** state.step
    with torch.no_grad():
        for name, g in grads.items():
            p = tensors[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {tuple(g.shape)} != parameter {name} {tuple(p.shape)}")
            m = state.m.setdefault(name, torch.zeros_like(p))
            v = state.v.setdefault(name, torch.zeros_like(p))
            m.mul_(beta1).add_(g, alpha=1 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1 - beta2)
            if weight_decay:
                p.mul_(1 - lr * weight_decay)
            p.sub_(lr * (m / bc1) / ((v / bc2).sqrt() + eps))


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    min_lr: float = 0.0
    total_steps: int = 1

    def __post_init__(self):
        if not 0 <= self.min_lr <= self.base_lr:
            raise ValueError("need 0 <= min_lr <= base_lr")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


def cosine_lr(step: int, schedule: LrSchedule) -> float:
    step = min(max(step, 0), schedule.total_steps)
    cos = math.cos(math.pi * step / schedule.total_steps)
    return schedule.min_lr + 0.5 * (schedule.base_lr - schedule.min_lr) * (1 + cos)


def finite_diff_check(loss_fn: Callable[[], torch.Tensor], params: Mapping[str, torch.Tensor],
                      eps: float = 1e-5, analytic: Mapping[str, torch.Tensor] | None = None,
                      floor: float = 1e-8, max_entries: int | None = None, seed: int = 0) -> float:
    """Worst relative error between ``analytic`` (default: backward()) and central
    differences, with denominator max(|a|, |b|, floor).

    ``max_entries`` caps how many entries per tensor are probed (chosen at random).
    """
    if analytic is None:
        analytic = backward(loss_fn(), params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            a = analytic[name].reshape(-1)
            idx = range(flat.numel())
            if max_entries is not None and flat.numel() > max_entries:
                idx = np.sort(rng.choice(flat.numel(), max_entries, replace=False))
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                num = (up - down) / (2 * eps)
                ana = a[i].item()
                err = abs(num - ana) / max(abs(num), abs(ana), floor)
                worst = max(worst, err)
    return worst


def save_checkpoint(path: str | Path, params: ParamStore, manifest: dict | None = None) -> None:
    """Write ``manifest.json`` plus one little-endian float64 blob per parameter."""
    path = Path(path)
    (path / "params").mkdir(parents=True, exist_ok=True)
    entries = []
    for name, t in params.tensors.items():
        fname = f"params/{name}.bin"
        (path / fname).write_bytes(t.detach().numpy().astype("<f8").tobytes())
        entries.append({"name": name, "shape": list(t.shape), "file": fname})
    doc = {"version": CKPT_VERSION, "seed": params.seed, "params": entries}
    doc.update(manifest or {})
    (path / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict]:
    path = Path(path)
    doc = json.loads((path / "manifest.json").read_text())
    if doc.get("version") != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    store = ParamStore(seed=doc["seed"])
    for e in doc["params"]:
        values = np.frombuffer((path / e["file"]).read_bytes(), dtype="<f8").reshape(e["shape"])
        store.tensors[e["name"]] = torch.tensor(values.copy(), dtype=DTYPE, requires_grad=True)
    return store, doc
