"""Toy trainer for fixture models.

The training loop runs on a torch mirror of the numpy forward pass; the
numpy implementation in :mod:`veriwave.model` stays the inference
reference.  A parity test keeps the two in agreement.
"""

from __future__ import annotations

import numpy as np
import torch

from .model import FloatModel, ModelConfig
from .windows import Window


def params_to_torch(params: dict[str, np.ndarray]) -> dict[str, torch.Tensor]:
    return {k: torch.tensor(v, dtype=torch.float64, requires_grad=True) for k, v in params.items()}


def forward_torch(cfg: ModelConfig, p: dict[str, torch.Tensor], x: torch.Tensor) -> torch.Tensor:
    """Batched mirror of model.forward; x is (B, T, S, 2), returns (B, K) logits."""
    T, S, d0 = cfg.T, cfg.S, cfg.d0
    h = x @ p["stem_proj_w"] + p["stem_proj_b"]

    acc = torch.zeros_like(h)
    for dt in (-1, 0, 1):
        for ds in (-1, 0, 1):
            t0, t1 = max(0, -dt), min(T, T - dt)
            s0, s1 = max(0, -ds), min(S, S - ds)
            acc = acc.clone()
            acc[:, t0:t1, s0:s1] += h[:, t0 + dt : t1 + dt, s0 + ds : s1 + ds] * p["stem_dw_w"][:, dt + 1, ds + 1]
    h = torch.nn.functional.silu(acc + p["stem_dw_b"])

    inv = 1.0 / np.sqrt(d0)
    half = cfg.w_t // 2
    for i in range(cfg.n_blocks):
        q, k, v = (h @ p[f"blk{i}_{n}"] for n in ("tq", "tk", "tv"))
        out = torch.zeros_like(v)
        for off in range(-half, half):
            t0, t1 = max(0, -off), min(T, T - off)
            raw = (q[:, t0:t1] * k[:, t0 + off : t1 + off]).sum(-1, keepdim=True) * inv
            out = out.clone()
            out[:, t0:t1] += torch.tanh(raw) * v[:, t0 + off : t1 + off]
        h = h + out / cfg.w_t

        q, k, v = (h @ p[f"blk{i}_{n}"] for n in ("gq", "gk", "gv"))
        g = cfg.group
        qg = q.reshape(-1, T, S // g, g, d0)
        kg = k.reshape(-1, T, S // g, g, d0)
        vg = v.reshape(-1, T, S // g, g, d0)
        raw = torch.einsum("xtnad,xtnbd->xtnab", qg, kg) * inv
        att = torch.einsum("xtnab,xtnbd->xtnad", torch.tanh(raw), vg) / g
        h = h + att.reshape(-1, T, S, d0)

        mid = torch.nn.functional.silu(h @ p[f"blk{i}_mlp_w1"] + p[f"blk{i}_mlp_b1"])
        h = h + mid @ p[f"blk{i}_mlp_w2"] + p[f"blk{i}_mlp_b2"]

    pooled = h.mean(dim=(1, 2))
    z = pooled @ p["lat_w"] + p["lat_b"]
    return z @ p["head_w"] + p["head_b"]


def train_toy(m: FloatModel, windows: list[Window], epochs: int = 20, lr: float = 0.01,
              momentum: float = 0.9, batch_size: int = 16, seed: int = 0) -> FloatModel:
    """SGD with momentum on cross-entropy; returns a new trained FloatModel."""
    cfg = m.config
    labeled = [w for w in windows if w.label is not None]
    if not labeled:
        raise ValueError("train_toy needs labeled windows")
    x = torch.tensor(np.stack([w.data for w in labeled]), dtype=torch.float64)
    y = torch.tensor([w.label for w in labeled], dtype=torch.long)

    p = params_to_torch(m.params)
    opt = torch.optim.SGD(p.values(), lr=lr, momentum=momentum)
    gen = torch.Generator().manual_seed(seed)
    n = len(labeled)
    for _ in range(epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            opt.zero_grad()
            logits = forward_torch(cfg, p, x[idx])
            loss = torch.nn.functional.cross_entropy(logits, y[idx])
            loss.backward()
            torch.nn.utils.clip_grad_norm_(p.values(), 1.0)
            opt.step()

    trained = {k: t.detach().numpy().copy() for k, t in p.items()}
    return FloatModel(config=cfg, params=trained)
