"""Float reference encoder: conv stem, local/grouped attention blocks, heads.

The attention uses a bounded elementwise score nonlinearity (tanh) with a
fixed window-size normalizer instead of softmax; this keeps the quantized
twin integer-only (elementwise lookup + matmuls + constant divisors) while
preserving local-in-time and grouped-over-subcarrier structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .windows import ParameterError, Window


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class ModelConfig:
    T: int = 128
    S: int = 30
    n_classes: int = 5
    d0: int = 16
    n_blocks: int = 2
    d_lat: int = 32
    w_t: int = 16
    group: int = 6

    def validate(self):
        if not 8 <= self.d0 <= 64 or not 1 <= self.n_blocks <= 4:
            raise ParameterError("desk-scale config out of range")
        if self.S % self.group != 0:
            raise ParameterError("S must be divisible by the attention group size")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("T", "S", "n_classes", "d0", "n_blocks", "d_lat", "w_t", "group")}


@dataclass
class FloatModel:
    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for v in self.params.values():
            if not np.all(np.isfinite(v)):
                raise ParameterError("non-finite model weights")


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    shapes = {
        "stem_proj_w": (2, cfg.d0),
        "stem_proj_b": (cfg.d0,),
        "stem_dw_w": (cfg.d0, 3, 3),
        "stem_dw_b": (cfg.d0,),
        "lat_w": (cfg.d0, cfg.d_lat),
        "lat_b": (cfg.d_lat,),
        "head_w": (cfg.d_lat, cfg.n_classes),
        "head_b": (cfg.n_classes,),
        "abst_w": (cfg.d_lat,),
        "abst_b": (1,),
    }
    for i in range(cfg.n_blocks):
        for name in ("tq", "tk", "tv", "gq", "gk", "gv"):
            shapes[f"blk{i}_{name}"] = (cfg.d0, cfg.d0)
        shapes[f"blk{i}_mlp_w1"] = (cfg.d0, 2 * cfg.d0)
        shapes[f"blk{i}_mlp_b1"] = (2 * cfg.d0,)
        shapes[f"blk{i}_mlp_w2"] = (2 * cfg.d0, cfg.d0)
        shapes[f"blk{i}_mlp_b2"] = (cfg.d0,)
    return shapes


def init_model(cfg: ModelConfig, seed: int) -> FloatModel:
    cfg.validate()
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[0] if len(shape) == 2 else int(np.prod(shape[1:])) or 1
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(max(fan_in, 1)), size=shape)
    return FloatModel(cfg, params)


def save_model(path, m: FloatModel):
    np.savez(path, __config__=np.array(json.dumps(m.config.to_dict())), **m.params)


def load_model(path) -> FloatModel:
    with np.load(path) as data:
        cfg = ModelConfig(**json.loads(str(data["__config__"])))
        params = {k: data[k] for k in data.files if k != "__config__"}
    return FloatModel(cfg, params)


def depthwise3x3(h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 depthwise convolution over (time, subcarrier)."""
    T, S, d0 = h.shape
    out = np.zeros_like(h)
    for dt in (-1, 0, 1):
        for ds in (-1, 0, 1):
            t0, t1 = max(0, -dt), min(T, T - dt)
            s0, s1 = max(0, -ds), min(S, S - ds)
            out[t0:t1, s0:s1] += h[t0 + dt : t1 + dt, s0 + ds : s1 + ds] * w[:, dt + 1, ds + 1]
    return out + b


def local_time_attention(q, k, v, w_t: int, raw_scores: list | None = None) -> np.ndarray:
    """Bounded-score attention over a centered time window of size w_t."""
    T = q.shape[0]
    d0 = q.shape[-1]
    inv = 1.0 / np.sqrt(d0)
    out = np.zeros_like(v)
    half = w_t // 2
    for off in range(-half, half):
        t0, t1 = max(0, -off), min(T, T - off)
        raw = (q[t0:t1] * k[t0 + off : t1 + off]).sum(-1, keepdims=True) * inv
        if raw_scores is not None:
            raw_scores.append(raw)
        out[t0:t1] += np.tanh(raw) * v[t0 + off : t1 + off]
    return out / w_t


def grouped_subcarrier_attention(q, k, v, g: int, raw_scores: list | None = None) -> np.ndarray:
    """Full bounded-score attention within subcarrier groups of size g."""
    T, S, d0 = q.shape
    inv = 1.0 / np.sqrt(d0)
    qg = q.reshape(T, S // g, g, d0)
    kg = k.reshape(T, S // g, g, d0)
    vg = v.reshape(T, S // g, g, d0)
    raw = np.einsum("tnad,tnbd->tnab", qg, kg) * inv
    if raw_scores is not None:
        raw_scores.append(raw)
    out = np.einsum("tnab,tnbd->tnad", np.tanh(raw), vg) / g
    return out.reshape(T, S, d0)


def forward(m: FloatModel, w: Window, record: dict | None = None):
    """Full forward pass; returns (logits, u_raw, latent).

    ``record`` optionally collects named intermediate activations for
    quantization calibration.
    """
    cfg = m.config
    if w.T != cfg.T or w.S != cfg.S:
        raise ParameterError(f"window shape ({w.T},{w.S}) does not match model ({cfg.T},{cfg.S})")
    p = m.params
    rec = record if record is not None else {}

    x = w.data.astype(np.float64)
    rec["input"] = x
    h = x @ p["stem_proj_w"] + p["stem_proj_b"]
    rec["stem_proj"] = h
    h = depthwise3x3(h, p["stem_dw_w"], p["stem_dw_b"])
    rec["stem_dw"] = h
    h = silu(h)
    rec["stem_act"] = h

    for i in range(cfg.n_blocks):
        q = h @ p[f"blk{i}_tq"]
        k = h @ p[f"blk{i}_tk"]
        v = h @ p[f"blk{i}_tv"]
        rec[f"blk{i}_tq"], rec[f"blk{i}_tk"], rec[f"blk{i}_tv"] = q, k, v
        tscores: list = []
        att = local_time_attention(q, k, v, cfg.w_t, raw_scores=tscores)
        rec[f"blk{i}_tscores"] = np.concatenate([s.ravel() for s in tscores])
        rec[f"blk{i}_tatt"] = att
        h = h + att
        rec[f"blk{i}_tres"] = h

        q = h @ p[f"blk{i}_gq"]
        k = h @ p[f"blk{i}_gk"]
        v = h @ p[f"blk{i}_gv"]
        rec[f"blk{i}_gq"], rec[f"blk{i}_gk"], rec[f"blk{i}_gv"] = q, k, v
        gscores: list = []
        att = grouped_subcarrier_attention(q, k, v, cfg.group, raw_scores=gscores)
        rec[f"blk{i}_gscores"] = np.concatenate([s.ravel() for s in gscores])
        rec[f"blk{i}_gatt"] = att
        h = h + att
        rec[f"blk{i}_gres"] = h

        mid = h @ p[f"blk{i}_mlp_w1"] + p[f"blk{i}_mlp_b1"]
        rec[f"blk{i}_mlp_mid"] = mid
        mid = silu(mid)
        rec[f"blk{i}_mlp_act"] = mid
        mlp = mid @ p[f"blk{i}_mlp_w2"] + p[f"blk{i}_mlp_b2"]
        rec[f"blk{i}_mlp_out"] = mlp
        h = h + mlp
        rec[f"blk{i}_mres"] = h

    pooled = h.mean(axis=(0, 1))
    rec["pooled"] = pooled
    z = pooled @ p["lat_w"] + p["lat_b"]
    rec["latent"] = z
    logits = z @ p["head_w"] + p["head_b"]
    u_raw = float(z @ p["abst_w"] + p["abst_b"][0])
    return logits, u_raw, z
