"""Federated update primitives: clipping, Gaussian noise, weighted merge.

Updates are flat parameter-delta dictionaries.  Clipping bounds each
client's global L2 norm before noising, which is what gives the Gaussian
mechanism its sensitivity bound; aggregation weights clients by their
reported quality (macro-F1 discounted by calibration error).
"""

from __future__ import annotations

import numpy as np

CLIP_DEFAULT = 1.0
QUALITY_EPS = 1e-3


def flat_norm(update: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((v.astype(np.float64) ** 2).sum())
                             for v in update.values())))


def clip_update(update: dict[str, np.ndarray], clip: float = CLIP_DEFAULT) -> dict[str, np.ndarray]:
    """Scale the whole update so its global L2 norm is at most ``clip``."""
    if clip <= 0:
        raise ValueError("clip must be positive")
    norm = flat_norm(update)
    scale = 1.0 if norm <= clip else clip / norm
    return {k: v.astype(np.float64) * scale for k, v in update.items()}


def privatize(update: dict[str, np.ndarray], sigma: float,
              clip: float = CLIP_DEFAULT, seed: int = 0) -> dict[str, np.ndarray]:
    """Clip then add isotropic Gaussian noise with std sigma * clip."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    clipped = clip_update(update, clip)
    rng = np.random.default_rng(seed)
    return {k: v + rng.normal(0.0, sigma * clip, size=v.shape)
            for k, v in clipped.items()}


def quality_weight(f1: float, ece: float) -> float:
    if not 0.0 <= f1 <= 1.0 or ece < 0.0:
        raise ValueError("quality metrics out of range")
    return f1 / (ece + QUALITY_EPS)


def aggregate(updates: list[dict[str, np.ndarray]],
              qualities: list[tuple[float, float]]) -> dict[str, np.ndarray]:
    """Quality-weighted mean of client updates; qualities are (F1, ECE)."""
    if len(updates) != len(qualities) or not updates:
        raise ValueError("need one (F1, ECE) pair per update")
    weights = np.array([quality_weight(f1, ece) for f1, ece in qualities])
    total = float(weights.sum())
    if total == 0:
        weights = np.ones_like(weights)
        total = float(weights.sum())
    keys = updates[0].keys()
    for u in updates:
        if u.keys() != keys:
            raise ValueError("updates disagree on parameter names")
    out = {}
    for k in keys:
        out[k] = sum(w * u[k].astype(np.float64) for w, u in zip(weights, updates)) / total
    return out
