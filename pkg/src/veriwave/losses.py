"""Pretraining and calibration losses with analytic gradients.

Each loss returns (value, gradient); gradients are checked against central
finite differences by the test suite.  The L1 subgradient at exact ties is
defined as 0 so results are deterministic.
"""

from __future__ import annotations

import numpy as np

from .windows import ParameterError


def loss_msm(x: np.ndarray, x_hat: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Masked L1 reconstruction; ``mask`` is a boolean array over x."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape or x.shape != x_hat.shape:
        raise ParameterError("shape mismatch")
    n = int(mask.sum())
    if n == 0:
        raise ParameterError("empty mask")
    diff = x_hat - x
    value = float(np.abs(diff[mask]).sum() / n)
    grad = np.zeros_like(x_hat, dtype=np.float64)
    grad[mask] = np.sign(diff[mask]) / n
    return value, grad


def _complex_pairs(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if z.ndim != 2 or z.shape[1] % 2 != 0:
        raise ParameterError("latent must be (T, 2m) with paired channels")
    return z[:, 0::2], z[:, 1::2]


def _unwrap_grad_phase(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    # Unwrapping adds integer multiples of 2*pi, which drop out of the
    # gradient; atan2 derivatives carry through unchanged.
    return np.unwrap(np.arctan2(im, re), axis=0)


def loss_phase(z_a: np.ndarray, z_b: np.ndarray, eps: float = 1e-12) -> tuple[float, np.ndarray, np.ndarray, dict]:
    """Dispersion of per-channel-pair phase-increment differences.

    Inputs are (T, 2m) real arrays whose even/odd columns pair into m
    complex channels.  Returns (value, grad_a, grad_b, diagnostics).
    Zero-magnitude entries are masked out of the variance (atan2 has no
    defined phase there) and counted in the diagnostics.
    """
    if z_a.shape != z_b.shape:
        raise ParameterError("shape mismatch")
    re_a, im_a = _complex_pairs(z_a)
    re_b, im_b = _complex_pairs(z_b)
    T, m = re_a.shape
    if T < 3:
        raise ParameterError("need at least 3 frames for increment variance")

    mag_a = re_a**2 + im_a**2
    mag_b = re_b**2 + im_b**2
    ok = (mag_a > eps) & (mag_b > eps)
    n_masked = int((~ok).sum())

    ph_a = _unwrap_grad_phase(re_a, im_a)
    ph_b = _unwrap_grad_phase(re_b, im_b)
    # d = (phase increments of a) - (phase increments of b), shape (T-1, m)
    d = np.diff(ph_a, axis=0) - np.diff(ph_b, axis=0)
    pair_ok = ok[1:] & ok[:-1]

    value = 0.0
    # dL/dd accumulated per increment, then chain to phases and to re/im.
    dL_dd = np.zeros_like(d)
    for c in range(m):
        idx = np.nonzero(pair_ok[:, c])[0]
        if len(idx) < 2:
            continue
        dc = d[idx, c]
        n = len(dc)
        mu = dc.mean()
        value += float(((dc - mu) ** 2).mean()) / m
        dL_dd[idx, c] = 2.0 * (dc - mu) / n / m

    # phase gradients: d_t = (ph_a[t+1]-ph_a[t]) - (ph_b[t+1]-ph_b[t])
    dL_dpa = np.zeros_like(ph_a)
    dL_dpa[1:] += dL_dd
    dL_dpa[:-1] -= dL_dd
    dL_dpb = -dL_dpa

    def to_reim(dL_dph, re, im, mag):
        safe = np.where(mag > eps, mag, 1.0)
        g_re = dL_dph * (-im / safe)
        g_im = dL_dph * (re / safe)
        g_re[mag <= eps] = 0.0
        g_im[mag <= eps] = 0.0
        return g_re, g_im

    ga_re, ga_im = to_reim(dL_dpa, re_a, im_a, mag_a)
    gb_re, gb_im = to_reim(dL_dpb, re_b, im_b, mag_b)
    grad_a = np.zeros_like(z_a, dtype=np.float64)
    grad_b = np.zeros_like(z_b, dtype=np.float64)
    grad_a[:, 0::2], grad_a[:, 1::2] = ga_re, ga_im
    grad_b[:, 0::2], grad_b[:, 1::2] = gb_re, gb_im
    return value, grad_a, grad_b, {"masked_entries": n_masked}


def _cosine(u: np.ndarray, v: np.ndarray):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ParameterError("zero vector in contrastive loss")
    c = float(u @ v / (nu * nv))
    # gradients of cosine wrt u and v
    gu = v / (nu * nv) - c * u / nu**2
    gv = u / (nu * nv) - c * v / nv**2
    return c, gu, gv


def loss_nce(p: np.ndarray, t: np.ndarray, negatives: list[np.ndarray], tau_c: float) -> tuple[float, np.ndarray]:
    """InfoNCE over cosine similarities; candidate set is {t} + negatives.

    Returns (value, grad wrt p).
    """
    if tau_c <= 0:
        raise ParameterError("tau_c must be positive")
    cands = [t] + list(negatives)
    sims, grads_p = [], []
    for v in cands:
        c, gu, _ = _cosine(p, v)
        sims.append(c / tau_c)
        grads_p.append(gu / tau_c)
    sims = np.array(sims)
    logits = sims - sims.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    value = float(-np.log(probs[0]))
    grad = -grads_p[0] + sum(probs[j] * grads_p[j] for j in range(len(cands)))
    return value, grad


def loss_pretrain(parts: tuple[float, float, float], lam1: float, lam2: float, lam3: float) -> float:
    if min(lam1, lam2, lam3) < 0:
        raise ParameterError("loss weights must be non-negative")
    return lam1 * parts[0] + lam2 * parts[1] + lam3 * parts[2]


def loss_calibrated_ce(logits: np.ndarray, labels: np.ndarray, T: float) -> tuple[float, float]:
    """Temperature-scaled cross-entropy and its analytic dV/dT."""
    if T <= 0:
        raise ParameterError("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    n = logits.shape[0]
    z = logits / T
    z -= z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    value = float(-np.mean(np.log(probs[np.arange(n), labels])))
    # dV/dT = (1/T^2) * mean( f_y - sum_k p_k f_k )
    expected = (probs * logits).sum(axis=1)
    dT = float(np.mean(logits[np.arange(n), labels] - expected) / T**2)
    return value, dT
