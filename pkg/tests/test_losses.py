"""Analytic gradients checked against central finite differences."""

import numpy as np
import pytest

from veriwave.losses import (ParameterError, loss_calibrated_ce, loss_msm,
                             loss_nce, loss_phase, loss_pretrain)


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        dn = f(x)
        flat[i] = old
        gf[i] = (up - dn) / (2 * h)
    return g


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def test_msm_gradient_fd():
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.normal(size=(6, 8))
        xh = rng.normal(size=(6, 8)) + 0.5  # keep away from the L1 kink
        mask = rng.random((6, 8)) < 0.6
        mask.flat[0] = True
        _, grad = loss_msm(x, xh, mask)
        num = fd_grad(lambda v: loss_msm(x, v, mask)[0], xh.copy())
        assert rel_err(grad, num) < 1e-4


def test_msm_validation():
    x = np.zeros((3, 4))
    with pytest.raises(ParameterError):
        loss_msm(x, x, np.zeros((3, 4), dtype=bool))
    with pytest.raises(ParameterError):
        loss_msm(x, np.zeros((3, 5)), np.ones((3, 4), dtype=bool))


def test_phase_gradient_fd():
    rng = np.random.default_rng(1)
    for _ in range(5):
        za = rng.normal(size=(8, 6)) + 0.5
        zb = rng.normal(size=(8, 6)) + 0.5
        _, ga, gb, _ = loss_phase(za, zb)
        num_a = fd_grad(lambda v: loss_phase(v, zb)[0], za.copy())
        num_b = fd_grad(lambda v: loss_phase(za, v)[0], zb.copy())
        assert rel_err(ga, num_a) < 1e-4
        assert rel_err(gb, num_b) < 1e-4


def test_phase_masks_zero_magnitude():
    za = np.ones((4, 4))
    zb = np.ones((4, 4))
    za[1, 0] = za[1, 1] = 0.0  # one complex channel entry vanishes
    _, ga, _, diag = loss_phase(za, zb)
    assert diag["masked_entries"] >= 1
    assert np.all(np.isfinite(ga))


def test_phase_identical_inputs_zero():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(10, 4)) + 1.0
    value, ga, gb, _ = loss_phase(z, z)
    assert value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(ga, -gb, atol=1e-12)


def test_nce_gradient_fd():
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = rng.normal(size=8)
        t = rng.normal(size=8)
        negs = [rng.normal(size=8) for _ in range(4)]
        _, grad = loss_nce(p, t, negs, tau_c=0.3)
        num = fd_grad(lambda v: loss_nce(v, t, negs, 0.3)[0], p.copy())
        assert rel_err(grad, num) < 1e-4


def test_nce_prefers_aligned_target():
    t = np.array([1.0, 0.0, 0.0])
    negs = [np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])]
    near, _ = loss_nce(np.array([0.9, 0.1, 0.0]), t, negs, 0.2)
    far, _ = loss_nce(np.array([0.0, 0.9, 0.1]), t, negs, 0.2)
    assert near < far


def test_nce_requires_positive_tau():
    with pytest.raises(ParameterError):
        loss_nce(np.ones(3), np.ones(3), [], 0.0)


def test_pretrain_combination():
    assert loss_pretrain((1.0, 2.0, 3.0), 0.5, 1.0, 2.0) == pytest.approx(8.5)
    with pytest.raises(ParameterError):
        loss_pretrain((1.0, 1.0, 1.0), -0.1, 1.0, 1.0)


def test_calibrated_ce_temperature_gradient_fd():
    rng = np.random.default_rng(4)
    for _ in range(5):
        logits = rng.normal(size=(12, 5)) * 3
        labels = rng.integers(0, 5, size=12)
        T = float(rng.uniform(0.5, 4.0))
        _, dT = loss_calibrated_ce(logits, labels, T)
        h = 1e-6
        up, _ = loss_calibrated_ce(logits, labels, T + h)
        dn, _ = loss_calibrated_ce(logits, labels, T - h)
        assert abs(dT - (up - dn) / (2 * h)) < 1e-4 * max(1.0, abs(dT))


def test_calibrated_ce_matches_naive():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(20, 4))
    labels = rng.integers(0, 4, size=20)
    T = 1.7
    z = logits / T
    probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    expect = -np.log(probs[np.arange(20), labels]).mean()
    value, _ = loss_calibrated_ce(logits, labels, T)
    assert value == pytest.approx(expect, rel=1e-12)
