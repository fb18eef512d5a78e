"""Session fixtures: one toy dataset and one trained, quantized, calibrated
model shared across the whole suite.  Training runs once (a couple of
minutes); everything downstream reuses it."""

import numpy as np
import pytest

from veriwave.model import ModelConfig, init_model
from veriwave.pipeline import calibrate_quantized
from veriwave.policy import default_tree
from veriwave.quantize import quantize_model
from veriwave.registry import Registry
from veriwave.trainer import train_toy
from veriwave.windows import DatasetSpec, compute_stats, generate_dataset, standardize

SEED = 7


@pytest.fixture(scope="session")
def dataset():
    spec = DatasetSpec(seed=SEED, n_windows=100)
    windows = generate_dataset(spec)
    n = len(windows)
    splits = {
        "train": windows[: int(0.6 * n)],
        "val": windows[int(0.6 * n): int(0.8 * n)],
        "test": windows[int(0.8 * n):],
    }
    stats = compute_stats(splits["train"])
    return spec, splits, stats


@pytest.fixture(scope="session")
def float_model(dataset):
    spec, splits, stats = dataset
    cfg = ModelConfig(T=spec.T, S=spec.S, n_classes=spec.n_classes)
    m = init_model(cfg, seed=SEED)
    train = [standardize(w, stats) for w in splits["train"]]
    return train_toy(m, train, epochs=15, lr=0.03, seed=SEED)


@pytest.fixture(scope="session")
def quantized(dataset, float_model):
    _, splits, stats = dataset
    calib = [standardize(w, stats) for w in splits["train"][:16]]
    return quantize_model(float_model, calib)


@pytest.fixture(scope="session")
def calibrated(dataset, quantized):
    """(final quantized model, profile, coverage-risk curve)."""
    _, splits, stats = dataset
    return calibrate_quantized(quantized, splits["val"], stats)


@pytest.fixture(scope="session")
def registry_entry(dataset, calibrated):
    spec, _, _ = dataset
    qm, profile, _ = calibrated
    reg = Registry()
    tree = default_tree(spec.n_classes)
    entry = reg.register(qm, tree, profile, ctx={"armed": True})
    return reg, entry


@pytest.fixture(scope="session")
def audit_key():
    return b"test-suite-audit-key"


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(SEED)
