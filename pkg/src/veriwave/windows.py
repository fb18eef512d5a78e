"""Synthetic CSI window generation, standardization, and dataset files.

Windows are T x S x 2 float32 tensors (frames x subcarriers x real/imag).
Each class carries a sinusoidal phase modulation at a class-specific
Doppler frequency on a subset of multipath components, so the toy task is
separable by construction.  Everything is a pure function of (spec, seed).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ALLOWED_T = (64, 96, 128)

# Class Doppler table: cycles per window for class k.  Spacing of 3 FFT
# bins keeps the spectral signatures at least 2 bins apart.
DOPPLER_BASE = 4.0
DOPPLER_STEP = 3.0


class ParameterError(ValueError):
    pass


class DegenerateStatsError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    data: np.ndarray  # (T, S, 2) float32
    t_win: int
    zone: str
    label: int

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] != 2:
            raise ParameterError(f"window shape must be (T, S, 2), got {d.shape}")
        if d.shape[0] not in ALLOWED_T:
            raise ParameterError(f"T must be one of {ALLOWED_T}, got {d.shape[0]}")
        if not np.all(np.isfinite(d)):
            raise ParameterError("window contains non-finite values")
        if self.t_win < 0:
            raise ParameterError("t_win must be non-negative")
        d.setflags(write=False)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def S(self) -> int:
        return self.data.shape[1]

    def as_complex(self) -> np.ndarray:
        return self.data[:, :, 0].astype(np.float64) + 1j * self.data[:, :, 1].astype(np.float64)

    def replace_data(self, data: np.ndarray) -> "Window":
        return Window(np.ascontiguousarray(data, dtype=np.float32), self.t_win, self.zone, self.label)


@dataclass(frozen=True)
class DatasetSpec:
    seed: int
    n_windows: int
    T: int = 128
    S: int = 30
    n_classes: int = 5
    n_paths: int = 4
    snr_db: float = 20.0

    def validate(self):
        if self.n_windows <= 0 or self.T <= 0 or self.S <= 0 or self.n_paths <= 0:
            raise ParameterError("spec dimensions must be positive")
        if self.n_classes < 2:
            raise ParameterError("need at least 2 classes")
        if self.T not in ALLOWED_T:
            raise ParameterError(f"T must be one of {ALLOWED_T}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_windows": self.n_windows,
            "T": self.T,
            "S": self.S,
            "n_classes": self.n_classes,
            "n_paths": self.n_paths,
            "snr_db": self.snr_db if np.isfinite(self.snr_db) else "inf",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        snr = d["snr_db"]
        return cls(
            seed=d["seed"],
            n_windows=d["n_windows"],
            T=d["T"],
            S=d["S"],
            n_classes=d["n_classes"],
            n_paths=d["n_paths"],
            snr_db=float("inf") if snr == "inf" else float(snr),
        )


def class_doppler(k: int) -> float:
    return DOPPLER_BASE + DOPPLER_STEP * k


def _render_window(spec: DatasetSpec, rng: np.random.Generator, label: int) -> np.ndarray:
    T, S = spec.T, spec.S
    t = np.arange(T)[:, None]
    s = np.arange(S)[None, :]
    h = np.zeros((T, S), dtype=np.complex128)
    n_mod = max(1, spec.n_paths // 2)
    f_k = class_doppler(label)
    for p in range(spec.n_paths):
        gain = (0.5 + rng.random()) * np.exp(2j * np.pi * rng.random())
        beta = rng.uniform(-0.3, 0.3)  # phase slope across subcarriers
        phase = beta * s + np.zeros((T, 1))
        if p < n_mod:
            depth = rng.uniform(0.8, 1.4)
            psi = rng.uniform(0, 2 * np.pi)
            phase = phase + depth * np.sin(2 * np.pi * f_k * t / T + psi)
        h += gain * np.exp(1j * phase)
    if np.isfinite(spec.snr_db):
        sig_power = float(np.mean(np.abs(h) ** 2))
        noise_var = sig_power / (10.0 ** (spec.snr_db / 10.0))
        noise = rng.normal(size=(T, S)) + 1j * rng.normal(size=(T, S))
        h += noise * np.sqrt(noise_var / 2.0)
    out = np.empty((T, S, 2), dtype=np.float32)
    out[:, :, 0] = h.real
    out[:, :, 1] = h.imag
    return out


def generate_dataset(spec: DatasetSpec) -> list[Window]:
    """Deterministic synthetic dataset; labels round-robin over classes."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    windows = []
    for i in range(spec.n_windows):
        label = i % spec.n_classes
        data = _render_window(spec, rng, label)
        windows.append(Window(data, t_win=i, zone=f"zone-{chr(ord('A') + label % 3)}", label=label))
    return windows


def compute_stats(windows: list[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Per-subcarrier, per-channel mean/std over a (training) split."""
    stacked = np.stack([w.data for w in windows]).astype(np.float64)
    mean = stacked.mean(axis=(0, 1))
    std = stacked.std(axis=(0, 1))
    return mean, std


def standardize(w: Window, stats: tuple[np.ndarray, np.ndarray]) -> Window:
    mean, std = np.asarray(stats[0], dtype=np.float64), np.asarray(stats[1], dtype=np.float64)
    if mean.shape != (w.S, 2) or std.shape != (w.S, 2):
        raise ParameterError(f"stats shape must be ({w.S}, 2)")
    if np.any(std <= 0):
        raise DegenerateStatsError("zero/negative std in standardization stats")
    return w.replace_data((w.data.astype(np.float64) - mean) / std)


# ---------------------------------------------------------------------------
# Dataset files: manifest.json + per-split binary tensors.  Binary layout:
# 16-byte header (magic "ZKS1", T, S, count as little-endian uint32), then
# count * T * S * 2 little-endian float32 values, row-major.

MAGIC = b"ZKS1"


def save_split(path: Path, windows: list[Window]) -> str:
    if not windows:
        raise ParameterError("empty split")
    T, S = windows[0].T, windows[0].S
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<III", T, S, len(windows)))
        for w in windows:
            f.write(w.data.astype("<f4").tobytes())
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_split(path: Path, meta: list[dict]) -> list[Window]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ParameterError(f"bad magic in {path}")
    T, S, count = struct.unpack("<III", raw[4:16])
    if len(meta) != count:
        raise ParameterError("manifest metadata count mismatch")
    arr = np.frombuffer(raw[16:], dtype="<f4").reshape(count, T, S, 2)
    return [
        Window(np.array(arr[i]), t_win=m["t_win"], zone=m["zone"], label=m["label"])
        for i, m in enumerate(meta)
    ]


def save_dataset(out_dir: Path, spec: DatasetSpec, splits: dict[str, list[Window]],
                 stats: tuple[np.ndarray, np.ndarray]) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "spec": spec.to_dict(),
        "stats": {"mean": np.asarray(stats[0]).tolist(), "std": np.asarray(stats[1]).tolist()},
        "splits": {},
        "checksums": {},
    }
    for name, ws in splits.items():
        checksum = save_split(out_dir / f"{name}.bin", ws)
        manifest["checksums"][f"{name}.bin"] = checksum
        manifest["splits"][name] = [{"t_win": w.t_win, "zone": w.zone, "label": w.label} for w in ws]
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dataset(in_dir: Path) -> tuple[DatasetSpec, dict[str, list[Window]], tuple[np.ndarray, np.ndarray]]:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "manifest.json").read_text())
    for fname, want in manifest["checksums"].items():
        got = hashlib.sha256((in_dir / fname).read_bytes()).hexdigest()
        if got != want:
            raise ParameterError(f"checksum mismatch for {fname}")
    spec = DatasetSpec.from_dict(manifest["spec"])
    splits = {
        name: load_split(in_dir / f"{name}.bin", meta)
        for name, meta in manifest["splits"].items()
    }
    stats = (
        np.asarray(manifest["stats"]["mean"], dtype=np.float64),
        np.asarray(manifest["stats"]["std"], dtype=np.float64),
    )
    return spec, splits, stats
