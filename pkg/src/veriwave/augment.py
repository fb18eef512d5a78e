"""Physics-preserving augmentations and threat-model perturbations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .windows import ParameterError, Window

PERTURB_KINDS = ("actuation", "jitter_drop", "drift", "replay_mosaic", "jamming")


@dataclass(frozen=True)
class AugmentSpec:
    mask_ratio: float = 0.15
    phase_ramp_rad_per_frame: float = 0.0
    reverb_kernel_len: int = 0
    power_jitter_db: float = 0.0

    def validate(self):
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ParameterError("mask_ratio must be in [0, 1]")
        if abs(self.phase_ramp_rad_per_frame) > 0.02 + 1e-12:
            raise ParameterError("|phase ramp| must be <= 0.02 rad/frame")
        if not 0 <= self.reverb_kernel_len <= 9:
            raise ParameterError("reverb kernel length must be in [0, 9]")
        if abs(self.power_jitter_db) > 3.0 + 1e-12:
            raise ParameterError("|power jitter| must be <= 3 dB")


def _reverb_kernel(length: int, rng: np.random.Generator) -> np.ndarray:
    # Exponentially decaying random taps; tap 0 is unity so length<=1 is
    # the identity.  The coefficient distribution is an artifact choice.
    taps = np.zeros(length, dtype=np.complex128)
    taps[0] = 1.0
    for j in range(1, length):
        taps[j] = 0.4 * np.exp(-0.8 * j) * (rng.normal() + 1j * rng.normal())
    return taps


def augment(w: Window, a: AugmentSpec, seed: int) -> Window:
    a.validate()
    rng = np.random.default_rng(seed)
    h = w.as_complex()
    T, S = h.shape

    n_mask = int(np.floor(a.mask_ratio * S))
    masked = rng.permutation(S)[:n_mask]

    if a.phase_ramp_rad_per_frame != 0.0:
        t = np.arange(T)[:, None]
        h = h * np.exp(1j * a.phase_ramp_rad_per_frame * t)

    if a.reverb_kernel_len > 1:
        taps = _reverb_kernel(a.reverb_kernel_len, rng)
        out = np.zeros_like(h)
        for j, tap in enumerate(taps):
            out[j:] += tap * h[: T - j]
        h = out

    if a.power_jitter_db != 0.0:
        h = h * 10.0 ** (a.power_jitter_db / 20.0)

    h[:, masked] = 0.0

    data = np.stack([h.real, h.imag], axis=-1)
    return w.replace_data(data)


def perturb(w: Window, kind: str, intensity: float, seed: int, past: Window | None = None) -> Window:
    """Threat-model transforms; intensity 0 is the identity for every kind."""
    if kind not in PERTURB_KINDS:
        raise ParameterError(f"unknown perturbation kind {kind!r}")
    if intensity < 0:
        raise ParameterError("intensity must be >= 0")
    if intensity == 0:
        return w.replace_data(w.data.copy())
    rng = np.random.default_rng(seed)
    h = w.as_complex()
    T, S = h.shape
    level = min(intensity, 1.0)

    if kind == "actuation":
        # Slow-varying structured interference across time and subcarriers.
        rms = np.sqrt(np.mean(np.abs(h) ** 2))
        t = np.arange(T)[:, None]
        s = np.arange(S)[None, :]
        f_slow = rng.uniform(0.5, 1.5)
        comp = np.exp(1j * (2 * np.pi * f_slow * t / T + 0.2 * s + rng.uniform(0, 2 * np.pi)))
        h = h + 0.5 * level * rms * comp

    elif kind == "jitter_drop":
        frac = level * rng.uniform(0.1, 0.3)
        n_drop = int(round(frac * T))
        interior = np.arange(1, T - 1)
        dropped = np.sort(rng.permutation(interior)[:n_drop])
        kept = np.setdiff1d(np.arange(T), dropped)
        re = np.empty_like(h.real)
        im = np.empty_like(h.imag)
        for s_idx in range(S):
            re[:, s_idx] = np.interp(np.arange(T), kept, h.real[kept, s_idx])
            im[:, s_idx] = np.interp(np.arange(T), kept, h.imag[kept, s_idx])
        h = re + 1j * im

    elif kind == "drift":
        slope = 0.02 * intensity
        t = np.arange(T)[:, None]
        h = h * np.exp(1j * slope * t)

    elif kind == "replay_mosaic":
        if past is None:
            raise ParameterError("replay_mosaic requires a past window")
        alpha = 0.4 * level
        h = (1 - alpha) * h + alpha * past.as_complex()

    elif kind == "jamming":
        rms = np.sqrt(np.mean(np.abs(h) ** 2))
        n_sub = max(1, S // 10)
        subs = rng.permutation(S)[:n_sub]
        n_bursts = 1 + int(2 * level)
        for _ in range(n_bursts):
            start = rng.integers(0, max(1, T - 8))
            burst = slice(start, min(T, start + 8))
            noise = rng.normal(size=(burst.stop - burst.start, n_sub)) \
                + 1j * rng.normal(size=(burst.stop - burst.start, n_sub))
            h[burst, subs] += 2.0 * level * rms * noise

    data = np.stack([h.real, h.imag], axis=-1)
    return w.replace_data(data)
