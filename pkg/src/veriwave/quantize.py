"""Fixed-point (int8) twin of the float encoder.

All arithmetic after input quantization is integer-only: int8 tensors,
int32/int64 accumulators, multiplier+shift requantization, and 256-entry
lookup tables for the nonlinearities.  Each lookup table is certified at
quantization time to stay within 1% of its float nonlinearity's output
range over the calibration activations.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import model as fm
from .model import FloatModel, ModelConfig
from .sponge import hash_bytes
from .windows import ParameterError, Window

MAGIC = b"ZKQM"
VERSION = 1
QBITS = 8
CONF_SCALE = 128  # confidence codes are steps of 2^-7
CONF_TABLE_SIZE = 64
TANH_INPUT_CAP = 3.0  # tanh is saturated beyond this; keeps table error < 1%

QMAX8 = 127
QMAX16 = 32767

# Activation sites that must stay int8: lookup-table inputs and outputs
# (tables have 256 int8 entries) and the latent, which the commitment
# circuit bit-decomposes as signed bytes.  Everything else in the stream
# is internal arithmetic and runs at 16-bit resolution, which keeps the
# accumulated requantization noise well under the float decision margins.
_INT8_SITES = ("stem_dw", "stem_act", "latent")
_INT8_SUFFIXES = ("_tscores", "_gscores", "_mlp_mid", "_mlp_act")


def _site_qmax(name: str) -> int:
    if name in _INT8_SITES or name.endswith(_INT8_SUFFIXES):
        return QMAX8
    return QMAX16


class QuantizationError(ValueError):
    pass


def _quant_multiplier(m: float) -> tuple[int, int]:
    """Represent a positive real multiplier as (mi, shift): y = (x*mi) >> shift."""
    if m <= 0:
        raise QuantizationError("non-positive requant multiplier")
    sh = 31
    mi = round(m * (1 << sh))
    while mi >= (1 << 31):
        sh -= 1
        mi = round(m * (1 << sh))
    if mi == 0:
        raise QuantizationError("requant multiplier underflow")
    return mi, sh


def _requant(acc: np.ndarray, mi: int, sh: int, diag: dict, qmax: int = QMAX8) -> np.ndarray:
    y = (acc.astype(np.int64) * mi + (1 << (sh - 1))) >> sh
    sat = int(((y < -qmax) | (y > qmax)).sum())
    if sat:
        diag["saturations"] = diag.get("saturations", 0) + sat
    return np.clip(y, -qmax, qmax)


def _quantize_weight(w: np.ndarray) -> tuple[np.ndarray, float]:
    m = float(np.abs(w).max())
    if m == 0:
        m = 1.0
    scale = m / 127.0
    return np.clip(np.round(w / scale), -127, 127).astype(np.int64), scale


@dataclass(frozen=True)
class LookupTable:
    fn: str  # "silu" or "tanh"
    in_scale: float
    out_scale: float
    entries: np.ndarray  # int8 codes, length 256, index = code + 128

    def apply(self, codes: np.ndarray) -> np.ndarray:
        return self.entries[codes.astype(np.int64) + 128]


_FNS = {"silu": lambda x: x / (1.0 + np.exp(-x)), "tanh": np.tanh}


def _build_table(fn: str, in_scale: float, out_scale: float) -> LookupTable:
    codes = np.arange(-128, 128)
    x = codes * in_scale
    y = _FNS[fn](x)
    entries = np.clip(np.round(y / out_scale), -127, 127).astype(np.int64)
    return LookupTable(fn, in_scale, out_scale, entries)


@dataclass
class QuantizedModel:
    config: ModelConfig
    weights: dict[str, np.ndarray]       # int8 weight tensors / int32 biases
    requants: dict[str, tuple[int, int]]
    tables: dict[str, LookupTable]
    scales: dict[str, float]             # activation scales by site name
    conf_table: np.ndarray               # margin bucket -> confidence code
    margin_shift: int
    temperature: float
    meta: dict = field(default_factory=dict)

    _hash_cache: int | None = None

    def to_bytes(self) -> bytes:
        """Canonical serialization: fixed field order, little-endian."""
        out = [MAGIC, struct.pack("<I", VERSION)]
        c = self.config
        out.append(struct.pack("<8I", c.T, c.S, c.n_classes, c.d0, c.n_blocks, c.d_lat, c.w_t, c.group))
        for name in sorted(self.weights):
            w = self.weights[name]
            out.append(struct.pack("<H", len(name)) + name.encode())
            out.append(struct.pack("<B", w.ndim) + struct.pack(f"<{w.ndim}I", *w.shape))
            out.append(w.astype("<i4").tobytes())
        out.append(struct.pack("<I", len(self.requants)))
        for name in sorted(self.requants):
            mi, sh = self.requants[name]
            out.append(struct.pack("<H", len(name)) + name.encode() + struct.pack("<qI", mi, sh))
        out.append(struct.pack("<I", len(self.tables)))
        for name in sorted(self.tables):
            t = self.tables[name]
            out.append(struct.pack("<H", len(name)) + name.encode())
            out.append(struct.pack("<B", 0 if t.fn == "silu" else 1))
            out.append(struct.pack("<dd", t.in_scale, t.out_scale))
            out.append(t.entries.astype("<i1").tobytes())
        out.append(struct.pack("<I", len(self.scales)))
        for name in sorted(self.scales):
            out.append(struct.pack("<H", len(name)) + name.encode() + struct.pack("<d", self.scales[name]))
        out.append(struct.pack(f"<{CONF_TABLE_SIZE}B", *self.conf_table.tolist()))
        out.append(struct.pack("<Id", self.margin_shift, self.temperature))
        return b"".join(out)

    @staticmethod
    def from_bytes(data: bytes) -> "QuantizedModel":
        if data[:4] != MAGIC:
            raise QuantizationError("bad model magic")
        off = 4
        (version,) = struct.unpack_from("<I", data, off)
        off += 4
        if version != VERSION:
            raise QuantizationError(f"unsupported model version {version}")
        cfg_vals = struct.unpack_from("<8I", data, off)
        off += 32
        cfg = ModelConfig(*cfg_vals)
        weights = {}
        n_weights = len(fm.param_shapes(cfg))
        for _ in range(n_weights):
            (ln,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + ln].decode()
            off += ln
            (nd,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{nd}I", data, off)
            off += 4 * nd
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<i4", count=count, offset=off)
            off += 4 * count
            weights[name] = arr.reshape(shape).astype(np.int64)
        (n_rq,) = struct.unpack_from("<I", data, off)
        off += 4
        requants = {}
        for _ in range(n_rq):
            (ln,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + ln].decode()
            off += ln
            mi, sh = struct.unpack_from("<qI", data, off)
            off += 12
            requants[name] = (mi, sh)
        (n_tab,) = struct.unpack_from("<I", data, off)
        off += 4
        tables = {}
        for _ in range(n_tab):
            (ln,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + ln].decode()
            off += ln
            (fn_id,) = struct.unpack_from("<B", data, off)
            off += 1
            in_s, out_s = struct.unpack_from("<dd", data, off)
            off += 16
            entries = np.frombuffer(data, dtype="<i1", count=256, offset=off).astype(np.int64)
            off += 256
            tables[name] = LookupTable("silu" if fn_id == 0 else "tanh", in_s, out_s, entries)
        (n_sc,) = struct.unpack_from("<I", data, off)
        off += 4
        scales = {}
        for _ in range(n_sc):
            (ln,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + ln].decode()
            off += ln
            (scales[name],) = struct.unpack_from("<d", data, off)
            off += 8
        conf = np.array(struct.unpack_from(f"<{CONF_TABLE_SIZE}B", data, off), dtype=np.int64)
        off += CONF_TABLE_SIZE
        margin_shift, temperature = struct.unpack_from("<Id", data, off)
        off += 12
        if off != len(data):
            raise QuantizationError("trailing bytes in model")
        return QuantizedModel(config=cfg, weights=weights, requants=requants,
                              tables=tables, scales=scales, conf_table=conf,
                              margin_shift=margin_shift, temperature=temperature)

    @property
    def model_hash(self) -> int:
        if self._hash_cache is None:
            self._hash_cache = hash_bytes(self.to_bytes())
        return self._hash_cache

    @property
    def logit_scale(self) -> float:
        return self.scales["latent"] * self.scales["w:head_w"]

    def head_weights(self) -> tuple[np.ndarray, np.ndarray]:
        return self.weights["head_w"], self.weights["head_b"]


@dataclass(frozen=True)
class LatentSummary:
    codes: np.ndarray  # int8 latent codes, length d_lat
    t_win: int
    model_hash: int


def margin_confidence_code(margin_deq: float, temperature: float, n_classes: int) -> int:
    """Monotone surrogate mapping a logit margin to a confidence code."""
    u = 1.0 / (1.0 + (n_classes - 1) * math.exp(-margin_deq / temperature))
    return max(0, min(CONF_SCALE, round(u * CONF_SCALE)))


def build_conf_table(margin_shift: int, logit_scale: float, temperature: float, n_classes: int) -> np.ndarray:
    table = np.zeros(CONF_TABLE_SIZE, dtype=np.int64)
    for b in range(CONF_TABLE_SIZE):
        rep = (b + 0.5) * (1 << margin_shift) * logit_scale
        table[b] = margin_confidence_code(rep, temperature, n_classes)
    # the surrogate is monotone; enforce exactly against rounding wobble
    return np.maximum.accumulate(table)


def logit_bound(qm_weights: dict) -> int:
    """Worst-case |logit| over any int8 latent, from the quantized head."""
    w, b = qm_weights["head_w"], qm_weights["head_b"]
    per_class = np.abs(w).sum(axis=0) * 127 + np.abs(b)
    return int(per_class.max())


def quantize_model(m: FloatModel, calib: list[Window], q: int = QBITS,
                   temperature: float = 1.0) -> QuantizedModel:
    """Calibrate activation scales on ``calib`` and build the int8 twin."""
    if q != QBITS:
        raise QuantizationError("only q=8 is supported")
    if not calib:
        raise QuantizationError("calibration set must be non-empty")
    cfg = m.config

    # 1. collect activation ranges (and raw nonlinearity inputs) per site
    maxabs: dict[str, float] = {}
    samples: dict[str, list[np.ndarray]] = {}
    float_logits = []
    for w in calib:
        rec: dict = {}
        logits, _, _ = fm.forward(m, w, record=rec)
        float_logits.append(logits)
        for name, arr in rec.items():
            maxabs[name] = max(maxabs.get(name, 0.0), float(np.abs(arr).max()))
            if name.endswith(("scores", "_dw", "_mid")) or name in ("stem_dw",):
                samples.setdefault(name, []).append(np.asarray(arr).ravel())
    for name, v in maxabs.items():
        if v == 0.0:
            raise QuantizationError(f"degenerate calibration range at {name}")

    def act_scale(name: str) -> float:
        return maxabs[name] / _site_qmax(name)

    scales: dict[str, float] = {name: act_scale(name) for name in maxabs}

    # 2. quantize weights
    weights: dict[str, np.ndarray] = {}
    wscales: dict[str, float] = {}
    for name, w_arr in m.params.items():
        if name.endswith("_b"):
            continue
        wq, ws = _quantize_weight(w_arr)
        weights[name] = wq
        wscales[name] = ws
        scales[f"w:{name}"] = ws

    def qbias(name: str, acc_scale: float):
        weights[name] = np.round(m.params[name] / acc_scale).astype(np.int64)

    requants: dict[str, tuple[int, int]] = {}
    tables: dict[str, LookupTable] = {}

    s_in = scales["input"]
    d0 = cfg.d0
    inv_sqrt = 1.0 / math.sqrt(d0)

    qbias("stem_proj_b", s_in * wscales["stem_proj_w"])
    requants["stem_proj"] = _quant_multiplier(s_in * wscales["stem_proj_w"] / scales["stem_proj"])
    qbias("stem_dw_b", scales["stem_proj"] * wscales["stem_dw_w"])
    requants["stem_dw"] = _quant_multiplier(scales["stem_proj"] * wscales["stem_dw_w"] / scales["stem_dw"])
    tables["stem_act"] = _build_table("silu", scales["stem_dw"], scales["stem_act"])

    h_scale = scales["stem_act"]
    for i in range(cfg.n_blocks):
        for nm in ("tq", "tk", "tv"):
            requants[f"blk{i}_{nm}"] = _quant_multiplier(h_scale * wscales[f"blk{i}_{nm}"] / scales[f"blk{i}_{nm}"])
        sc_cap = min(maxabs[f"blk{i}_tscores"], TANH_INPUT_CAP) / 127.0
        scales[f"blk{i}_tscores"] = sc_cap
        requants[f"blk{i}_tsc"] = _quant_multiplier(
            scales[f"blk{i}_tq"] * scales[f"blk{i}_tk"] * inv_sqrt / sc_cap)
        th_out = math.tanh(sc_cap * 127.0) / 127.0
        tables[f"blk{i}_ttanh"] = _build_table("tanh", sc_cap, th_out)
        requants[f"blk{i}_tatt"] = _quant_multiplier(
            th_out * scales[f"blk{i}_tv"] / (cfg.w_t * scales[f"blk{i}_tatt"]))
        requants[f"blk{i}_tres_a"] = _quant_multiplier(h_scale / scales[f"blk{i}_tres"])
        requants[f"blk{i}_tres_b"] = _quant_multiplier(scales[f"blk{i}_tatt"] / scales[f"blk{i}_tres"])
        h_scale = scales[f"blk{i}_tres"]

        for nm in ("gq", "gk", "gv"):
            requants[f"blk{i}_{nm}"] = _quant_multiplier(h_scale * wscales[f"blk{i}_{nm}"] / scales[f"blk{i}_{nm}"])
        sc_cap = min(maxabs[f"blk{i}_gscores"], TANH_INPUT_CAP) / 127.0
        scales[f"blk{i}_gscores"] = sc_cap
        requants[f"blk{i}_gsc"] = _quant_multiplier(
            scales[f"blk{i}_gq"] * scales[f"blk{i}_gk"] * inv_sqrt / sc_cap)
        th_out = math.tanh(sc_cap * 127.0) / 127.0
        tables[f"blk{i}_gtanh"] = _build_table("tanh", sc_cap, th_out)
        requants[f"blk{i}_gatt"] = _quant_multiplier(
            th_out * scales[f"blk{i}_gv"] / (cfg.group * scales[f"blk{i}_gatt"]))
        requants[f"blk{i}_gres_a"] = _quant_multiplier(h_scale / scales[f"blk{i}_gres"])
        requants[f"blk{i}_gres_b"] = _quant_multiplier(scales[f"blk{i}_gatt"] / scales[f"blk{i}_gres"])
        h_scale = scales[f"blk{i}_gres"]

        qbias(f"blk{i}_mlp_b1", h_scale * wscales[f"blk{i}_mlp_w1"])
        requants[f"blk{i}_mlp_mid"] = _quant_multiplier(
            h_scale * wscales[f"blk{i}_mlp_w1"] / scales[f"blk{i}_mlp_mid"])
        tables[f"blk{i}_mlp_act"] = _build_table("silu", scales[f"blk{i}_mlp_mid"], scales[f"blk{i}_mlp_act"])
        qbias(f"blk{i}_mlp_b2", scales[f"blk{i}_mlp_act"] * wscales[f"blk{i}_mlp_w2"])
        requants[f"blk{i}_mlp_out"] = _quant_multiplier(
            scales[f"blk{i}_mlp_act"] * wscales[f"blk{i}_mlp_w2"] / scales[f"blk{i}_mlp_out"])
        requants[f"blk{i}_mres_a"] = _quant_multiplier(h_scale / scales[f"blk{i}_mres"])
        requants[f"blk{i}_mres_b"] = _quant_multiplier(scales[f"blk{i}_mlp_out"] / scales[f"blk{i}_mres"])
        h_scale = scales[f"blk{i}_mres"]

    requants["pooled"] = _quant_multiplier(h_scale / (cfg.T * cfg.S * scales["pooled"]))
    qbias("lat_b", scales["pooled"] * wscales["lat_w"])
    requants["latent"] = _quant_multiplier(scales["pooled"] * wscales["lat_w"] / scales["latent"])

    s_logit = scales["latent"] * wscales["head_w"]
    qbias("head_b", s_logit)
    qbias("abst_b", scales["latent"] * wscales["abst_w"])

    qm = QuantizedModel(
        config=cfg,
        weights=weights,
        requants=requants,
        tables=tables,
        scales=scales,
        conf_table=np.zeros(CONF_TABLE_SIZE, dtype=np.int64),
        margin_shift=0,
        temperature=temperature,
    )

    # 3. certify lookup tables on calibration activations
    certs = _certify_tables(qm, samples)
    qm.meta["table_certs"] = certs

    # 4. fidelity metrics vs float, and the calibration margin range
    agree = 0
    max_err = 0.0
    max_margin = 1
    for w, fl in zip(calib, float_logits):
        lq, _, _ = forward_quantized(qm, w)
        dq = lq * s_logit
        max_err = max(max_err, float(np.abs(dq - fl).max()))
        if int(np.argmax(dq)) == int(np.argmax(fl)):
            agree += 1
        max_margin = max(max_margin, logit_margin(lq)[2])
    qm.meta["argmax_agreement"] = agree / len(calib)
    qm.meta["logit_err_bound"] = max_err

    # margin bucketing for the confidence lookup: size buckets so the
    # observed margin range spans the table; larger margins clamp to the
    # top bucket, where the surrogate has saturated anyway
    qm.margin_shift = max(0, max_margin.bit_length() - int(math.log2(CONF_TABLE_SIZE)))
    qm.conf_table = build_conf_table(qm.margin_shift, s_logit, temperature, cfg.n_classes)
    qm._hash_cache = None
    return qm


_TABLE_SITE = {
    "stem_act": "stem_dw",
}


def _table_input_site(name: str) -> str:
    if name in _TABLE_SITE:
        return _TABLE_SITE[name]
    head, kind = name.rsplit("_", 1)  # e.g. ("blk0", "ttanh") or ("blk0_mlp", "act")
    if kind == "ttanh":
        return f"{head}_tscores"
    if kind == "gtanh":
        return f"{head}_gscores"
    return f"{head}_mid"


def _certify_tables(qm: QuantizedModel, samples: dict[str, list[np.ndarray]]) -> dict[str, dict]:
    certs = {}
    for name, tab in qm.tables.items():
        xs = np.concatenate(samples[_table_input_site(name)])
        f = _FNS[tab.fn]
        truth = f(xs)
        codes = np.clip(np.round(xs / tab.in_scale), -128, 127).astype(np.int64)
        approx = tab.entries[codes + 128] * tab.out_scale
        rng = float(truth.max() - truth.min())
        err = float(np.abs(approx - truth).max())
        certs[name] = {"max_abs_error": err, "output_range": rng, "ok": bool(err <= 0.01 * rng)}
        if not certs[name]["ok"]:
            raise QuantizationError(f"lookup table {name} exceeds 1% error bound: {certs[name]}")
    return certs


def with_confidence_temperature(qm: QuantizedModel, temperature: float) -> QuantizedModel:
    """Rebuild the margin-confidence table with a fitted temperature."""
    conf = build_conf_table(qm.margin_shift, qm.logit_scale, temperature, qm.config.n_classes)
    return QuantizedModel(
        config=qm.config, weights=qm.weights, requants=qm.requants, tables=qm.tables,
        scales=qm.scales, conf_table=conf, margin_shift=qm.margin_shift,
        temperature=temperature, meta=dict(qm.meta),
    )


def _matmul_rq(a, w_name, bias_name, rq_name, qm, diag, qmax: int = QMAX8):
    acc = a.astype(np.int64) @ qm.weights[w_name]
    if bias_name is not None:
        acc = acc + qm.weights[bias_name]
    mi, sh = qm.requants[rq_name]
    return _requant(acc, mi, sh, diag, qmax)


def _residual(a, b, rq_a, rq_b, qm, diag, qmax: int = QMAX16):
    mia, sha = qm.requants[rq_a]
    mib, shb = qm.requants[rq_b]
    ya = (a.astype(np.int64) * mia + (1 << (sha - 1))) >> sha
    yb = (b.astype(np.int64) * mib + (1 << (shb - 1))) >> shb
    y = ya + yb
    sat = int(((y < -qmax) | (y > qmax)).sum())
    if sat:
        diag["saturations"] = diag.get("saturations", 0) + sat
    return np.clip(y, -qmax, qmax)


def forward_quantized(qm: QuantizedModel, w: Window, diag: dict | None = None):
    """Integer-only forward pass; bit-deterministic given (qm, window).

    Returns (logits_q, u_q, latent_summary); logits are int at scale
    ``qm.logit_scale``, u_q is a confidence code in [0, 128].
    """
    cfg = qm.config
    if w.T != cfg.T or w.S != cfg.S:
        raise ParameterError("window shape does not match model")
    diag = diag if diag is not None else {}

    x = np.clip(np.round(w.data.astype(np.float64) / qm.scales["input"]), -QMAX16, QMAX16).astype(np.int64)

    h = _matmul_rq(x, "stem_proj_w", "stem_proj_b", "stem_proj", qm, diag, QMAX16)
    # depthwise conv
    T, S, d0 = cfg.T, cfg.S, cfg.d0
    acc = np.zeros((T, S, d0), dtype=np.int64)
    dw = qm.weights["stem_dw_w"]
    for dt in (-1, 0, 1):
        for ds in (-1, 0, 1):
            t0, t1 = max(0, -dt), min(T, T - dt)
            s0, s1 = max(0, -ds), min(S, S - ds)
            acc[t0:t1, s0:s1] += h[t0 + dt : t1 + dt, s0 + ds : s1 + ds] * dw[:, dt + 1, ds + 1]
    acc += qm.weights["stem_dw_b"]
    mi, sh = qm.requants["stem_dw"]
    h = _requant(acc, mi, sh, diag)
    h = qm.tables["stem_act"].apply(h)

    for i in range(cfg.n_blocks):
        q = _matmul_rq(h, f"blk{i}_tq", None, f"blk{i}_tq", qm, diag, QMAX16)
        k = _matmul_rq(h, f"blk{i}_tk", None, f"blk{i}_tk", qm, diag, QMAX16)
        v = _matmul_rq(h, f"blk{i}_tv", None, f"blk{i}_tv", qm, diag, QMAX16)
        out = np.zeros((T, S, d0), dtype=np.int64)
        half = cfg.w_t // 2
        mi_sc, sh_sc = qm.requants[f"blk{i}_tsc"]
        tanh_tab = qm.tables[f"blk{i}_ttanh"]
        for off in range(-half, half):
            t0, t1 = max(0, -off), min(T, T - off)
            raw = (q[t0:t1] * k[t0 + off : t1 + off]).sum(-1, keepdims=True)
            sc = _requant(raw, mi_sc, sh_sc, diag)
            out[t0:t1] += tanh_tab.apply(sc) * v[t0 + off : t1 + off]
        mi_a, sh_a = qm.requants[f"blk{i}_tatt"]
        att = _requant(out, mi_a, sh_a, diag, QMAX16)
        h = _residual(h, att, f"blk{i}_tres_a", f"blk{i}_tres_b", qm, diag)

        q = _matmul_rq(h, f"blk{i}_gq", None, f"blk{i}_gq", qm, diag, QMAX16)
        k = _matmul_rq(h, f"blk{i}_gk", None, f"blk{i}_gk", qm, diag, QMAX16)
        v = _matmul_rq(h, f"blk{i}_gv", None, f"blk{i}_gv", qm, diag, QMAX16)
        g = cfg.group
        qg = q.reshape(T, S // g, g, d0)
        kg = k.reshape(T, S // g, g, d0)
        vg = v.reshape(T, S // g, g, d0)
        raw = np.einsum("tnad,tnbd->tnab", qg, kg)
        mi_sc, sh_sc = qm.requants[f"blk{i}_gsc"]
        sc = _requant(raw, mi_sc, sh_sc, diag)
        out = np.einsum("tnab,tnbd->tnad", qm.tables[f"blk{i}_gtanh"].apply(sc), vg).reshape(T, S, d0)
        mi_a, sh_a = qm.requants[f"blk{i}_gatt"]
        att = _requant(out, mi_a, sh_a, diag, QMAX16)
        h = _residual(h, att, f"blk{i}_gres_a", f"blk{i}_gres_b", qm, diag)

        mid = _matmul_rq(h, f"blk{i}_mlp_w1", f"blk{i}_mlp_b1", f"blk{i}_mlp_mid", qm, diag)
        mid = qm.tables[f"blk{i}_mlp_act"].apply(mid)
        mlp = _matmul_rq(mid, f"blk{i}_mlp_w2", f"blk{i}_mlp_b2", f"blk{i}_mlp_out", qm, diag, QMAX16)
        h = _residual(h, mlp, f"blk{i}_mres_a", f"blk{i}_mres_b", qm, diag)

    pooled_acc = h.sum(axis=(0, 1))
    mi, sh = qm.requants["pooled"]
    pooled = _requant(pooled_acc, mi, sh, diag, QMAX16)
    z = _matmul_rq(pooled, "lat_w", "lat_b", "latent", qm, diag)

    logits = z @ qm.weights["head_w"] + qm.weights["head_b"]
    u_q = confidence_code(qm, logits)
    latent = LatentSummary(codes=z.astype(np.int64), t_win=w.t_win, model_hash=qm.model_hash)
    return logits, u_q, latent


def logit_margin(logits: np.ndarray) -> tuple[int, int, int]:
    """(argmax index, second-best index, integer margin)."""
    order = np.argsort(-logits, kind="stable")
    star, second = int(order[0]), int(order[1])
    return star, second, int(logits[star] - logits[second])


def confidence_code(qm: QuantizedModel, logits: np.ndarray) -> int:
    _, _, margin = logit_margin(logits)
    bucket = min(CONF_TABLE_SIZE - 1, margin >> qm.margin_shift)
    return int(qm.conf_table[bucket])
