"""Constraint circuits tying a committed latent to a policy decision.

Constraint families, by label:

* C1 - the latent commitment: int8 latent codes are bit-decomposed,
  byte-packed into field elements and hashed with the same sponge the
  host uses, so the in-circuit digest equals the published commitment.
* C2 - registration constants: the model hash and confidence floor slots
  are pinned to the registered values.
* C3 - replay binding: window index and nonce are public slots with no
  internal constraints; they are bound by the challenge derivation.
* C4 - the decision: quantized head logits, argmax and runner-up
  selection, margin bucketing through the confidence table, the
  confidence floor, and the registered policy tree's leaf conjunctions.

The emission body is generic over a builder.  The full builder grows
constraints and witness in lockstep; the value builder replays the same
allocation order computing witness values only, so a batch can share one
constraint system and generate per-instance witnesses cheaply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import P, fmul, to_field
from .policy import ABSTAIN, CompiledLeaf, Predicate
from .quantize import CONF_TABLE_SIZE, logit_margin
from .r1cs import (LC, ConstraintSystem, lc_add, lc_const, lc_eval, lc_scale,
                   lc_sub, lc_var)
from .sponge import _INIT, RATE, ROUND_CONSTANTS, TAG_COMMIT, sponge_hash

PACK = 7  # bytes packed per field element
PUBLIC_SLOTS = ("c", "h_theta", "tau_fp", "t_win", "nonce", "action")


class UnsatisfiableError(ValueError):
    """The inputs cannot satisfy this circuit (e.g. confidence below floor)."""


@dataclass(frozen=True)
class CircuitSpec:
    """Everything the circuit shape depends on, fixed at registration."""

    d_lat: int
    n_classes: int
    head_w: tuple  # (d_lat, K) int8 entries, as nested tuples
    head_b: tuple  # (K,) int32 entries
    conf_table: tuple  # 64 confidence codes
    margin_shift: int
    tau_fp: int
    h_theta: int
    leaves: tuple  # CompiledLeaf tuple; empty for the abstain circuit
    abstain: bool = False


def pack_latent(z_codes) -> list[int]:
    """int8 codes -> offset bytes -> base-256 packed field elements."""
    v = [int(c) + 128 for c in z_codes]
    out = []
    for j in range(0, len(v), PACK):
        chunk = v[j : j + PACK]
        out.append(sum(b << (8 * i) for i, b in enumerate(chunk)))
    return out


def commit_latent(z_codes, salt: int) -> int:
    return sponge_hash(pack_latent(z_codes) + [salt % P], tag=TAG_COMMIT)


class _Builder:
    """Grows constraints and witness values in lockstep."""

    def __init__(self, strict: bool = True):
        self.cs = ConstraintSystem()
        self.w: list[int] = [1]
        self.strict = strict

    # witness allocation
    def var(self, value) -> int:
        i = self.cs.new_var()
        self.w.append(to_field(value))
        return i

    def value(self, lc: LC) -> int:
        return lc_eval(lc, self.w)

    def mul(self, a: LC, b: LC, label: str) -> LC:
        z = self.var(fmul(self.value(a), self.value(b)))
        self.cs.add(a, b, lc_var(z), label)
        return lc_var(z)

    def boolean(self, value: int, label: str) -> int:
        i = self.var(value)
        self.cs.enforce_boolean(i, label)
        return i

    def range_check(self, lc: LC, int_value: int, nbits: int, label: str):
        """Constrain lc to [0, 2^nbits); int_value is its honest value."""
        if not 0 <= int_value < (1 << nbits):
            if self.strict:
                raise UnsatisfiableError(
                    f"range witness {int_value} outside {nbits} bits")
            int_value %= 1 << nbits
        recomposed: LC = {}
        for k in range(nbits):
            b = self.boolean((int_value >> k) & 1, label)
            recomposed = lc_add(recomposed, lc_var(b, 1 << k))
        self.cs.enforce_eq(recomposed, lc, label)

    # linear-combination algebra
    def const(self, v) -> LC:
        return lc_const(v)

    def ref(self, i: int, coeff=1) -> LC:
        return lc_var(i, coeff)

    def add(self, a: LC, b: LC) -> LC:
        return lc_add(a, b)

    def sub(self, a: LC, b: LC) -> LC:
        return lc_sub(a, b)

    def scale(self, a: LC, k) -> LC:
        return lc_scale(a, k)

    def zero(self) -> LC:
        return {}

    # constraint emission
    def enforce_eq(self, a: LC, b: LC, label: str):
        self.cs.enforce_eq(a, b, label)

    def mark_public(self, name: str, idx: int):
        self.cs.mark_public(name, idx)


class _ValueBuilder:
    """Replays the allocation order of _Builder computing values only.

    Linear combinations are represented by their numeric value mod P, so
    a batch instance's witness costs one arithmetic pass instead of a
    full constraint-system construction.
    """

    def __init__(self):
        self.w: list[int] = [1]
        self.strict = True

    def var(self, value) -> int:
        self.w.append(to_field(value))
        return len(self.w) - 1

    def value(self, lc: int) -> int:
        return lc

    def mul(self, a: int, b: int, label: str) -> int:
        z = fmul(a, b)
        self.var(z)
        return z

    def boolean(self, value: int, label: str) -> int:
        return self.var(value)

    def range_check(self, lc: int, int_value: int, nbits: int, label: str):
        if not 0 <= int_value < (1 << nbits):
            raise UnsatisfiableError(
                f"range witness {int_value} outside {nbits} bits")
        for k in range(nbits):
            self.var((int_value >> k) & 1)

    def const(self, v) -> int:
        return to_field(v)

    def ref(self, i: int, coeff=1) -> int:
        return (self.w[i] * coeff) % P

    def add(self, a: int, b: int) -> int:
        return (a + b) % P

    def sub(self, a: int, b: int) -> int:
        return (a - b) % P

    def scale(self, a: int, k) -> int:
        return (a * k) % P

    def zero(self) -> int:
        return 0

    def enforce_eq(self, a, b, label: str):
        pass

    def mark_public(self, name: str, idx: int):
        pass


def _permute_lcs(b, state, label: str):
    for rc in ROUND_CONSTANTS:
        sboxed = []
        for lane in range(3):
            t = b.add(state[lane], b.const(rc[lane]))
            t2 = b.mul(t, t, label)
            t3 = b.mul(t2, t, label)
            t6 = b.mul(t3, t3, label)
            sboxed.append(b.mul(t6, t, label))
        total = b.add(b.add(sboxed[0], sboxed[1]), sboxed[2])
        state = [b.add(total, s) for s in sboxed]
    return state


def _sponge_lcs(b, inputs, tag: int, label: str):
    state = [b.const(0), b.const(0),
             b.const((_INIT + tag * 0x1000000 + len(inputs)) % P)]
    for i in range(0, len(inputs), RATE):
        chunk = inputs[i : i + RATE]
        state[0] = b.add(state[0], chunk[0])
        if len(chunk) > 1:
            state[1] = b.add(state[1], chunk[1])
        state = _permute_lcs(b, state, label)
    return state[0]


def _logit_bound(spec: CircuitSpec) -> int:
    w = np.array(spec.head_w)
    bnd = np.abs(w).sum(axis=0) * 127 + np.abs(np.array(spec.head_b))
    return int(bnd.max())


def _emit(b, spec: CircuitSpec, z_codes: list[int], salt: int, t_win: int,
          nonce: int):
    """Shared emission body; b is a _Builder or _ValueBuilder."""
    # ---- public slots, allocated first in canonical order
    logits = (np.array(spec.head_w, dtype=np.int64).T @ np.array(z_codes, dtype=np.int64)
              + np.array(spec.head_b, dtype=np.int64))
    star, _, margin = logit_margin(logits)
    bucket = min(CONF_TABLE_SIZE - 1, margin >> spec.margin_shift)
    u_q = int(spec.conf_table[bucket])
    if spec.abstain:
        action_id = ABSTAIN
    else:
        action_id = _leaf_action(spec.leaves, star, u_q)

    commitment = commit_latent(z_codes, salt)
    slot_values = {"c": commitment, "h_theta": spec.h_theta, "tau_fp": spec.tau_fp,
                   "t_win": t_win, "nonce": nonce, "action": action_id}
    slots = {}
    for name in PUBLIC_SLOTS:
        slots[name] = b.var(slot_values[name])
        b.mark_public(name, slots[name])

    # ---- C1: bit-decompose the latent, pack, hash, pin the commitment
    v_lcs = []
    for code in z_codes:
        v = code + 128
        bits = [b.boolean((v >> k) & 1, "C1") for k in range(8)]
        lc = b.zero()
        for k, bit in enumerate(bits):
            lc = b.add(lc, b.ref(bit, 1 << k))
        v_lcs.append(lc)
    packed = []
    for j in range(0, spec.d_lat, PACK):
        lc = b.zero()
        for i, vl in enumerate(v_lcs[j : j + PACK]):
            lc = b.add(lc, b.scale(vl, 1 << (8 * i)))
        packed.append(lc)
    salt_var = b.var(salt % P)
    digest = _sponge_lcs(b, packed + [b.ref(salt_var)], TAG_COMMIT, "C1")
    b.enforce_eq(digest, b.ref(slots["c"]), "C1")

    # ---- C2: registration constants
    b.enforce_eq(b.ref(slots["h_theta"]), b.const(spec.h_theta), "C2")
    b.enforce_eq(b.ref(slots["tau_fp"]), b.const(spec.tau_fp), "C2")
    if spec.abstain:
        b.enforce_eq(b.ref(slots["action"]), b.const(ABSTAIN), "C2")
        return

    # ---- C4: decision head over the committed latent
    K = spec.n_classes
    bound = _logit_bound(spec)
    nb_m = max(1, (2 * bound).bit_length())
    big_m = 2 * bound

    logit_lcs = []
    for j in range(K):
        lc = b.const(int(spec.head_b[j]) - 128 * sum(int(spec.head_w[i][j]) for i in range(spec.d_lat)))
        for i in range(spec.d_lat):
            lc = b.add(lc, b.scale(v_lcs[i], int(spec.head_w[i][j])))
        logit_lcs.append(lc)

    order = np.argsort(-logits, kind="stable")
    second = int(order[1])
    sel = [b.boolean(1 if j == star else 0, "C4") for j in range(K)]
    sel2 = [b.boolean(1 if j == second else 0, "C4") for j in range(K)]
    one = b.const(1)

    def sum_refs(idxs):
        lc = b.zero()
        for i in idxs:
            lc = b.add(lc, b.ref(i))
        return lc

    b.enforce_eq(sum_refs(sel), one, "C4")
    b.enforce_eq(sum_refs(sel2), one, "C4")
    overlap = b.zero()
    for j in range(K):
        overlap = b.add(overlap, b.mul(b.ref(sel[j]), b.ref(sel2[j]), "C4"))
    b.enforce_eq(overlap, b.zero(), "C4")

    f_star = b.zero()
    f_2 = b.zero()
    for j in range(K):
        f_star = b.add(f_star, b.mul(b.ref(sel[j]), logit_lcs[j], "C4"))
        f_2 = b.add(f_2, b.mul(b.ref(sel2[j]), logit_lcs[j], "C4"))
    li = [int(x) for x in logits]
    for j in range(K):
        b.range_check(b.sub(f_star, logit_lcs[j]), li[star] - li[j], nb_m, "C4")
    nb_m2 = max(1, (4 * bound).bit_length())
    for j in range(K):
        lc = b.add(b.sub(f_2, logit_lcs[j]),
                   b.scale(b.add(b.ref(sel[j]), b.ref(sel2[j])), big_m))
        val = li[second] - li[j] + big_m * ((j == star) + (j == second))
        b.range_check(lc, val, nb_m2, "C4")

    # margin bucketing: margin = bucket * 2^shift + r, top bucket clamps
    margin_lc = b.sub(f_star, f_2)
    bb = [b.boolean(1 if j == bucket else 0, "C4") for j in range(CONF_TABLE_SIZE)]
    b.enforce_eq(sum_refs(bb), one, "C4")
    sel_base = b.zero()
    for j, bit in enumerate(bb):
        sel_base = b.add(sel_base, b.ref(bit, j << spec.margin_shift))
    r = margin - (bucket << spec.margin_shift)
    r_lc = b.sub(margin_lc, sel_base)
    b.range_check(r_lc, r, nb_m, "C4")
    # below the top bucket the remainder must fit the bucket width; the
    # top bucket absorbs any larger margin (big_m slack)
    cap = (1 << spec.margin_shift) - 1
    clamp_lc = b.add(b.add(b.const(cap), b.ref(bb[-1], big_m)), b.scale(r_lc, P - 1))
    b.range_check(clamp_lc, cap - r + big_m * (bucket == CONF_TABLE_SIZE - 1),
                  (cap + big_m).bit_length(), "C4")

    u_lc = b.zero()
    for j, bit in enumerate(bb):
        u_lc = b.add(u_lc, b.ref(bit, int(spec.conf_table[j])))

    # confidence floor
    b.range_check(b.sub(u_lc, b.const(spec.tau_fp)), u_q - spec.tau_fp, 8, "C4")

    # policy tree leaves over (class selectors, confidence indicators)
    conf_bits: dict[int, int] = {}
    for leaf_ in spec.leaves:
        for pred, _pol in leaf_.literals:
            if pred.kind == "conf_ge" and pred.value not in conf_bits:
                ge = 1 if u_q >= pred.value else 0
                bit = b.boolean(ge, "C4")
                conf_bits[pred.value] = bit
                b.range_check(
                    b.add(b.sub(u_lc, b.const(pred.value)),
                          b.add(b.const(256), b.ref(bit, P - 256))),
                    u_q - pred.value + 256 * (1 - ge), 9, "C4")
                b.range_check(
                    b.add(b.sub(b.const(pred.value - 1), u_lc), b.ref(bit, 256)),
                    pred.value - 1 - u_q + 256 * ge, 9, "C4")

    def literal_lc(pred: Predicate, pol: bool):
        if pred.kind == "class_eq":
            base = b.ref(sel[pred.value])
        else:
            base = b.ref(conf_bits[pred.value])
        return base if pol else b.sub(one, base)

    leaf_sum = b.zero()
    action_lc = b.zero()
    for leaf_ in spec.leaves:
        lits = [literal_lc(p, pol) for p, pol in leaf_.literals]
        if not lits:
            s = one
        else:
            s = lits[0]
            for extra in lits[1:]:
                s = b.mul(s, extra, "C4")
        leaf_sum = b.add(leaf_sum, s)
        action_lc = b.add(action_lc, b.scale(s, leaf_.action_id))
    b.enforce_eq(leaf_sum, one, "C4")
    b.enforce_eq(action_lc, b.ref(slots["action"]), "C4")


def _check_codes(spec: CircuitSpec, z_codes) -> list[int]:
    z_codes = [int(c) for c in z_codes]
    if len(z_codes) != spec.d_lat:
        raise ValueError("latent length mismatch")
    return z_codes


def build(spec: CircuitSpec, z_codes=None, salt: int = 0, t_win: int = 0,
          nonce: int = 0) -> tuple[ConstraintSystem, list[int]]:
    """Build the circuit and an honest witness for the given inputs.

    With no latent the builder runs in shape-only mode: the constraint
    system is canonical but the witness need not satisfy it, so the
    verifier can rebuild the circuit for any registered threshold.
    """
    shape_only = z_codes is None
    if shape_only:
        z_codes = [0] * spec.d_lat
    b = _Builder(strict=not shape_only)
    _emit(b, spec, _check_codes(spec, z_codes), salt, t_win, nonce)
    return b.cs, b.w


def witness_only(spec: CircuitSpec, z_codes, salt: int = 0, t_win: int = 0,
                 nonce: int = 0) -> list[int]:
    """The witness build() would produce, without the constraint system."""
    b = _ValueBuilder()
    _emit(b, spec, _check_codes(spec, z_codes), salt, t_win, nonce)
    return b.w


def _leaf_action(leaves, class_idx: int, u_q: int) -> int:
    for leaf_ in leaves:
        ok = True
        for pred, pol in leaf_.literals:
            if pred.kind == "class_eq":
                holds = class_idx == pred.value
            else:
                holds = u_q >= pred.value
            if holds != pol:
                ok = False
                break
        if ok:
            return leaf_.action_id
    raise ValueError("compiled leaves are not exhaustive")
