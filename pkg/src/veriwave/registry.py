"""Append-only registry binding models, policies and operating points.

A registered entry fixes everything a verifier needs: the quantized model
bytes (whose sponge hash is the circuit's pinned model identity), the
policy tree, the calibration profile with its confidence floor, and the
zone context flags the tree was compiled under.  Verification of a proof
starts here: an unknown model hash is rejected before any constraint is
checked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .calibrate import CalibrationProfile
from .circuits import CircuitSpec, build
from .policy import ABSTAIN, PolicyTree, compile_tree
from .protocol import Proof, verify_batch
from .quantize import CONF_SCALE, QuantizedModel
from .r1cs import ConstraintSystem


class RegistryError(ValueError):
    pass


class UnknownModelError(KeyError):
    pass


def tau_code(tau_reg: float) -> int:
    """Confidence floor as a code on the same 2^-7 grid as u_q."""
    return max(0, min(CONF_SCALE, round(tau_reg * CONF_SCALE)))


@dataclass
class RegistryEntry:
    qm: QuantizedModel
    tree: PolicyTree
    profile: CalibrationProfile
    ctx: dict

    _specs: dict = field(default_factory=dict, repr=False)
    _circuits: dict = field(default_factory=dict, repr=False)

    @property
    def h_theta(self) -> int:
        return self.qm.model_hash

    @property
    def tau_fp(self) -> int:
        return tau_code(self.profile.tau_reg)

    @property
    def tree_hash(self) -> int:
        return self.tree.tree_hash

    def circuit_spec(self, abstain: bool = False) -> CircuitSpec:
        if abstain not in self._specs:
            cfg = self.qm.config
            head_w, head_b = self.qm.head_weights()
            leaves = () if abstain else tuple(compile_tree(self.tree, self.ctx))
            self._specs[abstain] = CircuitSpec(
                d_lat=cfg.d_lat,
                n_classes=cfg.n_classes,
                head_w=tuple(map(tuple, head_w.tolist())),
                head_b=tuple(int(b) for b in head_b.tolist()),
                conf_table=tuple(int(v) for v in self.qm.conf_table.tolist()),
                margin_shift=self.qm.margin_shift,
                tau_fp=self.tau_fp,
                h_theta=self.h_theta,
                leaves=leaves,
                abstain=abstain,
            )
        return self._specs[abstain]

    def circuit(self, abstain: bool = False) -> ConstraintSystem:
        """Canonical circuit shape, cached (witness values discarded)."""
        if abstain not in self._circuits:
            cs, _ = build(self.circuit_spec(abstain))
            self._circuits[abstain] = cs
        return self._circuits[abstain]

    def to_dict(self) -> dict:
        return {
            "qm": self.qm.to_bytes().hex(),
            "tree": self.tree.to_json(),
            "profile": self.profile.to_json(),
            "ctx": self.ctx,
        }

    @staticmethod
    def from_dict(d: dict) -> "RegistryEntry":
        return RegistryEntry(
            qm=QuantizedModel.from_bytes(bytes.fromhex(d["qm"])),
            tree=PolicyTree.from_json(d["tree"]),
            profile=CalibrationProfile.from_json(d["profile"]),
            ctx=dict(d["ctx"]),
        )


class Registry:
    """Append-only: entries can be added and looked up, never replaced."""

    def __init__(self):
        self.entries: dict[int, RegistryEntry] = {}

    def register(self, qm: QuantizedModel, tree: PolicyTree,
                 profile: CalibrationProfile, ctx: dict | None = None) -> RegistryEntry:
        tree.validate()
        entry = RegistryEntry(qm=qm, tree=tree, profile=profile, ctx=dict(ctx or {}))
        existing = self.entries.get(entry.h_theta)
        if existing is not None:
            if existing.to_dict() == entry.to_dict():
                return existing  # idempotent re-registration
            raise RegistryError(
                f"model hash {entry.h_theta:#x} already registered with a "
                "different policy or profile")
        self.entries[entry.h_theta] = entry
        return entry

    def lookup(self, h_theta: int) -> RegistryEntry:
        try:
            return self.entries[h_theta]
        except KeyError:
            raise UnknownModelError(f"model hash {h_theta:#x} is not registered") from None

    def verify_proof(self, proof: Proof) -> tuple[bool, str | None]:
        """Registry-backed verification with machine-readable reasons."""
        hashes = {st.h_theta for st in proof.statements}
        if len(hashes) != 1:
            return False, "bad-binding"
        h_theta = hashes.pop()
        if h_theta not in self.entries:
            return False, "unknown-hash"
        entry = self.entries[h_theta]
        abstain = all(st.action == ABSTAIN for st in proof.statements)
        if not abstain and any(st.action == ABSTAIN for st in proof.statements):
            return False, "bad-binding"  # mixed batches are not produced
        return verify_batch(entry.circuit(abstain), proof)

    def save(self, path: str):
        with open(path, "w") as f:
            json.dump({f"{h:#x}": e.to_dict() for h, e in self.entries.items()}, f)

    @staticmethod
    def load(path: str) -> "Registry":
        reg = Registry()
        with open(path) as f:
            data = json.load(f)
        for h, d in data.items():
            entry = RegistryEntry.from_dict(d)
            if entry.h_theta != int(h, 16):
                raise RegistryError("registry file corrupt: hash mismatch")
            reg.entries[entry.h_theta] = entry
        return reg
