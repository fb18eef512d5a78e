"""Commit-and-prove protocol over the decision circuits.

The prover commits to a salted witness with a Merkle tree, derives
challenge indices from a Fiat-Shamir seed over (statement, root), and
opens every witness slot referenced by the sampled constraints plus the
public slots.  The verifier replays the derivation and spot-checks the
sampled constraints against the opened values; acceptance of a false
statement requires every sampled constraint to miss the violation, so
the sample count k is sized from the target soundness error.
"""

from __future__ import annotations

import json
import math
import random
import struct
import warnings
from dataclasses import dataclass

from .field import P
from .merkle import MerkleTree, PathVerifier, leaf_hash, leaf_hashes
from .r1cs import ConstraintSystem, lc_eval
from .sponge import TAG_FS, sponge_hash

MAGIC = b"ZKPF"
VERSION = 1
DEFAULT_EPS = 1e-3
STATEMENT_FIELDS = ("c", "h_theta", "tau_fp", "t_win", "nonce", "action")


class ProofError(ValueError):
    pass


@dataclass(frozen=True)
class Statement:
    c: int
    h_theta: int
    tau_fp: int
    t_win: int
    nonce: int
    action: int

    def to_elements(self) -> list[int]:
        return [getattr(self, f) % P for f in STATEMENT_FIELDS]

    def to_json(self) -> str:
        return json.dumps({f: getattr(self, f) for f in STATEMENT_FIELDS},
                          sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(s: str) -> "Statement":
        d = json.loads(s)
        return Statement(**{f: int(d[f]) for f in STATEMENT_FIELDS})


@dataclass
class Proof:
    root: int
    statements: tuple  # one Statement per instance
    openings: dict[int, tuple[int, int, tuple]]  # leaf -> (value, salt, path)
    n_vars: int  # per instance

    @property
    def statement(self) -> Statement:
        return self.statements[0]

    @property
    def batch_size(self) -> int:
        return len(self.statements)

    def to_bytes(self) -> bytes:
        out = [MAGIC, struct.pack("<IQI", VERSION, self.root, self.n_vars)]
        out.append(struct.pack("<I", len(self.statements)))
        for st in self.statements:
            out.append(struct.pack("<6Q", *st.to_elements()))
        out.append(struct.pack("<I", len(self.openings)))
        for leaf in sorted(self.openings):
            value, salt, path = self.openings[leaf]
            out.append(struct.pack("<IQQB", leaf, value, salt, len(path)))
            out.append(struct.pack(f"<{len(path)}Q", *path))
        return b"".join(out)

    @staticmethod
    def from_bytes(data: bytes) -> "Proof":
        if data[:4] != MAGIC:
            raise ProofError("bad proof magic")
        off = 4
        version, root, n_vars = struct.unpack_from("<IQI", data, off)
        off += 16
        if version != VERSION:
            raise ProofError(f"unsupported proof version {version}")
        (n_st,) = struct.unpack_from("<I", data, off)
        off += 4
        statements = []
        for _ in range(n_st):
            vals = struct.unpack_from("<6Q", data, off)
            off += 48
            statements.append(Statement(*vals))
        (n_open,) = struct.unpack_from("<I", data, off)
        off += 4
        openings = {}
        for _ in range(n_open):
            leaf, value, salt, plen = struct.unpack_from("<IQQB", data, off)
            off += 21
            path = struct.unpack_from(f"<{plen}Q", data, off)
            off += 8 * plen
            openings[leaf] = (value, salt, tuple(path))
        if off != len(data):
            raise ProofError("trailing bytes in proof")
        return Proof(root=root, statements=tuple(statements),
                     openings=openings, n_vars=n_vars)

    @property
    def size_bytes(self) -> int:
        return len(self.to_bytes())


def sample_count(m: int, eps: float = DEFAULT_EPS) -> int:
    """Spot checks needed so a distinct uniform k-subset misses a single
    bad constraint among m with probability at most eps: (m-k)/m <= eps."""
    if m <= 0:
        return 0
    k = math.ceil(m * (1.0 - eps))
    if k <= 0:
        warnings.warn("insecure parameters: zero spot checks", stacklevel=2)
    return max(k, 0)


def proof_size_bytes(n_openings: int, depth: int, batch: int = 1) -> int:
    """Closed-form ZKPF size: header + statements + openings with paths."""
    return 24 + 48 * batch + 4 + n_openings * (21 + 8 * depth)


def challenge_seed(statements, root: int) -> int:
    elems = []
    for st in statements:
        elems.extend(st.to_elements())
    elems.append(root)
    return sponge_hash(elems, tag=TAG_FS)


def challenge_indices(seed: int, k: int, space: int) -> list[int]:
    rnd = random.Random(seed)
    return rnd.sample(range(space), min(k, space))


def _constraint_vars(cs: ConstraintSystem, idx: int) -> set[int]:
    cn = cs.constraints[idx]
    out = set()
    for lc in (cn.a, cn.b, cn.c):
        out.update(lc.keys())
    return out


def prove_batch(cs: ConstraintSystem, witnesses: list[list[int]],
                statements: list[Statement], eps: float = DEFAULT_EPS,
                rng: random.Random | None = None,
                unchecked: bool = False) -> Proof:
    """Prove B instances of the same circuit under one commitment tree.

    The spot-check budget k is held fixed at the single-instance count,
    so opening bytes amortize across the batch while each instance's
    public slots stay individually bound.
    """
    if len(witnesses) != len(statements) or not witnesses:
        raise ProofError("need one statement per witness")
    if len({st.h_theta for st in statements}) != 1:
        raise ProofError("batched statements must share one model hash")
    for prev, cur in zip(statements, statements[1:]):
        if cur.t_win <= prev.t_win:
            raise ProofError("batched window indices must be strictly increasing")
    rng = rng or random.Random()
    B = len(witnesses)
    n = cs.n_vars
    if not unchecked:
        for w in witnesses:
            bad = cs.first_violation(w)
            if bad is not None:
                raise ProofError(
                    f"refusing to prove an unsatisfied system (constraint {bad}, "
                    f"label {cs.constraints[bad].label})")
    for st, w in zip(statements, witnesses):
        for name, slot in cs.public.items():
            if w[slot] != getattr(st, name) % P:
                raise ProofError(f"statement field {name} disagrees with witness")

    salts = [rng.randrange(P) for _ in range(B * n)]
    flat = [v for w in witnesses for v in w]
    tree = MerkleTree(leaf_hashes(salts, flat))

    seed = challenge_seed(statements, tree.root)
    k = sample_count(cs.m, eps)
    indices = challenge_indices(seed, k, B * cs.m)

    opened: set[int] = set()
    for gi in indices:
        inst, ci = divmod(gi, cs.m)
        for v in _constraint_vars(cs, ci):
            opened.add(inst * n + v)
    for inst in range(B):
        opened.add(inst * n)  # the constant-1 slot anchors each instance
        for slot in cs.public.values():
            opened.add(inst * n + slot)

    openings = {i: (flat[i], salts[i], tuple(tree.path(i))) for i in sorted(opened)}
    return Proof(root=tree.root, statements=tuple(statements),
                 openings=openings, n_vars=n)


def prove(cs: ConstraintSystem, witness: list[int], statement: Statement,
          eps: float = DEFAULT_EPS, rng: random.Random | None = None) -> Proof:
    return prove_batch(cs, [witness], [statement], eps=eps, rng=rng)


def verify_batch(cs: ConstraintSystem, proof: Proof,
                 eps: float = DEFAULT_EPS) -> tuple[bool, str | None]:
    """Returns (accepted, reject_reason)."""
    n = cs.n_vars
    B = proof.batch_size
    if proof.n_vars != n:
        return False, "bad-binding"

    seed = challenge_seed(proof.statements, proof.root)
    k = sample_count(cs.m, eps)
    indices = challenge_indices(seed, k, B * cs.m)

    npad = 1
    while npad < B * n:
        npad *= 2
    pv = PathVerifier(proof.root, npad)
    for leaf, (value, salt, path) in proof.openings.items():
        if not 0 <= leaf < B * n:
            return False, "bad-path"
        if not pv.check(leaf, leaf_hash(salt, value), path):
            return False, "bad-path"

    def opened(i):
        entry = proof.openings.get(i)
        return None if entry is None else entry[0]

    for inst, st in enumerate(proof.statements):
        if opened(inst * n) != 1:
            return False, "bad-binding"
        for name, slot in cs.public.items():
            v = opened(inst * n + slot)
            if v is None:
                return False, "missing-opening"
            if v != getattr(st, name) % P:
                return False, "bad-binding"

    for gi in indices:
        inst, ci = divmod(gi, cs.m)
        vals = {}
        for v in _constraint_vars(cs, ci):
            ov = opened(inst * n + v)
            if ov is None:
                return False, "missing-opening"
            vals[v] = ov
        cn = cs.constraints[ci]
        lhs = lc_eval(cn.a, _Sparse(vals)) * lc_eval(cn.b, _Sparse(vals)) % P
        if lhs != lc_eval(cn.c, _Sparse(vals)):
            return False, "bad-constraint"
    return True, None


def verify(cs: ConstraintSystem, proof: Proof,
           eps: float = DEFAULT_EPS) -> tuple[bool, str | None]:
    return verify_batch(cs, proof, eps=eps)


class _Sparse:
    """Dict-backed stand-in for a witness list in lc_eval."""

    def __init__(self, vals: dict[int, int]):
        self.vals = vals

    def __getitem__(self, i: int) -> int:
        return self.vals[i]
