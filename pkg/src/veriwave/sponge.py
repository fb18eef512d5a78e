"""Sponge hash over the prime field.

A width-3, rate-2 sponge whose permutation applies full x^7 S-box rounds
with fixed round constants and a circulant mixing matrix.  No production
security level is claimed; collision resistance is checked statistically
by the test suite.  The same permutation is re-implemented inside the
commitment circuit, so its structure is deliberately simple.
"""

import hashlib

import numpy as np

from .field import P, bytes_to_elements

WIDTH = 3
RATE = 2
ROUNDS = 8

# Domain tags keep the different hash uses (plain hashing, latent
# commitments, Merkle leaves/nodes, Fiat-Shamir, MACs) from colliding.
TAG_HASH = 1
TAG_COMMIT = 2
TAG_LEAF = 3
TAG_NODE = 4
TAG_FS = 5
TAG_MAC = 6

_INIT = int.from_bytes(hashlib.sha256(b"veriwave-sponge-iv").digest()[:8], "little") % P


def _round_constants() -> list[list[int]]:
    rc = []
    for r in range(ROUNDS):
        row = []
        for lane in range(WIDTH):
            h = hashlib.sha256(f"veriwave-sponge-rc-{r}-{lane}".encode()).digest()
            row.append(int.from_bytes(h[:16], "little") % P)
        rc.append(tuple(row))
    return rc


ROUND_CONSTANTS = _round_constants()
MIX = [[2, 1, 1], [1, 2, 1], [1, 1, 2]]


def permute(state: list[int]) -> list[int]:
    # Hot path: x^7 via four modmuls beats pow(); the mix row sums share t.
    s0, s1, s2 = state
    for rc0, rc1, rc2 in ROUND_CONSTANTS:
        x = (s0 + rc0) % P
        x2 = x * x % P
        x3 = x2 * x % P
        s0 = x3 * x3 % P * x % P
        x = (s1 + rc1) % P
        x2 = x * x % P
        x3 = x2 * x % P
        s1 = x3 * x3 % P * x % P
        x = (s2 + rc2) % P
        x2 = x * x % P
        x3 = x2 * x % P
        s2 = x3 * x3 % P * x % P
        t = s0 + s1 + s2
        s0, s1, s2 = (t + s0) % P, (t + s1) % P, (t + s2) % P
    return [s0, s1, s2]


# ---- vectorized lane arithmetic -------------------------------------------
#
# The prover hashes thousands of independent leaves per proof; scalar
# sponge calls dominate its runtime.  These numpy kernels compute the
# same permutation lane-parallel.  The field is P = 2^64 - 2^32 + 1, so
# 2^64 = 2^32 - 1 and 2^96 = -1 (mod P), which reduces a 128-bit product
# held as 32-bit limbs in a handful of uint64 operations.

_MASK32 = np.uint64(0xFFFFFFFF)
_P_U = np.uint64(P)
_SH32 = np.uint64(32)


def _addmod_vec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a + b  # wraps mod 2^64
    adj = (s < a) | (s >= _P_U)
    return np.where(adj, s + _MASK32, s)  # +2^32-1 == -P (mod 2^64)


def _mulmod_vec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    al = a & _MASK32
    ah = a >> _SH32
    bl = b & _MASK32
    bh = b >> _SH32
    ll = al * bl
    mid = al * bh
    mid2 = ah * bl
    hh = ah * bh
    mid_sum = mid + mid2
    mid_carry = (mid_sum < mid).astype(np.uint64)
    n0 = ll + (mid_sum << _SH32)
    c0 = (n0 < ll).astype(np.uint64)
    n1 = hh + (mid_sum >> _SH32) + (mid_carry << _SH32) + c0
    # reduce n1*2^64 + n0 mod P
    m0 = n1 & _MASK32
    m1 = n1 >> _SH32
    t = (m0 << _SH32) - m0  # m0 * (2^32 - 1), no borrow since m0 < 2^32
    s = n0 + t
    s = np.where(s < n0, s + _MASK32, s)
    r = s - m1
    r = np.where(s < m1, r - _MASK32, r)  # borrow: add P back
    return np.where(r >= _P_U, r + _MASK32, r)


def permute_vec(s0: np.ndarray, s1: np.ndarray, s2: np.ndarray):
    """Lane-parallel permutation; each argument is a uint64 array < P."""
    for rc in ROUND_CONSTANTS:
        lanes = []
        for s, c in zip((s0, s1, s2), rc):
            x = _addmod_vec(s, np.uint64(c))
            x2 = _mulmod_vec(x, x)
            x3 = _mulmod_vec(x2, x)
            lanes.append(_mulmod_vec(_mulmod_vec(x3, x3), x))
        t = _addmod_vec(_addmod_vec(lanes[0], lanes[1]), lanes[2])
        s0, s1, s2 = (_addmod_vec(t, lanes[0]), _addmod_vec(t, lanes[1]),
                      _addmod_vec(t, lanes[2]))
    return s0, s1, s2


def sponge_pairs(x: np.ndarray, y: np.ndarray, tag: int) -> np.ndarray:
    """Vectorized sponge_hash([x_i, y_i], tag) for element-wise pairs."""
    cap = np.full(x.shape, (_INIT + tag * 0x1000000 + 2) % P, dtype=np.uint64)
    s0, _, _ = permute_vec(x.astype(np.uint64), y.astype(np.uint64), cap)
    return s0


def sponge_hash(elements: list[int], tag: int = TAG_HASH) -> int:
    """Absorb ``elements`` and squeeze one field element.

    The input length and domain tag are folded into the capacity lane, so
    no trailing padding is needed and the empty input hashes to a fixed
    constant (one bare permutation of the initial state).
    """
    state = [0, 0, (_INIT + tag * 0x1000000 + len(elements)) % P]
    if not elements:
        return permute(state)[0]
    for i in range(0, len(elements), RATE):
        chunk = elements[i : i + RATE]
        state[0] = (state[0] + chunk[0]) % P
        if len(chunk) > 1:
            state[1] = (state[1] + chunk[1]) % P
        state = permute(state)
    return state[0]


def hash_bytes(data: bytes, tag: int = TAG_HASH) -> int:
    return sponge_hash(bytes_to_elements(data), tag=tag)


def mac(key: bytes, data: bytes) -> int:
    """Keyed sponge MAC used for audit-log signatures."""
    return sponge_hash(bytes_to_elements(key) + bytes_to_elements(data), tag=TAG_MAC)
