"""Merkle tree over salted field elements, used to commit proof witnesses."""

import numpy as np

from .sponge import TAG_LEAF, TAG_NODE, sponge_hash, sponge_pairs

ZERO_LEAF = sponge_hash([0, 0], tag=TAG_LEAF)


def leaf_hash(salt: int, value: int) -> int:
    return sponge_hash([salt, value], tag=TAG_LEAF)


def leaf_hashes(salts: list[int], values: list[int]) -> np.ndarray:
    """Vectorized leaf_hash over parallel salt/value lists."""
    return sponge_pairs(np.array(salts, dtype=np.uint64),
                        np.array(values, dtype=np.uint64), TAG_LEAF)


def node_hash(left: int, right: int) -> int:
    return sponge_hash([left, right], tag=TAG_NODE)


class MerkleTree:
    """Flat-array binary tree; node i has children 2i and 2i+1."""

    def __init__(self, leaves):
        n = 1
        while n < max(len(leaves), 1):
            n *= 2
        padded = np.empty(n, dtype=np.uint64)
        padded[: len(leaves)] = np.asarray(leaves, dtype=np.uint64)
        padded[len(leaves):] = ZERO_LEAF
        levels = [padded]
        while len(levels[-1]) > 1:
            cur = levels[-1]
            levels.append(sponge_pairs(cur[0::2], cur[1::2], TAG_NODE))
        nodes = np.empty(2 * n, dtype=np.uint64)
        nodes[0] = 0
        for lvl in levels:
            nodes[len(lvl) : 2 * len(lvl)] = lvl
        self.n = n
        self.nodes = [int(v) for v in nodes]

    @property
    def root(self) -> int:
        return self.nodes[1]

    def path(self, index: int) -> list[int]:
        pos = index + self.n
        out = []
        while pos > 1:
            out.append(self.nodes[pos ^ 1])
            pos //= 2
        return out


def verify_path(root: int, index: int, leaf: int, path: list[int]) -> bool:
    h = leaf
    pos = index
    for sibling in path:
        h = node_hash(h, sibling) if pos % 2 == 0 else node_hash(sibling, h)
        pos //= 2
    return h == root


class PathVerifier:
    """Batch path checker that caches interior node hashes.

    When most leaves of a tree are opened (the common case here, since the
    spot-check count exceeds the constraint count), naive per-path hashing
    recomputes the same interior nodes thousands of times.  The cache makes
    verification roughly linear in the number of distinct nodes.
    """

    def __init__(self, root: int, n_leaves_pow2: int):
        self.root = root
        self.n = n_leaves_pow2
        self._known: dict[int, int] = {1: root}

    def check(self, index: int, leaf: int, path: list[int]) -> bool:
        if self.n != 1 << len(path):
            return False
        pos = index + self.n
        h = leaf
        # Walk upward until we hit a node whose hash is already trusted.
        chain = []
        for sibling in path:
            known = self._known.get(pos)
            if known is not None:
                if known != h:
                    return False
                for p, v in chain:
                    self._known[p] = v
                return True
            chain.append((pos, h))
            chain.append((pos ^ 1, sibling))
            h = node_hash(h, sibling) if pos % 2 == 0 else node_hash(sibling, h)
            pos //= 2
        if self._known[1] != h:
            return False
        for p, v in chain:
            self._known[p] = v
        return True
