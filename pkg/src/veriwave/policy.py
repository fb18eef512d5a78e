"""Decision policy: small decision trees over (class, confidence, context).

Trees are registered alongside a model and compiled to per-leaf predicate
conjunctions so the proof layer can attest that an emitted action is the
one the registered tree prescribes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .quantize import CONF_SCALE
from .sponge import hash_bytes
from .windows import ParameterError

ACTIONS = ("allow", "deny", "alarm", "abstain")
ACTION_ID = {name: i for i, name in enumerate(ACTIONS)}
ABSTAIN = ACTION_ID["abstain"]
MAX_DEPTH = 8


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Predicate:
    """class_eq: class == value; conf_ge: u_q >= value; ctx: named flag."""

    kind: str
    value: int = 0
    key: str = ""

    def validate(self, n_classes: int):
        if self.kind == "class_eq":
            if not 0 <= self.value < n_classes:
                raise PolicyError(f"class_eq value {self.value} out of range")
        elif self.kind == "conf_ge":
            if not 0 <= self.value <= CONF_SCALE:
                raise PolicyError(f"conf_ge value {self.value} out of range")
        elif self.kind == "ctx":
            if not self.key:
                raise PolicyError("ctx predicate needs a flag name")
        else:
            raise PolicyError(f"unknown predicate kind {self.kind!r}")

    def holds(self, class_idx: int, u_q: int, ctx: dict) -> bool:
        if self.kind == "class_eq":
            return class_idx == self.value
        if self.kind == "conf_ge":
            return u_q >= self.value
        return bool(ctx.get(self.key, False))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "key": self.key}


@dataclass(frozen=True)
class PolicyNode:
    """Internal node (pred + two children) or leaf (action set)."""

    pred: Predicate | None = None
    on_true: "PolicyNode | None" = None
    on_false: "PolicyNode | None" = None
    action: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.action is not None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"action": self.action}
        return {"pred": self.pred.to_dict(),
                "true": self.on_true.to_dict(),
                "false": self.on_false.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "PolicyNode":
        if "action" in d:
            return PolicyNode(action=d["action"])
        p = d["pred"]
        return PolicyNode(pred=Predicate(p["kind"], p.get("value", 0), p.get("key", "")),
                          on_true=PolicyNode.from_dict(d["true"]),
                          on_false=PolicyNode.from_dict(d["false"]))


def leaf(action: str) -> PolicyNode:
    return PolicyNode(action=action)


def node(pred: Predicate, on_true: PolicyNode, on_false: PolicyNode) -> PolicyNode:
    return PolicyNode(pred=pred, on_true=on_true, on_false=on_false)


@dataclass(frozen=True)
class PolicyTree:
    root: PolicyNode
    n_classes: int

    def validate(self):
        def walk(nd: PolicyNode, depth: int):
            if depth > MAX_DEPTH:
                raise PolicyError(f"tree deeper than {MAX_DEPTH}")
            if nd.is_leaf:
                if nd.action not in ACTION_ID:
                    raise PolicyError(f"unknown action {nd.action!r}")
                return
            if nd.pred is None or nd.on_true is None or nd.on_false is None:
                raise PolicyError("internal node must have pred and two children")
            nd.pred.validate(self.n_classes)
            walk(nd.on_true, depth + 1)
            walk(nd.on_false, depth + 1)

        walk(self.root, 0)

    def to_json(self) -> str:
        return json.dumps({"n_classes": self.n_classes, "root": self.root.to_dict()},
                          sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(s: str) -> "PolicyTree":
        d = json.loads(s)
        tree = PolicyTree(root=PolicyNode.from_dict(d["root"]), n_classes=d["n_classes"])
        tree.validate()
        return tree

    @property
    def tree_hash(self) -> int:
        return hash_bytes(self.to_json().encode())

    def evaluate(self, class_idx: int, u_q: int, ctx: dict | None = None) -> str:
        ctx = ctx or {}
        nd = self.root
        while not nd.is_leaf:
            nd = nd.on_true if nd.pred.holds(class_idx, u_q, ctx) else nd.on_false
        return nd.action


def default_tree(n_classes: int, alarm_class: int = 0, conf_hi: int = 96) -> PolicyTree:
    """A small useful policy: alarm on a designated class when confident,
    deny it otherwise, allow everything else."""
    t = PolicyTree(
        root=node(
            Predicate("class_eq", alarm_class),
            node(Predicate("conf_ge", conf_hi), leaf("alarm"), leaf("deny")),
            leaf("allow"),
        ),
        n_classes=n_classes,
    )
    t.validate()
    return t


@dataclass(frozen=True)
class CompiledLeaf:
    """Conjunction of (predicate, polarity) literals implying one action."""

    literals: tuple[tuple[Predicate, bool], ...]
    action_id: int


def compile_tree(tree: PolicyTree, ctx: dict | None = None) -> list[CompiledLeaf]:
    """Flatten to root-to-leaf conjunctions, partially evaluating ctx flags.

    The proof circuits only understand class_eq and conf_ge literals, so
    context flags must be pinned at compile time (they are fixed per zone
    at registration).  Branches made unreachable by ctx values are dropped.
    """
    tree.validate()
    ctx = ctx or {}
    leaves: list[CompiledLeaf] = []

    def walk(nd: PolicyNode, lits: tuple):
        if nd.is_leaf:
            leaves.append(CompiledLeaf(lits, ACTION_ID[nd.action]))
            return
        if nd.pred.kind == "ctx":
            taken = nd.on_true if bool(ctx.get(nd.pred.key, False)) else nd.on_false
            walk(taken, lits)
            return
        walk(nd.on_true, lits + ((nd.pred, True),))
        walk(nd.on_false, lits + ((nd.pred, False),))

    walk(tree.root, ())
    return leaves


def decide(tree: PolicyTree, class_idx: int, u_q: int, tau_fp: int,
           ctx: dict | None = None) -> tuple[str, str]:
    """Returns (decision, basis).  Abstention dominates the tree: below the
    registered confidence floor no tree leaf may fire."""
    if not 0 <= u_q <= CONF_SCALE:
        raise ParameterError("confidence code out of range")
    if u_q < tau_fp:
        return "abstain", "confidence-floor"
    return tree.evaluate(class_idx, u_q, ctx), "policy-tree"


def make_action_record(zone: str, target: str, decision: str, basis: str,
                       confidence: int) -> str:
    """Canonical action record JSON; field order is part of the format."""
    if decision not in ACTION_ID:
        raise PolicyError(f"unknown decision {decision!r}")
    pairs = [("zone", zone), ("target", target), ("decision", decision),
             ("basis", basis), ("confidence", confidence)]
    return "{" + ",".join(f"{json.dumps(k)}:{json.dumps(v)}" for k, v in pairs) + "}"


def validate_action(record: str) -> dict:
    """Parse and check a canonical action record; returns its fields."""
    d = json.loads(record)
    expected = ["zone", "target", "decision", "basis", "confidence"]
    if list(d.keys()) != expected:
        raise PolicyError("action record fields out of canonical order")
    if d["decision"] not in ACTION_ID:
        raise PolicyError(f"unknown decision {d['decision']!r}")
    if not isinstance(d["confidence"], int) or not 0 <= d["confidence"] <= CONF_SCALE:
        raise PolicyError("confidence out of range")
    if make_action_record(**d) != record:
        raise PolicyError("action record is not in canonical form")
    return d
