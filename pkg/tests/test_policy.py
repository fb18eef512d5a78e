"""Policy trees: evaluation vs a naive oracle, compilation, action records."""

import json
import random

import pytest

from veriwave.policy import (ACTION_ID, ACTIONS, PolicyError, PolicyTree,
                             Predicate, compile_tree, decide, default_tree,
                             leaf, make_action_record, node, validate_action)


def naive_eval(n, class_idx, u_q, ctx):
    """Oracle: direct recursive walk, no compilation tricks."""
    while n.action is None:
        p = n.pred
        if p.kind == "class_eq":
            hit = class_idx == p.value
        elif p.kind == "conf_ge":
            hit = u_q >= p.value
        else:
            hit = bool(ctx.get(p.key, False))
        n = n.on_true if hit else n.on_false
    return n.action


def random_tree(rng, n_classes=5, depth=0):
    if depth >= 4 or rng.random() < 0.35:
        return leaf(rng.choice(ACTIONS))
    kind = rng.choice(["class_eq", "conf_ge", "ctx"])
    if kind == "class_eq":
        p = Predicate("class_eq", rng.randrange(n_classes))
    elif kind == "conf_ge":
        p = Predicate("conf_ge", rng.randrange(129))
    else:
        p = Predicate("ctx", rng.randrange(2), key=rng.choice(["armed", "night"]))
    return node(p, random_tree(rng, n_classes, depth + 1),
                random_tree(rng, n_classes, depth + 1))


def test_evaluate_matches_naive_oracle():
    rng = random.Random(0)
    for _ in range(30):
        tree = PolicyTree(root=random_tree(rng), n_classes=5)
        tree.validate()
        for _ in range(50):
            c = rng.randrange(5)
            u = rng.randrange(129)
            ctx = {"armed": rng.random() < 0.5, "night": rng.random() < 0.5}
            assert tree.evaluate(c, u, ctx) == naive_eval(tree.root, c, u, ctx)


def test_compiled_leaves_match_interpreter():
    rng = random.Random(1)
    for _ in range(20):
        tree = PolicyTree(root=random_tree(rng), n_classes=5)
        ctx = {"armed": rng.random() < 0.5, "night": rng.random() < 0.5}
        leaves = compile_tree(tree, ctx)
        for lf in leaves:
            assert all(p.kind in ("class_eq", "conf_ge") for p, _ in lf.literals)
        for _ in range(50):
            c = rng.randrange(5)
            u = rng.randrange(129)
            hits = [lf for lf in leaves
                    if all((c == p.value if p.kind == "class_eq" else u >= p.value) == want
                           for p, want in lf.literals)]
            assert len(hits) == 1  # leaves partition the input space
            assert ACTIONS[hits[0].action_id] == tree.evaluate(c, u, ctx)


def test_json_roundtrip_and_hash():
    t = default_tree(5)
    t2 = PolicyTree.from_json(t.to_json())
    assert t2.to_json() == t.to_json()
    assert t2.tree_hash == t.tree_hash
    other = default_tree(5, conf_hi=97)
    assert other.tree_hash != t.tree_hash


def test_depth_limit():
    n = leaf("allow")
    for _ in range(9):
        n = node(Predicate("conf_ge", 10), n, leaf("deny"))
    with pytest.raises(PolicyError):
        PolicyTree(root=n, n_classes=5).validate()


def test_predicate_validation():
    with pytest.raises(PolicyError):
        Predicate("conf_ge", 200).validate(5)
    with pytest.raises(PolicyError):
        Predicate("class_eq", 7).validate(5)
    with pytest.raises(PolicyError):
        Predicate("ctx", 1).validate(5)  # ctx needs a key


def test_decide_abstain_floor_dominates():
    t = default_tree(5)
    for u in range(0, 40):
        d, basis = decide(t, class_idx=0, u_q=u, tau_fp=40, ctx={})
        assert d == "abstain" and basis == "confidence-floor"
    d, basis = decide(t, class_idx=1, u_q=40, tau_fp=40, ctx={})
    assert basis == "policy-tree"


def test_action_record_canonical():
    rec = make_action_record(zone="zone-A", target="win-3", decision="deny",
                             basis="policy-tree", confidence=77)
    keys = list(json.loads(rec).keys())
    assert keys == ["zone", "target", "decision", "basis", "confidence"]
    parsed = validate_action(rec)
    assert parsed["decision"] == "deny" and parsed["confidence"] == 77
    # reordered fields are rejected as non-canonical
    shuffled = json.dumps({k: json.loads(rec)[k]
                           for k in ["decision", "zone", "target", "basis", "confidence"]},
                          separators=(", ", ": "))
    with pytest.raises(PolicyError):
        validate_action(shuffled)


def test_action_ids_stable():
    assert [ACTION_ID[a] for a in ACTIONS] == [0, 1, 2, 3]
