"""Red-team harness: scripted attacks against the verification stack.

Each attack builds a concrete malicious artifact, submits it through the
same registry-backed verifier honest traffic uses, and reports the
triple (attempted, accepted, reject_reason).  A healthy deployment
accepts none of them.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .audit import verify_chain
from .pipeline import commit_window, prove_from_commit
from .protocol import Proof, Statement
from .registry import Registry, RegistryEntry, tau_code


@dataclass(frozen=True)
class AttackReport:
    name: str
    attempted: bool
    accepted: bool
    reject_reason: str | None


def attack_replay(registry: Registry, entry: RegistryEntry, windows, stats,
                  seed: int = 0) -> AttackReport:
    """Replay a past proof under a new window index.

    The adversary captured an accepted proof for window t and re-submits
    it claiming a later window t'.  The statement is part of the
    challenge derivation, so the pasted-in t' changes the sampled
    constraint indices and the binding check fails.
    """
    rng = random.Random(seed)
    cm = commit_window(entry, windows[0], stats, rng)
    statements, proof = prove_from_commit(entry, [cm], rng)
    ok, _ = registry.verify_proof(proof)
    if not ok:
        return AttackReport("replay", False, False, "setup-failed")
    st = statements[0]
    forged = Statement(st.c, st.h_theta, st.tau_fp, st.t_win + 17, st.nonce, st.action)
    replayed = Proof(root=proof.root, statements=(forged,),
                     openings=proof.openings, n_vars=proof.n_vars)
    accepted, reason = registry.verify_proof(replayed)
    return AttackReport("replay", True, accepted, reason)


def attack_tamper_threshold(registry: Registry, entry: RegistryEntry, windows,
                            stats, seed: int = 0) -> AttackReport:
    """Claim a lower confidence floor than the registered one.

    The adversary rewrites tau in the statement (hoping to justify acting
    on a low-confidence window); the registered circuit pins the tau slot
    to a constant, so the opened public slot contradicts the statement.
    """
    rng = random.Random(seed)
    cm = commit_window(entry, windows[0], stats, rng)
    statements, proof = prove_from_commit(entry, [cm], rng)
    st = statements[0]
    forged_tau = st.tau_fp - 8 if st.tau_fp >= 8 else st.tau_fp + 8
    forged = Statement(st.c, st.h_theta, forged_tau, st.t_win, st.nonce, st.action)
    tampered = Proof(root=proof.root, statements=(forged,),
                     openings=proof.openings, n_vars=proof.n_vars)
    accepted, reason = registry.verify_proof(tampered)
    return AttackReport("tamper-threshold", True, accepted, reason)


def attack_rollback(registry: Registry, entry: RegistryEntry, windows, stats,
                    seed: int = 0) -> AttackReport:
    """Deploy an older model binary that was never (re-)registered.

    The rolled-back model has different bytes, hence a different hash; its
    proofs are internally consistent but the registry has no entry for the
    claimed model identity.
    """
    from .quantize import with_confidence_temperature
    from .registry import RegistryEntry as _Entry

    old_qm = with_confidence_temperature(entry.qm, entry.qm.temperature * 2.0)
    old_entry = _Entry(qm=old_qm, tree=entry.tree, profile=entry.profile,
                       ctx=dict(entry.ctx))
    rng = random.Random(seed)
    cm = commit_window(old_entry, windows[0], stats, rng)
    _, proof = prove_from_commit(old_entry, [cm], rng)
    accepted, reason = registry.verify_proof(proof)
    return AttackReport("rollback", True, accepted, reason)


def attack_audit_truncate(registry: Registry, entry: RegistryEntry, windows,
                          stats, key: bytes, seed: int = 0) -> AttackReport:
    """Drop an entry from the audit log to hide a past action.

    The chained digests make the splice point visible: the first entry
    after the cut no longer references the digest of its predecessor.
    """
    from .pipeline import run

    results, log = run(entry, windows[:3], stats, key, site_id="site-rb",
                       seed=seed, registry=registry, fixed_time=0.0)
    dropped = log.entries[:1] + log.entries[2:]  # hide the middle action
    ok, first_bad = verify_chain(dropped, key)
    return AttackReport("audit-truncate", True, ok,
                        None if ok else f"chain-break@{first_bad}")


def attack_unregistered_model(registry: Registry, entry: RegistryEntry, windows,
                              stats, seed: int = 0) -> AttackReport:
    """Prove against a model the registry has never seen."""
    rng = random.Random(seed)
    cm = commit_window(entry, windows[0], stats, rng)
    statements, proof = prove_from_commit(entry, [cm], rng)
    st = statements[0]
    rogue = Statement(st.c, (st.h_theta + 1) % (2**64), st.tau_fp,
                      st.t_win, st.nonce, st.action)
    forged = Proof(root=proof.root, statements=(rogue,),
                   openings=proof.openings, n_vars=proof.n_vars)
    accepted, reason = registry.verify_proof(forged)
    return AttackReport("unregistered-model", True, accepted, reason)


def run_all(registry: Registry, entry: RegistryEntry, windows, stats,
            key: bytes, seed: int = 0) -> list[AttackReport]:
    return [
        attack_replay(registry, entry, windows, stats, seed),
        attack_tamper_threshold(registry, entry, windows, stats, seed),
        attack_rollback(registry, entry, windows, stats, seed),
        attack_audit_truncate(registry, entry, windows, stats, key, seed),
        attack_unregistered_model(registry, entry, windows, stats, seed),
    ]
