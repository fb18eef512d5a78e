"""End-to-end per-window processing shared by the CLI and the tests.

For each window: standardize, run the int8 encoder, decide through the
registered policy, build the matching circuit witness, prove, verify,
emit the canonical action record, and append to the audit log.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

from .audit import AuditLog
from .circuits import build, witness_only
from .field import P
from .policy import ACTIONS, decide, make_action_record
from .protocol import Proof, Statement, prove_batch
from .quantize import forward_quantized, logit_margin
from .registry import RegistryEntry
from .windows import Window, standardize

Stats = tuple  # (mean, std) arrays from windows.compute_stats


@dataclass
class WindowResult:
    t_win: int
    zone: str
    decision: str
    basis: str
    u_q: int
    commitment: int
    statement: Statement
    proof: Proof
    accepted: bool
    reject_reason: str | None
    action_record: str


def commit_window(entry: RegistryEntry, w: Window, stats: Stats | None,
                  rng: random.Random) -> dict:
    """Commitment phase: encode, decide, and commit the latent.

    Returns everything needed to later produce a proof, without touching
    the proof system; the gateway split lets a device publish commitments
    ahead of challenge time.
    """
    if stats is not None:
        w = standardize(w, stats)
    logits, u_q, latent = forward_quantized(entry.qm, w)
    star, _, _ = logit_margin(logits)
    decision, basis = decide(entry.tree, star, u_q, entry.tau_fp, entry.ctx)
    salt = rng.randrange(P)
    nonce = rng.randrange(P)
    return {
        "z_codes": [int(c) for c in latent.codes],
        "salt": salt,
        "nonce": nonce,
        "t_win": w.t_win,
        "zone": w.zone,
        "decision": decision,
        "basis": basis,
        "u_q": u_q,
        "class_idx": star,
    }


def prove_from_commit(entry: RegistryEntry, commits: list[dict],
                      rng: random.Random) -> tuple[list[Statement], Proof]:
    """Proving phase over one or more committed windows (one batch)."""
    abstain = commits[0]["decision"] == "abstain"
    if any((c["decision"] == "abstain") != abstain for c in commits):
        raise ValueError("cannot mix abstain and non-abstain windows in a batch")
    spec = entry.circuit_spec(abstain=abstain)
    cs, _ = build(spec)  # shared structure, instantiated once per batch
    witnesses = []
    statements = []
    for cm in commits:
        wit = witness_only(spec, cm["z_codes"], salt=cm["salt"],
                           t_win=cm["t_win"], nonce=cm["nonce"])
        st = Statement(*(wit[cs.public[f]] for f in
                         ("c", "h_theta", "tau_fp", "t_win", "nonce", "action")))
        witnesses.append(wit)
        statements.append(st)
    proof = prove_batch(cs, witnesses, statements, rng=rng)
    return statements, proof


def process_window(entry: RegistryEntry, w: Window, stats: Stats | None,
                   rng: random.Random, registry=None) -> WindowResult:
    cm = commit_window(entry, w, stats, rng)
    statements, proof = prove_from_commit(entry, [cm], rng)
    st = statements[0]
    if registry is not None:
        accepted, reason = registry.verify_proof(proof)
    else:
        from .protocol import verify

        accepted, reason = verify(entry.circuit(cm["decision"] == "abstain"), proof)
    record = make_action_record(zone=cm["zone"], target=f"win-{cm['t_win']}",
                                decision=cm["decision"], basis=cm["basis"],
                                confidence=cm["u_q"])
    return WindowResult(
        t_win=cm["t_win"], zone=cm["zone"], decision=cm["decision"],
        basis=cm["basis"], u_q=cm["u_q"], commitment=st.c, statement=st,
        proof=proof, accepted=accepted, reject_reason=reason,
        action_record=record)


def run(entry: RegistryEntry, windows: list[Window], stats: Stats | None,
        key: bytes, site_id: str, seed: int = 0,
        fixed_time: float | None = None, registry=None,
        log: AuditLog | None = None) -> tuple[list[WindowResult], AuditLog]:
    """Process windows in order, appending each emitted action to the log."""
    rng = random.Random(seed)
    log = log if log is not None else AuditLog(key)
    results = []
    for w in windows:
        res = process_window(entry, w, stats, rng, registry=registry)
        ts = fixed_time if fixed_time is not None else time.time()
        log.append(ts=ts, site_id=site_id, zone=res.zone, action=res.decision,
                   u=res.u_q, c=res.commitment, h_theta=entry.h_theta,
                   t_win=res.t_win, pi_size=res.proof.size_bytes)
        results.append(res)
    return results, log


def confidence_table_outputs(qm, windows: list[Window], stats):
    """(confidences in [0,1], predicted classes, labels) for a window set."""
    import numpy as np

    from .quantize import CONF_SCALE, confidence_code, forward_quantized

    conf, preds, labels = [], [], []
    for w in windows:
        sw = standardize(w, stats) if stats is not None else w
        lq, _, _ = forward_quantized(qm, sw)
        conf.append(confidence_code(qm, lq) / CONF_SCALE)
        preds.append(int(np.argmax(lq)))
        labels.append(w.label)
    return np.array(conf), np.array(preds), np.array(labels)


def coverage_curve(qm, windows: list[Window], stats, lam: float = 0.5):
    """Coverage-risk curve at the model's frozen operating temperature."""
    from .calibrate import select_threshold

    conf, preds, labels = confidence_table_outputs(qm, windows, stats)
    _, curve = select_threshold(conf, preds, labels, qm.config.n_classes, lam=lam)
    return curve


def calibrate_quantized(qm, val_windows: list[Window], stats,
                        lam: float = 0.5, dataset_checksum: str = ""):
    """Fit the operating point of a quantized model on validation data.

    Temperature is fit on dequantized logits, the confidence table is
    rebuilt with it (changing the model bytes and hash), and the floor is
    selected by exact utility scan over the resulting confidence codes.
    Returns (final model, profile, coverage-risk curve).
    """
    import numpy as np

    from .calibrate import CalibrationProfile, fit_temperature, select_threshold
    from .quantize import (CONF_SCALE, confidence_code, forward_quantized,
                           with_confidence_temperature)

    logits_q = []
    labels = []
    for w in val_windows:
        sw = standardize(w, stats) if stats is not None else w
        lq, _, _ = forward_quantized(qm, sw)
        logits_q.append(lq)
        labels.append(w.label)
    logits_q = np.stack(logits_q)
    labels = np.array(labels)
    deq = logits_q * qm.logit_scale
    temperature = fit_temperature(deq, labels)
    qm_final = with_confidence_temperature(qm, temperature)

    conf = np.array([confidence_code(qm_final, lq) for lq in logits_q]) / CONF_SCALE
    preds = np.argmax(logits_q, axis=1)
    tau, curve = select_threshold(conf, preds, labels, qm.config.n_classes, lam=lam)
    profile = CalibrationProfile(temperature=temperature, tau_reg=tau, lam=lam,
                                 dataset_checksum=dataset_checksum,
                                 model_hash=f"{qm_final.model_hash:#x}")
    return qm_final, profile, curve


def action_counts(results: list[WindowResult]) -> dict[str, int]:
    out = {a: 0 for a in ACTIONS}
    for r in results:
        out[r.decision] += 1
    return out
