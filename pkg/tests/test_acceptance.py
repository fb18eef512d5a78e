"""Acceptance gate: the twelve end-to-end criteria, each at its stated
tolerance.  These are the release checks; the unit suites cover the same
ground at finer grain."""

from __future__ import annotations

import gc
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from test_losses import fd_grad, rel_err
from veriwave.audit import AuditLog, verify_chain
from veriwave.augment import perturb
from veriwave.calibrate import ece, fit_temperature, macro_f1, select_threshold
from veriwave.circuits import _leaf_action, build
from veriwave.cli import main
from veriwave.losses import loss_calibrated_ce, loss_msm, loss_nce, loss_phase
from veriwave.model import forward
from veriwave.pipeline import (commit_window, coverage_curve, process_window,
                               prove_from_commit, run)
from veriwave.policy import ACTION_ID, compile_tree, decide
from veriwave.protocol import Proof, Statement, prove_batch, sample_count
from veriwave.quantize import CONF_SCALE, forward_quantized
from veriwave.registry import Registry
from veriwave.windows import save_dataset, standardize

EPS_SOUNDNESS = 1e-3


@pytest.fixture(scope="module")
def honest_pool(dataset, registry_entry):
    """A few honest (commit, statements, proof) triples for forgery bases."""
    _, splits, stats = dataset
    reg, entry = registry_entry
    prng = random.Random(41)
    pool = []
    for w in splits["test"]:
        cm = commit_window(entry, w, stats, prng)
        if cm["decision"] == "abstain":
            continue
        sts, proof = prove_from_commit(entry, [cm], prng)
        ok, reason = reg.verify_proof(proof)
        assert ok, reason
        pool.append((cm, sts[0], proof))
        if len(pool) >= 6:
            break
    assert pool
    return pool


# --- 1: honest traffic verifies, at throughput -------------------------------

def test_c01_honest_runs_all_accept(dataset, registry_entry):
    _, splits, stats = dataset
    reg, entry = registry_entry
    windows = splits["test"]
    prng = random.Random(1001)
    t0 = time.perf_counter()
    accepted = 0
    for i in range(1000):
        res = process_window(entry, windows[i % len(windows)], stats, prng,
                             registry=reg)
        accepted += int(res.accepted)
    elapsed = time.perf_counter() - t0
    assert accepted == 1000
    assert elapsed < 300.0, f"1000 honest runs took {elapsed:.1f}s"


# --- 2: threshold tampering and model rollback never verify ------------------

def test_c02_tamper_threshold_rejected_1000(registry_entry, honest_pool):
    reg, entry = registry_entry
    prng = random.Random(2002)
    accepted = 0
    for _ in range(1000):
        _, st, proof = honest_pool[prng.randrange(len(honest_pool))]
        forged_tau = prng.randrange(256)
        while forged_tau == entry.tau_fp:
            forged_tau = prng.randrange(256)
        forged = Statement(st.c, st.h_theta, forged_tau, st.t_win, st.nonce,
                           st.action)
        tampered = Proof(root=proof.root, statements=(forged,),
                         openings=proof.openings, n_vars=proof.n_vars)
        ok, _ = reg.verify_proof(tampered)
        accepted += int(ok)
    assert accepted == 0


def test_c02_rollback_rejected_1000(dataset, registry_entry):
    from veriwave.quantize import with_confidence_temperature
    from veriwave.registry import RegistryEntry

    _, splits, stats = dataset
    reg, entry = registry_entry
    old_qm = with_confidence_temperature(entry.qm, entry.qm.temperature * 2.0)
    assert old_qm.model_hash != entry.h_theta
    old_entry = RegistryEntry(qm=old_qm, tree=entry.tree,
                              profile=entry.profile, ctx=dict(entry.ctx))
    prng = random.Random(2003)
    windows = splits["test"]
    accepted = 0
    for i in range(1000):
        cm = commit_window(old_entry, windows[i % len(windows)], stats, prng)
        _, proof = prove_from_commit(old_entry, [cm], prng)
        ok, reason = reg.verify_proof(proof)
        accepted += int(ok)
        assert reason == "unknown-hash"
    assert accepted == 0


# --- 3: replayed proofs die under fresh window index and nonce ---------------

def test_c03_replay_rejected_1000(registry_entry, honest_pool):
    reg, _ = registry_entry
    prng = random.Random(3003)
    accepted = 0
    for _ in range(1000):
        _, st, proof = honest_pool[prng.randrange(len(honest_pool))]
        fresh_t = st.t_win + prng.randrange(1, 10_000)
        fresh_nonce = prng.randrange(1, 2**62)
        forged = Statement(st.c, st.h_theta, st.tau_fp, fresh_t, fresh_nonce,
                           st.action)
        replayed = Proof(root=proof.root, statements=(forged,),
                         openings=proof.openings, n_vars=proof.n_vars)
        ok, _ = reg.verify_proof(replayed)
        accepted += int(ok)
    assert accepted == 0


# --- 4: a single violated constraint is caught at the designed rate ----------

def _binom_hi(n: int, p: float, conf: float = 0.99) -> int:
    """Upper endpoint of the central binomial interval (exact CDF)."""
    target = 1.0 - (1.0 - conf) / 2.0
    acc = 0.0
    for k in range(n + 1):
        acc += math.comb(n, k) * p**k * (1.0 - p) ** (n - k)
        if acc >= target:
            return k
    return n


def test_c04_single_violation_rejected(dataset, registry_entry, honest_pool):
    _, splits, stats = dataset
    reg, entry = registry_entry
    spec_c = entry.circuit_spec(False)
    cm0 = honest_pool[0][0]
    cs, wit = build(spec_c, cm0["z_codes"], salt=cm0["salt"],
                    t_win=cm0["t_win"], nonce=cm0["nonce"])

    # find a witness bit whose flip breaks exactly one constraint
    flip_idx = None
    for i in range(cs.n_vars - 1, 0, -1):
        if wit[i] not in (0, 1):
            continue
        w2 = list(wit)
        w2[i] ^= 1
        bad = [j for j in range(cs.m) if not cs.constraint_holds(j, w2)]
        if len(bad) == 1:
            flip_idx = i
            break
    assert flip_idx is not None

    k = sample_count(cs.m, EPS_SOUNDNESS)
    p_accept = (cs.m - k) / cs.m
    assert p_accept <= EPS_SOUNDNESS

    prng = random.Random(4004)
    accepted = 0
    n_trials = 1000
    for _ in range(n_trials):
        salt = prng.randrange(2**62)
        nonce = prng.randrange(2**62)
        t_win = prng.randrange(1, 2**31)
        cs_t, wit_t = build(spec_c, cm0["z_codes"], salt=salt, t_win=t_win,
                            nonce=nonce)
        wit_t[flip_idx] ^= 1
        st = Statement(*(wit_t[cs_t.public[f]]
                         for f in ("c", "h_theta", "tau_fp", "t_win", "nonce",
                                   "action")))
        proof = prove_batch(cs_t, [wit_t], [st], eps=EPS_SOUNDNESS,
                            rng=prng, unchecked=True)
        ok, _ = reg.verify_proof(proof)
        accepted += int(ok)
    assert 1.0 - accepted / n_trials >= 0.995
    assert accepted <= _binom_hi(n_trials, p_accept)


# --- 5: batching amortizes proof size and prover time ------------------------

def test_c05_batch_amortization_monotone(dataset, registry_entry):
    _, splits, stats = dataset
    reg, entry = registry_entry
    prng = random.Random(5005)
    commits = []
    for w in splits["val"] + splits["test"] + splits["train"]:
        cm = commit_window(entry, w, stats, prng)
        if cm["decision"] != "abstain":
            commits.append(cm)
        if len(commits) >= 16:
            break
    assert len(commits) >= 16
    for i, cm in enumerate(commits):  # batch needs strictly increasing indices
        cm["t_win"] = i + 1

    batches = (1, 4, 8, 16)
    sizes = []
    best = {B: math.inf for B in batches}
    prove_from_commit(entry, commits[:4], prng)  # warmup
    gc.disable()
    try:
        for _ in range(5):  # interleaved rounds, CPU-time minimum per B
            for B in batches:
                t0 = time.process_time()
                _, proof = prove_from_commit(entry, commits[:B], prng)
                best[B] = min(best[B], (time.process_time() - t0) / B)
                if len(sizes) < len(batches):
                    ok, reason = reg.verify_proof(proof)
                    assert ok, reason
                    sizes.append(proof.size_bytes / B)
    finally:
        gc.enable()
    times = [best[B] for B in batches]
    assert all(a > b for a, b in zip(sizes, sizes[1:])), sizes
    assert all(a > b for a, b in zip(times, times[1:])), times


# --- 6: abstentions carry no decision constraints ----------------------------

def test_c06_stress_abstains_and_c4_accounting(dataset, registry_entry,
                                               audit_key):
    _, splits, stats = dataset
    reg, entry = registry_entry
    stress = [perturb(w, "jamming", 2.0, seed=i)
              for i, w in enumerate(splits["val"] + splits["test"])]
    results, _ = run(entry, stress, stats, audit_key, site_id="stress",
                     seed=6006, registry=reg)
    n_abstain = sum(r.decision == "abstain" for r in results)
    assert n_abstain / len(results) >= 0.30
    assert all(r.accepted for r in results)

    c4_full = entry.circuit(False).label_counts()["C4"]
    assert entry.circuit(True).label_counts().get("C4", 0) == 0
    emitted_c4 = sum(
        entry.circuit(r.decision == "abstain").label_counts().get("C4", 0)
        for r in results)
    assert emitted_c4 == (len(results) - n_abstain) * c4_full


# --- 7: analytic gradients match finite differences --------------------------

def test_c07_gradients_100_instances_each():
    rng = np.random.default_rng(7007)
    for _ in range(100):
        x = rng.normal(size=(4, 6))
        xh = rng.normal(size=(4, 6)) + 0.5
        mask = rng.random((4, 6)) < 0.6
        mask.flat[0] = True
        _, g = loss_msm(x, xh, mask)
        assert rel_err(g, fd_grad(lambda v: loss_msm(x, v, mask)[0], xh.copy())) < 1e-4
    for _ in range(100):
        za = rng.normal(size=(5, 4)) + 0.5
        zb = rng.normal(size=(5, 4)) + 0.5
        _, ga, gb, _ = loss_phase(za, zb)
        assert rel_err(ga, fd_grad(lambda v: loss_phase(v, zb)[0], za.copy())) < 1e-4
        assert rel_err(gb, fd_grad(lambda v: loss_phase(za, v)[0], zb.copy())) < 1e-4
    for _ in range(100):
        p = rng.normal(size=8)
        t = rng.normal(size=8)
        negs = [rng.normal(size=8) for _ in range(4)]
        _, g = loss_nce(p, t, negs, tau_c=0.3)
        assert rel_err(g, fd_grad(lambda v: loss_nce(v, t, negs, 0.3)[0], p.copy())) < 1e-4
    for _ in range(100):
        logits = rng.normal(size=(10, 4)) * 3.0
        labels = rng.integers(0, 4, size=10)
        T = float(rng.uniform(0.3, 5.0))
        _, dT = loss_calibrated_ce(logits, labels, T)
        num = fd_grad(lambda v: loss_calibrated_ce(logits, labels, float(v[0]))[0],
                      np.array([T]))
        assert rel_err(np.array([dT]), num) < 1e-4


# --- 8: calibration optimizers are exact -------------------------------------

def test_c08_temperature_matches_grid():
    rng = np.random.default_rng(8008)
    grid = np.exp(np.linspace(np.log(0.05), np.log(20.0), 1000))

    def nll(logits, labels, T):
        z = logits / T
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return -float(logp[np.arange(len(labels)), labels].mean())

    for _ in range(20):
        logits = rng.normal(size=(40, 4)) * rng.uniform(0.5, 6.0)
        labels = rng.integers(0, 4, size=40)
        T = fit_temperature(logits, labels)
        best_grid = min(nll(logits, labels, t) for t in grid)
        assert nll(logits, labels, T) <= best_grid + 1e-8


def test_c08_threshold_matches_exhaustive_scan():
    rng = np.random.default_rng(8009)
    for _ in range(100):
        n = int(rng.integers(5, 60))
        conf = np.round(rng.random(n), 3)
        preds = rng.integers(0, 3, size=n)
        labels = rng.integers(0, 3, size=n)
        lam = float(rng.uniform(0.0, 1.5))
        tau, _ = select_threshold(conf, preds, labels, 3, lam=lam)
        best_tau, best_u = 0.0, -np.inf
        for cand in np.unique(np.concatenate([[0.0], conf])):
            acc = conf >= cand
            if acc.any():
                risk = float((preds[acc] != labels[acc]).mean())
                u = macro_f1(preds[acc], labels[acc], 3) - lam * risk
            else:
                u = 0.0
            if u > best_u + 1e-15:
                best_u, best_tau = u, float(cand)
        assert tau == best_tau


def test_c08_ece_hand_cases():
    conf = np.array([0.95, 0.95, 0.95, 0.95])
    corr = np.array([True, True, True, True])
    assert ece(conf, corr, bins=10) == pytest.approx(0.05, abs=1e-12)
    conf = np.array([0.25, 0.25, 0.75, 0.75])
    corr = np.array([True, False, True, False])
    assert ece(conf, corr, bins=2) == pytest.approx(0.25, abs=1e-12)


# --- 9: the int8 twin tracks the float encoder -------------------------------

def test_c09_tables_and_argmax_agreement(dataset, float_model, quantized):
    _, splits, stats = dataset
    fns = {"tanh": np.tanh, "silu": lambda x: x / (1.0 + np.exp(-x))}
    for name, tbl in quantized.tables.items():
        codes = np.arange(-128, 128)
        expect = fns[tbl.fn](codes * tbl.in_scale)
        got = tbl.entries.astype(np.float64) * tbl.out_scale
        out_range = max(abs(expect.min()), abs(expect.max()), 1e-9)
        assert np.abs(got - expect).max() / out_range <= 0.01 + 1e-9, name

    calib = splits["train"][:16]
    agree = 0
    for w in calib:
        sw = standardize(w, stats)
        fl, _, _ = forward(float_model, sw)
        ql, _, _ = forward_quantized(quantized, sw)
        agree += int(np.argmax(fl) == int(np.argmax(ql)))
    assert agree / len(calib) >= 0.98


# --- 10: the compiled policy is the interpreted policy -----------------------

def test_c10_compiled_vs_interpreter_10k(registry_entry):
    _, entry = registry_entry
    tree = entry.tree
    leaves = tuple(compile_tree(tree, entry.ctx))
    rng = np.random.default_rng(1010)
    n_classes = entry.qm.config.n_classes
    for _ in range(10_000):
        star = int(rng.integers(0, n_classes))
        u_q = int(rng.integers(0, CONF_SCALE + 1))
        compiled = _leaf_action(leaves, star, u_q)
        assert compiled == ACTION_ID[tree.evaluate(star, u_q, entry.ctx)]
        # abstention dominates: below the floor no leaf may fire
        decision, basis = decide(tree, star, u_q, entry.tau_fp, entry.ctx)
        if u_q < entry.tau_fp:
            assert decision == "abstain" and basis == "confidence-floor"


# --- 11: the operating point is visible --------------------------------------

def test_c11_coverage_monotone_and_report_figure(dataset, registry_entry,
                                                 quantized, tmp_path, capsys):
    spec, splits, stats = dataset
    reg, entry = registry_entry
    shifted = [perturb(w, "drift", 1.0, seed=i) for i, w in enumerate(splits["val"])]
    curve = coverage_curve(entry.qm, shifted, stats, lam=entry.profile.lam)
    cov = np.asarray(curve.coverage)
    assert np.all(np.diff(cov) <= 1e-12)

    data_dir = tmp_path / "data"
    save_dataset(data_dir, spec, splits, stats)
    reg.save(str(tmp_path / "registry.json"))
    rc = main(["report", "--data", str(data_dir),
               "--registry", str(tmp_path / "registry.json"),
               "--out", str(tmp_path / "report"),
               "--shift-kind", "drift", "--shift-intensity", "1.0"])
    out = capsys.readouterr().out
    assert rc == 0
    figs = [ln.split("\t")[1] for ln in out.splitlines() if ln.startswith("figure\t")]
    shifted_figs = [f for f in figs if "coverage_risk" in f]
    assert shifted_figs
    for f in shifted_figs:
        assert Path(f).exists() and Path(f).stat().st_size > 0


# --- 12: audit log corruption is localized -----------------------------------

def _thousand_entry_log(key: bytes) -> AuditLog:
    log = AuditLog(key)
    prng = random.Random(1212)
    for i in range(1000):
        log.append(ts=float(i), site_id="site-a", zone=f"z{i % 4}",
                   action="allow" if i % 3 else "abstain",
                   u=prng.randrange(128), c=prng.randrange(2**62),
                   h_theta=0xABCDEF, t_win=i, pi_size=5000)
    return log


def test_c12_log_mutation_detected_at_index(audit_key, tmp_path):
    log = _thousand_entry_log(audit_key)
    assert verify_chain(log.entries, audit_key) == (True, None)
    path = tmp_path / "audit.jsonl"
    log.save(str(path))
    lines = path.read_text().splitlines()
    prng = random.Random(99)
    for _ in range(10):
        idx = prng.randrange(1000)
        line = lines[idx]
        # swap one digit of the signature so the JSON still parses
        pos = line.rindex('"sig"')
        digit_at = next(i for i in range(pos, len(line)) if line[i].isdigit())
        ch = line[digit_at]
        mutated = line[:digit_at] + ("3" if ch != "3" else "7") + line[digit_at + 1:]
        path.write_text("\n".join(lines[:idx] + [mutated] + lines[idx + 1:]) + "\n")
        reloaded = AuditLog.load(str(path), audit_key)
        ok, first_bad = verify_chain(reloaded.entries, audit_key)
        assert not ok and first_bad == idx
    path.write_text("\n".join(lines) + "\n")


def test_c12_log_deletion_detected_at_index(audit_key, tmp_path):
    log = _thousand_entry_log(audit_key)
    prng = random.Random(100)
    for _ in range(10):
        idx = prng.randrange(0, 999)
        clipped = log.entries[:idx] + log.entries[idx + 1:]
        ok, first_bad = verify_chain(clipped, audit_key)
        assert not ok and first_bad == idx
    # tail deletion passes the chain but moves the head digest
    ok, first_bad = verify_chain(log.entries[:-1], audit_key)
    assert ok and first_bad is None
    assert log.entries[-2].digest != log.head
