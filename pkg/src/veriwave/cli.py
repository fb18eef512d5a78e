"""Command line interface for the full pipeline.

Subcommands cover the lifecycle: generate data, train the toy model,
quantize, calibrate, register, run (commit + prove + audit), verify
proofs and audit logs, replay the attack suite, and render the report
figures with their delimited companions.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

DEFAULT_KEY = "veriwave-demo-key"


def _key_bytes(arg: str) -> bytes:
    return arg.encode()


def cmd_generate(args) -> int:
    from .windows import DatasetSpec, compute_stats, generate_dataset, save_dataset

    spec = DatasetSpec(seed=args.seed, n_windows=args.n_windows, T=args.T,
                       S=args.S, n_classes=args.classes, n_paths=args.paths,
                       snr_db=args.snr_db)
    windows = generate_dataset(spec)
    n = len(windows)
    n_train, n_val = int(n * 0.6), int(n * 0.2)
    splits = {
        "train": windows[:n_train],
        "val": windows[n_train : n_train + n_val],
        "test": windows[n_train + n_val :],
    }
    stats = compute_stats(splits["train"])
    save_dataset(Path(args.out), spec, splits, stats)
    for name, part in splits.items():
        print(f"split\t{name}\t{len(part)}")
    print(f"dataset\t{args.out}")
    return 0


def cmd_train(args) -> int:
    from .model import ModelConfig, init_model, save_model
    from .trainer import train_toy
    from .windows import load_dataset, standardize

    _, splits, stats = load_dataset(Path(args.data))
    train = [standardize(w, stats) for w in splits["train"]]
    cfg = ModelConfig(T=train[0].T, S=train[0].S,
                      n_classes=max(w.label for w in train) + 1)
    m = init_model(cfg, seed=args.seed)
    m = train_toy(m, train, epochs=args.epochs, lr=args.lr, seed=args.seed)
    save_model(args.out, m)
    print(f"model\t{args.out}")
    return 0


def cmd_quantize(args) -> int:
    from .model import load_model
    from .quantize import quantize_model
    from .windows import load_dataset, standardize

    _, splits, stats = load_dataset(Path(args.data))
    m = load_model(args.model)
    calib = [standardize(w, stats) for w in splits["train"][: args.calib_windows]]
    qm = quantize_model(m, calib)
    Path(args.out).write_bytes(qm.to_bytes())
    print(f"model_q\t{args.out}")
    print(f"h_theta\t{qm.model_hash:#x}")
    print(f"argmax_agreement\t{qm.meta['argmax_agreement']:.4f}")
    print(f"logit_err_bound\t{qm.meta['logit_err_bound']:.6f}")
    return 0


def cmd_calibrate(args) -> int:
    import hashlib

    from .pipeline import calibrate_quantized
    from .quantize import QuantizedModel
    from .windows import load_dataset

    _, splits, stats = load_dataset(Path(args.data))
    qm = QuantizedModel.from_bytes(Path(args.model_q).read_bytes())
    checksum = hashlib.sha256(Path(args.data, "manifest.json").read_bytes()).hexdigest()
    qm_final, profile, _curve = calibrate_quantized(
        qm, splits["val"], stats, lam=args.lam, dataset_checksum=checksum)
    Path(args.out_model).write_bytes(qm_final.to_bytes())
    Path(args.out_profile).write_text(profile.to_json())
    print(f"model_q\t{args.out_model}")
    print(f"profile\t{args.out_profile}")
    print(f"temperature\t{profile.temperature:.6f}")
    print(f"tau_reg\t{profile.tau_reg:.6f}")
    return 0


def cmd_register(args) -> int:
    from .calibrate import CalibrationProfile
    from .policy import PolicyTree, default_tree
    from .quantize import QuantizedModel
    from .registry import Registry

    qm = QuantizedModel.from_bytes(Path(args.model_q).read_bytes())
    profile = CalibrationProfile.from_json(Path(args.profile).read_text())
    if args.tree:
        tree = PolicyTree.from_json(Path(args.tree).read_text())
    else:
        tree = default_tree(qm.config.n_classes)
    reg = Registry.load(args.registry) if Path(args.registry).exists() else Registry()
    entry = reg.register(qm, tree, profile, ctx={"armed": args.armed})
    reg.save(args.registry)
    print(f"registered\t{entry.h_theta:#x}")
    print(f"tau_fp\t{entry.tau_fp}")
    print(f"tree_hash\t{entry.tree_hash:#x}")
    return 0


def cmd_run(args) -> int:
    from .pipeline import action_counts, run
    from .registry import Registry
    from .windows import load_dataset

    _, splits, stats = load_dataset(Path(args.data))
    reg = Registry.load(args.registry)
    entry = next(iter(reg.entries.values()))
    windows = splits[args.split][: args.limit] if args.limit else splits[args.split]
    results, log = run(entry, windows, stats, _key_bytes(args.key),
                       site_id=args.site, seed=args.seed,
                       fixed_time=args.fixed_time, registry=reg)
    log.save(args.audit)
    print("t_win\tzone\tdecision\tu_q\taccepted\treason\tpi_bytes")
    for r in results:
        print(f"{r.t_win}\t{r.zone}\t{r.decision}\t{r.u_q}\t{r.accepted}\t"
              f"{r.reject_reason or '-'}\t{r.proof.size_bytes}")
    counts = action_counts(results)
    print("summary\t" + "\t".join(f"{k}={v}" for k, v in counts.items()))
    bad = [r for r in results if not r.accepted]
    print(f"audit\t{args.audit}\tentries={len(log.entries)}\trejected={len(bad)}")
    if args.proof_out and results:
        Path(args.proof_out).write_bytes(results[-1].proof.to_bytes())
        print(f"proof\t{args.proof_out}")
    return 1 if bad else 0


def cmd_verify(args) -> int:
    from .protocol import Proof
    from .registry import Registry

    reg = Registry.load(args.registry)
    proof = Proof.from_bytes(Path(args.proof).read_bytes())
    ok, reason = reg.verify_proof(proof)
    print(f"verify\t{'accept' if ok else 'reject'}\t{reason or '-'}")
    return 0 if ok else 1


def cmd_audit_verify(args) -> int:
    from .audit import AuditLog, verify_chain

    log = AuditLog.load(args.audit, _key_bytes(args.key))
    ok, first_bad = verify_chain(log.entries, _key_bytes(args.key))
    print(f"audit-verify\t{'ok' if ok else 'broken'}\t"
          f"{'-' if first_bad is None else first_bad}\tentries={len(log.entries)}")
    return 0 if ok else 1


def cmd_attack(args) -> int:
    from .attacks import run_all
    from .registry import Registry
    from .windows import load_dataset

    _, splits, stats = load_dataset(Path(args.data))
    reg = Registry.load(args.registry)
    entry = next(iter(reg.entries.values()))
    reports = run_all(reg, entry, splits["test"], stats, _key_bytes(args.key),
                      seed=args.seed)
    print("attack\tattempted\taccepted\treason")
    any_accepted = False
    for r in reports:
        print(f"{r.name}\t{r.attempted}\t{r.accepted}\t{r.reject_reason or '-'}")
        any_accepted |= r.accepted
    return 1 if any_accepted else 0


def cmd_report(args) -> int:
    import random as _random

    from .augment import perturb
    from .figures import save_amortization, save_coverage_risk
    from .pipeline import commit_window, coverage_curve, prove_from_commit
    from .registry import Registry
    from .windows import load_dataset

    _, splits, stats = load_dataset(Path(args.data))
    reg = Registry.load(args.registry)
    entry = next(iter(reg.entries.values()))

    shifted = [perturb(w, args.shift_kind, args.shift_intensity, seed=i)
               for i, w in enumerate(splits["val"])]
    for name, part in (("coverage_risk", shifted), ("coverage_risk_clean", splits["val"])):
        curve = coverage_curve(entry.qm, part, stats, lam=entry.profile.lam)
        png, csv_path = save_coverage_risk(curve, args.out, entry.profile.tau_reg,
                                           stem=name)
        print(f"figure\t{png}")
        print(f"data\t{csv_path}")
        print(f"curve\t{name}")
        print("tau\tcoverage\trisk\tmacro_f1")
        for tau, cov, risk, f1 in curve.rows():
            print(f"{tau:.4f}\t{cov:.4f}\t{risk:.4f}\t{f1:.4f}")

    rng = _random.Random(args.seed)
    commits = []
    for w in splits["test"]:
        cm = commit_window(entry, w, stats, rng)
        if cm["decision"] != "abstain":
            commits.append(cm)
        if len(commits) >= 8:
            break
    sizes, bsizes = [], []
    b = 1
    while b <= len(commits):
        _, proof = prove_from_commit(entry, commits[:b], rng)
        bsizes.append(b)
        sizes.append(proof.size_bytes / b)
        b *= 2
    png2, csv2 = save_amortization(bsizes, sizes, args.out)
    print(f"figure\t{png2}")
    print(f"data\t{csv2}")
    print("batch\tbytes_per_window")
    for b, s in zip(bsizes, sizes):
        print(f"{b}\t{s:.1f}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="veriwave",
                                 description="verifiable wireless-sensing pipeline")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-windows", type=int, default=100)
    g.add_argument("--T", type=int, default=128)
    g.add_argument("--S", type=int, default=30)
    g.add_argument("--classes", type=int, default=5)
    g.add_argument("--paths", type=int, default=4)
    g.add_argument("--snr-db", type=float, default=15.0)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train the toy float model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(fn=cmd_train)

    q = sub.add_parser("quantize", help="build the int8 model")
    q.add_argument("--data", required=True)
    q.add_argument("--model", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--calib-windows", type=int, default=16)
    q.set_defaults(fn=cmd_quantize)

    c = sub.add_parser("calibrate", help="fit temperature and floor")
    c.add_argument("--data", required=True)
    c.add_argument("--model-q", required=True)
    c.add_argument("--out-model", required=True)
    c.add_argument("--out-profile", required=True)
    c.add_argument("--lam", type=float, default=0.5)
    c.set_defaults(fn=cmd_calibrate)

    r = sub.add_parser("register", help="register model + policy + profile")
    r.add_argument("--model-q", required=True)
    r.add_argument("--profile", required=True)
    r.add_argument("--registry", required=True)
    r.add_argument("--tree")
    r.add_argument("--armed", action="store_true")
    r.set_defaults(fn=cmd_register)

    u = sub.add_parser("run", help="process windows end to end")
    u.add_argument("--data", required=True)
    u.add_argument("--registry", required=True)
    u.add_argument("--audit", required=True)
    u.add_argument("--site", default="site-0")
    u.add_argument("--split", default="test")
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--limit", type=int, default=0)
    u.add_argument("--key", default=DEFAULT_KEY)
    u.add_argument("--fixed-time", type=float, default=None)
    u.add_argument("--proof-out")
    u.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify", help="verify a stored proof")
    v.add_argument("--registry", required=True)
    v.add_argument("--proof", required=True)
    v.set_defaults(fn=cmd_verify)

    a = sub.add_parser("audit-verify", help="check the audit chain")
    a.add_argument("--audit", required=True)
    a.add_argument("--key", default=DEFAULT_KEY)
    a.set_defaults(fn=cmd_audit_verify)

    k = sub.add_parser("attack", help="run the red-team suite")
    k.add_argument("--data", required=True)
    k.add_argument("--registry", required=True)
    k.add_argument("--key", default=DEFAULT_KEY)
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(fn=cmd_attack)

    p = sub.add_parser("report", help="render figures and delimited data")
    p.add_argument("--data", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift-kind", default="drift")
    p.add_argument("--shift-intensity", type=float, default=1.0)
    p.set_defaults(fn=cmd_report)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
