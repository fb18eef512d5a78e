"""End-to-end CLI lifecycle on a tiny dataset.

Runs every subcommand in-process through cli.main and checks exit
codes, emitted files, and the delimited output shape.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from veriwave.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, capsys_factory=None):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    rc = main(["generate", "--out", str(data), "--seed", "3",
               "--n-windows", "30", "--T", "64", "--S", "12",
               "--classes", "3", "--paths", "3"])
    assert rc == 0
    rc = main(["train", "--data", str(data), "--out", str(root / "model.npz"),
               "--epochs", "3", "--lr", "0.03", "--seed", "3"])
    assert rc == 0
    rc = main(["quantize", "--data", str(data), "--model", str(root / "model.npz"),
               "--out", str(root / "model_q.bin"), "--calib-windows", "12"])
    assert rc == 0
    rc = main(["calibrate", "--data", str(data), "--model-q", str(root / "model_q.bin"),
               "--out-model", str(root / "model_qc.bin"),
               "--out-profile", str(root / "profile.json")])
    assert rc == 0
    rc = main(["register", "--model-q", str(root / "model_qc.bin"),
               "--profile", str(root / "profile.json"),
               "--registry", str(root / "registry.json"), "--armed"])
    assert rc == 0
    return root, data


def test_run_and_audit(workdir, capsys):
    root, data = workdir
    rc = main(["run", "--data", str(data), "--registry", str(root / "registry.json"),
               "--audit", str(root / "audit.jsonl"), "--limit", "3",
               "--proof-out", str(root / "proof.bin")])
    out = capsys.readouterr().out
    assert rc == 0
    lines = [ln for ln in out.splitlines() if ln]
    header = lines[0].split("\t")
    assert header[:4] == ["t_win", "zone", "decision", "u_q"]
    assert any(ln.startswith("summary\t") for ln in lines)
    assert (root / "audit.jsonl").exists()
    assert (root / "proof.bin").exists()


def test_verify_stored_proof(workdir, capsys):
    root, data = workdir
    rc = main(["verify", "--registry", str(root / "registry.json"),
               "--proof", str(root / "proof.bin")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "verify\taccept" in out


def test_audit_verify(workdir, capsys):
    root, _ = workdir
    rc = main(["audit-verify", "--audit", str(root / "audit.jsonl")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "audit-verify\tok" in out


def test_audit_verify_wrong_key(workdir, capsys):
    root, _ = workdir
    rc = main(["audit-verify", "--audit", str(root / "audit.jsonl"),
               "--key", "not-the-key"])
    out = capsys.readouterr().out
    assert rc == 1
    assert "audit-verify\tbroken" in out


def test_attack_suite(workdir, capsys):
    root, data = workdir
    rc = main(["attack", "--data", str(data),
               "--registry", str(root / "registry.json"), "--seed", "1"])
    out = capsys.readouterr().out
    assert rc == 0
    rows = [ln.split("\t") for ln in out.splitlines()
            if ln and not ln.startswith("attack\t")]
    assert len(rows) >= 5
    for name, attempted, accepted, _reason in rows:
        assert accepted == "False", name


def test_report_emits_figures(workdir, capsys):
    root, data = workdir
    out_dir = root / "report"
    rc = main(["report", "--data", str(data),
               "--registry", str(root / "registry.json"),
               "--out", str(out_dir), "--shift-kind", "drift",
               "--shift-intensity", "1.0"])
    out = capsys.readouterr().out
    assert rc == 0
    pngs = [Path(ln.split("\t")[1]) for ln in out.splitlines()
            if ln.startswith("figure\t")]
    csvs = [Path(ln.split("\t")[1]) for ln in out.splitlines()
            if ln.startswith("data\t")]
    assert len(pngs) >= 3 and len(csvs) >= 3
    for p in pngs:
        assert p.suffix == ".png" and p.exists() and p.stat().st_size > 0
    for c in csvs:
        assert c.suffix == ".csv" and c.exists()
        assert "," in c.read_text().splitlines()[0]
