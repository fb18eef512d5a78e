"""Hash-chained audit log: chaining, persistence, and byte-level tamper
detection at the right index."""

import random

from veriwave.audit import GENESIS, AuditEntry, AuditLog, verify_chain


def build_log(n, key=b"k", seed=0):
    rng = random.Random(seed)
    log = AuditLog(key)
    for i in range(n):
        log.append(ts=1000.0 + i, site_id="site-0", zone="zone-A",
                   action=rng.choice(["allow", "deny", "alarm", "abstain"]),
                   u=rng.randrange(129), c=rng.randrange(2**61),
                   h_theta=0xDEAD, t_win=i, pi_size=90000)
    return log


def test_chain_verifies():
    log = build_log(50)
    ok, bad = verify_chain(log.entries, b"k")
    assert ok and bad is None
    assert log.entries[0].prev_digest == GENESIS
    for prev, cur in zip(log.entries, log.entries[1:]):
        assert cur.prev_digest == prev.digest


def test_wrong_key_detected_at_zero():
    log = build_log(10)
    ok, bad = verify_chain(log.entries, b"other")
    assert not ok and bad == 0


def test_entry_field_mutation_detected():
    log = build_log(20)
    e = log.entries[7]
    forged = AuditEntry(ts=e.ts, site_id=e.site_id, zone=e.zone, action=e.action,
                        u=e.u + 1, c=e.c, h_theta=e.h_theta, t_win=e.t_win,
                        pi_size=e.pi_size, prev_digest=e.prev_digest, sig=e.sig)
    entries = log.entries[:7] + [forged] + log.entries[8:]
    ok, bad = verify_chain(entries, b"k")
    assert not ok and bad == 7


def test_deletion_detected():
    log = build_log(20)
    for drop in (0, 5, 19):
        entries = log.entries[:drop] + log.entries[drop + 1:]
        ok, bad = verify_chain(entries, b"k")
        if drop == 19:
            # removing the tail is invisible to the stored chain alone;
            # the head digest returned by the log is what pins it
            assert ok
            assert log.head != entries[-1].digest
        else:
            assert not ok and bad == drop


def test_reordering_detected():
    log = build_log(10)
    entries = list(log.entries)
    entries[3], entries[4] = entries[4], entries[3]
    ok, bad = verify_chain(entries, b"k")
    assert not ok and bad == 3


def test_save_load_roundtrip(tmp_path):
    log = build_log(15)
    path = tmp_path / "audit.log"
    log.save(path)
    loaded = AuditLog.load(path, b"k")
    ok, bad = verify_chain(loaded.entries, b"k")
    assert ok
    assert loaded.head == log.head


def test_single_byte_file_mutation_detected(tmp_path):
    log = build_log(12)
    path = tmp_path / "audit.log"
    log.save(path)
    blob = bytearray(path.read_bytes())
    rng = random.Random(1)
    pos = rng.randrange(len(blob))
    blob[pos] ^= 0x01
    path.write_bytes(bytes(blob))
    try:
        loaded = AuditLog.load(path, b"k")
    except Exception:
        return  # parse failure is detection too
    ok, _ = verify_chain(loaded.entries, b"k")
    assert not ok or loaded.head != log.head
