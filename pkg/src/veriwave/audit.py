"""Hash-chained, MAC-signed audit log of emitted actions.

One JSON line per entry, canonical form (sorted keys, compact
separators).  Each entry carries the digest of the previous line, so any
in-place edit, deletion or reordering breaks the chain at a detectable
index; the keyed MAC prevents silent re-signing by parties without the
site key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

from .sponge import hash_bytes, mac

GENESIS = hash_bytes(b"veriwave-audit-genesis")

_FIELDS = ("ts", "site_id", "zone", "action", "u", "c", "h_theta",
           "t_win", "pi_size", "prev_digest", "sig")


class AuditError(ValueError):
    pass


@dataclass(frozen=True)
class AuditEntry:
    ts: float
    site_id: str
    zone: str
    action: str
    u: int           # confidence code
    c: int           # latent commitment
    h_theta: int     # registered model hash
    t_win: int
    pi_size: int     # proof size in bytes
    prev_digest: int
    sig: int = 0

    def core_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k != "sig"}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(line: str) -> "AuditEntry":
        d = json.loads(line)
        if set(d) != set(_FIELDS):
            raise AuditError("audit entry fields mismatch")
        return AuditEntry(**d)

    def signed(self, key: bytes) -> "AuditEntry":
        return AuditEntry(**{**asdict(self), "sig": mac(key, self.core_json().encode())})

    @property
    def digest(self) -> int:
        return hash_bytes(self.to_json().encode())


class AuditLog:
    def __init__(self, key: bytes):
        self.key = key
        self.entries: list[AuditEntry] = []

    @property
    def head(self) -> int:
        return self.entries[-1].digest if self.entries else GENESIS

    def append(self, ts: float, site_id: str, zone: str, action: str, u: int,
               c: int, h_theta: int, t_win: int, pi_size: int) -> AuditEntry:
        entry = AuditEntry(ts=ts, site_id=site_id, zone=zone, action=action,
                           u=u, c=c, h_theta=h_theta, t_win=t_win,
                           pi_size=pi_size, prev_digest=self.head).signed(self.key)
        self.entries.append(entry)
        return entry

    def dump(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.entries)

    def save(self, path: str):
        with open(path, "w") as f:
            f.write(self.dump())

    @staticmethod
    def load(path: str, key: bytes) -> "AuditLog":
        log = AuditLog(key)
        with open(path) as f:
            for line in f:
                if line.strip():
                    log.entries.append(AuditEntry.from_json(line))
        return log


def verify_chain(entries: list[AuditEntry], key: bytes) -> tuple[bool, int | None]:
    """Check linkage and signatures; returns (ok, first_bad_index)."""
    prev = GENESIS
    for i, e in enumerate(entries):
        if e.prev_digest != prev:
            return False, i
        if e.sig != mac(key, e.core_json().encode()):
            return False, i
        prev = e.digest
    return True, None
