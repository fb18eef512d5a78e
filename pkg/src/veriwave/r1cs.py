"""Rank-1 constraint systems over the 64-bit proving field.

A constraint is <a,w> * <b,w> = <c,w> with a,b,c sparse linear
combinations over the witness w, and w[0] = 1 by convention.  Each
constraint carries a label naming the relation family it belongs to, so
statements about per-family counts can be checked directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .field import P, fadd, fmul, to_field

LC = dict[int, int]  # var index -> coefficient (mod P); index 0 is the constant 1


def lc_const(v) -> LC:
    return {0: to_field(v)} if to_field(v) else {}


def lc_var(i: int, coeff=1) -> LC:
    c = to_field(coeff)
    return {i: c} if c else {}


def lc_add(a: LC, b: LC) -> LC:
    out = dict(a)
    for i, c in b.items():
        s = fadd(out.get(i, 0), c)
        if s:
            out[i] = s
        else:
            out.pop(i, None)
    return out


def lc_scale(a: LC, k) -> LC:
    k = to_field(k)
    if k == 0:
        return {}
    return {i: fmul(c, k) for i, c in a.items()}


def lc_sub(a: LC, b: LC) -> LC:
    return lc_add(a, lc_scale(b, P - 1))


def lc_eval(a: LC, w: list[int]) -> int:
    acc = 0
    for i, c in a.items():
        acc = (acc + c * w[i]) % P
    return acc


@dataclass
class Constraint:
    a: LC
    b: LC
    c: LC
    label: str


@dataclass
class ConstraintSystem:
    n_vars: int = 1  # slot 0 is the constant 1
    constraints: list[Constraint] = dc_field(default_factory=list)
    public: dict[str, int] = dc_field(default_factory=dict)

    def new_var(self) -> int:
        i = self.n_vars
        self.n_vars += 1
        return i

    def mark_public(self, name: str, idx: int):
        if name in self.public:
            raise ValueError(f"public slot {name!r} already bound")
        self.public[name] = idx

    def add(self, a: LC, b: LC, c: LC, label: str):
        self.constraints.append(Constraint(a, b, c, label))

    # builder helpers ----------------------------------------------------

    def enforce_eq(self, a: LC, b: LC, label: str):
        self.add(a, {0: 1}, b, label)

    def enforce_boolean(self, i: int, label: str):
        self.add(lc_var(i), lc_var(i), lc_var(i), label)

    def mul(self, a: LC, b: LC, label: str) -> int:
        z = self.new_var()
        self.add(a, b, lc_var(z), label)
        return z

    def range_bits(self, value: LC, nbits: int, label: str) -> list[int]:
        """Constrain value to [0, 2^nbits); returns the bit variables."""
        bits = []
        recomposed: LC = {}
        for k in range(nbits):
            b = self.new_var()
            self.enforce_boolean(b, label)
            bits.append(b)
            recomposed = lc_add(recomposed, lc_var(b, 1 << k))
        self.enforce_eq(recomposed, value, label)
        return bits

    # evaluation ---------------------------------------------------------

    def constraint_holds(self, idx: int, w: list[int]) -> bool:
        cn = self.constraints[idx]
        return fmul(lc_eval(cn.a, w), lc_eval(cn.b, w)) == lc_eval(cn.c, w)

    def is_satisfied(self, w: list[int]) -> bool:
        return self.first_violation(w) is None

    def first_violation(self, w: list[int]) -> int | None:
        if len(w) != self.n_vars or w[0] != 1:
            raise ValueError("witness length/constant mismatch")
        for i in range(len(self.constraints)):
            if not self.constraint_holds(i, w):
                return i
        return None

    def label_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for cn in self.constraints:
            out[cn.label] = out.get(cn.label, 0) + 1
        return out

    @property
    def m(self) -> int:
        return len(self.constraints)


class WitnessBuilder:
    """Grows a witness vector in lockstep with a ConstraintSystem."""

    def __init__(self, cs: ConstraintSystem):
        self.cs = cs
        self.values: list[int] = [1]

    def var(self, value) -> int:
        i = self.cs.new_var()
        assert i == len(self.values)
        self.values.append(to_field(value))
        return i

    def eval(self, a: LC) -> int:
        return lc_eval(a, self.values)

    def finish(self) -> list[int]:
        if len(self.values) != self.cs.n_vars:
            raise ValueError("witness does not cover all variables")
        return self.values
