"""Prime-field arithmetic for the commitment and constraint layer.

Elements are plain Python ints in [0, P).  The modulus is the 64-bit
"Goldilocks" prime 2^64 - 2^32 + 1; x^7 is a bijection because
gcd(7, P-1) = 1, which the sponge permutation relies on.
"""

P = 2**64 - 2**32 + 1


def fadd(a: int, b: int) -> int:
    return (a + b) % P


def fsub(a: int, b: int) -> int:
    return (a - b) % P


def fmul(a: int, b: int) -> int:
    return (a * b) % P


def finv(a: int) -> int:
    if a % P == 0:
        raise ZeroDivisionError("no inverse of 0 in F_p")
    return pow(a, P - 2, P)


def to_field(x: int) -> int:
    return x % P


def from_signed(x: int) -> int:
    """Map a (possibly negative) bounded integer into canonical form."""
    return x % P


def to_signed(x: int) -> int:
    """Interpret a canonical element as a signed integer near zero."""
    x %= P
    return x - P if x > P // 2 else x


def bytes_to_elements(data: bytes) -> list[int]:
    """Pack bytes into field elements, 7 little-endian bytes per element.

    7 bytes < 2^56 < P, so the packing never wraps.  The byte length is
    prepended as its own element so distinct strings stay distinct.
    """
    out = [len(data)]
    for i in range(0, len(data), 7):
        out.append(int.from_bytes(data[i : i + 7], "little"))
    return out
