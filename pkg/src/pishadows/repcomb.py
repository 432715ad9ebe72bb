"""Combinatorics and SU(2) / S_n representation data for qubit ensembles.

Spins and magnetic numbers are half-integers. Public functions accept them as
ints, floats or ``Fraction`` and validate that twice the value is an integer.
Internally everything is keyed by ``two_s = 2 s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal


class Composition(NamedTuple):
    """Letter counts of a Pauli string: how many X, Y, Z and identity factors."""

    x: int
    y: int
    z: int
    i: int

    @property
    def weight(self) -> int:
        return self.x + self.y + self.z + self.i

    @property
    def parity(self) -> tuple[int, int, int]:
        return (self.x % 2, self.y % 2, self.z % 2)


def _half_integer(value, name: str = "value") -> Fraction:
    frac = Fraction(value).limit_denominator(4) if isinstance(value, float) else Fraction(value)
    if isinstance(value, float) and float(frac) != value:
        raise ValueError(f"{name}={value!r} is not a half-integer")
    if (2 * frac).denominator != 1:
        raise ValueError(f"{name}={value!r} is not a half-integer")
    return frac


def _check_size(n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"system size must be a positive integer, got {n!r}")


@lru_cache(maxsize=None)
def _compositions(n: int) -> tuple[Composition, ...]:
    comps = []
    for parity in product((0, 1), repeat=3):
        for x in range(n + 1):
            for y in range(n + 1 - x):
                for z in range(n + 1 - x - y):
                    if (x % 2, y % 2, z % 2) == parity:
                        comps.append(Composition(x, y, z, n - x - y - z))
    return tuple(comps)


@lru_cache(maxsize=None)
def _composition_lookup(n: int) -> dict[Composition, int]:
    return {k: idx for idx, k in enumerate(_compositions(n))}


def enumerate_compositions(n: int) -> tuple[Composition, ...]:
    """All compositions of ``n`` into (x, y, z, i) counts in canonical order.

    The order groups compositions by the parity triple (x, y, z) mod 2 and is
    lexicographic in (x, y, z) inside each group, so channel matrices come out
    as eight contiguous diagonal blocks. The identity (0, 0, 0, n) is first.
    """
    _check_size(n)
    return _compositions(n)


def composition_index(k: Sequence[int], n: int) -> int:
    _check_size(n)
    k = Composition(*k)
    if min(k) < 0 or k.weight != n:
        raise ValueError(f"composition {tuple(k)} does not sum to n={n}")
    return _composition_lookup(n)[k]


def parity_blocks(n: int) -> dict[tuple[int, int, int], np.ndarray]:
    """Index arrays of the eight parity classes, in canonical order."""
    comps = enumerate_compositions(n)
    blocks: dict[tuple[int, int, int], list[int]] = {}
    for idx, k in enumerate(comps):
        blocks.setdefault(k.parity, []).append(idx)
    return {key: np.array(val, dtype=np.int64) for key, val in blocks.items()}


@dataclass(frozen=True)
class IrrepLabel:
    """Two-row Young diagram labelling an S_n irrep paired with a spin-s SU(2) irrep.

    ``dim`` is the S_n irrep dimension (number of standard tableaux) and
    ``mult`` the dimension 2s+1 of the SU(2) register it multiplies.
    """

    first_row: int
    second_row: int

    def __post_init__(self):
        if self.second_row < 0 or self.first_row < self.second_row:
            raise ValueError(f"invalid two-row partition ({self.first_row}, {self.second_row})")

    @property
    def n(self) -> int:
        return self.first_row + self.second_row

    @property
    def two_s(self) -> int:
        return self.first_row - self.second_row

    @property
    def spin(self) -> Fraction:
        return Fraction(self.two_s, 2)

    @property
    def mult(self) -> int:
        return self.two_s + 1

    @property
    def dim(self) -> int:
        # hook-length count of standard tableaux
        a, b = self.first_row, self.second_row
        return math.factorial(a + b) * (a - b + 1) // (math.factorial(a + 1) * math.factorial(b))

    @property
    def q_values(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(2 * j - self.two_s, 2) for j in range(self.mult))


def enumerate_irreps(n: int) -> tuple[IrrepLabel, ...]:
    """Two-row irreps of S_n ordered from the symmetric one (n, 0) downwards."""
    _check_size(n)
    return tuple(IrrepLabel(n - b, b) for b in range(n // 2 + 1))


def clebsch_gordan(j1, j2, J, m1, m2, M) -> float:
    """<j1 m1; j2 m2 | J M> in the Condon-Shortley convention.

    Evaluated with the Racah sum in exact integer arithmetic and rounded to
    float at the end, so large spins do not suffer cancellation.
    """
    j1, j2, J = (_half_integer(v, name) for v, name in ((j1, "j1"), (j2, "j2"), (J, "J")))
    m1, m2, M = (_half_integer(v, name) for v, name in ((m1, "m1"), (m2, "m2"), (M, "M")))
    if min(j1, j2, J) < 0:
        raise ValueError("spins must be non-negative")
    for j, m in ((j1, m1), (j2, m2), (J, M)):
        if abs(m) > j or (j - m).denominator != 1:
            raise ValueError(f"magnetic number {m} invalid for spin {j}")
    if M != m1 + m2 or not abs(j1 - j2) <= J <= j1 + j2 or (j1 + j2 + J).denominator != 1:
        return 0.0

    f = math.factorial
    ints = [int(v) for v in (J + j1 - j2, J - j1 + j2, j1 + j2 - J, j1 + j2 + J + 1,
                             J + M, J - M, j1 - m1, j1 + m1, j2 - m2, j2 + m2)]
    a, b, c, total, jp, jm, p1m, p1p, p2m, p2p = ints
    squared = Fraction((int(2 * J) + 1) * f(a) * f(b) * f(c), f(total))
    squared *= f(jp) * f(jm) * f(p1m) * f(p1p) * f(p2m) * f(p2p)

    shift1 = int(J - j2 + m1)
    shift2 = int(J - j1 - m2)
    racah = sum(Fraction((-1) ** k, f(k) * f(c - k) * f(p1m - k) * f(p2p - k) * f(shift1 + k) * f(shift2 + k))
                for k in range(max(0, -shift1, -shift2), min(c, p1m, p2p) + 1))
    if racah == 0:
        return 0.0
    value = squared * racah * racah
    with localcontext() as ctx:
        ctx.prec = 40
        root = (Decimal(value.numerator) / Decimal(value.denominator)).sqrt()
    return float(root) if racah > 0 else -float(root)


@lru_cache(maxsize=256)
def _jy_eigensystem(two_s: int) -> tuple[np.ndarray, np.ndarray]:
    q = (two_s - 2 * np.arange(two_s + 1)) / 2.0
    # <q+1| J+ |q> sits above the diagonal because rows run from q=s down
    raise_amp = np.sqrt((two_s / 2.0 - q[1:]) * (two_s / 2.0 + q[1:] + 1))
    jy = np.zeros((two_s + 1, two_s + 1), dtype=complex)
    idx = np.arange(two_s)
    jy[idx, idx + 1] = raise_amp / 2j
    jy[idx + 1, idx] = -raise_amp / 2j
    eigvals, eigvecs = np.linalg.eigh(jy)
    eigvals = np.round(eigvals * 2) / 2
    eigvecs.flags.writeable = False
    eigvals.flags.writeable = False
    return eigvals, eigvecs


def _two_spin(s) -> int:
    s = _half_integer(s, "s")
    if s < 0:
        raise ValueError("spin must be non-negative")
    return int(2 * s)


def wigner_d(s, theta: float) -> np.ndarray:
    """Real matrix <q|exp(-i theta J_y)|q'> with rows and columns ordered q = s..-s.

    Built from the spectral decomposition of J_y, which is exactly unitary up to
    rounding and has no factorial growth.
    """
    eigvals, eigvecs = _jy_eigensystem(_two_spin(s))
    phases = np.exp(-1j * theta * eigvals)
    return ((eigvecs * phases) @ eigvecs.conj().T).real


def wigner_d_columns(two_s: int, column: int, thetas: np.ndarray) -> np.ndarray:
    """Column ``column`` of d^s(theta) for many angles, shape (2s+1, len(thetas))."""
    eigvals, eigvecs = _jy_eigensystem(two_s)
    phases = np.exp(-1j * np.outer(eigvals, np.asarray(thetas, dtype=float)))
    return (eigvecs @ (phases * eigvecs[column].conj()[:, None])).real


def _lowering(j: float, m: np.ndarray) -> np.ndarray:
    """<m-1| J- |m>."""
    return np.sqrt((j + m) * (j - m + 1))


@lru_cache(maxsize=64)
def cg_table(two_j1: int, two_j2: int) -> np.ndarray:
    """All Clebsch-Gordan coefficients for coupling spins j1 and j2.

    Returns ``table[a, i1, i2] = <j1 m1; j2 m2 | J, m1+m2>`` with
    ``J = |j1-j2| + a``, ``m1 = j1 - i1`` and ``m2 = j2 - i2``. Each fixed-M
    sector is diagonalised numerically. Signs follow the Condon-Shortley rule
    on each highest-weight vector and are carried down the lower sectors by
    overlap with the lowered vector, so no sign is read off a tiny component.
    This is independent of :func:`clebsch_gordan`.
    """
    j1, j2 = two_j1 / 2.0, two_j2 / 2.0
    two_jmin = abs(two_j1 - two_j2)
    n_j = (two_j1 + two_j2 - two_jmin) // 2 + 1
    table = np.zeros((n_j, two_j1 + 1, two_j2 + 1))
    prev = None
    for two_m in range(two_j1 + two_j2, -two_jmin - 1, -2):
        k = (two_j1 + two_j2 - two_m) // 2
        lo, hi = max(0, k - two_j2), min(two_j1, k)
        i1 = np.arange(lo, hi + 1)
        i2 = k - i1
        m1, m2 = j1 - i1, j2 - i2
        diag = j1 * (j1 + 1) + j2 * (j2 + 1) + 2 * m1 * m2
        # J1+ J2- couples (m1, m2) to (m1 + 1, m2 - 1), i.e. the previous row
        off = np.sqrt((j1 - m1[1:]) * (j1 + m1[1:] + 1) * (j2 + m2[1:]) * (j2 - m2[1:] + 1))
        if len(i1) == 1:
            vecs = np.ones((1, 1))
        else:
            _, vecs = eigh_tridiagonal(diag, off)
        two_j_low = max(two_jmin, abs(two_m))
        a0 = (two_j_low - two_jmin) // 2
        signs = np.ones(len(i1))
        if prev is not None:
            # compare each vector with J- applied to the sector above, an O(1) overlap
            lo_p, a0_p, vecs_p = prev
            lowered = np.zeros((len(i1), vecs_p.shape[1]))
            ok1 = (i1 - 1 >= lo_p) & (i1 - 1 < lo_p + len(vecs_p))
            lowered[ok1] += _lowering(j1, m1[ok1] + 1)[:, None] * vecs_p[i1[ok1] - 1 - lo_p]
            ok2 = (i1 >= lo_p) & (i1 < lo_p + len(vecs_p)) & (i2 >= 1)
            lowered[ok2] += _lowering(j2, m2[ok2] + 1)[:, None] * vecs_p[i1[ok2] - lo_p]
            shift = a0_p - a0  # current column c matches previous column c - shift
            c = np.arange(shift, len(i1))
            signs[c] = np.sign(np.einsum("ic,ic->c", vecs[:, c], lowered[:, c - shift]))
        if two_j_low == two_m:
            # highest weight of J = M: component signs are (-1)^(j1 - m1); anchor on the largest
            top = int(np.argmax(np.abs(vecs[:, 0])))
            signs[0] = np.sign(vecs[top, 0]) * (-1) ** int(i1[top])
        vecs = vecs * signs
        table[a0 + np.arange(len(i1))[:, None], i1[None, :], i2[None, :]] = vecs.T
        prev = (lo, a0, vecs)
    for two_m in range(-two_jmin - 2, -two_j1 - two_j2 - 1, -2):
        # reflection symmetry <j1 -m1 j2 -m2|J -M> = (-1)^(j1+j2-J) <j1 m1 j2 m2|J M>
        i1 = np.arange(two_j1 + 1)
        i2 = (two_j1 + two_j2 - two_m) // 2 - i1
        keep = (i2 >= 0) & (i2 <= two_j2)
        i1, i2 = i1[keep], i2[keep]
        for a in range(n_j):
            two_j = two_jmin + 2 * a
            if two_j < abs(two_m):
                continue
            sign = (-1) ** ((two_j1 + two_j2 - two_j) // 2)
            table[a, i1, i2] = sign * table[a, two_j1 - i1, two_j2 - i2]
    table.flags.writeable = False
    return table


def count_types(n: int, s: int) -> int:
    """Number of ways to distribute n particles over s local levels."""
    _check_size(n)
    if int(s) != s or s < 1:
        raise ValueError("number of levels must be a positive integer")
    return math.comb(n + s - 1, s - 1)


def enumerate_types(n: int, s: int) -> list[tuple[int, ...]]:
    count_types(n, s)

    def rec(remaining: int, slots: int):
        if slots == 1:
            yield (remaining,)
            return
        for first in range(remaining, -1, -1):
            for rest in rec(remaining - first, slots - 1):
                yield (first,) + rest

    return list(rec(n, s))


def qudit_multiplicity(partition: Sequence[int], dim: int) -> int:
    """Dimension of the SU(dim) irrep labelled by ``partition`` (Weyl formula)."""
    parts = [int(p) for p in partition]
    if any(p < 0 for p in parts) or any(a < b for a, b in zip(parts, parts[1:])):
        raise ValueError("partition must be non-increasing and non-negative")
    while len(parts) > dim and parts[-1] == 0:
        parts.pop()
    if len(parts) > dim:
        raise ValueError(f"partition has more than {dim} rows")
    parts += [0] * (dim - len(parts))
    num, den = 1, 1
    for i in range(dim):
        for j in range(i + 1, dim):
            num *= parts[i] - parts[j] + j - i
            den *= j - i
    return num // den
