"""Permutation-invariant operator bases and encoders.

Two orthonormal bases of the permutation-invariant (PI) operator space on n
qubits are supported:

``pauli``
    Symmetrized Pauli strings B_k indexed by compositions k = (x, y, z, i) in
    the canonical order of :func:`repcomb.enumerate_compositions`. Hermitian
    operators have real coefficients.

``schur``
    Operators B^lam_{q,q'} = I_{d_lam} (x) |q><q'| / sqrt(d_lam) acting on the
    isotypic component of the two-row irrep lam. Coefficients are stored
    irrep by irrep (spin descending) as (2s+1) x (2s+1) row-major blocks with
    row index ``i = s - q`` and column index ``j = s - q'``. The coefficient of
    an operator A is Tr[B^dagger A].

Measurement outcomes h count the number of ZEROS in the measured bitstring,
and |0> is spin up, so outcome h corresponds to the magnetic number
q(h) = h - n/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import gammaln

from . import repcomb
from .repcomb import Composition, IrrepLabel

BASES = ("pauli", "schur")
DENSE_SCHUR_CAP = 10

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class RequiresDenseOracle(ValueError):
    """The requested basis/size combination is only reachable densely."""


@dataclass(frozen=True)
class PIVector:
    basis: str
    n: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        coeffs = np.asarray(self.coeffs)
        if coeffs.shape != (math.comb(self.n + 3, 3),):
            raise ValueError(f"expected {math.comb(self.n + 3, 3)} coefficients, got {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    def __add__(self, other: "PIVector") -> "PIVector":
        _same_space(self, other)
        return PIVector(self.basis, self.n, self.coeffs + other.coeffs)

    def __sub__(self, other: "PIVector") -> "PIVector":
        _same_space(self, other)
        return PIVector(self.basis, self.n, self.coeffs - other.coeffs)

    def scaled(self, factor: complex) -> "PIVector":
        return PIVector(self.basis, self.n, self.coeffs * factor)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def _same_space(a: PIVector, b: PIVector) -> None:
    if a.basis != b.basis or a.n != b.n:
        raise ValueError(f"vectors live in different spaces: ({a.basis}, {a.n}) vs ({b.basis}, {b.n})")


def inner(a: PIVector, b: PIVector) -> float:
    """Hilbert-Schmidt inner product Tr[A^dagger B], real part."""
    _same_space(a, b)
    return float(np.real(np.vdot(a.coeffs, b.coeffs)))


@dataclass(frozen=True)
class EulerAngles:
    """Angles of W = exp(i t3 Z/2) exp(i t2 Y/2) exp(i t1 Z/2)."""

    theta1: float
    theta2: float
    theta3: float = 0.0

    def __post_init__(self):
        if not -1e-12 <= self.theta2 <= math.pi + 1e-12:
            raise ValueError(f"theta2={self.theta2} outside [0, pi]")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3])


# observable descriptions


@dataclass(frozen=True)
class PauliString:
    text: str

    def __post_init__(self):
        if not self.text or set(self.text) - set("IXYZ"):
            raise ValueError(f"invalid Pauli string {self.text!r}")


@dataclass(frozen=True)
class AxisString:
    """Symmetrized string with ``weight`` copies of one Pauli axis, identity elsewhere."""

    axis: str
    weight: int

    def __post_init__(self):
        if self.axis not in ("X", "Y", "Z"):
            raise ValueError(f"axis must be X, Y or Z, got {self.axis!r}")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass(frozen=True)
class HammingProjector:
    h: int


@dataclass(frozen=True)
class GhzProjector:
    pass


@dataclass(frozen=True)
class RawPIVector:
    vector: PIVector


ObservableSpec = Union[PauliString, AxisString, HammingProjector, GhzProjector, RawPIVector]


def observable_label(spec: ObservableSpec) -> str:
    if isinstance(spec, PauliString):
        return f"pauli:{spec.text}"
    if isinstance(spec, AxisString):
        return f"axis:{spec.axis}:{spec.weight}"
    if isinstance(spec, HammingProjector):
        return f"hamming:{spec.h}"
    if isinstance(spec, GhzProjector):
        return "ghz-proj"
    return f"pivec:{spec.vector.basis}:{spec.vector.n}"


# Schur index layout


@dataclass(frozen=True)
class SchurLayout:
    n: int
    irreps: tuple[IrrepLabel, ...]
    offsets: tuple[int, ...]
    irrep_pos: np.ndarray
    row: np.ndarray
    col: np.ndarray
    two_s: np.ndarray
    sqrt_dim: np.ndarray

    @property
    def size(self) -> int:
        return len(self.row)

    @property
    def delta(self) -> np.ndarray:
        """q' - q of every flat index."""
        return self.row - self.col

    def block(self, coeffs: np.ndarray, pos: int) -> np.ndarray:
        m = self.irreps[pos].mult
        start = self.offsets[pos]
        return coeffs[start:start + m * m].reshape(m, m)

    def position(self, irrep: IrrepLabel) -> int:
        return self.irreps.index(irrep)


@lru_cache(maxsize=None)
def schur_layout(n: int) -> SchurLayout:
    irreps = repcomb.enumerate_irreps(n)
    offsets, pos, rows, cols, spins, roots = [], [], [], [], [], []
    start = 0
    for p, lam in enumerate(irreps):
        m = lam.mult
        offsets.append(start)
        start += m * m
        ii, jj = np.divmod(np.arange(m * m), m)
        pos.append(np.full(m * m, p))
        rows.append(ii)
        cols.append(jj)
        spins.append(np.full(m * m, lam.two_s))
        roots.append(np.full(m * m, math.sqrt(lam.dim)))
    arrays = [np.concatenate(a) for a in (pos, rows, cols, spins, roots)]
    for a in arrays:
        a.flags.writeable = False
    return SchurLayout(n, irreps, tuple(offsets), *arrays)


# Pauli-basis tables


@lru_cache(maxsize=None)
def _composition_array(n: int) -> np.ndarray:
    arr = np.array(repcomb.enumerate_compositions(n), dtype=np.int64)
    arr.flags.writeable = False
    return arr


@lru_cache(maxsize=None)
def _log_projector_prefactor(n: int) -> np.ndarray:
    """log sqrt(n! / (x! y! z! i! 2^n)) for every composition."""
    comps = _composition_array(n)
    out = 0.5 * (gammaln(n + 1) - gammaln(comps + 1).sum(axis=1) - n * math.log(2))
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def hamming_table(n: int) -> np.ndarray:
    """a(h, m) = sum_x <x| Z^{(x) m} (x) I |x> over bitstrings x with h zeros."""
    table = np.empty((n + 1, n + 1))
    for h in range(n + 1):
        for m in range(n + 1):
            table[h, m] = float(_hamming_int(h, m, n))
    table.flags.writeable = False
    return table


def _hamming_int(h: int, m: int, n: int) -> int:
    return sum(math.comb(m, l) * math.comb(n - m, h - l) * (-1) ** (m - l)
               for l in range(max(0, h - n + m), min(m, h) + 1))


def hamming_alpha(h: int, m: int, n: int) -> tuple[float, int]:
    """Coefficient of Pi_h on B_(0,0,m,n-m), and the integer count a(h, m)."""
    if not (0 <= h <= n and 0 <= m <= n):
        raise ValueError("require 0 <= h, m <= n")
    a = _hamming_int(h, m, n)
    return math.sqrt(math.comb(n, m) / 2 ** n) * a, a


def pauli_overlap(P: str, k, n: int) -> float:
    """Tr[P B_k] for a Pauli string P."""
    if isinstance(P, PauliString):
        P = P.text
    if len(P) != n:
        raise ValueError(f"Pauli string length {len(P)} differs from n={n}")
    comp = Composition(P.count("X"), P.count("Y"), P.count("Z"), P.count("I"))
    if comp != Composition(*k):
        return 0.0
    log_val = 0.5 * (n * math.log(2) + sum(math.lgamma(c + 1) for c in comp) - math.lgamma(n + 1))
    return math.exp(log_val)


def z_axis_components(theta) -> np.ndarray:
    """Bloch vector of W^dagger Z W."""
    t = _angle_array(theta)
    return np.array([math.sin(t[1]) * math.cos(t[0]), math.sin(t[1]) * math.sin(t[0]), math.cos(t[1])])


def euler_unitary(theta) -> np.ndarray:
    t = _angle_array(theta)
    c, s = math.cos(t[1] / 2), math.sin(t[1] / 2)
    left = np.diag([np.exp(0.5j * t[2]), np.exp(-0.5j * t[2])])
    right = np.diag([np.exp(0.5j * t[0]), np.exp(-0.5j * t[0])])
    return left @ np.array([[c, s], [-s, c]]) @ right


def _angle_array(theta) -> np.ndarray:
    if isinstance(theta, EulerAngles):
        return theta.as_array()
    arr = np.asarray(theta, dtype=float)
    if arr.shape == (2,):
        arr = np.append(arr, 0.0)
    return arr


def pauli_monomials(z: np.ndarray, n: int) -> np.ndarray:
    """z_X^x z_Y^y z_Z^z for every composition; ``z`` has shape (..., 3)."""
    comps = _composition_array(n)
    z = np.asarray(z, dtype=float)
    powers = np.ones(z.shape + (n + 1,))
    for e in range(1, n + 1):
        powers[..., e] = powers[..., e - 1] * z
    return powers[..., 0, comps[:, 0]] * powers[..., 1, comps[:, 1]] * powers[..., 2, comps[:, 2]]


def rotated_projector_pauli(theta, h: int, n: int) -> PIVector:
    """Pauli coefficients of W^dagger Pi_h W."""
    if not 0 <= h <= n:
        raise ValueError("require 0 <= h <= n")
    comps = _composition_array(n)
    ones = hamming_table(n)[h, n - comps[:, 3]]
    coeffs = np.exp(_log_projector_prefactor(n)) * ones * pauli_monomials(z_axis_components(theta), n)
    return PIVector("pauli", n, coeffs)


# Schur-basis vectors


def projector_schur_vector(h: int, n: int) -> PIVector:
    if not 0 <= h <= n:
        raise ValueError("require 0 <= h <= n")
    layout = schur_layout(n)
    coeffs = np.zeros(layout.size, dtype=complex)
    two_q = 2 * h - n
    for pos, lam in enumerate(layout.irreps):
        if abs(two_q) <= lam.two_s:
            i = (lam.two_s - two_q) // 2
            layout.block(coeffs, pos)[i, i] = math.sqrt(lam.dim)
    return PIVector("schur", n, coeffs)


def spin_rotation(two_s: int, theta) -> np.ndarray:
    """Matrix of W on the spin-s register, rows and columns ordered q = s..-s."""
    t = _angle_array(theta)
    q = (two_s - 2 * np.arange(two_s + 1)) / 2.0
    # <q| exp(i t2 J_y) |r> = d^s(-t2)[q, r] = d^s(t2)[r, q]
    middle = repcomb.wigner_d(Fraction(two_s, 2), t[1]).T
    return np.exp(1j * t[2] * q)[:, None] * middle * np.exp(1j * t[0] * q)[None, :]


def rotate_schur(vec: PIVector, theta) -> PIVector:
    """Schur coefficients of W^dagger A W."""
    if vec.basis != "schur":
        raise ValueError("rotate_schur needs a Schur-basis vector")
    layout = schur_layout(vec.n)
    out = np.empty(layout.size, dtype=complex)
    coeffs = vec.coeffs.astype(complex)
    for pos, lam in enumerate(layout.irreps):
        rot = spin_rotation(lam.two_s, theta)
        layout.block(out, pos)[:] = rot.conj().T @ layout.block(coeffs, pos) @ rot
    return PIVector("schur", vec.n, out)


# states and observables


def ghz_state(n: int, basis: str) -> PIVector:
    """Coefficients of |GHZ><GHZ| with |GHZ> = (|0...0> + |1...1>)/sqrt(2)."""
    if n < 2:
        raise ValueError("GHZ state needs n >= 2")
    if basis == "schur":
        layout = schur_layout(n)
        coeffs = np.zeros(layout.size, dtype=complex)
        block = layout.block(coeffs, 0)
        for i in (0, n):
            for j in (0, n):
                block[i, j] = 0.5
        return PIVector("schur", n, coeffs)
    if basis != "pauli":
        raise ValueError(f"unknown basis {basis!r}")
    comps = _composition_array(n)
    x, y, z, i = comps.T
    diagonal_part = ((x == 0) & (y == 0)) * (1 + (-1.0) ** z) / 2
    coherence_part = ((z == 0) & (i == 0) & (y % 2 == 0)) * (-1.0) ** (y // 2)
    coeffs = np.exp(_log_projector_prefactor(n)) * (diagonal_part + coherence_part)
    return PIVector("pauli", n, coeffs)


def _axis_composition(axis: str, weight: int, n: int) -> Composition:
    counts = {"X": 0, "Y": 0, "Z": 0}
    counts[axis] = weight
    return Composition(counts["X"], counts["Y"], counts["Z"], n - weight)


_AXIS_ROTATIONS = {"X": (0.0, math.pi / 2, 0.0), "Y": (math.pi / 2, math.pi / 2, 0.0)}


def observable_to_pivector(spec: ObservableSpec, n: int, basis: str) -> PIVector:
    """Coefficients of the permutation twirl of an observable."""
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")
    if isinstance(spec, RawPIVector):
        vec = spec.vector
        if vec.n != n:
            raise ValueError(f"vector is for n={vec.n}, expected {n}")
        if vec.basis == basis:
            return vec
        if vec.basis == "pauli":
            return pauli_to_schur(vec)
        raise ValueError("Schur to Pauli conversion is not offered")
    if isinstance(spec, GhzProjector):
        return ghz_state(n, basis)
    if isinstance(spec, HammingProjector):
        if not 0 <= spec.h <= n:
            raise ValueError("Hamming weight outside 0..n")
        if basis == "schur":
            return projector_schur_vector(spec.h, n)
        coeffs = np.zeros(math.comb(n + 3, 3))
        for m in range(n + 1):
            coeffs[repcomb.composition_index((0, 0, m, n - m), n)] = hamming_alpha(spec.h, m, n)[0]
        return PIVector("pauli", n, coeffs)
    if isinstance(spec, PauliString):
        if len(spec.text) != n:
            raise ValueError(f"Pauli string length {len(spec.text)} differs from n={n}")
        t = spec.text
        comp = Composition(t.count("X"), t.count("Y"), t.count("Z"), t.count("I"))
        coeffs = np.zeros(math.comb(n + 3, 3))
        coeffs[repcomb.composition_index(comp, n)] = pauli_overlap(t, comp, n)
        vec = PIVector("pauli", n, coeffs)
        return vec if basis == "pauli" else pauli_to_schur(vec)
    if isinstance(spec, AxisString):
        if spec.weight > n:
            raise ValueError("weight exceeds n")
        comp = _axis_composition(spec.axis, spec.weight, n)
        if basis == "pauli":
            coeffs = np.zeros(math.comb(n + 3, 3))
            text = spec.axis * spec.weight + "I" * (n - spec.weight)
            coeffs[repcomb.composition_index(comp, n)] = pauli_overlap(text, comp, n)
            return PIVector("pauli", n, coeffs)
        table = hamming_table(n)
        vec = PIVector("schur", n, np.zeros(schur_layout(n).size, dtype=complex))
        for h in range(n + 1):
            weight = table[h, spec.weight] / math.comb(n, h)
            vec = vec + projector_schur_vector(h, n).scaled(weight)
        if spec.axis == "Z":
            return vec
        return rotate_schur(vec, _AXIS_ROTATIONS[spec.axis])
    raise TypeError(f"unsupported observable {spec!r}")


def expectation(obs: PIVector, state: PIVector) -> float:
    """Tr[O rho] for Hermitian O given by its coefficients."""
    return inner(obs, state)


# dense change of basis


@lru_cache(maxsize=None)
def schur_reference_states(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Columns |lam, T0, q>: singlet pairs followed by a Dicke state.

    Returns the 2^n x sum(m_lam) matrix and the irrep position of each column.
    Column order follows the Schur layout (irreps by spin descending,
    q = s..-s inside each irrep).
    """
    singlet = np.array([0.0, 1.0, -1.0, 0.0]) / math.sqrt(2)
    columns, owner = [], []
    for pos, lam in enumerate(repcomb.enumerate_irreps(n)):
        ns = lam.two_s
        pairs = (n - ns) // 2
        head = np.ones(1)
        for _ in range(pairs):
            head = np.kron(head, singlet)
        if ns:
            ones = np.array([bin(b).count("1") for b in range(2 ** ns)])
        else:
            ones = np.zeros(1, dtype=int)
        for i in range(ns + 1):
            # i = s - q counts the ones of the Dicke part
            dicke = (ones == i).astype(float)
            dicke /= math.sqrt(dicke.sum())
            columns.append(np.kron(head, dicke))
            owner.append(pos)
    mat = np.array(columns).T
    mat.flags.writeable = False
    return mat, np.array(owner)


def _apply_each_qubit(single: np.ndarray, states: np.ndarray, n: int) -> np.ndarray:
    out = states.reshape((2,) * n + (-1,))
    for axis in range(n):
        out = np.moveaxis(np.tensordot(single, out, axes=([1], [axis])), 0, axis)
    return out.reshape(2 ** n, -1)


@lru_cache(maxsize=None)
def schur_change_of_basis(n: int) -> np.ndarray:
    """Matrix U with U[schur index, composition index] = Tr[B^lam_{qq'}^dagger B_k].

    Uses the generating function <psi_q| (I + xX + yY + zZ)^{(x) n} |psi_q'>,
    whose monomial coefficients are recovered by a 3D discrete Fourier
    transform on roots of unity. Dense, so capped at n = 10.
    """
    if n > DENSE_SCHUR_CAP:
        raise RequiresDenseOracle(f"dense Pauli-to-Schur conversion is capped at n={DENSE_SCHUR_CAP}")
    layout = schur_layout(n)
    refs, owner = schur_reference_states(n)
    starts = np.searchsorted(owner, np.arange(len(layout.irreps)))
    col_of_flat = starts[layout.irrep_pos]
    left = col_of_flat + layout.row
    right = col_of_flat + layout.col

    grid = n + 1
    roots = np.exp(2j * np.pi * np.arange(grid) / grid)
    values = np.empty((grid, grid, grid, layout.size), dtype=complex)
    for a in range(grid):
        for b in range(grid):
            for c in range(grid):
                single = (PAULI_MATRICES["I"] + roots[a] * PAULI_MATRICES["X"]
                          + roots[b] * PAULI_MATRICES["Y"] + roots[c] * PAULI_MATRICES["Z"])
                gram = refs.T @ _apply_each_qubit(single, refs.astype(complex), n)
                values[a, b, c] = gram[left, right]
    monomial = np.fft.fftn(values, axes=(0, 1, 2)) / grid ** 3

    comps = _composition_array(n)
    class_coeffs = monomial[comps[:, 0], comps[:, 1], comps[:, 2]]
    # sum over a composition class equals sqrt(n! d / k!) B_k
    scale = np.exp(0.5 * (gammaln(n + 1) + n * math.log(2) - gammaln(comps + 1).sum(axis=1)))
    mat = (class_coeffs / scale[:, None]).T * layout.sqrt_dim[:, None]
    mat.flags.writeable = False
    return mat


def pauli_to_schur(vec: PIVector) -> PIVector:
    if vec.basis != "pauli":
        raise ValueError("expected a Pauli-basis vector")
    return PIVector("schur", vec.n, schur_change_of_basis(vec.n) @ vec.coeffs)


# batched overlaps with rotated projectors


def projector_overlaps(vec: PIVector, thetas: np.ndarray, outcomes: np.ndarray | None = None) -> np.ndarray:
    """<W_s^dagger Pi_h W_s, vec> for a batch of Euler angles.

    With ``outcomes=None`` every h is returned (shape (S, n+1)); otherwise
    only the listed outcome of each row (shape (S,)). For a state this gives
    outcome probabilities, for C^{-1} O it gives single-shot estimates.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if vec.basis == "pauli":
        return _pauli_overlaps(vec, thetas, outcomes)
    return _schur_overlaps(vec, thetas, outcomes)


def _pauli_overlaps(vec, thetas, outcomes, chunk: int = 2048):
    n = vec.n
    comps = _composition_array(n)
    weights = np.exp(_log_projector_prefactor(n)) * np.real(vec.coeffs)
    grouped = np.zeros((len(comps), n + 1))
    grouped[np.arange(len(comps)), n - comps[:, 3]] = weights
    table = hamming_table(n)
    pieces = []
    for start in range(0, len(thetas), chunk):
        t = thetas[start:start + chunk]
        z = np.stack([np.sin(t[:, 1]) * np.cos(t[:, 0]), np.sin(t[:, 1]) * np.sin(t[:, 0]), np.cos(t[:, 1])], axis=1)
        per_m = pauli_monomials(z, n) @ grouped
        full = per_m @ table.T
        if outcomes is None:
            pieces.append(full)
        else:
            o = np.asarray(outcomes[start:start + chunk])
            pieces.append(full[np.arange(len(t)), o])
    return np.concatenate(pieces) if pieces else np.zeros((0,) if outcomes is not None else (0, n + 1))


def _schur_overlaps(vec, thetas, outcomes):
    n = vec.n
    layout = schur_layout(n)
    coeffs = vec.coeffs.astype(complex)
    count = len(thetas)
    result = np.zeros((count, n + 1)) if outcomes is None else np.zeros(count)
    hs = range(n + 1) if outcomes is None else np.unique(outcomes)
    for pos, lam in enumerate(layout.irreps):
        block = layout.block(coeffs, pos)
        if not np.any(block):
            continue
        ts = lam.two_s
        r = (ts - 2 * np.arange(ts + 1)) / 2.0
        diagonal_only = not np.any(block - np.diag(np.diag(block)))
        for h in hs:
            two_q = 2 * int(h) - n
            if abs(two_q) > ts:
                continue
            rows = slice(None) if outcomes is None else np.flatnonzero(outcomes == h)
            t = thetas[rows]
            cols = repcomb.wigner_d_columns(ts, (ts - two_q) // 2, t[:, 1])
            if diagonal_only:
                vals = np.real(np.diag(block)) @ (cols ** 2)
            else:
                u = cols * np.exp(1j * np.outer(r, t[:, 0]))
                vals = np.real(np.einsum("is,ij,js->s", u, block, u.conj()))
            vals = math.sqrt(lam.dim) * vals
            if outcomes is None:
                result[:, h] += vals
            else:
                result[rows] += vals
    return result
