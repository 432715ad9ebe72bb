"""Dense brute-force ground truth for small systems.

All operators here are explicit 2^n x 2^n matrices (qubit 0 is the leftmost
tensor factor, |0> is the first basis state). Nothing in this module uses the
closed-form coefficient formulas it is meant to check; the only shared piece
is the definition of the Euler-angle unitary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

from . import repcomb
from .pibasis import PAULI_MATRICES, euler_unitary

DENSE_CAP = 12
PERMUTATION_CAP = 8


@dataclass(frozen=True)
class DenseOp:
    n: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.n > DENSE_CAP:
            raise ValueError(f"dense operators are capped at n={DENSE_CAP}")
        if self.matrix.shape != (2 ** self.n, 2 ** self.n):
            raise ValueError("matrix shape does not match n")


def kron_all(factors) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for f in factors:
        out = np.kron(out, f)
    return out


def pauli_string_matrix(text: str) -> np.ndarray:
    return kron_all(PAULI_MATRICES[c] for c in text)


def _distinct_arrangements(letters: str) -> set[str]:
    return {"".join(p) for p in permutations(letters)}


def _class_sum(letters: str) -> np.ndarray:
    """Sum over all n! permutations of the string, grouped by distinct image."""
    counts = {c: letters.count(c) for c in set(letters)}
    stabilizer = math.prod(math.factorial(v) for v in counts.values())
    total = sum(pauli_string_matrix(s) for s in _distinct_arrangements(letters))
    return stabilizer * total


def dense_symmetrized_pauli(k, n: int) -> DenseOp:
    k = repcomb.Composition(*k)
    if k.weight != n:
        raise ValueError("composition does not sum to n")
    if n > PERMUTATION_CAP:
        raise ValueError(f"permutation sums are capped at n={PERMUTATION_CAP}")
    letters = "X" * k.x + "Y" * k.y + "Z" * k.z + "I" * k.i
    norm = math.sqrt(2 ** n * math.factorial(n) * math.prod(math.factorial(c) for c in k))
    return DenseOp(n, _class_sum(letters) / norm)


@lru_cache(maxsize=None)
def dense_pauli_basis(n: int) -> np.ndarray:
    """Stack of all B_k, shape (C(n+3,3), 2^n, 2^n), canonical order."""
    mats = np.array([dense_symmetrized_pauli(k, n).matrix for k in repcomb.enumerate_compositions(n)])
    mats.flags.writeable = False
    return mats


def v_coefficient(mx: int, my: int, mz: int) -> float:
    if min(mx, my, mz) < 0:
        raise ValueError("moments must be non-negative")
    if mx % 2 or my % 2 or mz % 2:
        return 0.0
    total = mx + my + mz
    f = math.factorial
    return 2.0 * f(total // 2 + 1) / (f(mx // 2) * f(my // 2) * f(mz // 2) * f(total + 2))


def dense_zw_moment(M: int) -> DenseOp:
    """E_W[(W^dagger Z W)^{(x) M}] from the v-coefficients and permutation sums."""
    if not 0 <= M <= 8:
        raise ValueError("moment order is capped at 8")
    out = np.zeros((2 ** M, 2 ** M), dtype=complex)
    for mx in range(0, M + 1):
        for my in range(0, M + 1 - mx):
            mz = M - mx - my
            v = v_coefficient(mx, my, mz)
            if v:
                out += v * _class_sum("X" * mx + "Y" * my + "Z" * mz)
    if M == 0:
        out = np.ones((1, 1), dtype=complex)
    return DenseOp(M, out)


def euler_quadrature(polar_nodes: int = 64, azimuth_nodes: int = 64, with_theta3: bool = False):
    """Nodes and weights integrating exactly against the Haar measure on SU(2).

    Gauss-Legendre in cos(theta2) (weight sin(theta2)/2) and the trapezoid rule
    in the azimuthal angles, which is exact for trigonometric polynomials of
    degree below ``azimuth_nodes``. Returns (angles of shape (N, 3), weights).
    """
    x, w = np.polynomial.legendre.leggauss(polar_nodes)
    theta2 = np.arccos(x)
    w2 = w / 2
    phi = 2 * np.pi * np.arange(azimuth_nodes) / azimuth_nodes
    wphi = np.full(azimuth_nodes, 1.0 / azimuth_nodes)
    third = phi if with_theta3 else np.zeros(1)
    w3 = wphi if with_theta3 else np.ones(1)
    t1, t2, t3 = np.meshgrid(phi, theta2, third, indexing="ij")
    weights = np.einsum("i,j,k->ijk", wphi, w2, w3)
    return np.stack([t1.ravel(), t2.ravel(), t3.ravel()], axis=1), weights.ravel()


def dense_euler_unitary(theta, n: int) -> np.ndarray:
    return kron_all([euler_unitary(theta)] * n)


def dense_hamming_projector(h: int, n: int) -> DenseOp:
    zeros = np.array([n - bin(b).count("1") for b in range(2 ** n)])
    return DenseOp(n, np.diag((zeros == h).astype(complex)))


def dense_ghz(n: int) -> DenseOp:
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = psi[-1] = 1 / math.sqrt(2)
    return DenseOp(n, np.outer(psi, psi.conj()))


def _snapshot_coefficients(theta, n: int, basis: np.ndarray) -> np.ndarray:
    """Tr[B_k W^dagger Pi_h W] for all h (rows) and basis elements (columns)."""
    W = dense_euler_unitary(theta, n)
    zeros = np.array([n - bin(b).count("1") for b in range(2 ** n)])
    # Tr[B W^dag Pi_h W] = sum_{x: h zeros} <x| W B W^dag |x>
    rotated = np.einsum("ab,kbc,dc->kad", W, basis, W.conj(), optimize=True)
    diag = np.real(np.einsum("kaa->ka", rotated))
    out = np.zeros((n + 1, basis.shape[0]))
    for h in range(n + 1):
        out[h] = diag[:, zeros == h].sum(axis=1)
    return out


def dense_channel(n: int, method: str | None = None) -> np.ndarray:
    """Matrix Tr[B_k M(B_k')] of the measurement channel, built densely.

    ``method="moments"`` expands Pi_h in Z strings and averages pairs of
    rotated Z strings with :func:`dense_zw_moment` (n <= 4, since the moment
    order reaches 2n). ``method="quadrature"`` integrates the snapshots
    W^dagger Pi_h W over an exact Euler-angle rule (n <= 5). The default uses
    moments when possible.
    """
    if method is None:
        method = "moments" if n <= 4 else "quadrature"
    if n > 5:
        raise ValueError("dense channel is capped at n=5")
    if method == "moments":
        return _dense_channel_moments(n)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    basis = dense_pauli_basis(n)
    thetas, weights = euler_quadrature(n + 2, 2 * n + 2)
    out = np.zeros((basis.shape[0], basis.shape[0]))
    for theta, w in zip(thetas, weights):
        coeffs = _snapshot_coefficients(theta, n, basis)
        out += w * coeffs.T @ coeffs
    return out


def _dense_channel_moments(n: int) -> np.ndarray:
    if n > 4:
        raise ValueError("moment route needs n <= 4")
    comps = repcomb.enumerate_compositions(n)
    zeros = np.array([n - bin(b).count("1") for b in range(2 ** n)])
    # Pi_h = sum over Z strings Z^S of f_h(|S|) Z^S with f_h(m) = Tr[Pi_h Z^{first m}] / 2^n
    f = np.zeros((n + 1, n + 1))
    for m in range(n + 1):
        zdiag = np.real(np.diag(pauli_string_matrix("Z" * m + "I" * (n - m))))
        for h in range(n + 1):
            f[h, m] = zdiag[zeros == h].sum() / 2 ** n
    moments = {M: dense_zw_moment(M).matrix for M in range(2 * n + 1)}
    sums = {}
    for k in comps:
        sums[k] = _class_sum("X" * k.x + "Y" * k.y + "Z" * k.z) / math.prod(
            math.factorial(c) for c in k[:3]) if k.i < n else np.ones((1, 1))
    size = len(comps)
    out = np.zeros((size, size))
    for a, k in enumerate(comps):
        m = n - k.i
        beta = math.sqrt(math.prod(math.factorial(c) for c in k) / (2 ** n * math.factorial(n)))
        for b, kp in enumerate(comps):
            mp = n - kp.i
            betap = math.sqrt(math.prod(math.factorial(c) for c in kp) / (2 ** n * math.factorial(n)))
            trace = np.real(np.trace(np.kron(sums[k], sums[kp]) @ moments[m + mp]))
            weight = (f[:, m] * f[:, mp]).sum()
            out[a, b] = (beta * betap * 2 ** (2 * n - m - mp) * math.comb(n, m) * math.comb(n, mp)
                         * weight * trace)
    return out


@lru_cache(maxsize=None)
def _permuted_reference_states(n: int, column: int) -> np.ndarray:
    from .pibasis import schur_reference_states

    refs, _ = schur_reference_states(n)
    psi = refs[:, column].reshape((2,) * n)
    return np.array([np.transpose(psi, p).ravel() for p in permutations(range(n))])


def dense_schur_op(lam, q, qp, n: int) -> DenseOp:
    """B^lam_{q,q'} as sqrt(d_lam) times the S_n average of the reference dyad."""
    if n > PERMUTATION_CAP:
        raise ValueError(f"permutation sums are capped at n={PERMUTATION_CAP}")
    lam = lam if isinstance(lam, repcomb.IrrepLabel) else repcomb.IrrepLabel(*lam)
    if lam.n != n:
        raise ValueError("irrep does not match n")
    two_q, two_qp = int(round(2 * float(q))), int(round(2 * float(qp)))
    for tq in (two_q, two_qp):
        if abs(tq) > lam.two_s or (lam.two_s - tq) % 2:
            raise ValueError(f"q={tq / 2} not allowed for spin {lam.spin}")
    from .pibasis import schur_layout

    layout = schur_layout(n)
    pos = layout.position(lam)
    start = sum(layout.irreps[p].mult for p in range(pos))
    left = _permuted_reference_states(n, start + (lam.two_s - two_q) // 2)
    right = _permuted_reference_states(n, start + (lam.two_s - two_qp) // 2)
    avg = left.T @ right / math.factorial(n)
    return DenseOp(n, math.sqrt(lam.dim) * avg.astype(complex))


def transposition_matrix(n: int, a: int, b: int) -> np.ndarray:
    """Unitary swapping qubits a and b."""
    perm = list(range(n))
    perm[a], perm[b] = perm[b], perm[a]
    eye = np.eye(2 ** n).reshape((2,) * n + (2 ** n,))
    return np.transpose(eye, perm + [n]).reshape(2 ** n, 2 ** n)
