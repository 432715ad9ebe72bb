"""Measurement channel of the symmetric Hamming-weight protocol.

The channel matrix C is stored block by block. Pauli-basis blocks are the
eight parity classes of compositions; Schur-basis blocks are labelled by
Delta = q' - q, which the channel conserves.

Each block keeps a kernel K and a positive scale vector s with
C_block = diag(s) K diag(s). In the Pauli basis s = 1. In the Schur basis
s = sqrt(d_lam), which lifts the exponentially large irrep dimensions out of
the kernel: K only contains Clebsch-Gordan data and stays well conditioned.
Linear solves use an LU factorization of the Jacobi-equilibrated kernel.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.linalg import eigvalsh, lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, eigsh
from scipy.special import gammaln

from . import repcomb
from .pibasis import PIVector, _composition_array, schur_layout

PAULI_CAP = 40
CACHE_VERSION = 1
ROUND_TRIP_TOL = 1e-8


class ChannelError(RuntimeError):
    pass


class UnbuiltBlock(ChannelError):
    pass


@dataclass
class ChannelBlock:
    key: object
    indices: np.ndarray
    kernel: np.ndarray
    scale: np.ndarray
    _lu: tuple | None = field(default=None, repr=False)
    _jacobi: np.ndarray | None = field(default=None, repr=False)

    def matrix(self) -> np.ndarray:
        return self.scale[:, None] * self.kernel * self.scale[None, :]

    def _factor(self):
        if self._lu is None:
            diag = np.diag(self.kernel)
            if np.any(diag <= 0):
                raise ChannelError(f"block {self.key} has a non-positive diagonal")
            self._jacobi = 1.0 / np.sqrt(diag)
            equil = self._jacobi[:, None] * self.kernel * self._jacobi[None, :]
            self._lu = lu_factor(equil, check_finite=True)
            if np.min(np.abs(np.diag(self._lu[0]))) == 0:
                raise ChannelError(f"block {self.key} is singular")
        return self._lu, self._jacobi

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        lu, jac = self._factor()
        reduced = rhs / self.scale
        if np.iscomplexobj(reduced):
            sol = lu_solve(lu, jac * reduced.real) + 1j * lu_solve(lu, jac * reduced.imag)
        else:
            sol = lu_solve(lu, jac * reduced)
        return jac * sol / self.scale

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.scale * (self.kernel @ (self.scale * vec))

    def scaled_residual(self, probe: np.ndarray) -> float:
        """Round trip on v = scale * probe, measured back in probe units."""
        v = self.scale * probe
        back = self.apply(self.solve(v))
        return float(np.linalg.norm((back - v) / self.scale) / np.linalg.norm(probe))


def _verify_blocks(blocks) -> None:
    rng = np.random.default_rng(0)
    for block in blocks.values():
        res = block.scaled_residual(rng.standard_normal(len(block.indices)))
        if not res <= ROUND_TRIP_TOL:
            raise ChannelError(f"block {block.key} fails the round trip ({res:.2e} > {ROUND_TRIP_TOL:g}); "
                               "the Schur basis stays well conditioned")


@dataclass
class ChannelMatrix:
    basis: str
    n: int
    blocks: dict

    @property
    def size(self) -> int:
        return math.comb(self.n + 3, 3)

    @property
    def complete(self) -> bool:
        return sum(len(b.indices) for b in self.blocks.values()) == self.size

    def dense(self) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        for block in self.blocks.values():
            out[np.ix_(block.indices, block.indices)] = block.matrix()
        return out


# Pauli basis


def _pauli_block_entries(comps: np.ndarray, n: int) -> np.ndarray:
    a = comps[:, None, :]
    b = comps[None, :, :]
    total = a + b
    log_fact = gammaln(comps + 1).sum(axis=1)
    log_val = (gammaln(total + 1) - gammaln(total // 2 + 1)).sum(axis=2)
    log_val -= 0.5 * (log_fact[:, None] + log_fact[None, :])
    log_val -= n * math.log(2) + np.log(2 * n - a[..., 3] - b[..., 3] + 1)
    sign = np.where((np.abs(a[..., 3] - b[..., 3]) // 2) % 2, -1.0, 1.0)
    return sign * np.exp(log_val)


def build_channel_pauli(n: int) -> ChannelMatrix:
    """Channel matrix in the symmetrized Pauli basis from its closed form."""
    if n < 1:
        raise ValueError("n must be positive")
    if n > PAULI_CAP:
        raise ChannelError(f"Pauli basis is capped at n={PAULI_CAP}; use the Schur basis")
    comps = _composition_array(n)
    blocks = {}
    for key, idx in repcomb.parity_blocks(n).items():
        kernel = _pauli_block_entries(comps[idx], n)
        # the closed form is symmetric; make it exactly so
        kernel = 0.5 * (kernel + kernel.T)
        blocks[key] = ChannelBlock(key, idx, kernel, np.ones(len(idx)))
    _verify_blocks(blocks)
    return ChannelMatrix("pauli", n, blocks)


# Schur basis


def schur_block_indices(n: int, delta: int) -> np.ndarray:
    layout = schur_layout(n)
    return np.flatnonzero(layout.delta == delta)


def _crossing_weights(table: np.ndarray, two_s1: int, two_s2: int) -> np.ndarray:
    """Sum over shared q of CG(s1 q, s2 q | J, 2q)^2, divided by 2J+1."""
    two_jmin = abs(two_s1 - two_s2)
    low = min(two_s1, two_s2)
    two_q = np.arange(-low, low + 1, 2)
    i1 = (two_s1 - two_q) // 2
    i2 = (two_s2 - two_q) // 2
    two_j = two_jmin + 2 * np.arange(table.shape[0])
    return (table[:, i1, i2] ** 2).sum(axis=1) / (two_j + 1)


def build_channel_schur(n: int, blocks: Iterable[int] | None = None) -> ChannelMatrix:
    """Channel matrix in the Schur operator basis, one Delta block at a time.

    For input B^lam_{r, r+D} and output B^alpha_{p, p+D} the kernel entry is
        sum_J T_J(lam, alpha) CG(s_lam r, s_alpha p+D | J) CG(s_lam r+D, s_alpha p | J)
    with T_J = sum over shared q of CG(s_lam q, s_alpha q | J, 2q)^2 / (2J+1);
    the full entry carries the extra factor sqrt(d_lam d_alpha).
    """
    if n < 1:
        raise ValueError("n must be positive")
    keys = list(range(-n, n + 1)) if blocks is None else sorted(set(int(b) for b in blocks))
    for key in keys:
        if abs(key) > n:
            raise ValueError(f"block {key} outside -n..n")
    layout = schur_layout(n)
    irreps = layout.irreps

    # local coordinates of each irrep inside each block
    members = {}
    for key in keys:
        idx = schur_block_indices(n, key)
        members[key] = (idx, {p: np.flatnonzero(layout.irrep_pos[idx] == p) for p in range(len(irreps))})
    kernels = {key: np.zeros((len(members[key][0]),) * 2) for key in keys}

    for pa, lam in enumerate(irreps):
        for pb in range(pa, len(irreps)):
            alpha = irreps[pb]
            table = repcomb.cg_table(lam.two_s, alpha.two_s)
            weights = _crossing_weights(table, lam.two_s, alpha.two_s)
            for key in keys:
                idx, local = members[key]
                loc_l, loc_a = local[pa], local[pb]
                if len(loc_l) == 0 or len(loc_a) == 0:
                    continue
                i_l = layout.row[idx[loc_l]]
                j_l = layout.col[idx[loc_l]]
                i_a = layout.row[idx[loc_a]]
                j_a = layout.col[idx[loc_a]]
                first = table[:, i_l[:, None], j_a[None, :]]
                second = table[:, j_l[:, None], i_a[None, :]]
                entries = np.einsum("a,alk,alk->kl", weights, first, second)
                kernels[key][np.ix_(loc_a, loc_l)] = entries
                if pb != pa:
                    kernels[key][np.ix_(loc_l, loc_a)] = entries.T
    out = {}
    for key in keys:
        idx = members[key][0]
        out[key] = ChannelBlock(key, idx, kernels[key], layout.sqrt_dim[idx].copy())
    _verify_blocks(out)
    return ChannelMatrix("schur", n, out)


# operations


def _check_vector(ch: ChannelMatrix, v: PIVector) -> None:
    if v.basis != ch.basis or v.n != ch.n:
        raise ValueError(f"vector ({v.basis}, n={v.n}) does not match channel ({ch.basis}, n={ch.n})")


def _check_support(ch: ChannelMatrix, v: PIVector) -> None:
    covered = np.zeros(ch.size, dtype=bool)
    for block in ch.blocks.values():
        covered[block.indices] = True
    if np.any(np.abs(v.coeffs[~covered]) > 0):
        raise UnbuiltBlock("vector has support on channel blocks that were not built")


def solve(ch: ChannelMatrix, v: PIVector) -> PIVector:
    """C^{-1} v applied block by block."""
    _check_vector(ch, v)
    _check_support(ch, v)
    dtype = complex if np.iscomplexobj(v.coeffs) else float
    out = np.zeros(ch.size, dtype=dtype)
    for block in ch.blocks.values():
        rhs = v.coeffs[block.indices]
        if np.any(rhs):
            out[block.indices] = block.solve(rhs)
    return PIVector(v.basis, v.n, out)


def apply(ch: ChannelMatrix, v: PIVector) -> PIVector:
    _check_vector(ch, v)
    _check_support(ch, v)
    dtype = complex if np.iscomplexobj(v.coeffs) else float
    out = np.zeros(ch.size, dtype=dtype)
    for block in ch.blocks.values():
        out[block.indices] = block.apply(v.coeffs[block.indices])
    return PIVector(v.basis, v.n, out)


def spectrum(ch: ChannelMatrix) -> np.ndarray:
    if not ch.complete:
        raise ChannelError("spectrum needs every block to be built")
    vals = [eigvalsh(block.matrix()) for block in ch.blocks.values()]
    return np.sort(np.concatenate(vals))


DENSE_EIG_CAP = 16


def extreme_eigenvalues(ch: ChannelMatrix) -> tuple[float, float]:
    """(min, max) eigenvalue over the built blocks.

    Small blocks use a dense solver. Larger ones run Lanczos on the block
    inverse for the minimum, since a dense solver's absolute error scales
    with the largest eigenvalue and swamps the small end of a graded matrix.
    """
    lo, hi = np.inf, -np.inf
    for block in ch.blocks.values():
        size = len(block.indices)
        if size <= DENSE_EIG_CAP:
            vals = eigvalsh(block.matrix())
            lo, hi = min(lo, vals[0]), max(hi, vals[-1])
            continue
        inv = LinearOperator((size, size), matvec=lambda v, b=block: b.solve(np.ravel(v)), dtype=float)
        fwd = LinearOperator((size, size), matvec=lambda v, b=block: b.apply(np.ravel(v)), dtype=float)
        start = np.ones(size)  # fixed start vector keeps results reproducible
        top_inv = eigsh(inv, k=1, which="LA", v0=start, return_eigenvectors=False, tol=1e-12)[0]
        top = eigsh(fwd, k=1, which="LA", v0=start, return_eigenvectors=False, tol=1e-12)[0]
        lo, hi = min(lo, 1.0 / top_inv), max(hi, top)
    return float(lo), float(hi)


def round_trip_residual(ch: ChannelMatrix, v: PIVector) -> float:
    """Relative 2-norm residual of apply(solve(v)) in raw coefficients."""
    back = apply(ch, solve(ch, v))
    return float(np.linalg.norm(back.coeffs - v.coeffs) / max(np.linalg.norm(v.coeffs), 1e-300))


# bounds

_BOUND_PARAMS = {
    "lc": ("loc", "op_norm"),
    "gc": ("hs_norm",),
    "qst-lc": ("n", "op_norm"),
    "qst-gc": ("n", "op_norm"),
    "block-rp": ("m", "op_norm"),
    "block-rc": ("m", "op_norm"),
    "symm-pi": ("n", "hs_norm"),
    "qudit": ("n", "D", "op_norm"),
}


def variance_bound(kind: str, **params) -> float:
    """Closed-form single-shot variance bounds.

    ``op_norm`` is the operator norm, ``hs_norm`` the Hilbert-Schmidt norm.
    The qudit bound is the block-RP bound with the largest SU(D)
    multiplicity C(n+D-1, D-1).
    """
    if kind not in _BOUND_PARAMS:
        raise ValueError(f"unknown bound kind {kind!r}")
    missing = [p for p in _BOUND_PARAMS[kind] if p not in params]
    if missing:
        raise ValueError(f"bound {kind!r} needs {', '.join(missing)}")
    p = params
    if kind == "lc":
        return 4.0 ** p["loc"] * p["op_norm"] ** 2
    if kind == "gc":
        return 3.0 * p["hs_norm"] ** 2
    if kind == "qst-lc":
        return (p["n"] ** 2 + 2 * p["n"] + 2) * p["op_norm"] ** 2
    if kind == "qst-gc":
        return 3.0 * (p["n"] ** 2 + 2 * p["n"] + 2) * p["op_norm"] ** 2
    if kind == "block-rp":
        return (p["m"] ** 2 + 1) * p["op_norm"] ** 2
    if kind == "block-rc":
        return 3.0 * (p["m"] ** 2 + 1) * p["op_norm"] ** 2
    if kind == "symm-pi":
        return (2 * p["n"] + 1) * p["hs_norm"] ** 2
    m = math.comb(p["n"] + p["D"] - 1, p["D"] - 1)
    return (m ** 2 + 1) * p["op_norm"] ** 2


# cache files


def ordering_hash(basis: str, n: int) -> str:
    if basis == "pauli":
        text = ";".join(",".join(map(str, k)) for k in repcomb.enumerate_compositions(n))
    else:
        text = ";".join(f"{lam.first_row},{lam.second_row}" for lam in repcomb.enumerate_irreps(n))
    return hashlib.sha256(f"{basis}|{n}|{text}".encode()).hexdigest()


def _block_filename(key) -> str:
    if isinstance(key, tuple):
        return "block_p" + "".join(map(str, key)) + ".bin"
    return f"block_d{key:+d}.bin"


def save_channel(ch: ChannelMatrix, directory: str | os.PathLike) -> dict:
    """Write metadata plus one little-endian float64 blob per block, atomically.

    Each blob holds the kernel in row-major order followed by the scale vector.
    """
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=directory.parent, prefix=".tmp-channel-"))
    meta = {
        "version": CACHE_VERSION,
        "n": ch.n,
        "basis": ch.basis,
        "ordering_hash": ordering_hash(ch.basis, ch.n),
        "blocks": [],
    }
    for key, block in sorted(ch.blocks.items(), key=lambda kv: str(kv[0]) if ch.basis == "pauli" else kv[0]):
        name = _block_filename(key)
        payload = np.concatenate([block.kernel.ravel(), block.scale]).astype("<f8").tobytes()
        (tmp / name).write_bytes(payload)
        meta["blocks"].append({
            "key": list(key) if isinstance(key, tuple) else key,
            "file": name,
            "size": int(len(block.indices)),
            "sha256": hashlib.sha256(payload).hexdigest(),
        })
    (tmp / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if directory.exists():
        shutil.rmtree(directory)
    os.replace(tmp, directory)
    return meta


class CacheMismatch(ChannelError):
    pass


def load_channel(directory: str | os.PathLike, n: int | None = None, basis: str | None = None) -> ChannelMatrix:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    if meta.get("version") != CACHE_VERSION:
        raise CacheMismatch(f"cache version {meta.get('version')} not supported")
    if (n is not None and meta["n"] != n) or (basis is not None and meta["basis"] != basis):
        raise CacheMismatch(f"cache holds ({meta['basis']}, n={meta['n']})")
    if meta["ordering_hash"] != ordering_hash(meta["basis"], meta["n"]):
        raise CacheMismatch("index ordering changed since the cache was written")
    n, basis = meta["n"], meta["basis"]
    blocks = {}
    parity = repcomb.parity_blocks(n) if basis == "pauli" else None
    for entry in meta["blocks"]:
        payload = (directory / entry["file"]).read_bytes()
        if hashlib.sha256(payload).hexdigest() != entry["sha256"]:
            raise CacheMismatch(f"checksum mismatch in {entry['file']}")
        key = tuple(entry["key"]) if basis == "pauli" else int(entry["key"])
        idx = parity[key] if basis == "pauli" else schur_block_indices(n, key)
        size = entry["size"]
        if size != len(idx):
            raise CacheMismatch(f"block {key} has unexpected size")
        data = np.frombuffer(payload, dtype="<f8")
        kernel = data[: size * size].reshape(size, size).astype(float)
        scale = data[size * size:].astype(float)
        blocks[key] = ChannelBlock(key, idx, kernel, scale)
    return ChannelMatrix(basis, n, blocks)
