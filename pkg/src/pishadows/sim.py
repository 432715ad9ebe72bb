"""Data acquisition: Euler sampling, outcome distributions and datasets.

Three protocols are simulated:

* ``symm-pi``: one Haar-random SU(2) rotation applied to every qubit, then a
  Hamming-weight measurement. Records are (theta, h).
* ``block``: measure the irrep label, then a Haar-random unitary on the
  multiplicity register followed by a computational-basis measurement.
  Records are (irrep, j); the unitary is regenerated from the keyed stream.
* ``lc``: independent random single-qubit Cliffords and a bitstring readout,
  simulated densely (n <= 12).

Every record draws from its own counter-based stream keyed by
(master seed, record index), so generation is order-independent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from . import repcomb
from .pibasis import (
    AxisString,
    EulerAngles,
    GhzProjector,
    HammingProjector,
    PIVector,
    PauliString,
    ghz_state,
    observable_label,
    projector_overlaps,
    schur_layout,
)

FORMAT_VERSION = 1
PROTOCOLS = ("symm-pi", "block", "lc")
NEGATIVITY_TOL = 1e-10
NORMALIZATION_TOL = 1e-9
LC_CAP = 12

STREAM_SYMM = 0
STREAM_BLOCK = 1
STREAM_LC = 2


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class GhzState:
    n: int


@dataclass(frozen=True)
class MeasurementRecord:
    theta: EulerAngles
    h: int

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("outcome must be non-negative")


def state_vector(state, n: int, basis: str) -> PIVector:
    """PI-basis coefficients of a state spec (GhzState or PIVector)."""
    if isinstance(state, GhzState):
        if state.n != n:
            raise ValueError("state size does not match n")
        return ghz_state(n, basis)
    if isinstance(state, PIVector):
        if state.n != n:
            raise ValueError("state size does not match n")
        if state.basis != basis:
            from .pibasis import pauli_to_schur

            if state.basis == "pauli" and basis == "schur":
                return pauli_to_schur(state)
            raise ValueError(f"cannot convert a {state.basis} state to the {basis} basis")
        return state
    raise TypeError(f"unsupported state spec {state!r}")


def record_rng(seed: int, index: int, stream: int = STREAM_SYMM) -> np.random.Generator:
    # the counter's low word advances while drawing; index and stream sit above it
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, int(index), int(stream), 0]))


def _angles_from_uniforms(u: np.ndarray) -> np.ndarray:
    u = np.atleast_2d(u)
    return np.stack([2 * np.pi * u[:, 0], np.arccos(1 - 2 * u[:, 1]), 2 * np.pi * u[:, 2]], axis=1)


def sample_euler(rng: np.random.Generator) -> EulerAngles:
    t = _angles_from_uniforms(rng.random(3))[0]
    return EulerAngles(float(t[0]), float(t[1]), float(t[2]))


# outcome distributions


def _normalize(p: np.ndarray) -> np.ndarray:
    p = np.atleast_2d(p)
    if p.min() < -NEGATIVITY_TOL:
        raise SamplingError(f"outcome distribution is negative ({p.min():.3e})")
    total = p.sum(axis=1, keepdims=True)
    if np.abs(total - 1).max() > NORMALIZATION_TOL:
        raise SamplingError(f"outcome distribution sums to {total.ravel()[0]!r}, not 1")
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=1, keepdims=True)


def outcome_distribution(state, theta, n: int, path: str = "pauli") -> np.ndarray:
    """p(h | theta) for h = 0..n along the chosen basis path."""
    t = np.atleast_2d(np.asarray(tuple(theta) if isinstance(theta, EulerAngles) else theta, dtype=float))
    return outcome_distributions(state, t, n, path)[0] if t.shape[0] == 1 else outcome_distributions(state, t, n, path)


def outcome_distributions(state, thetas: np.ndarray, n: int, path: str = "pauli") -> np.ndarray:
    vec = state_vector(state, n, path)
    return _normalize(projector_overlaps(vec, thetas))


def ghz_distribution_fast(n: int, theta) -> np.ndarray:
    """Closed-form outcome distribution of the GHZ state, O(n) per angle.

    With c = cos(theta2/2), s = sin(theta2/2):
    p(h) = C(n,h)/2 [c^{2h} s^{2(n-h)} + s^{2h} c^{2(n-h)} + 2 (-1)^{n-h} (cs)^n cos(n theta1)].
    """
    if n < 2:
        raise ValueError("GHZ needs n >= 2")
    t = np.atleast_2d(np.asarray(tuple(theta) if isinstance(theta, EulerAngles) else theta, dtype=float))
    out = ghz_distributions_fast(n, t)
    return out[0] if np.ndim(theta) <= 1 or isinstance(theta, EulerAngles) else out


def ghz_distributions_fast(n: int, thetas: np.ndarray) -> np.ndarray:
    thetas = np.atleast_2d(thetas)
    h = np.arange(n + 1)
    c = np.abs(np.cos(thetas[:, 1] / 2))[:, None]
    s = np.abs(np.sin(thetas[:, 1] / 2))[:, None]
    log_binom = gammaln(n + 1) - gammaln(h + 1) - gammaln(n - h + 1)
    first = np.exp(log_binom + xlogy(2 * h, c) + xlogy(2 * (n - h), s))
    second = np.exp(log_binom + xlogy(2 * h, s) + xlogy(2 * (n - h), c))
    # signed cos/sin keep the interference sign right for theta2 outside [0, pi]
    cs = np.cos(thetas[:, 1] / 2) * np.sin(thetas[:, 1] / 2)
    cross = np.exp(log_binom + xlogy(n, np.abs(cs))[:, None]) * np.sign(cs)[:, None] ** n
    cross = cross * ((-1.0) ** (n - h)) * np.cos(n * thetas[:, 0])[:, None]
    return _normalize(0.5 * (first + second) + cross)


# datasets


@dataclass
class Dataset:
    """Records of one protocol run; per-record arrays rather than objects."""

    n: int
    protocol: str
    seed: int
    thetas: np.ndarray | None = None
    outcomes: np.ndarray | None = None
    irreps: np.ndarray | None = None
    bits: np.ndarray | None = None
    cliffords: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")

    @property
    def size(self) -> int:
        if self.protocol == "lc":
            return len(self.bits)
        return len(self.outcomes)

    def __len__(self) -> int:
        return self.size

    def records(self) -> Iterator[MeasurementRecord]:
        if self.protocol != "symm-pi":
            raise ValueError("measurement records exist only for the symm-pi protocol")
        for t, h in zip(self.thetas, self.outcomes):
            yield MeasurementRecord(EulerAngles(*map(float, t)), int(h))


def _inverse_cdf(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p, axis=1)
    idx = (cdf < (u * cdf[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def _symm_uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    return np.array([record_rng(seed, s, STREAM_SYMM).random(4) for s in range(start, stop)])


def draw_dataset(state, S: int, seed: int, n: int | None = None, path: str | None = None,
                 chunk: int = 4096) -> Dataset:
    """S symm-PI records; record s uses only the stream keyed by (seed, s)."""
    if S < 1:
        raise ValueError("S must be at least 1")
    if n is None:
        n = state.n
    if path is None:
        path = "pauli" if n <= 12 else "schur"
    use_fast = isinstance(state, GhzState)
    vec = None if use_fast else state_vector(state, n, path)
    thetas = np.empty((S, 3))
    outcomes = np.empty(S, dtype=np.int64)
    for start in range(0, S, chunk):
        stop = min(S, start + chunk)
        u = _symm_uniforms(seed, start, stop)
        t = _angles_from_uniforms(u[:, :3])
        p = ghz_distributions_fast(n, t) if use_fast else _normalize(projector_overlaps(vec, t))
        thetas[start:stop] = t
        outcomes[start:stop] = _inverse_cdf(p, u[:, 3])
    return Dataset(n, "symm-pi", int(seed), thetas=thetas, outcomes=outcomes,
                   meta={"state": describe_state(state)})


def describe_state(state) -> str:
    if isinstance(state, GhzState):
        return "ghz"
    return "pivector"


def _float(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(ds: Dataset, path) -> None:
    header = {"format": "pishadows-dataset", "version": FORMAT_VERSION, "n": ds.n,
              "protocol": ds.protocol, "seed": ds.seed, "S": ds.size}
    header.update({k: v for k, v in ds.meta.items() if k not in header})
    lines = [json.dumps(header, sort_keys=True)]
    if ds.protocol == "symm-pi":
        for t, h in zip(ds.thetas, ds.outcomes):
            lines.append('{"theta":[%s,%s,%s],"h":%d}' % (_float(t[0]), _float(t[1]), _float(t[2]), h))
    elif ds.protocol == "block":
        for lam, j in zip(ds.irreps, ds.outcomes):
            lines.append('{"lambda":[%d,%d],"j":%d}' % (lam[0], lam[1], j))
    else:
        for b, c in zip(ds.bits, ds.cliffords):
            lines.append('{"bits":"%s","cliffords":[%s]}' % ("".join(map(str, b)), ",".join(map(str, c))))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "pishadows-dataset" or header.get("version") != FORMAT_VERSION:
            raise ValueError("not a dataset file of a supported version")
        rows = [json.loads(line) for line in fh if line.strip()]
    if len(rows) != header["S"]:
        raise ValueError("record count does not match the header")
    meta = {k: v for k, v in header.items() if k not in ("format", "version", "n", "protocol", "seed", "S")}
    n, protocol, seed = header["n"], header["protocol"], header["seed"]
    if protocol == "symm-pi":
        return Dataset(n, protocol, seed, thetas=np.array([r["theta"] for r in rows], dtype=float).reshape(-1, 3),
                       outcomes=np.array([r["h"] for r in rows], dtype=np.int64), meta=meta)
    if protocol == "block":
        return Dataset(n, protocol, seed, irreps=np.array([r["lambda"] for r in rows], dtype=np.int64).reshape(-1, 2),
                       outcomes=np.array([r["j"] for r in rows], dtype=np.int64), meta=meta)
    bits = np.array([[int(c) for c in r["bits"]] for r in rows], dtype=np.int8).reshape(-1, n)
    cliffords = np.array([r["cliffords"] for r in rows], dtype=np.int64).reshape(-1, n)
    return Dataset(n, protocol, seed, bits=bits, cliffords=cliffords, meta=meta)


# block-CS


def haar_unitary(rng: np.random.Generator, m: int) -> np.ndarray:
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def irrep_probabilities(state_schur: PIVector) -> np.ndarray:
    """p(lambda) = d_lambda Tr[rho_lambda] in the layout's irrep order."""
    layout = schur_layout(state_schur.n)
    probs = []
    for pos, lam in enumerate(layout.irreps):
        block = layout.block(state_schur.coeffs, pos)
        probs.append(math.sqrt(lam.dim) * float(np.real(np.trace(block))))
    p = np.array(probs)
    return _normalize(p[None, :])[0]


def _multiplicity_block(vec: PIVector, pos: int) -> np.ndarray:
    """Operator on the multiplicity register of irrep ``pos`` (coefficients / sqrt(d))."""
    layout = schur_layout(vec.n)
    return layout.block(vec.coeffs.astype(complex), pos) / math.sqrt(layout.irreps[pos].dim)


def _block_stream(seed: int, index: int):
    rng = record_rng(seed, index, STREAM_BLOCK)
    return rng, rng.random()


def draw_block_dataset(state, S: int, seed: int, n: int | None = None) -> Dataset:
    """Block-CS records (irrep, multiplicity outcome j)."""
    if S < 1:
        raise ValueError("S must be at least 1")
    n = state.n if n is None else n
    vec = state_vector(state, n, "schur")
    layout = schur_layout(n)
    p_irrep = irrep_probabilities(vec)
    rho_blocks = []
    for pos in range(len(layout.irreps)):
        blk = _multiplicity_block(vec, pos)
        tr = np.real(np.trace(blk))
        rho_blocks.append(blk / tr if tr > 0 else blk)
    irreps = np.empty((S, 2), dtype=np.int64)
    outcomes = np.empty(S, dtype=np.int64)
    for s in range(S):
        rng, u = _block_stream(seed, s)
        pos = int(_inverse_cdf(p_irrep[None, :], np.array([u]))[0])
        U = haar_unitary(rng, rho_blocks[pos].shape[0])
        probs = np.real(np.einsum("ji,ik,jk->j", U, rho_blocks[pos], U.conj()))
        j = int(_inverse_cdf(_normalize(probs[None, :]), np.array([rng.random()]))[0])
        lam = layout.irreps[pos]
        irreps[s] = (lam.first_row, lam.second_row)
        outcomes[s] = j
    return Dataset(n, "block", int(seed), irreps=irreps, outcomes=outcomes,
                   meta={"state": describe_state(state)})


def block_cs_estimates(ds: Dataset, obs: PIVector) -> np.ndarray:
    """Single-shot estimates (m+1) <j|U O_lam U^dag|j> - Tr O_lam for a block dataset.

    The unitaries are regenerated from the keyed streams: the stream layout
    is one uniform for the irrep draw, then the Gaussian matrix of size m.
    """
    if ds.protocol != "block":
        raise ValueError("not a block-CS dataset")
    n = ds.n
    layout = schur_layout(n)
    obs = state_vector(obs, n, "schur")
    obs_blocks = {}
    out = np.empty(ds.size)
    for s in range(ds.size):
        lam = repcomb.IrrepLabel(*map(int, ds.irreps[s]))
        pos = layout.position(lam)
        if pos not in obs_blocks:
            obs_blocks[pos] = _multiplicity_block(obs, pos)
        blk = obs_blocks[pos]
        m = blk.shape[0]
        rng, _ = _block_stream(ds.seed, s)
        U = haar_unitary(rng, m)
        j = ds.outcomes[s]
        out[s] = (m + 1) * np.real(U[j] @ blk @ U[j].conj()) - np.real(np.trace(blk))
    return out


def simulate_block_cs(state, S: int, seed: int, observables: Sequence[PIVector], n: int | None = None):
    """Run block-CS and return (dataset, list of single-shot estimate arrays)."""
    n = state.n if n is None else n
    ds = draw_block_dataset(state, S, seed, n)
    return ds, [block_cs_estimates(ds, o) for o in observables]


# local-Clifford baseline


@lru_cache(maxsize=None)
def single_qubit_cliffords() -> np.ndarray:
    """The 24 single-qubit Cliffords modulo phase, in a fixed BFS order from H and S."""
    H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    Sg = np.array([[1, 0], [0, 1j]], dtype=complex)

    def canonical(u):
        flat = u.ravel()
        k = np.flatnonzero(np.abs(flat) > 1e-9)[0]
        v = u * (abs(flat[k]) / flat[k])
        return tuple(np.round(v.ravel(), 9))

    found = [np.eye(2, dtype=complex)]
    seen = {canonical(found[0])}
    i = 0
    while i < len(found):
        for g in (H, Sg):
            u = g @ found[i]
            key = canonical(u)
            if key not in seen:
                seen.add(key)
                found.append(u)
        i += 1
    out = np.array(found)
    out.flags.writeable = False
    return out


def _lc_snapshots(state_vec: np.ndarray, n: int, seed: int, S: int, chunk: int = 2048):
    """Yield (bits, clifford indices, per-qubit snapshot matrices) in chunks."""
    cliffs = single_qubit_cliffords()
    psi0 = state_vec.reshape((1,) + (2,) * n)
    for start in range(0, S, chunk):
        stop = min(S, start + chunk)
        rngs = [record_rng(seed, s, STREAM_LC) for s in range(start, stop)]
        draws = [(r.integers(0, 24, size=n), r.random()) for r in rngs]
        cidx = np.array([d[0] for d in draws])
        u = np.array([d[1] for d in draws])
        B = stop - start
        psi = np.broadcast_to(psi0, (B,) + (2,) * n).astype(complex)
        for q in range(n):
            U = cliffs[cidx[:, q]]
            shaped = psi.reshape(B, 2 ** q, 2, 2 ** (n - q - 1))
            psi = np.einsum("bij,bkjl->bkil", U, shaped).reshape((B,) + (2,) * n)
        probs = np.abs(psi.reshape(B, -1)) ** 2
        idx = _inverse_cdf(probs, u)
        bits = ((idx[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.int8)
        yield bits, cidx, lc_snapshot_factors(bits, cidx)


def lc_snapshot_factors(bits: np.ndarray, cidx: np.ndarray) -> np.ndarray:
    """Per-qubit inverted snapshots 3 U^dag|b><b|U - I, shape (S, n, 2, 2)."""
    cliffs = single_qubit_cliffords()
    rows = cliffs[cidx, bits, :]  # <b|U as a row vector
    snap = 3 * np.einsum("snx,sny->snxy", rows.conj(), rows)
    return snap - np.eye(2)[None, None]


def lc_observable_values(snapshots: np.ndarray, obs) -> np.ndarray:
    """Tr[O sigma_1 (x) ... (x) sigma_n] for the supported observable specs."""
    from .pibasis import PAULI_MATRICES

    S, n = snapshots.shape[:2]
    if isinstance(obs, PauliString):
        vals = np.ones(S, dtype=complex)
        for q, c in enumerate(obs.text):
            vals *= np.einsum("xy,syx->s", PAULI_MATRICES[c], snapshots[:, q])
        return np.real(vals)
    if isinstance(obs, AxisString):
        per = np.real(np.einsum("xy,snyx->sn", PAULI_MATRICES[obs.axis], snapshots))
        # elementary symmetric polynomial e_k, averaged over the C(n,k) placements
        e = np.zeros((S, obs.weight + 1))
        e[:, 0] = 1
        for q in range(n):
            e[:, 1:] = e[:, 1:] + per[:, q:q + 1] * e[:, :-1]
        return e[:, obs.weight] / math.comb(n, obs.weight)
    if isinstance(obs, HammingProjector):
        poly = np.zeros((S, n + 1), dtype=complex)
        poly[:, 0] = 1
        for q in range(n):
            zero, one = snapshots[:, q, 0, 0], snapshots[:, q, 1, 1]
            shifted = np.zeros_like(poly)
            shifted[:, 1:] = poly[:, :-1]
            poly = poly * one[:, None] + shifted * zero[:, None]
        return np.real(poly[:, obs.h])
    if isinstance(obs, GhzProjector):
        terms = [np.prod(snapshots[:, :, a, b], axis=1) for a, b in ((0, 0), (1, 1), (0, 1), (1, 0))]
        return np.real(sum(terms)) / 2
    raise TypeError(f"LC evaluation does not support {observable_label(obs)}")


def simulate_lc_baseline(state_dense: np.ndarray, observables: Sequence, S: int, seed: int):
    """Local-Clifford classical shadows on a dense pure state.

    Returns (dataset, list of single-shot estimate arrays, one per observable).
    """
    psi = np.asarray(state_dense, dtype=complex)
    if psi.ndim != 1:
        raise ValueError("the LC baseline takes a pure state vector")
    n = int(round(math.log2(psi.size)))
    if 2 ** n != psi.size:
        raise ValueError("state length is not a power of two")
    if n > LC_CAP:
        raise ValueError(f"the LC baseline is capped at n={LC_CAP}")
    psi = psi / np.linalg.norm(psi)
    bits_all, cl_all = [], []
    values = [[] for _ in observables]
    for bits, cidx, snaps in _lc_snapshots(psi, n, seed, S):
        bits_all.append(bits)
        cl_all.append(cidx)
        for i, o in enumerate(observables):
            values[i].append(lc_observable_values(snaps, o))
    ds = Dataset(n, "lc", int(seed), bits=np.concatenate(bits_all), cliffords=np.concatenate(cl_all))
    return ds, [np.concatenate(v) for v in values]


def lc_estimates(ds: Dataset, obs) -> np.ndarray:
    if ds.protocol != "lc":
        raise ValueError("not an LC dataset")
    return lc_observable_values(lc_snapshot_factors(ds.bits, ds.cliffords), obs)


def ghz_statevector(n: int) -> np.ndarray:
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = psi[-1] = 1 / math.sqrt(2)
    return psi
