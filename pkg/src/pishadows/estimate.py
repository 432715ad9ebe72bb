"""From datasets to estimates: single shots, aggregation and exact variances."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from . import channel as chan
from . import repcomb, sim
from .pibasis import (
    PIVector,
    _composition_array,
    _log_projector_prefactor,
    hamming_table,
    inner,
    observable_label,
    observable_to_pivector,
    projector_overlaps,
    schur_layout,
)

DEFAULT_BATCHES = 10
EXACT_CAP = 10
CSV_FIELDS = ("n", "protocol", "observable", "S", "estimate", "variance", "bound")


class EstimationError(ValueError):
    pass


@dataclass
class EstimateReport:
    observable: str
    n: int
    protocol: str
    shots: int
    estimate: float
    method: str
    batches: int
    empirical_variance: float
    standard_error: float
    exact_variance: float | None = None
    bounds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> dict:
        bound = min(self.bounds.values()) if self.bounds else ""
        return {"n": self.n, "protocol": self.protocol, "observable": self.observable, "S": self.shots,
                "estimate": _fmt(self.estimate), "variance": _fmt(self.empirical_variance),
                "bound": _fmt(bound) if bound != "" else ""}


def _fmt(x) -> str:
    return format(float(x), ".17g")


def reports_to_csv(reports: Sequence[EstimateReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


# single-shot values


def _as_vector(obs, n: int, basis: str) -> PIVector:
    if isinstance(obs, PIVector):
        if obs.n != n:
            raise EstimationError("observable size does not match the data")
        if obs.basis != basis:
            raise EstimationError(f"observable is in the {obs.basis} basis, channel in {basis}")
        return obs
    return observable_to_pivector(obs, n, basis)


def dual_vector(obs, ch: chan.ChannelMatrix) -> PIVector:
    """x = C^{-1} O, the vector every snapshot is contracted with."""
    return chan.solve(ch, _as_vector(obs, ch.n, ch.basis))


def single_shot(record: sim.MeasurementRecord, obs_vec: PIVector, ch: chan.ChannelMatrix,
                dual: PIVector | None = None) -> float:
    """<rotated projector(theta, h), C^{-1} O> for one record."""
    if obs_vec.basis != ch.basis:
        raise EstimationError("observable and channel bases differ")
    x = dual if dual is not None else dual_vector(obs_vec, ch)
    theta = np.array([[record.theta.theta1, record.theta.theta2, record.theta.theta3]])
    return float(projector_overlaps(x, theta, np.array([record.h]))[0])


def shot_values(ds: sim.Dataset, obs, ch: chan.ChannelMatrix | None = None) -> np.ndarray:
    """Single-shot estimates of one observable over a whole dataset."""
    if ds.size == 0:
        raise EstimationError("empty dataset")
    if ds.protocol == "symm-pi":
        if ch is None:
            raise EstimationError("symm-pi estimation needs a channel")
        if ch.n != ds.n:
            raise EstimationError(f"channel has n={ch.n}, dataset n={ds.n}")
        x = dual_vector(obs, ch)
        return projector_overlaps(x, ds.thetas, ds.outcomes)
    if ds.protocol == "block":
        return sim.block_cs_estimates(ds, _as_vector(obs, ds.n, "schur"))
    return sim.lc_estimates(ds, obs)


# aggregation


def mean_estimate(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EstimationError("empty sample")
    return float(np.sum(values) / values.size)


def median_of_means(values: np.ndarray, K: int = DEFAULT_BATCHES) -> float:
    """Median of K equal batch means; trailing shots that do not fill a batch are dropped."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EstimationError("empty sample")
    if K < 1:
        raise EstimationError("K must be positive")
    K = min(K, values.size)
    size = values.size // K
    batches = values[:K * size].reshape(K, size)
    return float(np.median(batches.sum(axis=1) / size))


def sample_variance(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise EstimationError("variance needs at least two shots")
    return float(np.var(values, ddof=1))


def _label(obs) -> str:
    return "pivector" if isinstance(obs, PIVector) else observable_label(obs)


def _report(values, ds, obs, method, K, exact=None, bounds=None) -> EstimateReport:
    var = sample_variance(values) if len(values) > 1 else 0.0
    est = mean_estimate(values) if method == "mean" else median_of_means(values, K)
    return EstimateReport(_label(obs), ds.n, ds.protocol, int(len(values)), est, method,
                          1 if method == "mean" else int(min(K, len(values))), var,
                          math.sqrt(var / len(values)), exact, dict(bounds or {}))


def estimate_mean(ds: sim.Dataset, obs, ch: chan.ChannelMatrix | None = None, **extra) -> EstimateReport:
    return _report(shot_values(ds, obs, ch), ds, obs, "mean", 1, **extra)


def estimate_median_of_means(ds: sim.Dataset, obs, ch: chan.ChannelMatrix | None = None,
                             K: int = DEFAULT_BATCHES, **extra) -> EstimateReport:
    return _report(shot_values(ds, obs, ch), ds, obs, "mom", K, **extra)


def empirical_variance(ds: sim.Dataset, obs, ch: chan.ChannelMatrix | None = None) -> float:
    return sample_variance(shot_values(ds, obs, ch))


# exact variance from the triple weights


def _log_sphere_moments(K: np.ndarray) -> np.ndarray:
    """log E[x^a y^b z^c] on the unit sphere for even exponents (-inf where any is odd)."""
    K = np.asarray(K)
    M = K.sum(axis=-1)
    out = (math.log(2.0) + gammaln(M / 2 + 2) - gammaln(M + 3)
           + (gammaln(K + 1) - gammaln(K / 2 + 1)).sum(axis=-1))
    return np.where(np.all(K % 2 == 0, axis=-1), out, -np.inf)


def _pauli_parity_classes(comps: np.ndarray) -> dict:
    keys = (comps[:, 0] % 2) * 4 + (comps[:, 1] % 2) * 2 + (comps[:, 2] % 2)
    return {p: np.flatnonzero(keys == p) for p in range(8)}


def exact_second_moment(x: PIVector, y: PIVector, state: PIVector, cap: int = EXACT_CAP) -> float:
    """E[<S, x> <S, y>] under the symm-PI outcome distribution of ``state``.

    The snapshot S has Pauli coefficients pref_k a(h, m_k) z^k, so the
    average over outcomes and rotations factorizes into the hamming triple
    sums A3(m, m', m'') and sphere moments of z^{k + k' + k''}. Only triples
    whose combined x, y, z counts are all even contribute; they are visited
    by parity class.
    """
    n = state.n
    if n > cap:
        raise EstimationError(f"exact variance is capped at n={cap}")
    for v in (x, y, state):
        if v.basis != "pauli" or v.n != n:
            raise EstimationError("exact variance works on Pauli-basis vectors of equal n")
    comps = _composition_array(n)
    logpref = _log_projector_prefactor(n)
    a = hamming_table(n)
    a3 = np.einsum("hi,hj,hk->ijk", a, a, a)
    m = n - comps[:, 3]
    classes = _pauli_parity_classes(comps)
    rho, xc, yc = (np.real(v.coeffs) for v in (state, x, y))
    total = 0.0
    for p0, idx0 in classes.items():
        idx0 = idx0[rho[idx0] != 0]
        if idx0.size == 0:
            continue
        for p1, idx1 in classes.items():
            idx2 = classes[p0 ^ p1]
            if idx1.size == 0 or idx2.size == 0:
                continue
            K = comps[idx1, None, :3][None] + comps[idx2, :3][None, None] + comps[idx0, None, None, :3]
            logw = _log_sphere_moments(K) + logpref[idx0, None, None] + logpref[idx1][None, :, None] \
                + logpref[idx2][None, None, :]
            w = np.exp(logw) * a3[m[idx0][:, None, None], m[idx1][None, :, None], m[idx2][None, None, :]]
            total += float(np.einsum("abc,a,b,c->", w, rho[idx0], xc[idx1], yc[idx2]))
    return total


def _resolve(obs, state, n, ch, basis):
    if ch is None:
        ch = chan.build_channel_pauli(n) if basis == "pauli" else chan.build_channel_schur(n)
    obs_vec = _as_vector(obs, n, ch.basis)
    state_vec = sim.state_vector(state, n, ch.basis)
    return obs_vec, state_vec, ch


def exact_variance(obs, state, n: int | None = None, ch: chan.ChannelMatrix | None = None,
                   cap: int = EXACT_CAP) -> float:
    """Single-shot symm-PI variance from the closed-form triple weights."""
    n = state.n if n is None else n
    if n > cap:
        raise EstimationError(f"exact variance is capped at n={cap}")
    obs_vec, state_vec, ch = _resolve(obs, state, n, ch, "pauli")
    x = chan.solve(ch, obs_vec)
    o = inner(obs_vec, state_vec)
    return exact_second_moment(x, x, state_vec, cap) - o * o


def exact_covariance(obs_a, obs_b, state, n: int | None = None, ch=None, cap: int = EXACT_CAP) -> float:
    n = state.n if n is None else n
    a, state_vec, ch = _resolve(obs_a, state, n, ch, "pauli")
    b = _as_vector(obs_b, n, ch.basis)
    xa, xb = chan.solve(ch, a), chan.solve(ch, b)
    return exact_second_moment(xa, xb, state_vec, cap) - inner(a, state_vec) * inner(b, state_vec)


# exact variance by quadrature (any n)


def _polar_rule(n: int, nodes: int | None):
    # the rotation-averaged integrand is a polynomial of degree <= 3n in cos(theta2)
    nodes = nodes or (3 * n + 2) // 2 + 2
    x, w = np.polynomial.legendre.leggauss(nodes)
    return np.arccos(x), w / 2


def _schur_components(vec: PIVector, theta2: np.ndarray) -> dict:
    """Fourier components of <S(theta, h), vec> in theta1.

    <S, vec> = sum_D exp(-i theta1 D) g_D(theta2, h); returns {D: g_D}
    with g_D of shape (len(theta2), n+1).
    """
    n = vec.n
    layout = schur_layout(n)
    coeffs = vec.coeffs.astype(complex)
    out: dict = {}
    for pos, lam in enumerate(layout.irreps):
        block = layout.block(coeffs, pos)
        if not np.any(block):
            continue
        ts = lam.two_s
        eigvals, eigvecs = repcomb._jy_eigensystem(ts)
        phases = np.exp(-1j * np.outer(eigvals, theta2))
        d = np.real(np.einsum("ae,en,be->abn", eigvecs, phases, eigvecs.conj()))
        h_of_col = (ts - 2 * np.arange(ts + 1) + n) // 2
        mdim = ts + 1
        for delta in range(-ts, ts + 1):
            diag = np.diagonal(block, offset=-delta)
            if not np.any(diag):
                continue
            i = np.arange(max(0, delta), mdim + min(0, delta))
            vals = np.einsum("i,icn,icn->nc", diag, d[i], d[i - delta]) * math.sqrt(lam.dim)
            g = out.setdefault(delta, np.zeros((len(theta2), n + 1), dtype=complex))
            g[:, h_of_col] += vals
    return out


def exact_second_moment_quadrature(x: PIVector, y: PIVector, state: PIVector,
                                   polar_nodes: int | None = None) -> float:
    """E[<S, x><S, y>] by exact quadrature over the rotation group."""
    n = state.n
    theta2, w2 = _polar_rule(n, polar_nodes)
    if state.basis == "schur":
        comps = [_schur_components(v, theta2) for v in (state, x, y)]
        total = 0.0 + 0.0j
        for d0, g0 in comps[0].items():
            for d1, g1 in comps[1].items():
                g2 = comps[2].get(-d0 - d1)
                if g2 is not None:
                    total += np.einsum("n,nh,nh,nh->", w2, g0, g1, g2)
        return float(total.real)
    n1 = 3 * n + 1
    theta1 = 2 * np.pi * np.arange(n1) / n1
    t1, t2 = np.meshgrid(theta1, theta2, indexing="ij")
    thetas = np.stack([t1.ravel(), t2.ravel(), np.zeros(t1.size)], axis=1)
    weights = np.outer(np.full(n1, 1.0 / n1), w2).ravel()
    p, ox, oy = (projector_overlaps(v, thetas) for v in (state, x, y))
    return float(np.einsum("s,sh,sh,sh->", weights, p, ox, oy))


def exact_variance_quadrature(obs, state, n: int | None = None, ch: chan.ChannelMatrix | None = None,
                              basis: str = "schur") -> float:
    """Single-shot symm-PI variance at any n, by exact Euler-angle quadrature."""
    n = state.n if n is None else n
    obs_vec, state_vec, ch = _resolve(obs, state, n, ch, basis)
    x = chan.solve(ch, obs_vec)
    o = inner(obs_vec, state_vec)
    return exact_second_moment_quadrature(x, x, state_vec) - o * o


def exact_mean_quadrature(obs, state, n: int | None = None, ch=None, basis: str = "pauli") -> float:
    """E[<S, C^{-1} O>], which equals Tr[O rho] when the channel inverts exactly."""
    n = state.n if n is None else n
    obs_vec, state_vec, ch = _resolve(obs, state, n, ch, basis)
    return _first_moment(chan.solve(ch, obs_vec), state_vec)


def _first_moment(x: PIVector, state: PIVector) -> float:
    n = state.n
    theta2, w2 = _polar_rule(n, None)
    n1 = 2 * n + 1
    theta1 = 2 * np.pi * np.arange(n1) / n1
    t1, t2 = np.meshgrid(theta1, theta2, indexing="ij")
    thetas = np.stack([t1.ravel(), t2.ravel(), np.zeros(t1.size)], axis=1)
    weights = np.outer(np.full(n1, 1.0 / n1), w2).ravel()
    p, ox = projector_overlaps(state, thetas), projector_overlaps(x, thetas)
    return float(np.einsum("s,sh,sh->", weights, p, ox))


# scaling fits


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2_loglog: float
    exp_rate: float
    r2_semilog: float
    exponential: bool
    nonincreasing: bool
    nondecreasing: bool


def _linfit(x, y):
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def scaling_fit(points) -> ScalingFit:
    """Least-squares slope of log Var against log n, with an exponential-law check."""
    pts = sorted((float(n), float(v)) for n, v in points)
    if len(pts) < 4:
        raise EstimationError("a scaling fit needs at least 4 points")
    ns = np.array([p[0] for p in pts])
    vs = np.array([p[1] for p in pts])
    if np.any(vs <= 0) or np.any(ns <= 0):
        raise EstimationError("scaling fit needs positive n and variances")
    slope, intercept, r2_ll = _linfit(np.log(ns), np.log(vs))
    rate, _, r2_sl = _linfit(ns, np.log(vs))
    diffs = np.diff(vs)
    return ScalingFit(slope, intercept, r2_ll, rate, r2_sl, bool(r2_sl > r2_ll),
                      bool(np.all(diffs <= 0)), bool(np.all(diffs >= 0)))


# analytic bounds attached to reports


def operator_norm(vec: PIVector) -> float:
    """Largest singular value of a PI operator, via its Schur blocks."""
    if vec.basis == "pauli":
        from .pibasis import pauli_to_schur

        vec = pauli_to_schur(vec)
    layout = schur_layout(vec.n)
    best = 0.0
    for pos, lam in enumerate(layout.irreps):
        block = layout.block(vec.coeffs.astype(complex), pos)
        if np.any(block):
            best = max(best, float(np.linalg.norm(block, 2)) / math.sqrt(lam.dim))
    return best


def _locality(spec, n: int) -> int:
    from .pibasis import AxisString, PauliString

    if isinstance(spec, PauliString):
        return sum(c != "I" for c in spec.text)
    if isinstance(spec, AxisString):
        return spec.weight
    return n


def applicable_bounds(spec, vec: PIVector, protocol: str) -> dict:
    """Closed-form variance bounds that apply to this observable and protocol."""
    n = vec.n
    if isinstance(spec, PIVector) or getattr(spec, "vector", None) is not None:
        op = operator_norm(vec) if n <= 10 or vec.basis == "schur" else None
    else:
        op = 1.0
    if protocol == "symm-pi":
        return {"symm-pi": chan.variance_bound("symm-pi", n=n, hs_norm=vec.norm())}
    if op is None:
        return {}
    if protocol == "block":
        return {"block-rp": chan.variance_bound("block-rp", m=n + 1, op_norm=op)}
    return {"lc": chan.variance_bound("lc", loc=_locality(spec, n), op_norm=op)}
