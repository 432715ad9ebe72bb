import csv
import io
import json
import math

import numpy as np
import pytest

from pishadows import channel as chan
from pishadows import estimate as est
from pishadows import oracle, pibasis, sim
from pishadows.pibasis import AxisString, EulerAngles, GhzProjector, PauliString, PIVector

# exact single-shot variances at n = 4 for GHZ, from dense snapshots integrated on an exact Euler rule
ORACLE_VAR_ZN_4 = 6.334706925727339
ORACLE_VAR_GHZ_4 = 1.2651866500846096


def _zero_state():
    # |0><0| = (I + Z)/2 has coefficient 1/sqrt(2) on both single-qubit basis elements
    coeffs = np.zeros(4)
    coeffs[pibasis.repcomb.composition_index((0, 0, 0, 1), 1)] = 1 / math.sqrt(2)
    coeffs[pibasis.repcomb.composition_index((0, 0, 1, 0), 1)] = 1 / math.sqrt(2)
    return PIVector("pauli", 1, coeffs)


def _quadrature_mean(x, state, n, polar=None, azimuth=None):
    """E over an exact Euler rule of sum_h p(h) <snapshot, x>, independent of the estimator module."""
    thetas, weights = oracle.euler_quadrature(polar or 2 * n + 2, azimuth or 2 * n + 2)
    p = pibasis.projector_overlaps(state, thetas)
    return float(weights @ np.sum(p * pibasis.projector_overlaps(x, thetas), axis=1))


def test_single_qubit_single_shot():
    ch = chan.build_channel_pauli(1)
    z = pibasis.observable_to_pivector(PauliString("Z"), 1, "pauli")
    record = sim.MeasurementRecord(EulerAngles(0.0, 0.0, 0.0), 1)
    assert est.single_shot(record, z, ch) == pytest.approx(3.0, abs=1e-12)
    other = sim.MeasurementRecord(EulerAngles(0.0, 0.0, 0.0), 0)
    assert est.single_shot(other, z, ch) == pytest.approx(-3.0, abs=1e-12)


@pytest.mark.parametrize("basis", ["pauli", "schur"])
def test_identity_gives_one_on_every_record(basis):
    n = 5
    ch = chan.build_channel_pauli(n) if basis == "pauli" else chan.build_channel_schur(n)
    ds = sim.draw_dataset(sim.GhzState(n), 200, seed=3)
    vals = est.shot_values(ds, AxisString("Z", 0), ch)
    assert np.allclose(vals, 1.0, atol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_mean_over_exact_distribution_is_expectation(n):
    ch = chan.build_channel_pauli(n)
    state = _zero_state() if n == 1 else pibasis.ghz_state(n, "pauli")
    for spec in (AxisString("Z", n), AxisString("X", 1), pibasis.HammingProjector(0)):
        obs = pibasis.observable_to_pivector(spec, n, "pauli")
        x = est.dual_vector(obs, ch)
        assert _quadrature_mean(x, state, n) == pytest.approx(pibasis.inner(obs, state), abs=1e-6)


def test_aggregators_on_constant_stream():
    vals = np.full(1000, 2.5)
    assert est.mean_estimate(vals) == 2.5
    assert est.median_of_means(vals, 10) == 2.5
    assert est.sample_variance(vals) == 0.0


def test_median_of_means_truncates():
    vals = np.arange(23, dtype=float)
    # 5 batches of 4; the last 3 values are dropped
    assert est.median_of_means(vals, 5) == pytest.approx(np.median(vals[:20].reshape(5, 4).mean(axis=1)))
    with pytest.raises(est.EstimationError):
        est.median_of_means(np.array([]), 3)
    with pytest.raises(est.EstimationError):
        est.sample_variance(np.array([1.0]))


def test_median_of_means_is_robust_on_heavy_tails():
    rng = np.random.default_rng(17)
    wins = 0
    for _ in range(100):
        vals = rng.standard_t(1.5, size=2000)
        wins += abs(est.median_of_means(vals, 10)) < abs(est.mean_estimate(vals))
    assert wins >= 60


def test_ghz_parity_estimate():
    n = 10
    ch = chan.build_channel_pauli(n)
    ds = sim.draw_dataset(sim.GhzState(n), 100_000, seed=11)
    rep = est.estimate_mean(ds, AxisString("Z", n), ch)
    assert abs(rep.estimate - 1.0) < 5 * rep.standard_error
    mom = est.estimate_median_of_means(ds, AxisString("Z", n), ch, K=10)
    assert mom.batches == 10 and mom.shots == 100_000
    assert abs(mom.estimate - 1.0) < 5 * math.sqrt(10) * rep.standard_error


def test_empirical_variance_single_qubit():
    ch = chan.build_channel_pauli(1)
    ds = sim.draw_dataset(_zero_state(), 100_000, seed=21, n=1)
    vals = est.shot_values(ds, PauliString("Z"), ch)
    var = est.empirical_variance(ds, PauliString("Z"), ch)
    se = math.sqrt(np.mean((vals - vals.mean()) ** 4) / vals.size)
    assert abs(var - 2.0) < 5 * se


def test_exact_variance_closed_cases():
    assert est.exact_variance(PauliString("Z"), _zero_state(), 1) == pytest.approx(2.0, abs=1e-9)
    for n in (2, 4, 7):
        assert abs(est.exact_variance(AxisString("Z", 0), sim.GhzState(n), n)) < 1e-9


def test_exact_variance_matches_dense_oracle():
    state = sim.GhzState(4)
    assert est.exact_variance(AxisString("Z", 4), state, 4) == pytest.approx(ORACLE_VAR_ZN_4, abs=1e-9)
    ghz = est.exact_variance(GhzProjector(), state, 4)
    assert ghz == pytest.approx(ORACLE_VAR_GHZ_4, abs=1e-9)
    assert ghz <= 9


@pytest.mark.parametrize("n", [3, 6, 9])
def test_quadrature_matches_triple_sum(n):
    state = sim.GhzState(n)
    pauli = chan.build_channel_pauli(n)
    schur = chan.build_channel_schur(n)
    for spec in (AxisString("Z", n), AxisString("Z", 2), GhzProjector(), AxisString("X", 1)):
        triple = est.exact_variance(spec, state, n, pauli)
        assert triple >= -1e-9
        assert est.exact_variance_quadrature(spec, state, n, schur) == pytest.approx(triple, abs=1e-9, rel=1e-9)
        assert est.exact_variance_quadrature(spec, state, n, pauli, basis="pauli") == pytest.approx(
            triple, abs=1e-9, rel=1e-9)


def test_variance_shift_invariance():
    n = 4
    state = pibasis.ghz_state(n, "pauli")
    ch = chan.build_channel_pauli(n)
    obs = pibasis.observable_to_pivector(GhzProjector(), n, "pauli")
    ident = pibasis.observable_to_pivector(AxisString("Z", 0), n, "pauli")
    base = est.exact_variance(obs, state, n, ch)
    shifted = est.exact_variance(obs + ident.scaled(2.5), state, n, ch)
    assert shifted == pytest.approx(base, abs=1e-8)


def test_exact_covariance_is_symmetric():
    n = 5
    state = sim.GhzState(n)
    a = est.exact_covariance(AxisString("Z", 2), GhzProjector(), state, n)
    b = est.exact_covariance(GhzProjector(), AxisString("Z", 2), state, n)
    assert a == pytest.approx(b, abs=1e-12)
    assert est.exact_covariance(GhzProjector(), GhzProjector(), state, n) == pytest.approx(
        est.exact_variance(GhzProjector(), state, n), abs=1e-12)


def test_exact_variance_cap():
    with pytest.raises(est.EstimationError):
        est.exact_variance(GhzProjector(), sim.GhzState(11), 11)


def test_exact_mean_quadrature_at_large_n():
    n = 40
    ch = chan.build_channel_schur(n, blocks=[-n, 0, n])
    assert est.exact_mean_quadrature(GhzProjector(), sim.GhzState(n), n, ch, basis="schur") == pytest.approx(
        1.0, abs=1e-9)


def test_scaling_fit_power_law():
    fit = est.scaling_fit([(n, 7 * n) for n in (4, 8, 16, 32)])
    assert fit.slope == pytest.approx(1.0, abs=1e-6)
    assert fit.nondecreasing and not fit.nonincreasing
    assert not fit.exponential


def test_scaling_fit_flags_exponential():
    fit = est.scaling_fit([(n, 3.0 ** n) for n in range(4, 11)])
    assert fit.exponential
    assert fit.exp_rate == pytest.approx(math.log(3), abs=1e-9)


def test_scaling_fit_errors():
    with pytest.raises(est.EstimationError):
        est.scaling_fit([(1, 1), (2, 2), (3, 3)])
    with pytest.raises(est.EstimationError):
        est.scaling_fit([(1, 1), (2, 2), (3, 0), (4, 4)])


def test_report_serialization():
    n = 4
    ch = chan.build_channel_pauli(n)
    ds = sim.draw_dataset(sim.GhzState(n), 1000, seed=0)
    vec = pibasis.observable_to_pivector(GhzProjector(), n, "pauli")
    rep = est.estimate_median_of_means(ds, GhzProjector(), ch, K=7,
                                       bounds=est.applicable_bounds(GhzProjector(), vec, "symm-pi"))
    doc = json.loads(rep.to_json())
    assert doc["observable"] == "ghz-proj" and doc["batches"] == 7 and doc["shots"] == 1000
    assert doc["bounds"]["symm-pi"] == pytest.approx(2 * n + 1)
    rows = list(csv.DictReader(io.StringIO(est.reports_to_csv([rep]))))
    assert list(rows[0]) == list(est.CSV_FIELDS)
    assert float(rows[0]["estimate"]) == rep.estimate
    assert float(rows[0]["variance"]) == rep.empirical_variance


def test_applicable_bounds():
    n = 6
    vec = pibasis.observable_to_pivector(AxisString("Z", 2), n, "schur")
    assert est.applicable_bounds(AxisString("Z", 2), vec, "lc") == {"lc": 16.0}
    assert est.applicable_bounds(AxisString("Z", 2), vec, "block") == {"block-rp": (n + 1) ** 2 + 1}
    assert est.operator_norm(pibasis.ghz_state(n, "schur")) == pytest.approx(1.0)
    assert est.operator_norm(vec) == pytest.approx(1.0)


def test_block_and_lc_dispatch():
    n = 4
    block = sim.draw_block_dataset(sim.GhzState(n), 300, seed=1)
    vals = est.shot_values(block, GhzProjector())
    assert vals.shape == (300,)
    _, (direct,) = sim.simulate_lc_baseline(sim.ghz_statevector(n), [GhzProjector()], 300, seed=1)
    lc, _ = sim.simulate_lc_baseline(sim.ghz_statevector(n), [], 300, seed=1)
    assert np.array_equal(est.shot_values(lc, GhzProjector()), direct)


def test_estimation_errors():
    n = 3
    ds = sim.draw_dataset(sim.GhzState(n), 10, seed=0)
    with pytest.raises(est.EstimationError):
        est.shot_values(ds, GhzProjector())
    with pytest.raises(est.EstimationError):
        est.shot_values(ds, GhzProjector(), chan.build_channel_pauli(4))
    with pytest.raises(est.EstimationError):
        est.single_shot(next(ds.records()), pibasis.ghz_state(n, "schur"), chan.build_channel_pauli(n))
