import math

import numpy as np
import pytest

from pishadows import channel as chan
from pishadows import oracle, pibasis, repcomb
from pishadows.pibasis import AxisString, GhzProjector, PIVector


def _unit(n, k):
    v = np.zeros(math.comb(n + 3, 3))
    v[repcomb.composition_index(k, n)] = 1.0
    return PIVector("pauli", n, v)


def test_single_qubit_entries():
    C = chan.build_channel_pauli(1).dense()
    ident = repcomb.composition_index((0, 0, 0, 1), 1)
    z = repcomb.composition_index((0, 0, 1, 0), 1)
    assert C[ident, ident] == pytest.approx(1.0, abs=1e-14)
    assert C[z, z] == pytest.approx(1 / 3, abs=1e-14)
    assert C[z, ident] == 0.0


def test_single_qubit_spectrum():
    vals = chan.spectrum(chan.build_channel_pauli(1))
    assert np.allclose(vals, [1 / 3, 1 / 3, 1 / 3, 1], atol=1e-14)


@pytest.mark.parametrize("n", [2, 10])
def test_min_eigenvalue(n):
    vals = chan.spectrum(chan.build_channel_pauli(n))
    assert vals[0] == pytest.approx(1 / (2 * n + 1), abs=1e-9)


@pytest.mark.parametrize("n", [1, 3, 5])
def test_pauli_matches_dense_oracle(n):
    assert np.allclose(chan.build_channel_pauli(n).dense(), oracle.dense_channel(n), atol=1e-10)


def test_pauli_symmetric_and_block_diagonal():
    n = 7
    ch = chan.build_channel_pauli(n)
    C = ch.dense()
    assert np.array_equal(C, C.T)
    assert len(ch.blocks) == 8
    comps = repcomb.enumerate_compositions(n)
    par = np.array([k.parity for k in comps])
    off = np.any(par[:, None, :] != par[None, :, :], axis=2)
    assert not np.any(C[off])


@pytest.mark.parametrize("n", [4, 12, 20])
def test_full_rank(n):
    C = chan.build_channel_pauli(n).dense()
    assert np.linalg.matrix_rank(C, tol=1e-12) == math.comb(n + 3, 3)


def test_pauli_cap():
    with pytest.raises(chan.ChannelError, match="Schur"):
        chan.build_channel_pauli(chan.PAULI_CAP + 1)


def test_schur_single_qubit_blocks():
    ch = chan.build_channel_schur(1)
    assert len(ch.blocks) == 3
    for key in (-1, 1):
        block = ch.blocks[key].matrix()
        assert block.shape == (1, 1)
        assert block[0, 0] == pytest.approx(1 / 3, abs=1e-14)


@pytest.mark.parametrize("n", [2, 5, 8])
def test_schur_spectrum_matches_pauli(n):
    a = chan.spectrum(chan.build_channel_pauli(n))
    b = chan.spectrum(chan.build_channel_schur(n))
    assert np.allclose(a, b, atol=1e-9)


def test_schur_matches_change_of_basis():
    n = 4
    U = pibasis.schur_change_of_basis(n)
    pauli = chan.build_channel_pauli(n).dense()
    schur = chan.build_channel_schur(n).dense()
    assert np.allclose(U @ pauli @ U.conj().T, schur, atol=1e-10)


def test_schur_block_sizes():
    assert len(chan.schur_block_indices(100, 0)) == 51 ** 2
    n = 9
    sizes = [len(chan.schur_block_indices(n, d)) for d in range(-n, n + 1)]
    assert sum(sizes) == math.comb(n + 3, 3)


def test_partial_schur_build_and_unbuilt_block():
    n = 30
    ch = chan.build_channel_schur(n, blocks=[0])
    assert not ch.complete
    zn = pibasis.observable_to_pivector(AxisString("Z", n), n, "schur")
    x = chan.solve(ch, zn)
    assert chan.round_trip_residual(ch, x) < 1e-9
    with pytest.raises(chan.UnbuiltBlock):
        chan.solve(ch, pibasis.ghz_state(n, "schur"))
    with pytest.raises(chan.ChannelError):
        chan.spectrum(ch)


def test_solve_examples():
    ch = chan.build_channel_pauli(1)
    z = _unit(1, (0, 0, 1, 0))
    assert np.allclose(chan.solve(ch, z).coeffs, 3 * z.coeffs)
    assert np.allclose(chan.apply(ch, z).coeffs, z.coeffs / 3)
    ident = _unit(1, (0, 0, 0, 1))
    assert np.allclose(chan.solve(ch, ident).coeffs, ident.coeffs)
    assert np.allclose(chan.apply(ch, ident).coeffs, ident.coeffs)


@pytest.mark.parametrize("n", [3, 12, 20])
def test_round_trip(n):
    ch = chan.build_channel_pauli(n)
    rng = np.random.default_rng(n)
    v = PIVector("pauli", n, rng.standard_normal(ch.size))
    assert np.allclose(chan.solve(ch, chan.apply(ch, v)).coeffs, v.coeffs, atol=1e-8, rtol=0)
    assert chan.round_trip_residual(ch, v) < 1e-9


def test_apply_keeps_hermitian_pattern():
    n = 5
    ch = chan.build_channel_schur(n)
    vec = pibasis.rotate_schur(pibasis.projector_schur_vector(1, n), (0.3, 1.2, 0.0))
    out = chan.apply(ch, vec)
    layout = pibasis.schur_layout(n)
    for pos in range(len(layout.irreps)):
        blk = layout.block(out.coeffs, pos)
        assert np.allclose(blk, blk.conj().T, atol=1e-13)


def test_basis_mismatch_rejected():
    ch = chan.build_channel_pauli(2)
    with pytest.raises(ValueError):
        chan.solve(ch, pibasis.ghz_state(2, "schur"))


@pytest.mark.parametrize("n", [6, 24])
def test_extreme_eigenvalues(n):
    ch = chan.build_channel_pauli(n) if n <= 12 else chan.build_channel_schur(n, blocks=[0])
    lo, hi = chan.extreme_eigenvalues(ch)
    assert lo == pytest.approx(1 / (2 * n + 1), rel=1e-9)
    assert hi >= 1.0


def test_variance_bound_examples():
    assert chan.variance_bound("lc", loc=2, op_norm=1) == 16
    assert chan.variance_bound("symm-pi", n=10, hs_norm=1) == 21
    assert chan.variance_bound("qst-lc", n=4, op_norm=1) == 26
    assert chan.variance_bound("block-rp", m=5, op_norm=1) == 26
    assert chan.variance_bound("qudit", n=4, D=2, op_norm=1) == 26
    with pytest.raises(ValueError):
        chan.variance_bound("lc", loc=2)
    with pytest.raises(ValueError):
        chan.variance_bound("nope")


@pytest.mark.parametrize("basis", ["pauli", "schur"])
def test_cache_round_trip_is_bit_identical(tmp_path, basis):
    n = 6
    ch = chan.build_channel_pauli(n) if basis == "pauli" else chan.build_channel_schur(n)
    meta = chan.save_channel(ch, tmp_path / "c")
    loaded = chan.load_channel(tmp_path / "c", n=n, basis=basis)
    assert np.array_equal(loaded.dense(), ch.dense())
    for key, block in ch.blocks.items():
        assert np.array_equal(loaded.blocks[key].kernel, block.kernel)
        assert np.array_equal(loaded.blocks[key].indices, block.indices)
    first = {p.name: p.read_bytes() for p in (tmp_path / "c").iterdir()}
    chan.save_channel(chan.build_channel_pauli(n) if basis == "pauli" else chan.build_channel_schur(n),
                      tmp_path / "c")
    assert first == {p.name: p.read_bytes() for p in (tmp_path / "c").iterdir()}
    assert len(meta["blocks"]) == len(ch.blocks)


def test_cache_mismatch(tmp_path):
    chan.save_channel(chan.build_channel_pauli(3), tmp_path / "c")
    with pytest.raises(chan.CacheMismatch):
        chan.load_channel(tmp_path / "c", n=4)
    with pytest.raises(chan.CacheMismatch):
        chan.load_channel(tmp_path / "c", basis="schur")
    blob = next(p for p in (tmp_path / "c").iterdir() if p.suffix == ".bin")
    data = bytearray(blob.read_bytes())
    data[0] ^= 1
    blob.write_bytes(bytes(data))
    with pytest.raises(chan.CacheMismatch):
        chan.load_channel(tmp_path / "c")


def test_ghz_projector_solves_at_large_n():
    n = 40
    ch = chan.build_channel_schur(n, blocks=[-n, 0, n])
    vec = pibasis.observable_to_pivector(GhzProjector(), n, "schur")
    x = chan.solve(ch, vec)
    assert np.all(np.isfinite(x.coeffs))
