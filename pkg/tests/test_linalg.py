"""Tests for the operator/state layer."""

import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from shadowlab import linalg


def random_hermitian(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (g + g.conj().T)


class TestBasics:
    def test_hermitian_part_symmetrizes_roundoff(self):
        a = np.array([[1.0, 0.5 + 1e-12j], [0.5 - 2e-12j, 2.0]])
        h = linalg.hermitian_part(a)
        np.testing.assert_allclose(h, h.conj().T)

    def test_hermitian_part_rejects_genuine_asymmetry(self):
        with pytest.raises(ValueError, match="not Hermitian"):
            linalg.hermitian_part(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_spectral_decompose_reconstructs(self):
        rng = np.random.default_rng(0)
        h = random_hermitian(5, rng)
        dec = linalg.spectral_decompose(h)
        rebuilt = (dec.eigenvectors * dec.eigenvalues) @ dec.eigenvectors.conj().T
        np.testing.assert_allclose(rebuilt, h, atol=1e-12)

    def test_expm_i_matches_scipy(self):
        # independent route: scipy's Pade expm on the same generator
        rng = np.random.default_rng(1)
        for d in (2, 3, 6):
            h = random_hermitian(d, rng)
            t = float(rng.uniform(-2.0, 2.0))
            u = linalg.expm_i(h, t)
            ref = scipy.linalg.expm(1j * t * h)
            np.testing.assert_allclose(u, ref, atol=1e-11)

    def test_commutator_antihermitian_for_hermitian_pair(self):
        rng = np.random.default_rng(2)
        a, b = random_hermitian(4, rng), random_hermitian(4, rng)
        c = linalg.commutator(a, b)
        np.testing.assert_allclose(c, -c.conj().T, atol=1e-12)

    def test_operator_norm_values(self):
        assert linalg.operator_norm(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(1.0)
        assert linalg.operator_norm(np.array([[1.0, 2.0], [2.0, 1.0]])) == pytest.approx(3.0)


class TestStatesAndEffects:
    def test_density_requires_unit_trace(self):
        with pytest.raises(ValueError, match="trace"):
            linalg.DensityMatrix(np.eye(2))

    def test_density_rejects_negative_spectrum(self):
        with pytest.raises(ValueError):
            linalg.DensityMatrix(np.diag([1.5, -0.5]))

    def test_purification_weights_form_a_distribution(self):
        rho = linalg.random_density(4, seed=3)
        w, vecs = rho.purification_weights()
        assert np.all(w >= 0)
        assert np.sum(w) == pytest.approx(1.0, abs=1e-12)
        assert vecs.shape == (4, 4)

    def test_povm_element_spectrum_window(self):
        linalg.PovmElement(np.diag([0.0, 1.0]))
        with pytest.raises(ValueError):
            linalg.PovmElement(np.diag([0.0, 1.5]))
        with pytest.raises(ValueError):
            linalg.PovmElement(np.diag([-0.2, 0.5]))

    def test_is_projector(self):
        assert linalg.PovmElement(np.diag([1.0, 0.0])).is_projector
        assert not linalg.PovmElement(0.5 * np.eye(2)).is_projector

    def test_expectation_literal(self):
        rho = linalg.DensityMatrix(np.array([[0.7, 0.2], [0.2, 0.3]]))
        m = linalg.PovmElement(np.diag([1.0, 0.0]))
        assert linalg.expectation(m, rho) == pytest.approx(0.7)

    def test_conjugate_requires_unitary(self):
        rho = linalg.random_density(2, seed=4)
        with pytest.raises(ValueError, match="unitary"):
            linalg.conjugate(rho, np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_conjugate_preserves_spectrum(self):
        rho = linalg.random_density(3, seed=5)
        u = linalg.expm_i(random_hermitian(3, np.random.default_rng(6)), 0.7)
        sigma = linalg.conjugate(rho, u)
        np.testing.assert_allclose(np.linalg.eigvalsh(sigma.matrix),
                                   np.linalg.eigvalsh(rho.matrix), atol=1e-11)


class TestRandomFamilies:
    def test_random_density_rank_one_is_pure(self):
        rho = linalg.random_density(4, rank=1, seed=7)
        purity = float(np.trace(rho.matrix @ rho.matrix).real)
        assert purity == pytest.approx(1.0, abs=1e-10)

    def test_random_projector_idempotent(self):
        p = linalg.random_projector(5, 2, seed=8)
        np.testing.assert_allclose(p.matrix @ p.matrix, p.matrix, atol=1e-11)
        assert int(round(np.trace(p.matrix).real)) == 2

    def test_random_povm_element_in_window(self):
        m = linalg.random_povm_element(6, seed=9)
        eigs = np.linalg.eigvalsh(m.matrix)
        assert eigs.min() >= -1e-9 and eigs.max() <= 1 + 1e-9

    def test_cmax_pauli_projectors(self):
        # [(I+X)/2, (I+Z)/2] = [X, Z]/4 = -iY/2, norm 1/2
        x = np.array([[0, 1], [1, 0]], dtype=complex)
        z = np.diag([1.0, -1.0]).astype(complex)
        fam = [linalg.PovmElement(0.5 * (np.eye(2) + x)),
               linalg.PovmElement(0.5 * (np.eye(2) + z))]
        assert linalg.cmax_of_family(fam) == pytest.approx(0.5, abs=1e-12)

    def test_cmax_singleton_is_zero(self):
        assert linalg.cmax_of_family([linalg.random_povm_element(2, seed=0)]) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.02, 1.0), st.floats(0.05, 3.0))
def test_conjugation_remainder_under_bound(seed, anorm, bnorm):
    """The second-order remainder of e^{-iA} B e^{iA} never beats its bound
    anywhere in its stated domain (||A|| <= 1)."""
    rng = np.random.default_rng(seed)
    d = int(rng.choice([2, 3, 4]))
    a = random_hermitian(d, rng)
    a *= anorm / max(linalg.operator_norm(a), 1e-12)
    b = random_hermitian(d, rng)
    b *= bnorm / max(linalg.operator_norm(b), 1e-12)
    lhs, rhs = linalg.conjugate_deviation(a, b)
    assert lhs <= rhs + 1e-11


def test_conjugation_slack_literal():
    assert linalg.CONJUGATION_SLACK == pytest.approx((np.e**2 - 3.0) / 4.0)
    assert linalg.CONJUGATION_SLACK == pytest.approx(1.0972640247326626)


class TestMatrixFiles:
    def test_roundtrip(self, tmp_path):
        rho = linalg.random_density(3, seed=11)
        path = tmp_path / "rho.json"
        linalg.save_matrix(path, rho.matrix)
        back = linalg.load_density(path)
        np.testing.assert_allclose(back.matrix, rho.matrix, atol=1e-15)

    def test_povm_roundtrip(self, tmp_path):
        m = linalg.random_povm_element(2, seed=12)
        path = tmp_path / "m.json"
        linalg.save_matrix(path, m.matrix)
        back = linalg.load_povm_element(path)
        np.testing.assert_allclose(back.matrix, m.matrix, atol=1e-15)

    def test_load_rejects_bad_shape(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dim": 2, "entries": [[1.0, 0.0]]}))
        with pytest.raises(ValueError):
            linalg.load_matrix(path)
