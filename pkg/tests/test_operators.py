"""Unit tests for the spin-1 operator core."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trispin.operators import (
    BARE,
    DRESSED,
    OperatorMatrix,
    StateVector,
    from_dressed,
    hermitian_unitary_step,
    identity_op,
    ket_b,
    ket_d,
    ket_minus1,
    ket_plus1,
    ket_psi_plus,
    ket_zero,
    op_to_dressed,
    spin1_operators,
    to_dressed,
    verify_robust_conditions,
)

SQ2 = np.sqrt(2.0)


def series_expm_oracle(a: np.ndarray) -> np.ndarray:
    """Independent scaling-and-squaring Taylor evaluation of exp(a)."""
    norm = np.linalg.norm(a, ord=np.inf)
    k = max(0, int(np.ceil(np.log2(max(norm, 1e-30) / 0.25))))
    b = a / (2**k)
    term = np.eye(3, dtype=np.complex128)
    total = term.copy()
    for n in range(1, 40):
        term = term @ b / n
        total += term
        if np.max(np.abs(term)) < 1e-20:
            break
    for _ in range(k):
        total = total @ total
    return total


def random_state(rng) -> np.ndarray:
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_hermitian(rng, scale=1.0) -> np.ndarray:
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    return scale * (m + m.conj().T) / 2


class TestStateVector:
    def test_norm_enforced(self):
        with pytest.raises(ValueError):
            StateVector([1.0, 1.0, 0.0], BARE)

    def test_norm_tolerance(self):
        eps = 4e-11
        StateVector([np.sqrt(1 + eps), 0, 0], BARE)
        with pytest.raises(ValueError):
            StateVector([np.sqrt(1 + 1e-9), 0, 0], BARE)

    def test_bad_tag_rejected(self):
        with pytest.raises(ValueError):
            StateVector([1, 0, 0], "lab")

    def test_immutability(self):
        s = ket_zero()
        with pytest.raises(ValueError):
            s.amplitudes[0] = 1.0


class TestOperatorMatrix:
    def test_hermitian_check(self):
        with pytest.raises(ValueError):
            OperatorMatrix(np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=complex))

    def test_non_hermitian_allowed_when_flagged(self):
        m = OperatorMatrix(
            np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=complex),
            hermitian_flag=False,
        )
        assert m.entries[0, 1] == 1.0

    def test_zero_matrix_is_hermitian(self):
        OperatorMatrix(np.zeros((3, 3), dtype=complex))


class TestSpinOperators:
    def test_sz_eigenbasis(self):
        _, _, sz = spin1_operators()
        plus = ket_plus1().amplitudes
        np.testing.assert_allclose(sz.entries @ plus, plus, atol=1e-15)
        minus = ket_minus1().amplitudes
        np.testing.assert_allclose(sz.entries @ minus, -minus, atol=1e-15)

    def test_sz_maps_bright_to_dark(self):
        _, _, sz = spin1_operators()
        np.testing.assert_allclose(
            sz.entries @ ket_b().amplitudes, ket_d().amplitudes, atol=1e-15
        )

    def test_sx_squared_spectrum(self):
        # Oracle: diagonalize the explicitly squared matrix.
        sx, _, _ = spin1_operators()
        sx2 = sx.entries @ sx.entries
        vals, vecs = np.linalg.eigh(sx2)
        np.testing.assert_allclose(sorted(vals), [0.0, 1.0, 1.0], atol=1e-14)
        null_vec = vecs[:, np.argmin(vals)]
        overlap = abs(np.vdot(null_vec, ket_d().amplitudes))
        assert overlap == pytest.approx(1.0, abs=1e-12)

    def test_commutation_relations(self):
        sx, sy, sz = (m.entries for m in spin1_operators())
        np.testing.assert_allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-14)
        np.testing.assert_allclose(sy @ sz - sz @ sy, 1j * sx, atol=1e-14)
        np.testing.assert_allclose(sz @ sx - sx @ sz, 1j * sy, atol=1e-14)

    def test_sz_dressed_form(self):
        # In the dressed basis Sz is the pure B-D swap.
        _, _, sz = spin1_operators()
        dressed = op_to_dressed(sz).entries
        expected = np.zeros((3, 3), dtype=complex)
        expected[0, 1] = expected[1, 0] = 1.0
        np.testing.assert_allclose(dressed, expected, atol=1e-14)


class TestBasisTransforms:
    def test_plus1_maps_to_bd_superposition(self):
        d = to_dressed(ket_plus1())
        np.testing.assert_allclose(
            d.amplitudes, np.array([1 / SQ2, 1 / SQ2, 0]), atol=1e-15
        )

    def test_zero_is_fixed_point(self):
        d = to_dressed(ket_zero())
        np.testing.assert_allclose(d.amplitudes, np.array([0, 0, 1.0]), atol=1e-15)

    def test_psi_plus_bare_amplitudes(self):
        psi = ket_psi_plus()
        np.testing.assert_allclose(
            psi.amplitudes, np.array([0.5, 1 / SQ2, 0.5]), atol=1e-15
        )
        d = to_dressed(psi)
        np.testing.assert_allclose(
            d.amplitudes, np.array([1 / SQ2, 0, 1 / SQ2]), atol=1e-15
        )

    def test_tag_mismatch_rejected(self):
        with pytest.raises(ValueError):
            to_dressed(to_dressed(ket_zero()))
        with pytest.raises(ValueError):
            from_dressed(ket_zero())

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_identity(self, seed):
        rng = np.random.default_rng(seed)
        s = StateVector(random_state(rng), BARE)
        back = from_dressed(to_dressed(s))
        np.testing.assert_allclose(back.amplitudes, s.amplitudes, atol=1e-12)


class TestUnitaryStep:
    def test_zero_hamiltonian_gives_identity(self):
        u = hermitian_unitary_step(OperatorMatrix(np.zeros((3, 3), dtype=complex)), 0.7)
        np.testing.assert_allclose(u.entries, np.eye(3), atol=1e-15)

    def test_diagonal_case(self):
        _, _, sz = spin1_operators()
        omega, dt = 3.0, 0.21
        u = hermitian_unitary_step(OperatorMatrix(omega * sz.entries), dt)
        expected = np.diag(
            [np.exp(-1j * omega * dt), 1.0, np.exp(+1j * omega * dt)]
        )
        np.testing.assert_allclose(u.entries, expected, atol=1e-14)

    def test_non_hermitian_rejected(self):
        m = OperatorMatrix(
            np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=complex),
            hermitian_flag=False,
        )
        with pytest.raises(ValueError):
            hermitian_unitary_step(m, 0.1)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_matches_series_oracle(self, seed):
        rng = np.random.default_rng(seed)
        h = random_hermitian(rng, scale=5.0)
        dt = float(rng.uniform(0.01, 1.0))
        u = hermitian_unitary_step(OperatorMatrix(h), dt).entries
        oracle = series_expm_oracle(-1j * h * dt)
        np.testing.assert_allclose(u, oracle, atol=1e-10)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_unitarity(self, seed):
        rng = np.random.default_rng(seed)
        h = random_hermitian(rng, scale=50.0)
        u = hermitian_unitary_step(OperatorMatrix(h), 0.3).entries
        np.testing.assert_allclose(u.conj().T @ u, np.eye(3), atol=1e-12)

    def test_norm_preserved_per_step(self):
        rng = np.random.default_rng(7)
        h = random_hermitian(rng, scale=20.0)
        u = hermitian_unitary_step(OperatorMatrix(h), 0.05).entries
        psi = random_state(rng)
        for _ in range(100):
            psi = u @ psi
            assert abs(np.vdot(psi, psi).real - 1.0) < 1e-10


def eq6_analog(omega, delta):
    """-(Omega^2/Delta)(6 Sx^2 - 4 I), the total effective drive Hamiltonian."""
    sx, _, _ = spin1_operators()
    sx2 = sx.entries @ sx.entries
    return OperatorMatrix(-(omega**2 / delta) * (6 * sx2 - 4 * np.eye(3)))


class TestRobustConditions:
    def test_protected_pair(self):
        omega, delta = 3.0, 40.0
        report = verify_robust_conditions((ket_zero(), ket_b()), eq6_analog(omega, delta))
        assert report.max_sz_matrix_element < 1e-12
        assert report.eigenvalue_spread_in_R < 1e-10
        assert report.min_gap_nu == pytest.approx(6 * omega**2 / delta, rel=1e-10)

    def test_bare_pair_fails_noise_condition(self):
        rng = np.random.default_rng(3)
        h = OperatorMatrix(random_hermitian(rng))
        report = verify_robust_conditions((ket_plus1(), ket_minus1()), h)
        assert report.max_sz_matrix_element == pytest.approx(1.0, abs=1e-12)

    def test_dark_pair_fails_drive_condition(self):
        omega, delta = 3.0, 40.0
        report = verify_robust_conditions((ket_zero(), ket_d()), eq6_analog(omega, delta))
        assert report.eigenvalue_spread_in_R == pytest.approx(
            6 * omega**2 / delta, rel=1e-10
        )

    def test_dressed_tagged_input_accepted(self):
        zero_dressed = to_dressed(ket_zero())
        b_dressed = to_dressed(ket_b())
        report = verify_robust_conditions(
            (zero_dressed, b_dressed), eq6_analog(2.0, 10.0)
        )
        assert report.max_sz_matrix_element < 1e-12

    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValueError):
            verify_robust_conditions((ket_zero(), ket_zero()), identity_op())
