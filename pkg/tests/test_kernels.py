"""Kernel correctness: backend equivalence and exact-evolution oracles."""

import os
import subprocess
import sys

import numpy as np
import pytest

from trispin._kernels import (
    BACKEND,
    HAS_NUMBA,
    dressed_survival,
    three_level_amplitudes,
    tls_survival,
)

BACKENDS = ["numpy"] + (["numba"] if HAS_NUMBA else [])
needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")


def expm_oracle(h, t, psi):
    w, v = np.linalg.eigh(h)
    return v @ (np.exp(-1j * w * t) * (v.conj().T @ psi))


class TestTLS:
    @pytest.mark.parametrize("backend", BACKENDS)
    def test_zero_field_carrier(self, backend):
        # B = 0: pure sigma_z rotation, P = (1 + cos(Omega t/2))/2.
        out = tls_survival(np.zeros((1, 11)), 0.25, 20, 50.0, 1, backend=backend)
        t = np.arange(out.shape[1]) * 0.0125
        assert np.abs(out[0] - 0.5 * (1 + np.cos(25.0 * t))).max() < 1e-12

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_constant_field_matches_expm(self, backend):
        # One noise value held fixed: kernel must equal exp(-iHt) exactly.
        bval, rabi, dt = 0.37, 11.0, 0.01
        out = tls_survival(np.full((1, 2), bval), 1.0, 100, rabi, 25, backend=backend)
        h = np.array([[rabi / 4, bval / 2], [bval / 2, -rabi / 4]], dtype=complex)
        plus_x = np.array([1.0, 1.0]) / np.sqrt(2)
        for k, t in enumerate(np.arange(5) * 0.25):
            ref = abs(np.vdot(plus_x, expm_oracle(h, t, plus_x))) ** 2
            assert out[0, k] == pytest.approx(ref, abs=1e-12)

    @needs_numba
    def test_backends_agree(self):
        rng = np.random.default_rng(11)
        b = rng.normal(0.0, 0.5, (4, 81))
        a = tls_survival(b, 0.25, 10, 50.0, 4, backend="numba")
        b_ = tls_survival(b, 0.25, 10, 50.0, 4, backend="numpy")
        assert np.abs(a - b_).max() < 1e-12

    def test_record_cadence_and_shape(self):
        out = tls_survival(np.zeros((3, 5)), 0.2, 10, 10.0, 8)
        assert out.shape == (3, 6)
        assert np.all(out[:, 0] == 1.0)
        with pytest.raises(ValueError):
            tls_survival(np.zeros((1, 5)), 0.2, 10, 10.0, 7)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_norm_conservation_long_run(self, backend):
        # 1e5 exact rotations: P stays within [0, 1] to rounding.
        rng = np.random.default_rng(3)
        b = rng.normal(0.0, 0.5, (1, 1001))
        out = tls_survival(b, 0.25, 100, 50.0, 100, backend=backend)
        assert out.max() < 1.0 + 1e-9
        assert out.min() > -1e-9


class TestDressed:
    EBD = np.array([17.96, 0.0, 0.0, 0.0])
    E0B = np.array([0.315, 0.0, 0.0, 0.0])

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_noiseless_oscillates_at_qubit_gap(self, backend):
        z = np.zeros((1, 201))
        out = dressed_survival(z, z, 0.15, 0.0, self.EBD, self.E0B, 1, backend=backend)
        t = np.arange(out.shape[1]) * 0.15
        assert np.abs(out[0] - 0.5 * (1 + np.cos(0.315 * t))).max() < 1e-12

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_matches_expm_with_noise(self, backend):
        rng = np.random.default_rng(5)
        nsteps = 12
        b = rng.normal(0.0, 0.3, (1, nsteps + 1))
        eps = rng.normal(0.0, 0.005, (1, nsteps + 1))
        h = 0.124
        dt = 0.15
        out = dressed_survival(b, eps, dt, h, self.EBD, self.E0B, 1, backend=backend)
        psi = np.array([1.0, 0.0, 1.0], dtype=complex) / np.sqrt(2)
        ref_state = psi.copy()
        for i in range(nsteps):
            e = eps[0, i]
            ebd = np.polyval(self.EBD[::-1], e)
            e0b = np.polyval(self.E0B[::-1], e)
            g = h + b[0, i]
            hm = np.array(
                [[0.0, g, 0.0], [g, -ebd, 0.0], [0.0, 0.0, e0b]], dtype=complex
            )
            ref_state = expm_oracle(hm, dt, ref_state)
            ref_p = abs(np.vdot(psi, ref_state)) ** 2
            assert out[0, i + 1] == pytest.approx(ref_p, abs=1e-12)

    @needs_numba
    def test_backends_agree(self):
        rng = np.random.default_rng(7)
        b = rng.normal(0.0, 0.3, (3, 301))
        eps = rng.normal(0.0, 0.01, (3, 301))
        ebd = np.array([17.96, 120.0, -40.0, 5.0])
        e0b = np.array([0.315, 0.02, -0.01, 0.002])
        a = dressed_survival(b, eps, 0.15, 0.124, ebd, e0b, 3, backend="numba")
        b_ = dressed_survival(b, eps, 0.15, 0.124, ebd, e0b, 3, backend="numpy")
        assert np.abs(a - b_).max() < 1e-12

    def test_gap_map_polynomials_applied(self):
        # Constant eps shifts the oscillation frequency through the map.
        z = np.zeros((1, 401))
        eps = np.full((1, 401), 0.01)
        e0b = np.array([0.315, 1.0, 0.0, 0.0])  # e0b(eps) = 0.315 + eps
        out = dressed_survival(z, eps, 0.15, 0.0, self.EBD, e0b, 1)
        t = np.arange(out.shape[1]) * 0.15
        assert np.abs(out[0] - 0.5 * (1 + np.cos(0.325 * t))).max() < 1e-12

    def test_shape_validation(self):
        z = np.zeros((1, 11))
        with pytest.raises(ValueError):
            dressed_survival(z, np.zeros((2, 11)), 0.1, 0.0, self.EBD, self.E0B, 1)
        with pytest.raises(ValueError):
            dressed_survival(z, z, 0.1, 0.0, np.zeros(3), self.E0B, 1)


class TestThreeLevel:
    TONES = np.zeros(4)
    SIGNS = np.array([1.0, 1.0, 1.0, -1.0])
    CARRIERS = np.zeros(2)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_constant_hamiltonian_matches_expm(self, backend):
        # All tones at zero frequency: f = 2, H constant and real.
        db = np.array([5.0, 0.0, -5.0])
        psi0 = np.array([0.6, 0.8j, 0.0], dtype=complex)
        recs = three_level_amplitudes(
            psi0, 0.0, 1e-3, 2000, db, 1.3, self.TONES, self.SIGNS, self.CARRIERS,
            record_every=500, backend=backend,
        )
        h = np.diag(db).astype(complex)
        h[0, 1] = h[1, 0] = h[1, 2] = h[2, 1] = 2 * 1.3
        for k in range(recs.shape[0]):
            ref = expm_oracle(h, k * 0.5, psi0)
            assert np.abs(recs[k] - ref).max() < 1e-9

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_oscillating_drive_self_convergence(self, backend):
        # The midpoint-frozen step is second order in the Hamiltonian's
        # time dependence: halving dt shrinks the error 4x.  (The
        # Taylor-4 exponential truncation sits far below it.)
        tones = np.array([30.0, 35.0, 60.0, 70.0])
        carriers = np.array([200.0, -180.0])
        db = np.array([1.0, 0.0, -1.0])
        psi0 = np.array([1.0, 0.0, 0.0], dtype=complex)

        def run(dt, n):
            return three_level_amplitudes(
                psi0, 0.0, dt, n, db, 2.0, tones, self.SIGNS, carriers,
                record_every=n, backend=backend,
            )[-1]

        a = run(2e-4, 5000)
        b = run(1e-4, 10000)
        c = run(5e-5, 20000)
        err_ab = np.abs(a - b).max()
        err_bc = np.abs(b - c).max()
        assert err_ab < 1e-5
        assert 3.0 < err_ab / err_bc < 5.5

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_piecewise_noise_indexing(self, backend):
        # Noise value switches sign halfway; evolution must follow the
        # stepwise product of the two constant generators.
        b_path = np.array([0.8, -0.8])
        db = np.zeros(3)
        psi0 = np.array([1.0, 0.0, 0.0], dtype=complex)
        recs = three_level_amplitudes(
            psi0, 0.0, 1e-3, 2000, db, 0.0, self.TONES, self.SIGNS, self.CARRIERS,
            b_path=b_path, eps_path=np.zeros(2), n_sub=1000,
            record_every=1000, backend=backend,
        )
        # diag(+-b, 0, -+b) only: amplitudes pick up pure phases.
        assert np.abs(recs[1][0] - np.exp(-1j * 0.8)) < 1e-10
        assert np.abs(recs[2][0] - np.exp(-1j * 0.8) * np.exp(1j * 0.8)) < 1e-10

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_drive_noise_scales_amplitude(self, backend):
        # eps = 0.5 must scale the coupling 1.5x: compare Rabi angles.
        db = np.zeros(3)
        psi0 = np.array([0.0, 1.0, 0.0], dtype=complex)

        def pop(eps_val):
            recs = three_level_amplitudes(
                psi0, 0.0, 1e-4, 5000, db, 0.4, self.TONES, self.SIGNS,
                self.CARRIERS, eps_path=np.array([eps_val]),
                b_path=np.zeros(1), n_sub=10**9,
                record_every=5000, backend=backend,
            )
            return recs[-1]

        # H couples |0> to both neighbors with 2*amp0*(1+eps):
        # populations follow a two-level rotation at sqrt(2)*coupling.
        for eps_val in (0.0, 0.5):
            g = 2 * 0.4 * (1 + eps_val) * np.sqrt(2)
            expect = np.cos(g * 0.5)
            assert abs(pop(eps_val)[1] - expect) < 1e-6

    @needs_numba
    def test_backends_agree(self):
        tones = np.array([480.0, 520.0, 680.0, 720.0])
        carriers = np.array([22870.0, -17130.0])
        rng = np.random.default_rng(9)
        b_path = rng.normal(0.0, 0.3, 5)
        eps_path = rng.normal(0.0, 0.005, 5)
        psi0 = np.array([0.5, 1j / np.sqrt(2), 0.5], dtype=complex)
        args = (psi0, 0.0, 1e-5, 5000, np.zeros(3), 49.5, tones,
                self.SIGNS, carriers)
        kw = dict(b_path=b_path, eps_path=eps_path, n_sub=1000, record_every=500)
        a = three_level_amplitudes(*args, **kw, backend="numba")
        b = three_level_amplitudes(*args, **kw, backend="numpy")
        assert np.abs(a - b).max() < 1e-10

    def test_records_stay_normalized(self):
        recs = three_level_amplitudes(
            np.array([1.0, 0, 0], dtype=complex), 0.0, 1e-3, 4000,
            np.array([3.0, 0.0, -3.0]), 0.7, self.TONES, self.SIGNS,
            self.CARRIERS, record_every=400,
        )
        norms = np.linalg.norm(recs, axis=1)
        assert np.abs(norms[1:] - 1.0).max() < 1e-14

    def test_input_validation(self):
        psi0 = np.array([1.0, 0, 0], dtype=complex)
        with pytest.raises(ValueError):
            three_level_amplitudes(
                psi0, 0.0, 1e-3, 7, np.zeros(3), 1.0, self.TONES, self.SIGNS,
                self.CARRIERS, record_every=2,
            )
        with pytest.raises(ValueError):
            three_level_amplitudes(
                np.zeros(2, dtype=complex), 0.0, 1e-3, 4, np.zeros(3), 1.0,
                self.TONES, self.SIGNS, self.CARRIERS,
            )
        with pytest.raises(ValueError):
            three_level_amplitudes(
                psi0, 0.0, 1e-3, 4000, np.zeros(3), 1.0, self.TONES,
                self.SIGNS, self.CARRIERS, b_path=np.zeros(2),
                eps_path=np.zeros(2), n_sub=1000,
            )


class TestBackendSelection:
    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            tls_survival(np.zeros((1, 3)), 0.1, 2, 1.0, 1, backend="gpu")

    def test_default_backend_consistent(self):
        assert BACKEND == ("numba" if HAS_NUMBA else "numpy")

    def test_disable_flag_forces_numpy(self):
        env = dict(os.environ, TRISPIN_DISABLE_NUMBA="1")
        code = "from trispin._kernels import BACKEND; print(BACKEND)"
        res = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, env=env
        )
        assert res.stdout.strip() == "numpy"
