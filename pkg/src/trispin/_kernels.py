"""Hot propagation loops: numba-compiled with a pure-numpy fallback.

Three kernels cover every simulation in the package:

- ``tls_survival``: two-level rotating-frame ensemble, exact per-step
  2x2 rotations under H = (Omega/4) sigma_z + (B/2) sigma_x.
- ``dressed_survival``: reduced three-level bright/dark/zero ensemble,
  exact per-noise-step evolution (closed-form 2x2 block + phase).
- ``three_level_amplitudes``: single-trajectory integration of the full
  time-dependent three-level Hamiltonian (lab frame or interaction
  picture) with a midpoint-frozen fourth-order Taylor exponential and
  incremental tone/carrier phasors.

Backend selection: numba when importable and TRISPIN_DISABLE_NUMBA is
unset (module constants HAS_NUMBA / BACKEND record the outcome); the
numpy fallbacks implement the same step algebra vectorized across
trajectories (ensemble kernels) or across steps with a batched
propagator product (single-trajectory kernel).  Backends agree to
~1e-12 on short horizons; they are not bitwise identical because
summation order and libm differ.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "HAS_NUMBA",
    "BACKEND",
    "tls_survival",
    "dressed_survival",
    "three_level_amplitudes",
]

_DISABLED = os.environ.get("TRISPIN_DISABLE_NUMBA", "").strip() not in ("", "0")
HAS_NUMBA = False
if not _DISABLED:
    try:
        import numba

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False
BACKEND = "numba" if HAS_NUMBA else "numpy"


# -- two-level driven ensemble ------------------------------------------------

def _tls_loop(b_paths, n_sub, dt, rabi, record_every, out):
    # out[traj, 0] is P(0); one row per trajectory, P vs |+x>.
    n_traj = b_paths.shape[0]
    n_steps = (b_paths.shape[1] - 1) * n_sub
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    hz = 0.25 * rabi
    for traj in range(n_traj):
        a = complex(inv_sqrt2, 0.0)
        b = complex(inv_sqrt2, 0.0)
        out[traj, 0] = 1.0
        rec = 1
        for i in range(n_steps):
            hx = 0.5 * b_paths[traj, i // n_sub]
            hn = math.sqrt(hx * hx + hz * hz)
            th = hn * dt
            c = math.cos(th)
            s = math.sin(th)
            if hn > 0.0:
                snx = s * hx / hn
                snz = s * hz / hn
            else:
                snx = 0.0
                snz = 0.0
            na = complex(c, -snz) * a - complex(0.0, snx) * b
            nb = -complex(0.0, snx) * a + complex(c, snz) * b
            a = na
            b = nb
            if (i + 1) % record_every == 0:
                v = a + b
                out[traj, rec] = 0.5 * (v.real * v.real + v.imag * v.imag)
                rec += 1


def _tls_py(b_paths, n_sub, dt, rabi, record_every, out):
    # Same rotation algebra, vectorized across trajectory rows.
    n_traj = b_paths.shape[0]
    n_steps = (b_paths.shape[1] - 1) * n_sub
    hz = 0.25 * rabi
    a = np.full(n_traj, 1.0 / np.sqrt(2.0), dtype=np.complex128)
    b = a.copy()
    out[:, 0] = 1.0
    rec = 1
    for i in range(n_steps):
        hx = 0.5 * b_paths[:, i // n_sub]
        hn = np.sqrt(hx * hx + hz * hz)
        th = hn * dt
        c = np.cos(th)
        s = np.sin(th)
        with np.errstate(invalid="ignore"):
            snx = np.where(hn > 0.0, s * hx / hn, 0.0)
            snz = np.where(hn > 0.0, s * hz / hn, 0.0)
        na = (c - 1j * snz) * a - 1j * snx * b
        nb = -1j * snx * a + (c + 1j * snz) * b
        a = na
        b = nb
        if (i + 1) % record_every == 0:
            v = a + b
            out[:, rec] = 0.5 * (v.real * v.real + v.imag * v.imag)
            rec += 1


# -- reduced dressed-basis three-level ensemble -------------------------------

def _dressed_loop(b_paths, eps_paths, dt, h, ebd_c, e0b_c, record_every, out):
    # Basis order (B, D, 0); psi0 = (1,0,1)/sqrt(2); exact evolution per
    # noise step: closed-form 2x2 block on (B, D) plus a phase on |0>.
    n_traj = b_paths.shape[0]
    n_steps = b_paths.shape[1] - 1
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for traj in range(n_traj):
        aB = complex(inv_sqrt2, 0.0)
        aD = complex(0.0, 0.0)
        a0 = complex(inv_sqrt2, 0.0)
        out[traj, 0] = 1.0
        rec = 1
        for i in range(n_steps):
            eps = eps_paths[traj, i]
            ebd = ((ebd_c[3] * eps + ebd_c[2]) * eps + ebd_c[1]) * eps + ebd_c[0]
            e0b = ((e0b_c[3] * eps + e0b_c[2]) * eps + e0b_c[1]) * eps + e0b_c[0]
            g = h + b_paths[traj, i]
            # H(B,D) = [[0, g], [g, -ebd]] = -(ebd/2) I + R (n . sigma)
            half = 0.5 * ebd
            r = math.sqrt(half * half + g * g)
            th = r * dt
            c = math.cos(th)
            s = math.sin(th)
            if r > 0.0:
                snx = s * g / r
                snz = s * half / r
            else:
                snx = 0.0
                snz = 0.0
            ph = complex(math.cos(half * dt), math.sin(half * dt))
            nB = ph * (complex(c, -snz) * aB - complex(0.0, snx) * aD)
            nD = ph * (-complex(0.0, snx) * aB + complex(c, snz) * aD)
            aB = nB
            aD = nD
            a0 = a0 * complex(math.cos(e0b * dt), -math.sin(e0b * dt))
            if (i + 1) % record_every == 0:
                v = aB + a0
                out[traj, rec] = 0.5 * (v.real * v.real + v.imag * v.imag)
                rec += 1


def _dressed_py(b_paths, eps_paths, dt, h, ebd_c, e0b_c, record_every, out):
    n_traj = b_paths.shape[0]
    n_steps = b_paths.shape[1] - 1
    aB = np.full(n_traj, 1.0 / np.sqrt(2.0), dtype=np.complex128)
    aD = np.zeros(n_traj, dtype=np.complex128)
    a0 = aB.copy()
    out[:, 0] = 1.0
    rec = 1
    for i in range(n_steps):
        eps = eps_paths[:, i]
        ebd = ((ebd_c[3] * eps + ebd_c[2]) * eps + ebd_c[1]) * eps + ebd_c[0]
        e0b = ((e0b_c[3] * eps + e0b_c[2]) * eps + e0b_c[1]) * eps + e0b_c[0]
        g = h + b_paths[:, i]
        half = 0.5 * ebd
        r = np.sqrt(half * half + g * g)
        th = r * dt
        c = np.cos(th)
        s = np.sin(th)
        with np.errstate(invalid="ignore"):
            snx = np.where(r > 0.0, s * g / r, 0.0)
            snz = np.where(r > 0.0, s * half / r, 0.0)
        ph = np.exp(1j * half * dt)
        nB = ph * ((c - 1j * snz) * aB - 1j * snx * aD)
        nD = ph * (-1j * snx * aB + (c + 1j * snz) * aD)
        aB = nB
        aD = nD
        a0 = a0 * np.exp(-1j * e0b * dt)
        if (i + 1) % record_every == 0:
            v = aB + a0
            out[:, rec] = 0.5 * (v.real * v.real + v.imag * v.imag)
            rec += 1


# -- full time-dependent three-level single trajectory ------------------------

def _three_level_loop(
    psi0,
    t0,
    dt,
    n_steps,
    diag_base,
    amp0,
    tone_w,
    tone_sign,
    carrier_w,
    b_path,
    eps_path,
    n_sub,
    record_every,
    out,
):
    # Midpoint-frozen H per step; fourth-order Taylor exponential applied
    # to the state; six incremental phasors carry the tones and carriers.
    # Renormalizes at every record point.
    p0 = psi0[0]
    p1 = psi0[1]
    p2 = psi0[2]
    out[0, 0] = p0
    out[0, 1] = p1
    out[0, 2] = p2
    tm = t0 + 0.5 * dt
    t0p = complex(math.cos(tone_w[0] * tm), math.sin(tone_w[0] * tm))
    t1p = complex(math.cos(tone_w[1] * tm), math.sin(tone_w[1] * tm))
    t2p = complex(math.cos(tone_w[2] * tm), math.sin(tone_w[2] * tm))
    t3p = complex(math.cos(tone_w[3] * tm), math.sin(tone_w[3] * tm))
    t0s = complex(math.cos(tone_w[0] * dt), math.sin(tone_w[0] * dt))
    t1s = complex(math.cos(tone_w[1] * dt), math.sin(tone_w[1] * dt))
    t2s = complex(math.cos(tone_w[2] * dt), math.sin(tone_w[2] * dt))
    t3s = complex(math.cos(tone_w[3] * dt), math.sin(tone_w[3] * dt))
    c0p = complex(math.cos(carrier_w[0] * tm), math.sin(carrier_w[0] * tm))
    c1p = complex(math.cos(carrier_w[1] * tm), math.sin(carrier_w[1] * tm))
    c0s = complex(math.cos(carrier_w[0] * dt), math.sin(carrier_w[0] * dt))
    c1s = complex(math.cos(carrier_w[1] * dt), math.sin(carrier_w[1] * dt))
    s0 = tone_sign[0]
    s1 = tone_sign[1]
    s2 = tone_sign[2]
    s3 = tone_sign[3]
    rec = 1
    for i in range(n_steps):
        ni = i // n_sub
        f = s0 * t0p.real + s1 * t1p.real + s2 * t2p.real + s3 * t3p.real
        amp = amp0 * (1.0 + eps_path[ni]) * f
        h01 = amp * c0p
        h12 = amp * c1p
        bv = b_path[ni]
        d0 = diag_base[0] + bv
        d1 = diag_base[1]
        d2 = diag_base[2] - bv
        v0 = p0
        v1 = p1
        v2 = p2
        for k in range(1, 5):
            w0 = d0 * v0 + h01 * v1
            w1 = h01.conjugate() * v0 + d1 * v1 + h12 * v2
            w2 = h12.conjugate() * v1 + d2 * v2
            sc = complex(0.0, -dt / k)
            v0 = sc * w0
            v1 = sc * w1
            v2 = sc * w2
            p0 = p0 + v0
            p1 = p1 + v1
            p2 = p2 + v2
        t0p = t0p * t0s
        t1p = t1p * t1s
        t2p = t2p * t2s
        t3p = t3p * t3s
        c0p = c0p * c0s
        c1p = c1p * c1s
        if (i + 1) % record_every == 0:
            nrm = math.sqrt(
                p0.real * p0.real + p0.imag * p0.imag
                + p1.real * p1.real + p1.imag * p1.imag
                + p2.real * p2.real + p2.imag * p2.imag
            )
            inv = 1.0 / nrm
            p0 = p0 * inv
            p1 = p1 * inv
            p2 = p2 * inv
            out[rec, 0] = p0
            out[rec, 1] = p1
            out[rec, 2] = p2
            rec += 1


def _fold_time_ordered(u: np.ndarray) -> np.ndarray:
    # Product u[-1] @ ... @ u[1] @ u[0] by pairwise tree reduction.
    while u.shape[0] > 1:
        n = u.shape[0]
        even = n - (n % 2)
        pairs = np.matmul(u[1:even:2], u[0:even:2])
        if n % 2:
            u = np.concatenate([pairs, u[-1:]])
        else:
            u = pairs
    return u[0]


def _three_level_py(
    psi0,
    t0,
    dt,
    n_steps,
    diag_base,
    amp0,
    tone_w,
    tone_sign,
    carrier_w,
    b_path,
    eps_path,
    n_sub,
    record_every,
    out,
):
    # Batched per-segment propagator construction (same Taylor-4
    # polynomial) followed by a time-ordered tree product.
    psi = np.asarray(psi0, dtype=np.complex128).copy()
    out[0] = psi
    rec = 1
    eye = np.eye(3, dtype=np.complex128)
    for i0 in range(0, n_steps, record_every):
        ell = min(record_every, n_steps - i0)
        mid = t0 + (i0 + np.arange(ell) + 0.5) * dt
        f = np.zeros(ell)
        for j in range(4):
            f += tone_sign[j] * np.cos(tone_w[j] * mid)
        ni = (i0 + np.arange(ell)) // n_sub
        amp = amp0 * (1.0 + eps_path[ni]) * f
        h01 = amp * np.exp(1j * carrier_w[0] * mid)
        h12 = amp * np.exp(1j * carrier_w[1] * mid)
        bv = b_path[ni]
        m = np.zeros((ell, 3, 3), dtype=np.complex128)
        m[:, 0, 0] = diag_base[0] + bv
        m[:, 1, 1] = diag_base[1]
        m[:, 2, 2] = diag_base[2] - bv
        m[:, 0, 1] = h01
        m[:, 1, 0] = np.conj(h01)
        m[:, 1, 2] = h12
        m[:, 2, 1] = np.conj(h12)
        m *= -1j * dt
        m2 = np.matmul(m, m)
        m3 = np.matmul(m2, m)
        m4 = np.matmul(m3, m)
        u = eye + m + 0.5 * m2 + m3 / 6.0 + m4 / 24.0
        psi = _fold_time_ordered(u) @ psi
        if ell == record_every:
            psi /= np.sqrt(np.real(np.vdot(psi, psi)))
            out[rec] = psi
            rec += 1


# -- backend dispatch ---------------------------------------------------------

if HAS_NUMBA:
    _tls_nb = numba.njit(cache=True, nogil=True, fastmath=False)(_tls_loop)
    _dressed_nb = numba.njit(cache=True, nogil=True, fastmath=False)(_dressed_loop)
    _three_level_nb = numba.njit(cache=True, nogil=True, fastmath=False)(_three_level_loop)


def _pick(backend: str | None, nb_impl, py_impl):
    if backend is None:
        backend = BACKEND
    if backend == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return nb_impl
    if backend == "numpy":
        return py_impl
    raise ValueError(f"unknown backend {backend!r}")


def tls_survival(
    b_paths: np.ndarray,
    dt_noise: float,
    n_sub: int,
    rabi: float,
    record_every: int,
    backend: str | None = None,
) -> np.ndarray:
    """Survival probability curves |<+x|psi(t)>|^2, one row per trajectory.

    b_paths holds one OU value per noise step (endpoint included); each
    noise step is split into n_sub exact rotations of dt_noise/n_sub.
    Records P at t=0 and after every record_every rotations.
    """
    b_paths = np.ascontiguousarray(b_paths, dtype=np.float64)
    n_steps = (b_paths.shape[1] - 1) * n_sub
    if n_steps % record_every:
        raise ValueError("record_every must divide the total step count")
    out = np.empty((b_paths.shape[0], n_steps // record_every + 1))
    impl = _pick(backend, _tls_nb if HAS_NUMBA else None, _tls_py)
    impl(b_paths, n_sub, dt_noise / n_sub, rabi, record_every, out)
    return out


def dressed_survival(
    b_paths: np.ndarray,
    eps_paths: np.ndarray,
    dt_noise: float,
    h_coupling: float,
    ebd_coeffs: np.ndarray,
    e0b_coeffs: np.ndarray,
    record_every: int,
    backend: str | None = None,
) -> np.ndarray:
    """Reduced dressed-basis survival curves |<psi+|psi(t)>|^2 per trajectory.

    The bright-dark gap and qubit gap are cubic polynomials in the
    relative drive error (coeffs ascending); h_coupling is the static
    part of the bright-dark coupling and b_paths its fluctuating part.
    Evolution is exact for each noise step of dt_noise.
    """
    b_paths = np.ascontiguousarray(b_paths, dtype=np.float64)
    eps_paths = np.ascontiguousarray(eps_paths, dtype=np.float64)
    if b_paths.shape != eps_paths.shape:
        raise ValueError("b_paths and eps_paths must share a shape")
    n_steps = b_paths.shape[1] - 1
    if n_steps % record_every:
        raise ValueError("record_every must divide the noise step count")
    ebd_coeffs = np.ascontiguousarray(ebd_coeffs, dtype=np.float64)
    e0b_coeffs = np.ascontiguousarray(e0b_coeffs, dtype=np.float64)
    if ebd_coeffs.shape != (4,) or e0b_coeffs.shape != (4,):
        raise ValueError("gap maps must be cubic: four ascending coefficients")
    out = np.empty((b_paths.shape[0], n_steps // record_every + 1))
    impl = _pick(backend, _dressed_nb if HAS_NUMBA else None, _dressed_py)
    impl(b_paths, eps_paths, dt_noise, h_coupling, ebd_coeffs, e0b_coeffs,
         record_every, out)
    return out


def three_level_amplitudes(
    psi0: np.ndarray,
    t0: float,
    dt: float,
    n_steps: int,
    diag_base: np.ndarray,
    amp0: float,
    tone_w: np.ndarray,
    tone_signs: np.ndarray,
    carrier_w: np.ndarray,
    b_path: np.ndarray | None = None,
    eps_path: np.ndarray | None = None,
    n_sub: int | None = None,
    record_every: int = 1,
    backend: str | None = None,
) -> np.ndarray:
    """Complex amplitude records of one trajectory, shape (n_rec+1, 3).

    The Hamiltonian in the fixed bare order (+1, 0, -1) is

        H = diag(diag_base) + b(t) * diag(1, 0, -1)
            + A(t) f(t) [ |+1><0| e^{i c0 t} + |0><-1| e^{i c1 t} + h.c. ]

    with f(t) = sum_j signs[j] cos(tone_w[j] t) and A(t) = amp0 (1 +
    eps(t)).  Setting both carrier frequencies to zero and loading the
    level energies into diag_base gives the lab frame; loading zeros and
    the signed carrier pair gives the interaction picture.  b and eps
    are piecewise constant over n_sub integration steps.  The state is
    renormalized at each record point.
    """
    psi0 = np.ascontiguousarray(psi0, dtype=np.complex128)
    if psi0.shape != (3,):
        raise ValueError("psi0 must be a 3-vector")
    if n_steps % record_every:
        raise ValueError("record_every must divide n_steps")
    if b_path is None:
        b_path = np.zeros(1)
    if eps_path is None:
        eps_path = np.zeros(1)
    b_path = np.ascontiguousarray(b_path, dtype=np.float64)
    eps_path = np.ascontiguousarray(eps_path, dtype=np.float64)
    if len(b_path) != len(eps_path):
        raise ValueError("b_path and eps_path must share a length")
    if n_sub is None:
        n_sub = n_steps + 1  # constant noise over the whole run
    if (n_steps - 1) // n_sub >= len(b_path):
        raise ValueError("noise path too short for n_steps/n_sub")
    diag_base = np.ascontiguousarray(diag_base, dtype=np.float64)
    tone_w = np.ascontiguousarray(tone_w, dtype=np.float64)
    tone_signs = np.ascontiguousarray(tone_signs, dtype=np.float64)
    carrier_w = np.ascontiguousarray(carrier_w, dtype=np.float64)
    if tone_w.shape != (4,) or tone_signs.shape != (4,) or carrier_w.shape != (2,):
        raise ValueError("expected 4 tones, 4 signs, 2 carriers")
    out = np.empty((n_steps // record_every + 1, 3), dtype=np.complex128)
    impl = _pick(backend, _three_level_nb if HAS_NUMBA else None, _three_level_py)
    impl(psi0, t0, dt, n_steps, diag_base, amp0, tone_w, tone_signs,
         carrier_w, b_path, eps_path, n_sub, record_every, out)
    return out
