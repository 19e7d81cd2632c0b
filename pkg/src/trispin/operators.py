"""Spin-1 operator algebra, basis transforms, and exact unitary steps.

Conventions used throughout the package:

* The bare basis is ordered ``(+1, 0, -1)`` by magnetic quantum number.
  All bare-basis matrices in this module are written in that order.
* The dressed basis is ordered ``(B, D, 0)`` with

      |B> = (|+1> + |-1>) / sqrt(2)
      |D> = (|+1> - |-1>) / sqrt(2)

  and |0> unchanged.  In the dressed basis S_z acts as |B><D| + |D><B|,
  which is why a magnetic field couples the bright and dark states but
  leaves |0> alone.
* All frequencies are direct numbers: a quantity quoted as "70 MHz"
  enters a Hamiltonian as ``70.0`` with time measured in microseconds.
  No 2*pi factors are inserted anywhere.

The module deliberately stays at fixed dimension three.  Propagation
steps are exact matrix exponentials of 3x3 Hermitian matrices via
eigendecomposition; there is no Trotterization at this layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BARE",
    "DRESSED",
    "StateVector",
    "OperatorMatrix",
    "RobustnessReport",
    "spin1_operators",
    "identity_op",
    "to_dressed",
    "from_dressed",
    "op_to_dressed",
    "op_from_dressed",
    "hermitian_unitary_step",
    "verify_robust_conditions",
    "ket_plus1",
    "ket_zero",
    "ket_minus1",
    "ket_b",
    "ket_d",
    "ket_psi_plus",
    "ket_psi_minus",
]

BARE = "bare"
DRESSED = "dressed"

_NORM_TOL = 1e-10
_HERM_TOL = 1e-12

_SQ2 = np.sqrt(2.0)

# Rows are <B|, <D|, <0| written in the bare (+1, 0, -1) basis, so this
# matrix maps bare amplitude vectors to dressed amplitude vectors.  It is
# real orthogonal, hence its transpose is the inverse map.
_W_DRESSED_FROM_BARE = np.array(
    [
        [1.0 / _SQ2, 0.0, 1.0 / _SQ2],
        [1.0 / _SQ2, 0.0, -1.0 / _SQ2],
        [0.0, 1.0, 0.0],
    ]
)


def _as_amplitudes(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.shape != (3,):
        raise ValueError(f"amplitude vector must have shape (3,), got {arr.shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized three-component amplitude vector in a declared basis.

    Parameters
    ----------
    amplitudes:
        Three complex numbers.  The squared magnitudes must sum to one
        within 1e-10; construction rejects anything else rather than
        silently renormalizing.
    basis_tag:
        Either ``BARE`` (ordering ``+1, 0, -1``) or ``DRESSED``
        (ordering ``B, D, 0``).  The tag only declares how the
        components are to be read; transforms between the two are
        unitary and exactly invertible.
    """

    amplitudes: np.ndarray
    basis_tag: str = BARE

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _as_amplitudes(self.amplitudes))
        if self.basis_tag not in (BARE, DRESSED):
            raise ValueError(f"unknown basis tag {self.basis_tag!r}")
        norm_sq = float(np.sum(np.abs(self.amplitudes) ** 2))
        if abs(norm_sq - 1.0) > _NORM_TOL:
            raise ValueError(f"state not normalized: sum |a|^2 = {norm_sq!r}")

    @property
    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def overlap(self, other: "StateVector") -> complex:
        """Inner product <self|other>; both states must share a basis tag."""
        if self.basis_tag != other.basis_tag:
            raise ValueError("cannot overlap states in different bases")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def population(self, other: "StateVector") -> float:
        """|<self|other>|^2."""
        return float(abs(self.overlap(other)) ** 2)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """3x3 complex matrix, optionally declared (and verified) Hermitian.

    Entries carry angular-frequency units when the matrix represents a
    Hamiltonian.  When ``hermitian_flag`` is set, construction verifies
    max|M - M^dagger| <= 1e-12 * max|M|; unitary propagators and other
    non-Hermitian operators are constructed with the flag cleared.
    """

    entries: np.ndarray
    hermitian_flag: bool = True

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.complex128)
        if arr.shape != (3, 3):
            raise ValueError(f"operator must have shape (3, 3), got {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)
        if self.hermitian_flag:
            scale = float(np.max(np.abs(arr)))
            dev = float(np.max(np.abs(arr - arr.conj().T)))
            if dev > _HERM_TOL * max(scale, 1e-300):
                raise ValueError(
                    f"matrix declared Hermitian but max|M - M^+| = {dev!r} "
                    f"at scale {scale!r}"
                )

    def matvec(self, state: StateVector) -> np.ndarray:
        """Apply to a state's amplitudes; returns a raw (unnormalized) array."""
        return self.entries @ state.amplitudes


@dataclass(frozen=True)
class RobustnessReport:
    """Diagnostics for a candidate noise-protected two-state subspace.

    ``max_sz_matrix_element`` is max_{i,j} |<R_i|S_z|R_j>| over the two
    candidate states (zero means magnetic noise neither dephases nor
    mixes the pair at first order).  ``eigenvalue_spread_in_R`` is the
    eigenvalue spread of the 2x2 block of the driving Hamiltonian
    projected onto the pair, which captures both a diagonal energy
    difference and off-diagonal leakage (zero means no relative dynamical
    phase from drive-amplitude fluctuations).  ``min_gap_nu`` is the
    distance from the pair's mean energy to the nearest complementary
    eigenvalue of the driving Hamiltonian; it sets the protection
    bandwidth.
    """

    max_sz_matrix_element: float
    eigenvalue_spread_in_R: float
    min_gap_nu: float

    def __post_init__(self):
        for name in ("max_sz_matrix_element", "eigenvalue_spread_in_R", "min_gap_nu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def spin1_operators() -> tuple[OperatorMatrix, OperatorMatrix, OperatorMatrix]:
    """Return (Sx, Sy, Sz) in the bare (+1, 0, -1) basis.

    These are the standard spin-1 matrices; they satisfy the cyclic
    commutation relations [Sx, Sy] = i Sz and permutations, Sz is
    diagonal with eigenvalues (+1, 0, -1), and Sx^2 has eigenvalues
    {1, 1, 0} with |D> spanning the null space.
    """
    sx = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=np.complex128) / _SQ2
    sy = (
        np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=np.complex128) / _SQ2
    )
    sz = np.diag([1.0, 0.0, -1.0]).astype(np.complex128)
    return (
        OperatorMatrix(sx),
        OperatorMatrix(sy),
        OperatorMatrix(sz),
    )


def identity_op() -> OperatorMatrix:
    return OperatorMatrix(np.eye(3, dtype=np.complex128))


def to_dressed(state: StateVector) -> StateVector:
    """Re-express a bare-basis state in the dressed (B, D, 0) basis."""
    if state.basis_tag != BARE:
        raise ValueError("to_dressed expects a bare-basis state")
    return StateVector(_W_DRESSED_FROM_BARE @ state.amplitudes, DRESSED)


def from_dressed(state: StateVector) -> StateVector:
    """Inverse of :func:`to_dressed`; round trips are exact to 1e-12."""
    if state.basis_tag != DRESSED:
        raise ValueError("from_dressed expects a dressed-basis state")
    return StateVector(_W_DRESSED_FROM_BARE.T @ state.amplitudes, BARE)


def op_to_dressed(op: OperatorMatrix) -> OperatorMatrix:
    """Conjugate a bare-basis operator into the dressed basis."""
    w = _W_DRESSED_FROM_BARE
    return OperatorMatrix(w @ op.entries @ w.T, hermitian_flag=op.hermitian_flag)


def op_from_dressed(op: OperatorMatrix) -> OperatorMatrix:
    """Conjugate a dressed-basis operator into the bare basis."""
    w = _W_DRESSED_FROM_BARE
    return OperatorMatrix(w.T @ op.entries @ w, hermitian_flag=op.hermitian_flag)


def _expm_minus_i_h_dt(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i h dt) for Hermitian h via eigendecomposition.

    Degenerate eigenvalues need no special handling: any orthonormal
    eigenbasis produced by the solver yields the same exponential.
    """
    vals, vecs = np.linalg.eigh(h)
    phases = np.exp(-1j * vals * dt)
    return (vecs * phases) @ vecs.conj().T


def hermitian_unitary_step(H: OperatorMatrix, dt: float) -> OperatorMatrix:
    """Exact propagator U = exp(-i H dt) for a Hermitian 3x3 H.

    The result is unitary to 1e-12 by construction (product of exact
    phases in the eigenbasis).  Non-Hermitian input is rejected; callers
    holding a raw array should wrap it in :class:`OperatorMatrix` first
    so the Hermiticity check runs.
    """
    if not H.hermitian_flag:
        raise ValueError("hermitian_unitary_step requires a Hermitian operator")
    return OperatorMatrix(_expm_minus_i_h_dt(H.entries, dt), hermitian_flag=False)


def verify_robust_conditions(
    robust_states: tuple[StateVector, StateVector],
    H_d: OperatorMatrix,
    tol: float = 1e-8,
) -> RobustnessReport:
    """Check the two defining conditions of a noise-protected qubit pair.

    The candidate pair (R_1, R_2) must be orthonormal (validated within
    ``tol``).  ``H_d`` is the driving Hamiltonian in the bare basis;
    dressed-tagged states are converted before evaluation.  The report is
    purely diagnostic: a pair that fails either condition still produces
    a report, with the failure visible in the corresponding field.
    """
    states = []
    for s in robust_states:
        states.append(from_dressed(s) if s.basis_tag == DRESSED else s)
    r1, r2 = (s.amplitudes for s in states)
    if abs(np.vdot(r1, r2)) > tol:
        raise ValueError("robust_states must be orthonormal")

    _, _, sz = spin1_operators()
    szm = sz.entries
    h = H_d.entries

    pair = (r1, r2)
    sz_block = np.array([[np.vdot(a, szm @ b) for b in pair] for a in pair])
    h_block = np.array([[np.vdot(a, h @ b) for b in pair] for a in pair])

    max_sz = float(np.max(np.abs(sz_block)))
    block_eigs = np.linalg.eigvalsh(h_block)
    spread = float(block_eigs[-1] - block_eigs[0])

    lam_r = float(np.mean(np.real(np.diag(h_block))))
    vals, vecs = np.linalg.eigh(h)
    proj = np.abs(vecs.conj().T @ r1) ** 2 + np.abs(vecs.conj().T @ r2) ** 2
    complementary = int(np.argmin(proj))
    nu = float(abs(vals[complementary] - lam_r))

    return RobustnessReport(
        max_sz_matrix_element=max_sz,
        eigenvalue_spread_in_R=spread,
        min_gap_nu=nu,
    )


def _ket(i: int, basis: str) -> StateVector:
    amp = np.zeros(3, dtype=np.complex128)
    amp[i] = 1.0
    return StateVector(amp, basis)


def ket_plus1() -> StateVector:
    return _ket(0, BARE)


def ket_zero() -> StateVector:
    return _ket(1, BARE)


def ket_minus1() -> StateVector:
    return _ket(2, BARE)


def ket_b() -> StateVector:
    """Bright state (|+1> + |-1>)/sqrt(2), expressed in the bare basis."""
    return StateVector(np.array([1.0, 0.0, 1.0]) / _SQ2, BARE)


def ket_d() -> StateVector:
    """Dark state (|+1> - |-1>)/sqrt(2), expressed in the bare basis."""
    return StateVector(np.array([1.0, 0.0, -1.0]) / _SQ2, BARE)


def ket_psi_plus() -> StateVector:
    """(|0> + |B>)/sqrt(2), expressed in the bare basis."""
    return StateVector(np.array([0.5, 1.0 / _SQ2, 0.5]), BARE)


def ket_psi_minus() -> StateVector:
    """(|0> - |B>)/sqrt(2), expressed in the bare basis."""
    return StateVector(np.array([-0.5, 1.0 / _SQ2, -0.5]), BARE)
