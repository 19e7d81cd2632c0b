"""Hamiltonian builders for the driven spin-1 system at three model tiers.

The same physics is expressible at three levels of reduction:

* lab frame: static zero-field and Zeeman terms plus a four-tone cosine
  drive through Sx, nothing rotated away;
* interaction picture: the drive conjugated by the static propagator,
  every counter-rotating term retained;
* dressed effective: time-independent (or slowly rotating) operators
  acting on the bright/dark/zero states after averaging the drive.

Builders are pure functions of (parameters, time, scale factors) and
return :class:`~trispin.operators.OperatorMatrix`.  Lab-frame and
interaction-picture matrices are expressed in the bare (+1, 0, -1)
ordering; dressed-tier operators in the dressed (B, D, 0) ordering.
All frequencies are angular (rad/us).

The ``drive_scale`` argument on the lab and interaction-picture builders
carries every multiplier the caller wants on the drive amplitude: the
sqrt(2) that makes the per-tone matrix element equal the nominal Rabi
rate, and the (1 + eps(t)) common-mode amplitude error.  The builders
themselves never fold those in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import ConfigError
from .operators import OperatorMatrix

__all__ = [
    "Tier",
    "SystemParams",
    "GateParams",
    "SensingParams",
    "build_lab_frame",
    "build_ip_drive",
    "build_lambda_red",
    "build_lambda_blue",
    "build_red_effective",
    "build_blue_effective",
    "build_total_effective",
    "build_noise_op",
    "build_gate",
    "build_double_drive_effective",
    "build_sensing",
]

_SQ2 = math.sqrt(2.0)

_SX = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=np.complex128) / _SQ2
_SZ = np.diag([1.0, 0.0, -1.0]).astype(np.complex128)
_SX2 = _SX @ _SX
_SZ2 = np.diag([1.0, 0.0, 1.0]).astype(np.complex128)
_SY2 = np.array(
    [[0.5, 0.0, -0.5], [0.0, 1.0, 0.0], [-0.5, 0.0, 0.5]], dtype=np.complex128
)
_EYE = np.eye(3, dtype=np.complex128)

# S_y restricted to one leg of the lambda system: -i|-1><0| + h.c. and
# +i|+1><0| + h.c. in the bare (+1, 0, -1) ordering.
_SY_M1 = np.zeros((3, 3), dtype=np.complex128)
_SY_M1[2, 1] = -1j
_SY_M1[1, 2] = 1j
_SY_P1 = np.zeros((3, 3), dtype=np.complex128)
_SY_P1[0, 1] = 1j
_SY_P1[1, 0] = -1j


class Tier(str, Enum):
    """Model tier selecting which Hamiltonian presentation is in force."""

    LAB_FRAME = "lab"
    INTERACTION_PICTURE = "ip"
    DRESSED_EFFECTIVE = "dressed"

    @classmethod
    def coerce(cls, value) -> "Tier":
        """Accept a Tier or its string value; anything else is a ConfigError."""
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            valid = ", ".join(t.value for t in cls)
            raise ConfigError(f"unknown tier {value!r}; expected one of: {valid}")


def _require_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ConfigError(f"{name} must be positive and finite, got {value!r}")
    return value


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SystemParams:
    """Operating point of the continuously driven three-level system.

    omega0
        Zero-field splitting of the |+-1> doublet above |0> (rad/us).
    omegaB
        Zeeman splitting contribution, half the |+1>/|-1> energy
        difference (rad/us).
    rabi
        Nominal per-tone Rabi rate of the dressing drive (rad/us).
    delta1
        Red-pair detuning: both lower tones sit this far below their
        transitions (rad/us).
    delta2
        Blue-pair detuning: both upper tones sit this far above their
        transitions (rad/us).  Normally delta2 < delta1; that asymmetry
        is an operating choice, not a validity condition, so it is not
        enforced here.
    tier
        Which model tier consumers should build.
    """

    omega0: float
    omegaB: float
    rabi: float
    delta1: float
    delta2: float
    tier: Tier = Tier.DRESSED_EFFECTIVE

    def __post_init__(self):
        object.__setattr__(self, "omega0", _require_positive("omega0", self.omega0))
        object.__setattr__(self, "omegaB", _require_positive("omegaB", self.omegaB))
        object.__setattr__(self, "rabi", _require_positive("rabi", self.rabi))
        object.__setattr__(self, "delta1", _require_positive("delta1", self.delta1))
        object.__setattr__(self, "delta2", _require_positive("delta2", self.delta2))
        object.__setattr__(self, "tier", Tier.coerce(self.tier))

    @property
    def upper_transition(self) -> float:
        """|0> -> |+1> transition frequency, omega0 + omegaB (rad/us)."""
        return self.omega0 + self.omegaB

    @property
    def lower_transition(self) -> float:
        """|0> -> |-1> transition frequency, omega0 - omegaB (rad/us, signed)."""
        return self.omega0 - self.omegaB

    def bare_energies(self) -> np.ndarray:
        """Static level energies (E_+1, E_0, E_-1) = (omega0 + omegaB, 0, omega0 - omegaB)."""
        return np.array([self.upper_transition, 0.0, self.lower_transition])

    def drive_tones(self) -> tuple[np.ndarray, np.ndarray]:
        """Four drive tone frequencies and their signs.

        Two tones detuned delta1 below the transitions, two detuned
        delta2 above; the fourth tone enters with a minus sign, which is
        what makes the blue pair address the dark state.
        """
        up, low = self.upper_transition, self.lower_transition
        tones = np.array(
            [up - self.delta1, low - self.delta1, up + self.delta2, low + self.delta2]
        )
        signs = np.array([1.0, 1.0, 1.0, -1.0])
        return tones, signs


@dataclass(frozen=True)
class GateParams:
    """Two-tone gate drive addressing the |0> <-> |B> transition.

    rabi_g is the per-tone gate Rabi rate (rad/us); phase enters each
    cosine as cos(omega t + phase), so phase = pi/2 turns the x-type
    rotation into a y-type one.  mode selects whether both bare
    transitions are driven ("two_field", the phase-matched pair that
    couples |0> only to |B>) or just the |0> <-> |+1> tone
    ("single_field", which couples |0> to both |B> and |D>).
    """

    rabi_g: float
    phase: float = 0.0
    mode: str = "two_field"

    def __post_init__(self):
        object.__setattr__(self, "rabi_g", _require_positive("rabi_g", self.rabi_g))
        object.__setattr__(self, "phase", _require_finite("phase", self.phase))
        if self.mode not in ("two_field", "single_field"):
            raise ConfigError(
                f"gate mode must be 'two_field' or 'single_field', got {self.mode!r}"
            )


@dataclass(frozen=True)
class SensingParams:
    """Raman-type sensing configuration in the dressed frame.

    signal_g is the amplitude of the signal coupling on B <-> D,
    rabi_c the control Rabi rate on 0 <-> D, and one_photon_detuning
    the common detuning delta both terms rotate at (all rad/us).  The
    control term carries an extra sqrt(2), so the resonant full-contrast
    condition is sqrt(2) rabi_c = signal_g: then the two legs produce
    equal second-order shifts on |B> and |0> and the two-photon
    transfer runs at full amplitude.
    """

    signal_g: float
    rabi_c: float
    one_photon_detuning: float

    def __post_init__(self):
        for name in ("signal_g", "rabi_c"):
            value = _require_finite(name, getattr(self, name))
            if value < 0.0:
                raise ConfigError(f"{name} must be nonnegative, got {value!r}")
            object.__setattr__(self, name, value)
        object.__setattr__(
            self,
            "one_photon_detuning",
            _require_finite("one_photon_detuning", self.one_photon_detuning),
        )

    @property
    def resonant(self) -> bool:
        """True when sqrt(2) rabi_c matches signal_g to 1e-9 relative."""
        return math.isclose(
            _SQ2 * self.rabi_c, self.signal_g, rel_tol=1e-9, abs_tol=0.0
        )


def _drive_modulation(params: SystemParams, t: float) -> float:
    tones, signs = params.drive_tones()
    return float(np.dot(signs, np.cos(tones * t)))


def build_lab_frame(
    params: SystemParams, t: float, drive_scale: float = 1.0
) -> OperatorMatrix:
    """Full lab-frame Hamiltonian at time t, bare basis.

    H = omega0 Sz^2 + omegaB Sz + drive_scale * rabi * Sx *
        [cos((omega0+omegaB-delta1) t) + cos((omega0-omegaB-delta1) t)
         + cos((omega0+omegaB+delta2) t) - cos((omega0-omegaB+delta2) t)]

    drive_scale multiplies the whole drive term; callers wanting the
    per-tone matrix element on the bare transitions to equal rabi pass
    sqrt(2) (times any common-mode amplitude error).
    """
    drive = drive_scale * params.rabi * _drive_modulation(params, t)
    h = params.omega0 * _SZ2 + params.omegaB * _SZ + drive * _SX
    return OperatorMatrix(h)


def build_ip_drive(
    params: SystemParams, t: float, drive_scale: float = 1.0
) -> OperatorMatrix:
    """Interaction-picture drive at time t, bare basis.

    The lab Hamiltonian minus its static part, conjugated by the static
    propagator: element (j, k) of the drive picks up
    exp(+i (E_j - E_k) t) with E = (omega0+omegaB, 0, omega0-omegaB).
    Nothing is averaged; all counter-rotating terms survive.
    """
    drive = drive_scale * params.rabi * _drive_modulation(params, t)
    phases = np.exp(1j * params.bare_energies() * t)
    h = (phases[:, None] * (drive * _SX)) * phases.conj()[None, :]
    return OperatorMatrix(h)


def build_lambda_red(rabi: float, delta: float, t: float) -> OperatorMatrix:
    """Red-detuned lambda pair in its rotating frame, bare basis.

    H = rabi (|0><-1| + |0><+1|) e^{-i delta t} + h.c.; both legs share
    the phase, so the pair couples |0> to |B> alone.
    """
    _require_positive("delta", delta)
    ph = float(rabi) * np.exp(-1j * float(delta) * t)
    h = np.zeros((3, 3), dtype=np.complex128)
    h[1, 2] = ph
    h[1, 0] = ph
    h[2, 1] = np.conj(ph)
    h[0, 1] = np.conj(ph)
    return OperatorMatrix(h)


def build_lambda_blue(rabi: float, delta: float, t: float) -> OperatorMatrix:
    """Blue-detuned lambda pair in its rotating frame, bare basis.

    H = rabi (|0><-1| - |0><+1|) e^{+i (delta/2) t} + h.c.: detuned by
    half the red detuning on the opposite side, with the sign flip on
    the |+1> leg that makes the pair couple |0> to |D> alone.
    """
    _require_positive("delta", delta)
    ph = float(rabi) * np.exp(1j * 0.5 * float(delta) * t)
    h = np.zeros((3, 3), dtype=np.complex128)
    h[1, 2] = ph
    h[1, 0] = -ph
    h[2, 1] = np.conj(ph)
    h[0, 1] = -np.conj(ph)
    return OperatorMatrix(h)


def build_red_effective(rabi: float, delta: float) -> OperatorMatrix:
    """Second-order effective Hamiltonian of the red pair alone.

    (rabi^2/delta) (2 Sx^2 + 4 Sz^2 - 4), bare basis: the pair sits
    below both transitions, so the driven bright state is pushed up by
    2 rabi^2/delta and |0> down by the same amount, dark untouched.
    The sign is fixed by averaging the exact rotating pair over one
    period (see the matching oracle test).
    """
    _require_positive("delta", delta)
    q = float(rabi) ** 2 / float(delta)
    return OperatorMatrix(q * (2.0 * _SX2 + 4.0 * _SZ2 - 4.0 * _EYE))


def build_blue_effective(rabi: float, delta: float) -> OperatorMatrix:
    """Second-order effective Hamiltonian of the blue pair alone.

    (rabi^2/delta) (4 Sx^2 - 4 Sz^2), bare basis: the pair sits
    delta/2 above both transitions, pushing the dark state down by
    4 rabi^2/delta and |0> up by the same amount, bright untouched.
    """
    _require_positive("delta", delta)
    q = float(rabi) ** 2 / float(delta)
    return OperatorMatrix(q * (4.0 * _SX2 - 4.0 * _SZ2))


def build_total_effective(rabi: float, delta: float) -> OperatorMatrix:
    """Combined effective Hamiltonian of both pairs.

    (rabi^2/delta) (6 Sx^2 - 4), bare basis.  The half-detuned blue
    pair's shift on |0> exactly cancels the red pair's, so |B> and |0>
    are degenerate and the dark state sits 6 rabi^2/delta below them;
    the full drive at independent detunings lifts that degeneracy by
    the residual gap the robust-point search tunes.
    """
    _require_positive("delta", delta)
    q = float(rabi) ** 2 / float(delta)
    return OperatorMatrix(q * (6.0 * _SX2 - 4.0 * _EYE))


def build_noise_op(
    tier, b_value: float, params: SystemParams | None = None, t: float = 0.0
) -> OperatorMatrix:
    """Magnetic-noise coupling operator for one tier.

    Lab frame and interaction picture: b Sz in the bare basis (Sz is
    diagonal in the static eigenbasis, so it is untouched by the frame
    change; in dressed labels the same matrix reads
    b (|B><D| + |D><B|)).  Dressed effective: the slowly rotating form
    b (|B><D| e^{-i (3/2) delta1 t} + h.c.) in the dressed (B, D, 0)
    ordering, which needs params for delta1.
    """
    tier = Tier.coerce(tier)
    b = _require_finite("b_value", b_value)
    if tier in (Tier.LAB_FRAME, Tier.INTERACTION_PICTURE):
        return OperatorMatrix(b * _SZ)
    if params is None:
        raise ConfigError("dressed-tier noise operator needs params for delta1")
    ph = b * np.exp(-1.5j * params.delta1 * t)
    h = np.zeros((3, 3), dtype=np.complex128)
    h[0, 1] = ph
    h[1, 0] = np.conj(ph)
    return OperatorMatrix(h)


def build_gate(gate: GateParams, params: SystemParams, t: float) -> OperatorMatrix:
    """Gate drive Hamiltonian at time t, bare basis.

    Each tone is rabi_g cos(omega t + phase) on its own bare transition,
    with omega taken from the static spectrum: omega0 + omegaB for the
    |0> <-> |+1> leg and omega0 - omegaB for the |0> <-> |-1> leg.  In
    two_field mode the phase-matched pair drives |0> <-> |B> at angular
    rate sqrt(2) rabi_g; single_field mode keeps only the |+1> tone.
    """
    h = np.zeros((3, 3), dtype=np.complex128)
    c_up = gate.rabi_g * math.cos(params.upper_transition * t + gate.phase)
    h[1, 0] = c_up
    h[0, 1] = c_up
    if gate.mode == "two_field":
        c_low = gate.rabi_g * math.cos(params.lower_transition * t + gate.phase)
        h[1, 2] = c_low
        h[2, 1] = c_low
    return OperatorMatrix(h)


def build_double_drive_effective(
    rabi1: float, rabi2: float, delta: float, t: float
) -> OperatorMatrix:
    """Effective Hamiltonian of a second drive under a first dressing drive.

    With the first drive of rate rabi1 resonant on the dressed system
    and the second pair of rate rabi2 detuned by delta, second-order
    averaging leaves, in the bare basis,

        (rabi2^2/delta) [Sz^2 cos^2(rabi1 t / sqrt 2)
                         + Sy^2 sin^2(rabi1 t / sqrt 2)
                         + (sin(sqrt 2 rabi1 t) / (2 sqrt 2))
                           (S_y^{-1} - S_y^{+1})]

    where S_y^{-+1} are the single-leg pieces of Sy.  In the doubly
    dressed basis this is a static Sx^2 term: see the matching test for
    the exact demodulation.
    """
    _require_positive("delta", delta)
    pref = float(rabi2) ** 2 / float(delta)
    arg = float(rabi1) * t / _SQ2
    c2 = math.cos(arg) ** 2
    s2 = math.sin(arg) ** 2
    s3 = math.sin(_SQ2 * float(rabi1) * t) / (2.0 * _SQ2)
    h = pref * (c2 * _SZ2 + s2 * _SY2 + s3 * (_SY_M1 - _SY_P1))
    return OperatorMatrix(h)


def build_sensing(
    sensing: SensingParams, params: SystemParams, t: float
) -> OperatorMatrix:
    """Raman sensing Hamiltonian at time t, dressed (B, D, 0) ordering.

    signal_g (|B><D| e^{-i delta t} + h.c.)
    + sqrt(2) rabi_c (|0><D| e^{-i delta t} + h.c.)

    with delta the shared one-photon detuning.  Both terms rotate
    together, so the two-photon B <-> 0 resonance is automatic; the
    sqrt(2) on the control keeps the second-order shifts of |B> and |0>
    equal exactly when sqrt(2) rabi_c = signal_g.  Only meaningful on
    the dressed tier.
    """
    if params.tier is not Tier.DRESSED_EFFECTIVE:
        raise ConfigError("sensing Hamiltonian is defined on the dressed tier only")
    ph = np.exp(-1j * sensing.one_photon_detuning * t)
    h = np.zeros((3, 3), dtype=np.complex128)
    h[0, 1] = sensing.signal_g * ph
    h[2, 1] = _SQ2 * sensing.rabi_c * ph
    h[1, 0] = np.conj(h[0, 1])
    h[1, 2] = np.conj(h[2, 1])
    return OperatorMatrix(h)
