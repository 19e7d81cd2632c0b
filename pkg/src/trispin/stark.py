"""Stark-shift analytics: level shifts, dressed gaps, robust detuning search.

Four layers, each feeding the next:

- ``second_order_shifts`` evaluates the closed second-order level-shift
  brackets of the four-tone drive for the bright, dark, and zero states.
  The three shifts are exactly traceless by construction.
- ``numeric_gaps`` measures the true dressed gaps E_BD (bright-dark) and
  E_0B (zero-bright) of the full interaction-picture model, to all
  orders in the drive.  Identification and precision are split: a
  windowed-DFT pass over noiseless coherence signals locates the beat
  lines, while the precise values come from quasi-energies of the
  one-period propagator, Richardson-refined in the step size.  Because
  eigenphases only determine a gap modulo the Floquet span, the integer
  part is pinned by an adaptive continuation in drive amplitude anchored
  in the perturbative regime, where the second-order brackets are exact.
  A beat line is required to agree with the continued gap up to an
  integer sideband offset; micromotion sidebands of the bright-dark
  coherence can outweigh the secular line, so the spectrum alone is
  never trusted for the integer part.
- ``find_robust_point`` tunes the second detuning until the zero-bright
  gap is stationary under drive-amplitude changes (central difference
  with step delta_omega * rabi), by a bracketing scan plus golden-section
  descent of the absolute objective and a terminal five-point quadratic
  root fit.  Probes snap to a quarter-MHz grid so the one-period
  propagator stays well defined; the fit restores sub-grid resolution.
- ``dephasing_budget`` and ``lower_bound_t2_table`` turn gaps and
  sensitivities into rates (gamma_m from the measured residual S_z of
  the exact eigenstates, gamma_d from the relative gap shift delta_r)
  and protected-coherence estimates.

Units follow the package convention: angular frequencies as direct
numbers (a "500 MHz" detuning enters as 500.0), times in microseconds,
rates quoted in Hz.  All gap extraction runs in the interaction picture
regardless of ``params.tier``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ._kernels import three_level_amplitudes
from .envelopes import THRESHOLD, EnvelopeParams, T2Estimate, p_total
from .exceptions import (
    AmbiguousSpectrumError,
    ConfigError,
    NumericalError,
    ResonanceError,
    RobustPointError,
)
from .hamiltonians import SystemParams
from .noise import DriveNoiseParams, OUParams

__all__ = [
    "StarkShifts",
    "DephasingBudget",
    "T2TableRow",
    "DEFAULT_T2_TABLE_ROWS",
    "second_order_shifts",
    "second_order_delta2",
    "numeric_gaps",
    "find_robust_point",
    "residual_sz_mixing",
    "dephasing_budget",
    "gap_maps",
    "lower_bound_t2_table",
]

_TWO_PI = 2.0 * math.pi
_SQ2 = math.sqrt(2.0)

# Bare basis order (+1, 0, -1); dressed directions for labeling.
_BRIGHT = np.array([1.0, 0.0, 1.0]) / _SQ2
_DARK = np.array([1.0, 0.0, -1.0]) / _SQ2
_ZERO = np.array([0.0, 1.0, 0.0])
_SZ_DIAG = np.array([1.0, 0.0, -1.0])


# -- domain types -------------------------------------------------------------

@dataclass(frozen=True)
class StarkShifts:
    """Second-order level shifts and, when measured, the dressed gaps.

    dE_B, dE_D, dE_0 are the second-order shifts of the bright, dark,
    and zero states; dE_0 equals -(dE_B + dE_D) exactly.  E_BD and E_0B
    hold the numerically measured gap magnitudes where available and
    None otherwise.  The ``second_order_*`` properties give the purely
    perturbative gap predictions for comparison.
    """

    dE_B: float
    dE_D: float
    dE_0: float
    E_BD: float | None = None
    E_0B: float | None = None

    @property
    def second_order_e_bd(self) -> float:
        return self.dE_B - self.dE_D

    @property
    def second_order_e_0b(self) -> float:
        return self.dE_0 - self.dE_B


@dataclass(frozen=True)
class DephasingBudget:
    """Dephasing rates of the protected qubit, all in Hz.

    gamma_m: first-order rate from the residual S_z of the exact
        eigenstates (squared matrix element times S_BB(0)/2; the linear
        reading is exposed as ``diagnostics["gamma_m_linear_hz"]``).
    gamma_d: drive-noise rate delta_r * delta_omega * rabi / sqrt(2).
    delta_r: relative zero-bright gap shift under a drive-amplitude
        change of delta_omega * rabi.
    setup_error_rates: order-of-magnitude rates for static set-up
        errors, keys "static_field_offset" and "relative_amplitude_error".
    """

    gamma_m: float
    gamma_d: float
    delta_r: float
    setup_error_rates: Mapping[str, float] = field(default_factory=dict)
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        rates = [self.gamma_m, self.gamma_d, self.delta_r]
        rates.extend(self.setup_error_rates.values())
        if any(r < 0 or not math.isfinite(r) for r in rates):
            raise ConfigError("dephasing rates must be finite and nonnegative")


@dataclass(frozen=True)
class T2TableRow:
    """One protected-coherence estimate row: inputs, robust point, curve."""

    omegaB: float
    rabi: float
    delta1: float
    gamma_d_hz: float
    delta2: float
    e_bd: float
    tau_us: tuple[float, ...]
    t2: tuple[T2Estimate, ...]


#: Operating points for the protected-coherence lower-bound table:
#: (omegaB, rabi, delta1, gamma_d_hz) per row.
DEFAULT_T2_TABLE_ROWS: tuple[tuple[float, float, float, float], ...] = (
    (10000.0, 60.0, 300.0, 285.0),
    (20000.0, 60.0, 300.0, 285.0),
    (30000.0, 75.0, 400.0, 285.0),
    (40000.0, 85.0, 450.0, 285.0),
    (50000.0, 100.0, 500.0, 285.0),
)


# -- second-order brackets ----------------------------------------------------

def _checked_inverse(terms: list[tuple[float, ...]]) -> list[float]:
    # Each term is a tuple of addends forming one denominator; reject
    # denominators within 1e-6 (relative to their addend scale) of zero.
    out = []
    for addends in terms:
        den = math.fsum(addends)
        scale = sum(abs(a) for a in addends)
        if abs(den) <= 1e-6 * scale:
            raise ResonanceError(
                f"near-singular denominator {'+'.join(f'{a:g}' for a in addends)}"
                f" = {den:g}"
            )
        out.append(1.0 / den)
    return out


def _bracket_sums(omega0: float, omegaB: float, delta1: float, delta2: float):
    # Per-unit (rabi^2/8) second-order sums for the bright and dark states.
    w0, wb, d1, d2 = omega0, omegaB, delta1, delta2
    inv_b = _checked_inverse([
        (d1,),
        (2 * w0, -d1),
        (2 * wb, d1),
        (2 * wb, -d1),
        (2 * wb, -d2),
        (2 * wb, d2),
        (-2 * wb, -d1, 2 * w0),
        (2 * wb, -d1, 2 * w0),
        (-2 * wb, d2, 2 * w0),
        (2 * wb, d2, 2 * w0),
    ])
    sum_b = (4 * inv_b[0] + 4 * inv_b[1]
             + inv_b[2] - inv_b[3]
             + inv_b[4] - inv_b[5]
             + inv_b[6] + inv_b[7] + inv_b[8] + inv_b[9])
    inv_d = _checked_inverse([
        (d2,),
        (2 * w0, d2),
        (2 * wb, -d2),
        (2 * wb, d2),
        (2 * wb, d1),
        (2 * wb, -d1),
        (-2 * wb, d2, 2 * w0),
        (2 * wb, d2, 2 * w0),
        (-2 * wb, -d1, 2 * w0),
        (2 * wb, -d1, 2 * w0),
    ])
    sum_d = (-4 * inv_d[0] + 4 * inv_d[1]
             + inv_d[2] - inv_d[3]
             + inv_d[4] - inv_d[5]
             + inv_d[6] + inv_d[7] + inv_d[8] + inv_d[9])
    return sum_b, sum_d


def _shifts(omega0, omegaB, rabi, delta1, delta2):
    sum_b, sum_d = _bracket_sums(omega0, omegaB, delta1, delta2)
    pref = rabi * rabi / 8.0
    de_b = pref * sum_b
    de_d = pref * sum_d
    return de_b, de_d, -(de_b + de_d)


def second_order_shifts(params: SystemParams) -> StarkShifts:
    """Second-order shifts of the bright, dark, and zero levels.

    Evaluates the closed detuning brackets of the four-tone drive; the
    zero-state shift is fixed by tracelessness.  Raises ResonanceError
    when a bracket denominator is within 1e-6 (relative) of zero.
    """
    de_b, de_d, de_0 = _shifts(
        params.omega0, params.omegaB, params.rabi, params.delta1, params.delta2
    )
    return StarkShifts(dE_B=de_b, dE_D=de_d, dE_0=de_0)


def second_order_delta2(
    omega0: float,
    omegaB: float,
    delta1: float,
    bracket: tuple[float, float] | None = None,
) -> float:
    """The detuning where the second-order zero and bright shifts balance.

    Solves dE_0(delta2) = dE_B(delta2); the drive amplitude cancels.  In
    the limit of large omega0 and omegaB the balance point is delta1/2.
    """
    from scipy.optimize import brentq

    lo, hi = bracket if bracket is not None else (delta1 / 4.0, delta1)
    if not 0.0 < lo < hi:
        raise ConfigError(f"bad detuning bracket ({lo:g}, {hi:g})")

    def gap2(d2: float) -> float:
        de_b, _, de_0 = _shifts(omega0, omegaB, 1.0, delta1, d2)
        return de_0 - de_b

    f_lo, f_hi = gap2(lo), gap2(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise RobustPointError(
            f"no second-order balance point in ({lo:g}, {hi:g})"
        )
    return float(brentq(gap2, lo, hi, xtol=1e-10, rtol=1e-14))


# -- one-period quasi-energy machinery ----------------------------------------

def _commensurate_q(values, max_q: int = 4) -> int | None:
    # Smallest q in {1, 2, 4} putting every frequency on the 1/q grid.
    q = 1
    while q <= max_q:
        if all(abs(v * q - round(v * q)) < 1e-9 * max(1.0, abs(v * q))
               for v in values):
            return q
        q *= 2
    return None


def _snap_quarter(x: float) -> float:
    return round(x * 4.0) / 4.0


def _eig_labeled(u: np.ndarray, q: int):
    # Quasi-energy fractions mod 1/q, labeled by dressed-state overlap.
    w, v = np.linalg.eig(u)
    span = 1.0 / q
    eps = np.mod(-np.angle(w) / (q * _TWO_PI), span)
    labels = {}
    for name, vec in (("B", _BRIGHT), ("D", _DARK), ("0", _ZERO)):
        labels[name] = int(np.argmax(np.abs(vec.conj() @ v) ** 2))
    if len(set(labels.values())) != 3:
        raise NumericalError(
            "quasi-energy eigenvectors do not separate into bright/dark/zero"
        )
    return eps, labels, v, span


class _GapTracker:
    """Signed dressed gaps on a commensurate detuning grid.

    Quasi-energies of the one-period propagator give each gap modulo the
    Floquet span 1/q; the tracker unfolds them to absolute values by a
    chain of small hops whose predictor is the second-order model
    difference between the endpoints.  The chain is anchored by an
    adaptive drive-amplitude continuation from rabi/8, where the
    second-order prediction is accurate to a tiny fraction of the span.
    Any hop whose unfolding residual exceeds 0.35 of the span is bisected
    (in amplitude freely, in detuning down to the half-grid) and fails
    hard rather than guess a branch.
    """

    _RESID_LIMIT = 0.35

    def __init__(self, omega0: float, omegaB: float, rabi: float, delta1: float):
        self.omega0 = float(omega0)
        self.omegaB = float(omegaB)
        self.rabi = float(rabi)
        self.delta1 = float(delta1)
        if min(self.omega0, self.omegaB, self.rabi, self.delta1) <= 0:
            raise ConfigError("omega0, omegaB, rabi, delta1 must be positive")
        if _commensurate_q((self.omega0, self.omegaB, self.delta1)) is None:
            raise ConfigError(
                "gap tracking needs omega0, omegaB, delta1 on a quarter grid"
            )
        # step counts are multiples of 500 so a 500-sample record divides
        nu_max = 2.0 * (self.omega0 + self.omegaB) + self.delta1
        self.n_search = 500 * int(math.ceil(10.0 * nu_max / 500.0))
        self.n_precise = 500 * int(math.ceil(20.0 * nu_max / 500.0))
        self._fracs_cache: dict = {}
        self._known: dict = {}  # (d2_key, scale_key) -> (ebd, e0b, precise)
        self.evaluations = 0

    # keys quantize the continuous coordinates for caching
    @staticmethod
    def _key(delta2: float, scale: float):
        return (round(delta2 * 4), round(scale * 1e9))

    def _q_of(self, delta2: float) -> int:
        q = _commensurate_q((self.omega0, self.omegaB, self.delta1, delta2))
        if q is None:
            raise NumericalError(
                f"detuning {delta2!r} is off the quarter-MHz grid"
            )
        return q

    def _e2nd(self, delta2: float, scale: float):
        de_b, de_d, de_0 = _shifts(
            self.omega0, self.omegaB, self.rabi * scale, self.delta1, delta2
        )
        return de_b - de_d, de_0 - de_b

    def _u_matrix(self, delta2: float, scale: float, n: int, q: int) -> np.ndarray:
        params = SystemParams(
            omega0=self.omega0, omegaB=self.omegaB, rabi=self.rabi,
            delta1=self.delta1, delta2=delta2,
        )
        tones, signs = params.drive_tones()
        carriers = np.array([params.upper_transition, -params.lower_transition])
        dt = q * _TWO_PI / n
        cols = []
        for j in range(3):
            psi0 = np.zeros(3, dtype=np.complex128)
            psi0[j] = 1.0
            rec = three_level_amplitudes(
                psi0, 0.0, dt, n, np.zeros(3), self.rabi * scale,
                tones, signs, carriers, record_every=n,
            )
            cols.append(rec[-1])
        self.evaluations += 1
        return np.column_stack(cols)

    def _gap_fracs(self, delta2: float, scale: float, n: int, q: int):
        eps, lab, _, span = _eig_labeled(self._u_matrix(delta2, scale, n, q), q)
        ebd = float(np.mod(eps[lab["B"]] - eps[lab["D"]], span))
        e0b = float(np.mod(eps[lab["0"]] - eps[lab["B"]], span))
        return ebd, e0b

    def fracs(self, delta2: float, scale: float, precise: bool):
        """Gap fractions mod 1/q; Richardson-refined when precise."""
        key = (*self._key(delta2, scale), precise)
        hit = self._fracs_cache.get(key)
        if hit is not None:
            return hit
        q = self._q_of(delta2)
        span = 1.0 / q
        if precise:
            n = q * self.n_precise
            c_bd, c_0b = self._gap_fracs(delta2, scale, n, q)
            f_bd, f_0b = self._gap_fracs(delta2, scale, 2 * n, q)

            def comb(c, f):
                c -= round((c - f) / span) * span
                return (4.0 * f - c) / 3.0

            out = (comb(c_bd, f_bd), comb(c_0b, f_0b), span)
        else:
            ebd, e0b = self._gap_fracs(delta2, scale, q * self.n_search, q)
            out = (ebd, e0b, span)
        self._fracs_cache[key] = out
        return out

    def _unfold(self, delta2, scale, pred, precise):
        # Snap measured fractions onto the branch nearest the prediction.
        f_bd, f_0b, span = self.fracs(delta2, scale, precise)
        out = []
        for frac, p in ((f_bd, pred[0]), (f_0b, pred[1])):
            val = frac + span * round((p - frac) / span)
            if abs(val - p) > self._RESID_LIMIT * span:
                return None
            out.append(val)
        return out[0], out[1]

    def _hop(self, src, dst, precise, depth: int = 0):
        # src/dst are (delta2, scale); src must be known.
        known = self._known[self._key(*src)]
        e2_src = self._e2nd(*src)
        e2_dst = self._e2nd(*dst)
        pred = (known[0] + e2_dst[0] - e2_src[0],
                known[1] + e2_dst[1] - e2_src[1])
        got = self._unfold(dst[0], dst[1], pred, precise)
        if got is not None:
            self._store(dst, got, precise)
            return
        if depth >= 8:
            raise NumericalError(
                f"gap branch tracking lost between {src} and {dst}"
            )
        if src[0] != dst[0]:
            mid_d2 = round(src[0] + dst[0]) / 2.0  # midpoint on the half grid
            if mid_d2 in (src[0], dst[0]):
                raise NumericalError(
                    f"gap branch unresolvable across ({src[0]}, {dst[0]})"
                )
            mid = (mid_d2, src[1])
        else:
            mid = (dst[0], 0.5 * (src[1] + dst[1]))
        if self._key(*mid) not in self._known:
            self._hop(src, mid, False, depth + 1)
        self._hop(mid, dst, precise, depth + 1)

    def _store(self, point, gaps, precise):
        key = self._key(*point)
        old = self._known.get(key)
        if old is None or (precise and not old[2]):
            self._known[key] = (gaps[0], gaps[1], precise)

    def _anchor(self, delta2: float):
        # Perturbative anchor plus amplitude continuation up to scale 1.
        d2 = float(round(delta2))
        if d2 <= 0:
            d2 = 1.0
        s = 0.125
        e2 = self._e2nd(d2, s)
        start = self._unfold(d2, s, e2, False)
        if start is None or abs(start[0] - e2[0]) > 0.1 or \
                abs(start[1] - e2[1]) > 0.1:
            raise NumericalError(
                "perturbative anchor disagrees with the second-order model"
            )
        self._store((d2, s), start, False)
        while s < 1.0:
            s_next = min(1.0, s * 1.18)
            self._hop((d2, s), (d2, s_next), False)
            s = s_next
        return d2

    def signed(self, delta2: float, scale: float = 1.0, precise: bool = True):
        """Unfolded signed (E_BD, E_0B) at a commensurate detuning."""
        key = self._key(delta2, scale)
        hit = self._known.get(key)
        if hit is not None and (hit[2] or not precise):
            return hit[0], hit[1]
        self._q_of(delta2)  # validate before any work
        if not self._known:
            self._anchor(delta2)
        # route: reach (delta2, 1.0) through scale-1 points, then rescale
        base_key = self._key(delta2, 1.0)
        if base_key not in self._known:
            src_d2 = min(
                (k[0] / 4.0 for k, v in self._known.items()
                 if k[1] == self._key(0.0, 1.0)[1]),
                key=lambda x: abs(x - delta2),
            )
            self._hop((src_d2, 1.0), (delta2, 1.0), precise and scale == 1.0)
        if scale != 1.0:
            self._hop((delta2, 1.0), (delta2, scale), precise)
        elif precise and not self._known[base_key][2]:
            self._hop((delta2, 1.0), (delta2, 1.0), True)
        got = self._known[self._key(delta2, scale)]
        return got[0], got[1]

    def signed_any(self, delta2: float, scale: float = 1.0,
                   precise: bool = True):
        """Signed gaps at any detuning; off-grid values are interpolated
        quadratically from the three nearest half-grid points."""
        if _commensurate_q((self.omega0, self.omegaB, self.delta1, delta2)):
            return self.signed(delta2, scale, precise)
        center = round(delta2 * 2.0) / 2.0
        xs = np.array([center - 0.5, center, center + 0.5])
        vals = [self.signed(x, scale, precise) for x in xs]
        ebd = float(np.polyval(np.polyfit(xs, [v[0] for v in vals], 2), delta2))
        e0b = float(np.polyval(np.polyfit(xs, [v[1] for v in vals], 2), delta2))
        return ebd, e0b


# -- spectral identification --------------------------------------------------

def _coherence_signals(params: SystemParams, scale: float, span_us: float):
    # Noiseless interaction-picture runs; returns (dt_sample, s_0B, s_BD).
    tones, signs = params.drive_tones()
    carriers = np.array([params.upper_transition, -params.lower_transition])
    dt_target = 0.63 / (2.0 * (params.omega0 + params.omegaB) + params.delta1)
    n_rec = int(math.ceil(span_us / 0.05))
    record_every = max(1, int(math.ceil(0.05 / dt_target)))
    dt = 0.05 / record_every
    n_steps = n_rec * record_every
    out = []
    for psi0 in (
        np.array([0.5, 1.0 / _SQ2, 0.5], dtype=np.complex128),  # psi+
        np.array([1.0, 0.0, 0.0], dtype=np.complex128),  # (B+D)/sqrt2
    ):
        rec = three_level_amplitudes(
            psi0, 0.0, dt, n_steps, np.zeros(3), params.rabi * scale,
            tones, signs, carriers, record_every=record_every,
        )
        a_b = (rec[:, 0] + rec[:, 2]) / _SQ2
        a_d = (rec[:, 0] - rec[:, 2]) / _SQ2
        a_0 = rec[:, 1]
        out.append((a_0 * a_b.conj(), a_b * a_d.conj()))
    return 0.05, out[0][0], out[1][1]


def _dominant_line(signal: np.ndarray, dt_sample: float) -> float | None:
    """Signed angular frequency of the strongest beat line, or None.

    Hann window, zero-padded FFT, quadratic peak interpolation on the
    log power.  Raises AmbiguousSpectrumError when a second distinct
    peak within 0.45 angular units carries at least half the main
    peak's amplitude.
    """
    sig = signal - signal.mean()
    if np.max(np.abs(sig)) < 1e-10 * max(np.max(np.abs(signal)), 1e-30):
        return None
    n = len(sig)
    win = np.hanning(n)
    n_fft = 1 << (int(n - 1).bit_length() + 3)
    spec = np.fft.fft(sig * win, n_fft)
    freq = np.fft.fftfreq(n_fft, d=dt_sample) * _TWO_PI
    power = np.abs(spec)
    band = np.abs(freq) <= 40.0
    idx_band = np.nonzero(band)[0]
    p_band = power[idx_band]
    k = int(np.argmax(p_band))
    i_peak = idx_band[k]
    # local maxima above half the main peak, away from the main lobe
    main = p_band[k]
    f_peak = freq[i_peak]
    bin_w = freq[1] - freq[0]
    guard = max(8, int(0.1 / bin_w))
    for j in np.nonzero(
        (p_band >= 0.5 * main)
        & (np.abs(idx_band - i_peak) > guard)
        & (np.abs(freq[idx_band] - f_peak) < 0.45)
    )[0]:
        lo, hi = max(0, j - 1), min(len(p_band) - 1, j + 1)
        if p_band[j] >= p_band[lo] and p_band[j] >= p_band[hi]:
            raise AmbiguousSpectrumError(
                f"competing beat lines near {f_peak:+.3f} and "
                f"{freq[idx_band[j]]:+.3f}"
            )
    # quadratic interpolation of the log power around the peak
    if 0 < i_peak < n_fft - 1:
        l_m, l_c, l_p = np.log(power[i_peak - 1: i_peak + 2] + 1e-300)
        den = l_m - 2.0 * l_c + l_p
        shift = 0.5 * (l_m - l_p) / den if den < 0 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
    else:
        shift = 0.0
    return float(f_peak + shift * bin_w)


def _wrap_half(x: float) -> float:
    return x - round(x)


# -- numeric gaps -------------------------------------------------------------

def numeric_gaps(
    params: SystemParams,
    *,
    rabi_scale: float = 1.0,
    span_us: float = 200.0,
) -> StarkShifts:
    """Measured dressed gaps |E_BD| and |E_0B| of the full drive model.

    Runs noiseless interaction-picture simulations from the two
    superposition states whose coherences beat at the gaps, identifies
    the beat lines spectrally, and refines with one-period quasi-energy
    continuation when the system frequencies sit on a quarter grid (an
    off-grid delta2 is interpolated from its half-grid neighbors; a
    fully off-grid system falls back to the spectral values).  The
    second-order shifts are evaluated at the effective drive
    ``rabi * rabi_scale``; setting ``rabi_scale`` to zero turns the
    drive off, which yields zero gaps.
    """
    if rabi_scale < 0 or not math.isfinite(rabi_scale):
        raise ConfigError("rabi_scale must be finite and nonnegative")
    de_b, de_d, de_0 = _shifts(
        params.omega0, params.omegaB, params.rabi * rabi_scale,
        params.delta1, params.delta2,
    )
    if rabi_scale == 0.0:
        return StarkShifts(dE_B=de_b, dE_D=de_d, dE_0=de_0, E_BD=0.0, E_0B=0.0)

    dt_s, s_0b, s_bd = _coherence_signals(params, rabi_scale, span_us)
    line_0b = _dominant_line(s_0b, dt_s)
    line_bd = _dominant_line(s_bd, dt_s)
    if line_0b is None and line_bd is None:
        return StarkShifts(dE_B=de_b, dE_D=de_d, dE_0=de_0, E_BD=0.0, E_0B=0.0)

    system_ok = _commensurate_q(
        (params.omega0, params.omegaB, params.delta1)
    ) is not None
    if not system_ok:
        # spectral-only fallback: magnitudes of the beat lines
        e_0b = abs(line_0b) if line_0b is not None else 0.0
        e_bd = abs(line_bd) if line_bd is not None else 0.0
        return StarkShifts(dE_B=de_b, dE_D=de_d, dE_0=de_0,
                           E_BD=e_bd, E_0B=e_0b)

    tracker = _GapTracker(params.omega0, params.omegaB, params.rabi,
                          params.delta1)
    ebd, e0b = tracker.signed_any(params.delta2, rabi_scale, precise=True)
    # a beat line must match the continued gap up to an integer sideband
    for line, gap, name in ((line_0b, e0b, "E_0B"), (line_bd, ebd, "E_BD")):
        if line is None:
            continue
        if abs(_wrap_half(-line - gap)) > 0.12:
            raise NumericalError(
                f"spectral line {-line:+.4f} is not a sideband of the "
                f"continued {name} = {gap:+.4f}"
            )
    return StarkShifts(dE_B=de_b, dE_D=de_d, dE_0=de_0,
                       E_BD=abs(ebd), E_0B=abs(e0b))


# -- robust-point search ------------------------------------------------------

def _central_diff(tracker: _GapTracker, delta2: float, delta_omega: float,
                  precise: bool) -> tuple[float, float]:
    # (signed central difference of E_0B over +-delta_omega, E_0B itself)
    _, lo = tracker.signed(delta2, 1.0 - delta_omega, precise)
    _, mid = tracker.signed(delta2, 1.0, precise)
    _, hi = tracker.signed(delta2, 1.0 + delta_omega, precise)
    return 0.5 * (hi - lo), mid


def find_robust_point(
    omega0: float,
    omegaB: float,
    rabi: float,
    delta1: float,
    *,
    bracket: tuple[float, float] | None = None,
    delta_omega: float = 0.005,
    coarse_step: float = 6.0,
    flat_tol: float = 1e-6,
) -> tuple[float, dict]:
    """Detuning delta2 where the zero-bright gap is flattest in the drive.

    Minimizes |dE_0B/dOmega| (central difference with step
    delta_omega * rabi) subject to E_0B > 0: an integer-grid scan over
    the bracket (default (delta1/4, delta1)) locates a sign change of
    the signed difference, golden-section descent narrows it on a
    quarter grid, and a five-point quadratic fit of the signed objective
    returns the sub-grid root.  Returns (delta2, diagnostics); the
    diagnostics include the achieved second-order difference dE_0 - dE_B,
    the sensitivity delta_r, and the interpolated gaps at the point.
    Raises RobustPointError when the bracket holds no sign change or the
    objective is flat below ``flat_tol``.
    """
    if delta_omega <= 0 or delta_omega >= 0.5:
        raise ConfigError("delta_omega must sit in (0, 0.5)")
    lo, hi = bracket if bracket is not None else (delta1 / 4.0, delta1)
    if not 0.0 < lo < hi:
        raise ConfigError(f"bad search bracket ({lo:g}, {hi:g})")
    tracker = _GapTracker(omega0, omegaB, rabi, delta1)

    # coarse scan on the integer grid
    step = max(1, int(round(coarse_step)))
    grid = np.arange(math.ceil(lo), math.floor(hi) + 1, step, dtype=float)
    if len(grid) < 2:
        raise ConfigError("search bracket holds fewer than two grid points")
    scan = []
    for d2 in grid:
        diff, e0b = _central_diff(tracker, float(d2), delta_omega, False)
        scan.append((float(d2), diff, e0b))
    kept = [(d2, diff) for d2, diff, e0b in scan if e0b > 0.0]
    if not kept:
        raise RobustPointError(
            "no detuning with a positive zero-bright gap inside the bracket"
        )
    if max(abs(d) for _, d in kept) < flat_tol:
        raise RobustPointError(
            f"objective is flat below {flat_tol:g} across the bracket"
        )
    pair = next(
        (
            (kept[i][0], kept[i + 1][0])
            for i in range(len(kept) - 1)
            if kept[i][1] * kept[i + 1][1] < 0.0
        ),
        None,
    )
    if pair is None:
        # the flat point can hide just below the gap's zero crossing;
        # the signed objective is smooth there, so bracket the boundary
        pair = next(
            (
                (scan[i][0], scan[i + 1][0])
                for i in range(len(scan) - 1)
                if scan[i][2] > 0.0 >= scan[i + 1][2]
            ),
            None,
        )
    if pair is None:
        raise RobustPointError(
            "objective does not change sign inside the bracket"
        )

    # golden-section descent of |diff| on the quarter grid
    a, b = pair
    memo = {}

    def f(x: float) -> float:
        if x not in memo:
            memo[x] = abs(_central_diff(tracker, x, delta_omega, False)[0])
        return memo[x]

    inv_phi = 0.6180339887498949
    while b - a > 2.0:
        x1 = _snap_quarter(b - inv_phi * (b - a))
        x2 = _snap_quarter(a + inv_phi * (b - a))
        if x1 <= a or x2 >= b or x1 >= x2:
            break
        if f(x1) < f(x2):
            b = x2
        else:
            a = x1

    # five-point precise stencil and quadratic root fit
    center = float(round((a + b) / 2.0))
    xs = center + np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    diffs = np.empty(5)
    e0b_mid = np.empty(5)
    e0b_hi = np.empty(5)
    ebd_mid = np.empty(5)
    for i, x in enumerate(xs):
        diffs[i], e0b_mid[i] = _central_diff(tracker, float(x), delta_omega, True)
        _, e0b_hi[i] = tracker.signed(float(x), 1.0 + delta_omega, True)
        ebd_mid[i], _ = tracker.signed(float(x), 1.0, True)
    coef = np.polyfit(xs, diffs, 2)
    roots = [float(np.real(r)) for r in np.roots(coef)
             if abs(np.imag(r)) < 1e-9 and xs[0] <= np.real(r) <= xs[-1]]
    if not roots:
        lin = np.polyfit(xs, diffs, 1)
        root = -lin[1] / lin[0]
        if not xs[0] <= root <= xs[-1]:
            raise RobustPointError(
                "objective fit has no zero inside the refined bracket"
            )
    else:
        root = min(roots, key=lambda r: abs(r - center))

    e0b_star = float(np.polyval(np.polyfit(xs, e0b_mid, 2), root))
    e0b_star_hi = float(np.polyval(np.polyfit(xs, e0b_hi, 2), root))
    e_bd_star = float(np.polyval(np.polyfit(xs, ebd_mid, 2), root))
    if e0b_star <= 0.0:
        raise RobustPointError(
            f"zero-bright gap is not positive at the candidate ({root:.3f})"
        )
    de_b, de_d, de_0 = _shifts(omega0, omegaB, rabi, delta1, root)
    delta_r = abs(e0b_star_hi - e0b_star) / e0b_star
    diagnostics = {
        "delta2": float(root),
        "second_order_diff": de_0 - de_b,
        "delta_r": delta_r,
        "e_0b": e0b_star,
        "e_0b_shifted": e0b_star_hi,
        "e_bd": e_bd_star,
        "objective": float(abs(np.polyval(coef, root))),
        "stencil_delta2": [float(x) for x in xs],
        "stencil_objective": [float(d) for d in diffs],
        "evaluations": tracker.evaluations,
    }
    return float(root), diagnostics


# -- residual mixing and rates ------------------------------------------------

def residual_sz_mixing(params: SystemParams) -> dict[str, float]:
    """Period-averaged S_z of the exact eigenstates, per dressed label.

    Diagonalizes the one-period propagator, evolves each eigenvector
    over one period, and averages <S_z> over the recorded samples; the
    average strips micromotion, leaving the secular mixing coefficient.
    Returns m_B, m_D, m_0 and delta_m = m_B - m_0 (the differential
    coefficient that feeds the first-order dephasing rate).  An
    off-grid delta2 is snapped to the nearest half-integer.
    """
    tracker = _GapTracker(params.omega0, params.omegaB, params.rabi,
                          params.delta1)
    d2 = params.delta2
    if _commensurate_q((params.omega0, params.omegaB, params.delta1, d2)) is None:
        d2 = round(d2 * 2.0) / 2.0
    q = tracker._q_of(d2)
    n = q * 2 * tracker.n_precise
    u = tracker._u_matrix(d2, 1.0, n, q)
    _, lab, vecs, _ = _eig_labeled(u, q)

    params_d2 = SystemParams(
        omega0=params.omega0, omegaB=params.omegaB, rabi=params.rabi,
        delta1=params.delta1, delta2=d2,
    )
    tones, signs = params_d2.drive_tones()
    carriers = np.array([params_d2.upper_transition,
                         -params_d2.lower_transition])
    n_avg = q * tracker.n_precise
    dt = q * _TWO_PI / n_avg
    out: dict[str, float] = {}
    for name in ("B", "D", "0"):
        vec = np.ascontiguousarray(vecs[:, lab[name]]).astype(np.complex128)
        rec = three_level_amplitudes(
            vec, 0.0, dt, n_avg, np.zeros(3), params.rabi, tones, signs,
            carriers, record_every=max(1, n_avg // 500),
        )
        pops = np.abs(rec) ** 2
        out["m_" + name] = float(np.sum(pops @ _SZ_DIAG) / np.sum(pops))
    out["delta_m"] = out["m_B"] - out["m_0"]
    return out


def dephasing_budget(
    params: SystemParams,
    noise: OUParams,
    drive_noise: DriveNoiseParams,
    *,
    static_field_offset: float = 0.1,
    relative_amplitude_error: float | None = None,
) -> DephasingBudget:
    """Dephasing rates of the protected qubit at one operating point.

    gamma_d follows delta_r * delta_omega * rabi / sqrt(2) with
    delta_r = |E_0B(rabi (1 + delta_omega)) - E_0B(rabi)| / |E_0B|;
    gamma_m is the squared residual-mixing reading
    delta_m^2 * S_BB(0) / 2 (the linear reading delta_m * S_BB(0) is
    exposed in the diagnostics).  The setup-error entries are
    order-of-magnitude estimates: a static field offset delta_Bz mixes
    bright into dark as delta_Bz * delta1 / rabi^2, and a relative
    amplitude error epsilon between the two fields of one detuned pair
    leaks S_z as (rabi / delta1)^2 * epsilon; both are multiplied by
    S_BB(0).  Rates are returned in Hz.
    """
    if static_field_offset < 0:
        raise ConfigError("static_field_offset must be nonnegative")
    eps_rel = (drive_noise.delta_omega if relative_amplitude_error is None
               else relative_amplitude_error)
    if eps_rel < 0:
        raise ConfigError("relative_amplitude_error must be nonnegative")

    tracker = _GapTracker(params.omega0, params.omegaB, params.rabi,
                          params.delta1)
    d_om = drive_noise.delta_omega
    _, e0b = tracker.signed_any(params.delta2, 1.0, precise=True)
    if d_om > 0.0:
        _, e0b_hi = tracker.signed_any(params.delta2, 1.0 + d_om, precise=True)
        delta_r = abs(e0b_hi - e0b) / abs(e0b)
    else:
        e0b_hi = e0b
        delta_r = 0.0
    gamma_d = delta_r * d_om * params.rabi * 1e6 / _SQ2

    mixing = residual_sz_mixing(params)
    s_bb0 = noise.c * noise.tau**2
    delta_m = abs(mixing["delta_m"])
    gamma_m = 0.5 * delta_m**2 * s_bb0 * 1e6
    setup = {
        "static_field_offset":
            (static_field_offset * params.delta1 / params.rabi**2)
            * s_bb0 * 1e6,
        "relative_amplitude_error":
            (params.rabi / params.delta1) ** 2 * eps_rel * s_bb0 * 1e6,
    }
    ebd, _ = tracker.signed_any(params.delta2, 1.0, precise=True)
    diagnostics = {
        "gamma_m_linear_hz": delta_m * s_bb0 * 1e6,
        "delta_m": mixing["delta_m"],
        "m_B": mixing["m_B"],
        "m_D": mixing["m_D"],
        "m_0": mixing["m_0"],
        "s_bb0": s_bb0,
        "e_0b": e0b,
        "e_0b_shifted": e0b_hi,
        "e_bd": ebd,
    }
    return DephasingBudget(
        gamma_m=gamma_m, gamma_d=gamma_d, delta_r=delta_r,
        setup_error_rates=setup, diagnostics=diagnostics,
    )


def gap_maps(
    params: SystemParams,
    *,
    delta_omega: float = 0.005,
    half_width: float = 4.0,
    nodes: int = 7,
) -> tuple[np.ndarray, np.ndarray]:
    """Cubic maps of the gaps versus relative drive error epsilon.

    Measures E_BD and E_0B at ``nodes`` drive scales spanning
    +-half_width * delta_omega and fits cubics; returns the two
    ascending coefficient arrays (E_BD first), directly usable as the
    reduced-model gap polynomials.
    """
    if nodes < 4:
        raise ConfigError("cubic gap maps need at least four nodes")
    tracker = _GapTracker(params.omega0, params.omegaB, params.rabi,
                          params.delta1)
    eps = np.linspace(-half_width * delta_omega, half_width * delta_omega,
                      nodes)
    ebd = np.empty(nodes)
    e0b = np.empty(nodes)
    for i, e in enumerate(eps):
        ebd[i], e0b[i] = tracker.signed_any(params.delta2, 1.0 + e,
                                            precise=True)
    ebd_c = np.polyfit(eps, ebd, 3)[::-1].copy()
    e0b_c = np.polyfit(eps, e0b, 3)[::-1].copy()
    return ebd_c, e0b_c


# -- protected-coherence lower-bound table ------------------------------------

def _envelope_crossing(par: EnvelopeParams) -> T2Estimate:
    # First crossing of the coherence threshold, bisected to fixed point.
    from scipy.optimize import brentq

    def g(t: float) -> float:
        return float(np.asarray(p_total(np.array([t]), par))[0]) - THRESHOLD

    t_hi = 100.0
    while g(t_hi) > 0.0:
        t_hi *= 2.0
        if t_hi > 2e6:
            return T2Estimate(value_us=2e6, lower_bound=True)
    t_lo = t_hi / 2.0 if t_hi > 100.0 else 1e-3
    return T2Estimate(value_us=float(brentq(g, t_lo, t_hi, xtol=1e-6)))


def lower_bound_t2_table(
    rows=None,
    *,
    t2_star: float = 3.0,
    tau_grid: tuple[float, ...] = (5.0, 15.0, 25.0, 50.0, 100.0),
    omega0: float = 2870.0,
    delta_omega: float = 0.005,
) -> list[T2TableRow]:
    """Protected-coherence lower-bound curve family across operating points.

    For each row (omegaB, rabi, delta1, gamma_d_hz) the robust second
    detuning is found and the bright-dark gap E_BD there is measured.
    The coherence estimate per magnetic-noise correlation time tau is a
    rate-based lower-bound reading of the total envelope: the magnetic
    channel enters through its gap-filtered secular rate
    S_BB(E_BD) / 2 with S_BB(w) = c tau^2 / (1 + (w tau)^2) (the
    golden-rule dephasing rate of a gap-protected coherence; bare
    dephasing time ``t2_star`` fixes c = 4/(t2_star^2 tau)), the drive
    channel through the row's Gaussian gamma_d.  The envelope is then
    crossed against the coherence threshold.  Slower noise puts less
    spectral weight at the gap, so the estimates rise monotonically in
    tau toward the 1/gamma_d ceiling, and a larger Zeeman splitting
    widens the gap and orders the rows upward.  Robust-point failures
    propagate per row.
    """
    if rows is None:
        rows = DEFAULT_T2_TABLE_ROWS
    if t2_star <= 0 or any(t <= 0 for t in tau_grid):
        raise ConfigError("t2_star and tau_grid entries must be positive")
    out = []
    for omegaB, rabi, delta1, gamma_d_hz in rows:
        delta2, diag = find_robust_point(
            omega0, omegaB, rabi, delta1, delta_omega=delta_omega
        )
        estimates = []
        for tau in tau_grid:
            c = 4.0 / (t2_star**2 * tau)
            s_at_gap = c * tau**2 / (1.0 + (diag["e_bd"] * tau) ** 2)
            par = EnvelopeParams(
                gamma=1.0 / tau, g_squared=0.0, omega_gap=diag["e_bd"],
                gamma_m_hz=0.5 * s_at_gap * 1e6, gamma_d_hz=gamma_d_hz,
            )
            estimates.append(_envelope_crossing(par))
        out.append(T2TableRow(
            omegaB=omegaB, rabi=rabi, delta1=delta1, gamma_d_hz=gamma_d_hz,
            delta2=delta2, e_bd=diag["e_bd"], tau_us=tuple(tau_grid),
            t2=tuple(estimates),
        ))
    return out
