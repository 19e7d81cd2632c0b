"""Closed-form dephasing envelopes and coherence-time extraction.

The driven-qubit survival probability under Ornstein-Uhlenbeck noise has
a closed form built from the characteristic function of the squared
(square-root-diffusion) process:

    xi    = sqrt(4 gamma^2 - 16 i gamma g^2 / Omega)
    F(t)  = exp(gamma t / 2) / sqrt(cosh(xi t/2) + (2 gamma/xi) sinh(xi t/2))
    G(t)  = exp(2 i g^2 / (Omega (2 gamma + xi coth(xi t/2))))
    P(t)  = (1 + |F G|) / 2

with gamma = 1/tau the noise bandwidth, g^2 = c tau / 2 the stationary
noise variance, and Omega the protecting gap.  For the three-level
application the same form applies with Omega replaced by the bright-dark
gap and two additional multiplicative decay factors: exp(-gamma_m t) for
first-order mixing dephasing and exp(-(gamma_d t)^2) for quasi-static
drive-amplitude dephasing.

Everything here is evaluated in the log domain where growth and decay
compete, so curves stay finite for spans up to 1e4 us.  All formulas use
direct-number frequency units (a "50 MHz" gap enters as 50.0, time in
us); the two rates are quoted in Hz and converted internally (1 Hz =
1e-6 us^-1).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "EnvelopeParams",
    "ComplexEnvelope",
    "T2Estimate",
    "THRESHOLD",
    "xi",
    "fg_envelope",
    "p_omega",
    "p_total",
    "pure_dephasing",
    "extract_t2",
    "envelope_samples",
    "noise_budget_curves",
]

#: The coherence-time threshold (1 + 1/e)/2 used throughout.
THRESHOLD = 0.5 * (1.0 + np.exp(-1.0))


@dataclass(frozen=True)
class EnvelopeParams:
    """Inputs of the closed-form envelope.

    gamma:      inverse correlation time 1/tau (1/us).
    g_squared:  stationary noise variance c*tau/2 (angular frequency^2).
    omega_gap:  protecting gap; the bare Rabi frequency for the two-level
                case, the bright-dark gap for the three-level case.
    gamma_m_hz: first-order mixing dephasing rate (Hz), used by p_total.
    gamma_d_hz: drive-amplitude dephasing rate (Hz), used by p_total.
    """

    gamma: float
    g_squared: float
    omega_gap: float
    gamma_m_hz: float = 0.0
    gamma_d_hz: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.g_squared < 0:
            raise ValueError("g_squared must be nonnegative")

    @classmethod
    def from_t2star(
        cls,
        t2_star: float,
        tau: float,
        omega_gap: float,
        gamma_m_hz: float = 0.0,
        gamma_d_hz: float = 0.0,
    ) -> "EnvelopeParams":
        """Build from the free-induction time: g^2 = 2/T2*^2, gamma = 1/tau."""
        if t2_star <= 0 or tau <= 0:
            raise ValueError("t2_star and tau must be positive")
        return cls(
            gamma=1.0 / tau,
            g_squared=2.0 / t2_star**2,
            omega_gap=omega_gap,
            gamma_m_hz=gamma_m_hz,
            gamma_d_hz=gamma_d_hz,
        )

    def with_rates(self, gamma_m_hz: float, gamma_d_hz: float) -> "EnvelopeParams":
        return replace(self, gamma_m_hz=gamma_m_hz, gamma_d_hz=gamma_d_hz)


@dataclass(frozen=True, eq=False)
class ComplexEnvelope:
    """xi together with F and G evaluated on the requested time grid."""

    xi: complex
    F_value: np.ndarray
    G_value: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.F_value * self.G_value)


def xi(params: EnvelopeParams) -> complex:
    """Principal square root of 4 gamma^2 - 16 i gamma g^2 / Omega."""
    if params.omega_gap == 0:
        raise ValueError("omega_gap must be nonzero; use pure_dephasing instead")
    g = params.gamma
    val = 4.0 * g * g - 16.0j * g * params.g_squared / params.omega_gap
    return complex(np.sqrt(complex(val)))


def fg_envelope(t, params: EnvelopeParams) -> ComplexEnvelope:
    """Evaluate F and G on ``t`` (scalar or array, us, nonnegative).

    The cosh/sinh combination is evaluated as an exp-weighted sum in the
    log domain:

        log D = z + log((1+a)/2) + log(1 + r e^{-2z}),  z = xi t/2,
        a = 2 gamma / xi,  r = (1-a)/(1+a),  log F = gamma t/2 - log(D)/2

    which is overflow-safe for arbitrarily large spans.  For physical
    parameters Re(a) > 0, so |r| < 1 and the final logarithm never
    crosses a branch cut.  G uses the tanh form of its argument, which
    is exact and finite at t = 0 (G(0) = 1).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    x = xi(params)
    g = params.gamma
    a = 2.0 * g / x
    r = (1.0 - a) / (1.0 + a)
    z = 0.5 * x * t_arr

    log_d = z + np.log(0.5 * (1.0 + a)) + np.log(1.0 + r * np.exp(-2.0 * z))
    f_val = np.exp(0.5 * g * t_arr - 0.5 * log_d)

    th = np.tanh(z)
    g_val = np.exp(
        2.0j * params.g_squared * th / (params.omega_gap * (2.0 * g * th + x))
    )
    return ComplexEnvelope(xi=x, F_value=f_val, G_value=g_val)


def p_omega(t, params: EnvelopeParams):
    """Survival probability (1 + |F G|)/2 of the driven qubit."""
    env = fg_envelope(t, params)
    return 0.5 * (1.0 + env.magnitude)


def _rate_factors(t_arr: np.ndarray, params: EnvelopeParams):
    gm = params.gamma_m_hz * 1e-6
    gd = params.gamma_d_hz * 1e-6
    return np.exp(-gm * t_arr), np.exp(-((gd * t_arr) ** 2))


def p_total(t, params: EnvelopeParams):
    """Survival probability including mixing and drive-noise factors.

    P = (1 + |F G| exp(-gamma_m t) exp(-(gamma_d t)^2)) / 2 with the gap
    argument set to the bright-dark splitting by the caller.
    """
    t_arr = np.asarray(t, dtype=float)
    env = fg_envelope(t_arr, params)
    mix, drive = _rate_factors(t_arr, params)
    return 0.5 * (1.0 + env.magnitude * mix * drive)


def pure_dephasing(t, t2_star: float):
    """Free-induction decay (1 + exp(-g^2 t^2 / 2))/2 with g^2 = 2/T2*^2."""
    if t2_star <= 0:
        raise ValueError("t2_star must be positive")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    g_sq = 2.0 / t2_star**2
    return 0.5 * (1.0 + np.exp(-0.5 * g_sq * t_arr**2))


@dataclass(frozen=True)
class T2Estimate:
    """Coherence time from a threshold crossing, or a lower bound.

    When the curve never crosses the threshold within its span the
    estimate degrades to the lower bound "T2 > t_final" with
    ``lower_bound`` set; ``value_us`` then holds t_final.
    """

    value_us: float
    lower_bound: bool = False

    def __float__(self) -> float:
        return self.value_us

    def __str__(self) -> str:
        if self.lower_bound:
            return f"T2 > {self.value_us:g} us"
        return f"{self.value_us:g} us"


def envelope_samples(
    t: np.ndarray, p: np.ndarray, period: float
) -> tuple[np.ndarray, np.ndarray]:
    """Upper envelope of an oscillating curve by per-period window maxima.

    Bins the curve into windows one carrier period wide, takes each
    window's maximum, and refines it with a parabola through the five
    samples centered on the raw maximum (three near window edges).
    Returns (t_env, p_env); curves shorter than one period come back
    unchanged.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("t and p must be matching 1-d arrays")
    if period <= 0 or t[-1] - t[0] < period:
        return t, p
    edges = np.arange(t[0], t[-1] + period, period)
    idx = np.searchsorted(t, edges)
    t_env, p_env = [], []
    for lo, hi in zip(idx[:-1], idx[1:]):
        if hi - lo < 1:
            continue
        k = lo + int(np.argmax(p[lo:hi]))
        a = max(0, k - 2)
        b = min(len(t), k + 3)
        if b - a >= 3:
            coeff = np.polyfit(t[a:b] - t[k], p[a:b], 2)
            if coeff[0] < 0:
                t_peak = -coeff[1] / (2.0 * coeff[0])
                # Reject vertex extrapolation beyond the fit window.
                if abs(t_peak) <= (t[b - 1] - t[a]):
                    t_env.append(t[k] + t_peak)
                    p_env.append(float(np.polyval(coeff, t_peak)))
                    continue
        t_env.append(t[k])
        p_env.append(p[k])
    return np.asarray(t_env), np.asarray(p_env)


def _smooth(p: np.ndarray, width: int = 5) -> np.ndarray:
    if len(p) < width:
        return p
    kernel = np.ones(width) / width
    mid = np.convolve(p, kernel, mode="same")
    # The convolution's shrinking edge windows are wrong; recompute them.
    out = mid.copy()
    half = width // 2
    for i in range(half):
        out[i] = p[: i + half + 1].mean()
        out[-(i + 1)] = p[-(i + half + 1):].mean()
    return out


def extract_t2(
    curve,
    p=None,
    threshold: float = THRESHOLD,
    envelope_period: float | None = None,
    smooth: bool = False,
) -> T2Estimate:
    """First downward crossing of the coherence threshold.

    Accepts either two arrays ``extract_t2(t, p)`` or any object with
    ``time_grid`` and ``p_mean`` attributes.  With ``envelope_period``
    set, the curve is first reduced to its per-period upper envelope
    (the raw samples of an oscillating read-out dip to 1/2 every half
    carrier cycle and would cross immediately); ``smooth`` applies a
    five-point moving average before the crossing search, appropriate
    for Monte Carlo curves.  The crossing is linearly interpolated
    between the bracketing samples.  A curve that never crosses yields a
    lower-bound estimate at its final time.
    """
    if p is None:
        t_arr = np.asarray(curve.time_grid, dtype=float)
        p_arr = np.asarray(curve.p_mean, dtype=float)
    else:
        t_arr = np.asarray(curve, dtype=float)
        p_arr = np.asarray(p, dtype=float)
    if t_arr.ndim != 1 or t_arr.shape != p_arr.shape or len(t_arr) < 2:
        raise ValueError("need matching 1-d arrays with at least two samples")

    if envelope_period is not None:
        t_arr, p_arr = envelope_samples(t_arr, p_arr, envelope_period)
    if smooth:
        p_arr = _smooth(p_arr)

    if p_arr[0] < threshold:
        raise ValueError(
            f"curve starts below threshold ({p_arr[0]:.4f} < {threshold:.4f})"
        )
    below = np.nonzero(p_arr < threshold)[0]
    if len(below) == 0:
        return T2Estimate(value_us=float(t_arr[-1]), lower_bound=True)
    i = int(below[0])
    t0, t1 = t_arr[i - 1], t_arr[i]
    p0, p1 = p_arr[i - 1], p_arr[i]
    frac = (p0 - threshold) / (p0 - p1)
    return T2Estimate(value_us=float(t0 + frac * (t1 - t0)))


def noise_budget_curves(params: EnvelopeParams, t_grid) -> dict[str, np.ndarray]:
    """Per-source coherence curves sharing one time grid.

    Returns probability-form curves (1 + factor)/2 for each decay factor
    of the total model and for their product:

    - ``envelope``: magnetic-noise factor |F G| at the configured gap,
    - ``mixing``:   exp(-gamma_m t),
    - ``drive``:    exp(-(gamma_d t)^2),
    - ``combined``: the product of all three (the full model).
    """
    t_arr = np.asarray(t_grid, dtype=float)
    env = fg_envelope(t_arr, params).magnitude
    mix, drive = _rate_factors(t_arr, params)
    out = {
        "t_us": t_arr,
        "envelope": 0.5 * (1.0 + env),
        "mixing": 0.5 * (1.0 + mix),
        "drive": 0.5 * (1.0 + drive),
        "combined": 0.5 * (1.0 + env * mix * drive),
    }
    return out
