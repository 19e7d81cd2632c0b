"""Exact Ornstein-Uhlenbeck noise streams for field and drive fluctuations.

Two noise channels drive the simulations: an additive magnetic field
B(t) (angular frequency units) and a multiplicative relative drive
amplitude error eps(t), both stationary OU processes.  The update

    B(t+dt) = B(t) e^{-dt/tau} + n sqrt((c tau/2)(1 - e^{-2 dt/tau}))

is distributionally exact for any dt, so the noise cadence is a modeling
choice, not a discretization error source.  Every trajectory owns
deterministic counter-based streams keyed by (base_seed,
trajectory_index, channel_id); identical keys reproduce identical paths
bit for bit regardless of chunking or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "CHANNEL_MAGNETIC",
    "CHANNEL_DRIVE",
    "OUParams",
    "DriveNoiseParams",
    "NoiseStream",
    "diffusion_from_t2star",
    "ou_coefficients",
    "ou_step",
    "ou_paths",
    "psd",
]

CHANNEL_MAGNETIC = 0
CHANNEL_DRIVE = 1

_POLICIES = ("stationary_draw", "fixed", "fixed_magnitude_random_sign")


def diffusion_from_t2star(t2_star: float, tau: float) -> float:
    """Diffusion constant c = 4 / (T2*^2 tau) from the free-induction time.

    The resulting stationary variance c*tau/2 = 2/T2*^2 makes the
    no-drive decay envelope exp(-(t/T2*)^2).
    """
    if t2_star <= 0 or tau <= 0:
        raise ValueError("t2_star and tau must be positive")
    return 4.0 / (t2_star**2 * tau)


@dataclass(frozen=True)
class OUParams:
    """Stationary OU process: tau (us), diffusion c, and how paths start.

    initial_value_policy:
      - "stationary_draw": B(0) ~ Normal(0, c*tau/2); the default and
        the right choice for free-induction experiments.
      - "fixed": B(0) = initial_value exactly.
      - "fixed_magnitude_random_sign": |B(0)| = stationary standard
        deviation, sign drawn per trajectory.  Matches the conditioned
        ensemble behind the closed-form driven-qubit envelope, which
        fixes the initial noise magnitude at its root-mean-square value.
    """

    tau: float
    c: float
    initial_value_policy: str = "stationary_draw"
    initial_value: float = 0.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        if self.initial_value_policy not in _POLICIES:
            raise ValueError(
                f"unknown initial_value_policy {self.initial_value_policy!r}; "
                f"expected one of {_POLICIES}"
            )

    @property
    def gamma(self) -> float:
        return 1.0 / self.tau

    @property
    def stationary_variance(self) -> float:
        return 0.5 * self.c * self.tau

    @property
    def stationary_std(self) -> float:
        return float(np.sqrt(self.stationary_variance))

    @classmethod
    def from_t2star(
        cls, t2_star: float, tau: float, initial_value_policy: str = "stationary_draw"
    ) -> "OUParams":
        return cls(
            tau=tau,
            c=diffusion_from_t2star(t2_star, tau),
            initial_value_policy=initial_value_policy,
        )

    def with_policy(self, policy: str, value: float = 0.0) -> "OUParams":
        return replace(self, initial_value_policy=policy, initial_value=value)


@dataclass(frozen=True)
class DriveNoiseParams:
    """Relative drive-amplitude OU noise eps(t), Omega(t) = Omega (1 + eps).

    delta_omega is the quoted relative amplitude error; its literal
    diffusion formula c = 2 delta_omega / tau_omega (the "variance"
    reading, exposed as ``c_omega_verbatim``) makes the stationary
    *variance* equal delta_omega.  The default "std" reading instead
    makes the stationary *standard deviation* equal delta_omega
    (c = 2 delta_omega^2 / tau_omega), which is what a percentage-level
    amplitude error means operationally.
    """

    delta_omega: float = 0.005
    tau_omega: float = 500.0
    reading: str = "std"

    def __post_init__(self):
        if self.delta_omega < 0:
            raise ValueError("delta_omega must be nonnegative")
        if self.tau_omega <= 0:
            raise ValueError("tau_omega must be positive")
        if self.reading not in ("std", "variance"):
            raise ValueError("reading must be 'std' or 'variance'")

    @property
    def c_omega_verbatim(self) -> float:
        """The literal diffusion formula 2 delta_omega / tau_omega."""
        return 2.0 * self.delta_omega / self.tau_omega

    @property
    def c_omega(self) -> float:
        if self.reading == "std":
            return 2.0 * self.delta_omega**2 / self.tau_omega
        return self.c_omega_verbatim

    def to_ou(self, initial_value_policy: str = "stationary_draw") -> OUParams:
        return OUParams(
            tau=self.tau_omega,
            c=self.c_omega,
            initial_value_policy=initial_value_policy,
        )


def _philox(base_seed: int, trajectory_index: int, channel_id: int) -> np.random.Generator:
    # Counter-based keying: distinct (seed, trajectory, channel) triples
    # get provably distinct 128-bit keys.
    if not 0 <= base_seed < 2**64:
        raise ValueError("base_seed must fit in 64 bits")
    if not 0 <= trajectory_index < 2**48:
        raise ValueError("trajectory_index must fit in 48 bits")
    if not 0 <= channel_id < 2**16:
        raise ValueError("channel_id must fit in 16 bits")
    key = np.array(
        [base_seed, (trajectory_index << 16) | channel_id], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


def ou_coefficients(params: OUParams, dt: float) -> tuple[float, float]:
    """(decay, kick_std) of the exact one-step update b*decay + n*kick_std."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    decay = float(np.exp(-dt / params.tau))
    kick_std = float(np.sqrt(params.stationary_variance * (1.0 - decay * decay)))
    return decay, kick_std


class NoiseStream:
    """One trajectory's view of one noise channel.

    Holds the OU parameters, the current value, and a private Philox
    generator keyed by (base_seed, trajectory_index, channel_id).  The
    initial value is drawn (or set) according to the parameter policy at
    construction, consuming at most one variate, so paths are a pure
    function of the key.
    """

    def __init__(self, params: OUParams, base_seed: int, trajectory_index: int, channel_id: int):
        self.params = params
        self.rng = _philox(base_seed, trajectory_index, channel_id)
        policy = params.initial_value_policy
        if policy == "fixed":
            self.current_value = float(params.initial_value)
        elif policy == "fixed_magnitude_random_sign":
            sign = 1.0 if self.rng.standard_normal() >= 0.0 else -1.0
            self.current_value = sign * params.stationary_std
        else:
            self.current_value = float(self.rng.standard_normal() * params.stationary_std)

    def advance(self, dt: float) -> float:
        self.current_value = ou_step(self.current_value, dt, self.params, self)
        return self.current_value

    def path(self, dt: float, n_steps: int) -> np.ndarray:
        """Sample path of n_steps updates; returns n_steps+1 values
        starting from (and consuming) the current value."""
        decay, kick = ou_coefficients(self.params, dt)
        out = np.empty(n_steps + 1)
        out[0] = self.current_value
        draws = self.rng.standard_normal(n_steps)
        b = self.current_value
        for i in range(n_steps):
            b = b * decay + kick * draws[i]
            out[i + 1] = b
        self.current_value = float(b)
        return out


def ou_step(b: float, dt: float, params: OUParams, stream) -> float:
    """Exact one-step OU update; ``stream`` supplies the unit Gaussian.

    ``stream`` may be a NoiseStream or any object with a
    ``standard_normal`` method (e.g. a numpy Generator).
    """
    decay, kick = ou_coefficients(params, dt)
    rng = stream.rng if isinstance(stream, NoiseStream) else stream
    return float(b * decay + kick * rng.standard_normal())


def ou_paths(
    params: OUParams,
    dt: float,
    n_steps: int,
    base_seed: int,
    trajectory_indices,
    channel_id: int = CHANNEL_MAGNETIC,
) -> np.ndarray:
    """Paths for many trajectories, shape (n_traj, n_steps+1).

    Row i reproduces NoiseStream(params, base_seed, trajectory_indices[i],
    channel_id).path(dt, n_steps) exactly; chunking an ensemble any way
    therefore yields identical noise.
    """
    idx = np.asarray(trajectory_indices, dtype=np.int64)
    out = np.empty((len(idx), n_steps + 1))
    for row, traj in enumerate(idx):
        out[row] = NoiseStream(params, base_seed, int(traj), channel_id).path(dt, n_steps)
    return out


def psd(params: OUParams, omega) -> np.ndarray:
    """Two-sided Lorentzian power spectral density of the OU process.

    S(omega) = (c tau/2) * 2 gamma / (gamma^2 + omega^2); S(0) = c tau^2.
    """
    w = np.asarray(omega, dtype=float)
    g = params.gamma
    return params.stationary_variance * 2.0 * g / (g * g + w * w)
