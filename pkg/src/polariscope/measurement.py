"""Measurement chain: scattering strength, shot noise, measurement strength,
stochastic photocurrent, constant-signal filtering and squeezing.

Spin quantities are kept in units of hbar (F_z in hbar, variances in
hbar^2), so the measurement strength M is reported in 1/(hbar^2 s) and the
scattering strength S in W^2/hbar^2.  With those units the photocurrent

    y dt = eta sqrt(M) F_z dt + sqrt(eta) dW

is dimensionally closed with dW of variance dt.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from polariscope.angular import SpinOrientation
from polariscope.atomdata import AtomSpecies, CloudParams, ProbeParams
from polariscope.errors import ConsistencyError, DomainError, GeometryError
from polariscope.semiclassical import ordered_map, polarizability_sums

__all__ = [
    "MeasurementParams",
    "PhotocurrentRecord",
    "FilterState",
    "FilterTrace",
    "SqueezingResult",
    "ValidityWarning",
    "scattering_strength",
    "shot_noise",
    "scattering_rate",
    "measurement_strength",
    "coherent_prior_variance",
    "trial_rng",
    "simulate_photocurrent",
    "filter_estimate",
    "filter_trace",
    "conditional_variance",
    "squeezing_from_od",
    "snr_squeezing",
    "EnsembleResult",
    "filter_ensemble",
]


class ValidityWarning(UserWarning):
    """The measurement time is not small compared with the scattering time."""


def _rotation_rate(species: AtomSpecies, probe: ProbeParams) -> float:
    # (Gamma / 4) sum_f' alpha1 / (alpha0 Delta): dimensionless
    vec, _ = polarizability_sums(species, probe.detuning)
    return species.linewidth / 4 * vec


def scattering_strength(species: AtomSpecies, cloud: CloudParams, probe: ProbeParams) -> float:
    """S = [I_p sigma0 (Gamma/4) sum alpha1/(alpha0 Delta)]^2, in W^2 / hbar^2."""
    intensity = probe.power / cloud.area
    return (intensity * cloud.sigma0 * _rotation_rate(species, probe)) ** 2


def shot_noise(probe: ProbeParams) -> float:
    """Delta zeta^2 = 2 hbar omega P, in W^2/Hz."""
    return 2 * probe.photon_energy * probe.power


def scattering_rate(species: AtomSpecies, probe: ProbeParams, cloud: CloudParams) -> float:
    """1/tau_s = (I sigma0 / hbar omega) ((Gamma/4) sum alpha1/(alpha0 Delta))^2, in 1/s."""
    intensity = probe.power / cloud.area
    return intensity * cloud.sigma0 / probe.photon_energy * _rotation_rate(species, probe) ** 2


@dataclass(frozen=True)
class MeasurementParams:
    scattering_strength: float
    shot_noise: float
    meas_strength: float
    scat_rate: float


def _rel_close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(abs(a), abs(b)) or a == b


def measurement_strength(species: AtomSpecies, cloud: CloudParams, probe: ProbeParams) -> MeasurementParams:
    """M = S / Delta zeta^2, cross-checked against (1/2) tau_s^-1 sigma0 / A."""
    s = scattering_strength(species, cloud, probe)
    noise = shot_noise(probe)
    rate = scattering_rate(species, probe, cloud)
    m_ratio = s / noise if noise > 0 else 0.0
    m_rate = 0.5 * rate * cloud.sigma0 / cloud.area
    if not _rel_close(m_ratio, m_rate, 1e-9):
        raise ConsistencyError(f"measurement strength routes disagree: {m_ratio!r} vs {m_rate!r}")
    return MeasurementParams(s, noise, m_ratio, rate)


def coherent_prior_variance(species: AtomSpecies, cloud: CloudParams) -> float:
    """<Delta F_z^2>_0 = N f / 2 (hbar^2) for a coherent spin state transverse to z."""
    return cloud.n_atoms * float(species.ground_f) / 2


def trial_rng(seed: int, trial: int = 0, stream: int = 0) -> np.random.Generator:
    """Independent generator for ensemble member ``trial`` of ``seed``.

    ``stream`` separates the noise increments (0) from the prior draw (1) of
    the same member.
    """
    key = (trial,) if stream == 0 else (trial, stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class PhotocurrentRecord:
    dt: float
    seed: int
    samples: np.ndarray
    fz_true: float
    eta: float
    meas_strength: float
    gain: float = 1.0

    @property
    def duration(self) -> float:
        return len(self.samples) * self.dt

    @property
    def times(self) -> np.ndarray:
        """End time of each sample interval."""
        return self.dt * np.arange(1, len(self.samples) + 1)


def simulate_photocurrent(
    m_params: MeasurementParams | float,
    fz_true: float,
    eta: float,
    dt: float,
    duration: float,
    seed: int,
    *,
    trial: int = 0,
    noise: bool = True,
    gain: float = 1.0,
) -> PhotocurrentRecord:
    """Euler-Maruyama samples of y dt = eta sqrt(M) F_z dt + sqrt(eta) dW.

    Each sample is the average current over one step.  ``noise=False``
    drops the Wiener increments (deterministic test mode).  ``gain`` scales
    the whole detector output; the filter divides it back out.
    """
    if not gain > 0:
        raise DomainError("gain must be positive")
    if not dt > 0:
        raise DomainError("dt must be positive")
    if duration < dt:
        raise DomainError("duration must cover at least one step")
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"efficiency {eta} outside [0, 1]")
    m = m_params.meas_strength if isinstance(m_params, MeasurementParams) else float(m_params)
    steps = int(round(duration / dt))
    signal = eta * math.sqrt(m) * fz_true
    y = np.full(steps, signal)
    if noise:
        dw = trial_rng(seed, trial).normal(0.0, math.sqrt(dt), steps)
        y = y + math.sqrt(eta) * dw / dt
    return PhotocurrentRecord(dt, seed, gain * y, fz_true, eta, m, gain)


@dataclass(frozen=True)
class FilterState:
    estimate: float
    variance: float
    elapsed: float


@dataclass(frozen=True)
class FilterTrace:
    """Filter output after each sample (index k covers (k+1) dt)."""

    elapsed: np.ndarray
    estimate: np.ndarray
    variance: np.ndarray

    def __len__(self) -> int:
        return len(self.elapsed)

    def __getitem__(self, k: int) -> FilterState:
        return FilterState(float(self.estimate[k]), float(self.variance[k]), float(self.elapsed[k]))

    def states(self) -> list[FilterState]:
        return [self[k] for k in range(len(self))]


def filter_trace(
    samples: np.ndarray,
    dt: float | np.ndarray,
    prior_var: float,
    meas_strength: float,
    eta: float,
    prior_mean: float = 0.0,
) -> FilterTrace:
    """Running Bayesian fit of a constant to the record.

    Information accumulates by eta M dt per step and the information-weighted
    data sum by sqrt(M) y dt, so after time tau the posterior is the
    variance-weighted least-squares constant.  ``samples`` may be 2-D
    (trials x steps) and ``dt`` may vary per step.
    """
    if not prior_var > 0:
        raise DomainError("prior variance must be positive")
    y = np.asarray(samples, dtype=float)
    steps = y.shape[-1]
    dts = np.broadcast_to(np.asarray(dt, dtype=float), (steps,))
    # information and data sums scaled by v0, so eta = 0 leaves the prior untouched
    gain = 1.0 + prior_var * np.cumsum(eta * meas_strength * dts)
    weight = math.sqrt(meas_strength) if eta > 0 else 0.0
    data = prior_mean + prior_var * np.cumsum(weight * y * dts, axis=-1)
    variance = np.broadcast_to(prior_var / gain, y.shape).copy()
    return FilterTrace(np.cumsum(dts), data / gain, variance)


def filter_estimate(
    record: PhotocurrentRecord,
    prior_var: float,
    m_params: Optional[MeasurementParams] = None,
    eta: Optional[float] = None,
) -> list[FilterState]:
    """Filter states at tau = 0, dt, 2 dt, ...; the first entry is the prior."""
    m = m_params.meas_strength if m_params is not None else record.meas_strength
    eta = record.eta if eta is None else eta
    trace = filter_trace(record.samples / record.gain, record.dt, prior_var, m, eta)
    return [FilterState(0.0, float(prior_var), 0.0)] + trace.states()


def conditional_variance(prior_var: float, meas_strength: float, eta: float, tau) -> np.ndarray | float:
    """v0 / (1 + eta v0 M tau)."""
    return prior_var / (1 + eta * prior_var * meas_strength * np.asarray(tau, dtype=float))


@dataclass(frozen=True)
class SqueezingResult:
    snr2: float
    w: float
    tau_over_tau_s: float
    valid: bool


_F_PARALLEL_X = SpinOrientation(math.pi / 2, 0.0)


def squeezing_from_od(eta: float, od: float, f: float, tau_over_tau_s: float) -> tuple[float, float]:
    """(SNR^2, W) from eta OD (f/4) tau/tau_s."""
    snr2 = eta * od * f / 4 * tau_over_tau_s
    return snr2, 1 / (1 + snr2)


def snr_squeezing(
    species: AtomSpecies,
    cloud: CloudParams,
    probe: ProbeParams,
    tau: float,
    orient: SpinOrientation = _F_PARALLEL_X,
) -> SqueezingResult:
    """SNR^2 and squeezing W = 1/(1 + SNR^2) after measuring for ``tau`` seconds.

    SNR^2 is evaluated both as eta <dFz^2>_0 M tau and as
    eta OD (f/4) tau/tau_s.  Only the F || x geometry is supported, since
    elsewhere the photocurrent is not linear in F_z.  ``valid`` is False
    (and a ValidityWarning is issued) when tau > 0.1 tau_s.
    """
    if tau < 0:
        raise DomainError("tau must be non-negative")
    if abs(orient.theta - math.pi / 2) > 1e-12 or min(orient.phi, 2 * math.pi - orient.phi) > 1e-12:
        raise GeometryError(
            "squeezing estimate needs the mean spin along x (theta = pi/2, phi = 0); "
            "other orientations add rank-2 and nonlinear terms to the photocurrent"
        )
    mp = measurement_strength(species, cloud, probe)
    eta = probe.efficiency
    v0 = coherent_prior_variance(species, cloud)
    snr2_info = eta * v0 * mp.meas_strength * tau
    ratio = tau * mp.scat_rate
    snr2_od, w = squeezing_from_od(eta, cloud.od, float(species.ground_f), ratio)
    if not _rel_close(snr2_info, snr2_od, 1e-12):
        raise ConsistencyError(f"SNR^2 routes disagree: {snr2_info!r} vs {snr2_od!r}")
    valid = ratio <= 0.1
    if not valid:
        warnings.warn(f"tau/tau_s = {ratio:.3g} exceeds 0.1; decoherence is not negligible", ValidityWarning, stacklevel=2)
    return SqueezingResult(snr2_od, w, ratio, valid)


@dataclass(frozen=True)
class EnsembleResult:
    """Monte Carlo filter statistics at the requested times."""

    tau: np.ndarray
    mse: np.ndarray
    predicted: np.ndarray
    fz_true: np.ndarray
    estimates: np.ndarray


def _ensemble_member(args):
    m, v0, eta, dt, duration, seed, k = args
    fz = float(trial_rng(seed, k, stream=1).normal(0.0, math.sqrt(v0)))
    rec = simulate_photocurrent(m, fz, eta, dt, duration, seed, trial=k)
    return fz, rec.samples


def filter_ensemble(
    meas_strength: float,
    prior_var: float,
    eta: float,
    dt: float,
    duration: float,
    seed: int,
    trials: int,
    tau: Sequence[float],
) -> EnsembleResult:
    """Filter ``trials`` independent records with F_z drawn from the prior.

    Member k uses streams derived from (seed, k) only, so the result does
    not depend on the worker count.
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    members = ordered_map(_ensemble_member, [(meas_strength, prior_var, eta, dt, duration, seed, k) for k in range(trials)])
    fz = np.array([m[0] for m in members])
    samples = np.stack([m[1] for m in members])
    trace = filter_trace(samples, dt, prior_var, meas_strength, eta)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    idx = np.rint(tau / dt).astype(int) - 1
    if np.any(idx < 0) or np.any(idx >= samples.shape[1]):
        raise DomainError("requested times must lie within the record")
    est = trace.estimate[:, idx]
    mse = np.mean((est - fz[:, None]) ** 2, axis=0)
    return EnsembleResult(trace.elapsed[idx], mse, trace.variance[0, idx], fz, est)
