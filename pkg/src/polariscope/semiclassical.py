"""Semiclassical probe evolution: the atomic spin is frozen at its coherent-state
moments and the probe Stokes vector is rotated about the resulting vector gamma.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.constants as const

from polariscope.angular import SpinOrientation, coherent_spin_moments
from polariscope.atomdata import AtomSpecies, CloudParams, ProbeParams
from polariscope.errors import ConsistencyError, DomainError
from polariscope.polarizability import alpha_coefficients, alpha_zero

__all__ = [
    "StokesVector",
    "GammaVector",
    "PathKind",
    "PathSpec",
    "TrajectoryResult",
    "ScanPoint",
    "gamma0",
    "gamma0_from_coupling",
    "polarizability_sums",
    "gamma_vector",
    "input_stokes",
    "rotate_stokes_exact",
    "rotate_stokes_small",
    "simulate_trajectory",
    "detuning_scan",
    "zero_crossings",
    "crossing_frequency",
    "loglog_slopes",
    "SMALL_ANGLE_LIMIT",
]

SMALL_ANGLE_LIMIT = 0.3


@dataclass(frozen=True)
class StokesVector:
    s0: float
    sx: float
    sy: float
    sz: float
    small_angle_warning: bool = False

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz])

    @property
    def degree(self) -> float:
        """|(sx, sy, sz)| / s0."""
        return float(np.linalg.norm(self.vector) / self.s0)


@dataclass(frozen=True)
class GammaVector:
    gx: float
    gy: float
    gz: float

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.gx, self.gy, self.gz])

    @property
    def norm(self) -> float:
        return math.sqrt(self.gx**2 + self.gy**2 + self.gz**2)


def gamma0(species: AtomSpecies, cloud: CloudParams, check: bool = True) -> float:
    """Rotation strength (Gamma/4) OD in rad/s.

    With ``check`` the definitional form N g dt alpha_0 / hbar is evaluated
    too and the two must agree to 1e-12 relative.
    """
    value = species.linewidth / 4 * cloud.od
    if check:
        other = gamma0_from_coupling(species, cloud)
        if abs(other - value) > 1e-12 * max(abs(value), 1e-300):
            raise ConsistencyError(f"gamma0 routes disagree: {value!r} vs {other!r}")
    return value


def gamma0_from_coupling(species: AtomSpecies, cloud: CloudParams) -> float:
    """N g dt alpha_0 / hbar with g = omega0 / (2 eps0 V) and dt = L / c."""
    g = species.omega0 / (2 * const.epsilon_0 * cloud.volume)
    dt = cloud.length / const.c
    return cloud.n_atoms * g * dt * alpha_zero(species) / const.hbar


def polarizability_sums(species: AtomSpecies, probe_detuning: float) -> tuple[float, float]:
    """(sum_f' alpha1/(alpha0 Delta), sum_f' alpha2/(alpha0 Delta)) in s/rad."""
    f = species.ground_f
    v = t = 0.0
    for fp in species.levels:
        a = alpha_coefficients(species, f, fp)
        if a[1] == 0.0 and a[2] == 0.0:
            continue
        delta = species.level_detuning(probe_detuning, fp)
        if abs(delta) <= 1e-9 * species.linewidth:
            raise DomainError(f"probe is on resonance with f'={fp} (Delta_{{f,f'}} = {delta:.3g} rad/s)")
        v += a[1] / delta
        t += a[2] / delta
    return v, t


def _gamma(g0: float, sums: tuple[float, float], f: float, orient: SpinOrientation) -> GammaVector:
    mom = coherent_spin_moments(f, orient)
    return GammaVector(g0 * mom.quad_diff * sums[1], g0 * mom.quad_cross * sums[1], g0 * mom.fz_mean * sums[0])


def gamma_vector(species: AtomSpecies, cloud: CloudParams, probe: ProbeParams, orient: SpinOrientation) -> GammaVector:
    """Stokes rotation vector for a cloud polarized along ``orient``."""
    sums = polarizability_sums(species, probe.detuning)
    return _gamma(gamma0(species, cloud), sums, float(species.ground_f), orient)


def input_stokes(pol_angle: float = 0.0) -> StokesVector:
    """Normalized Stokes vector of linear polarization at ``pol_angle`` from x."""
    return StokesVector(1.0, math.cos(2 * pol_angle), math.sin(2 * pol_angle), 0.0)


def rotation_matrix(g: GammaVector) -> np.ndarray:
    """3x3 matrix mapping (sx, sy, sz) to the rotated components."""
    angle = g.norm
    if angle == 0.0:
        return np.eye(3)
    n = g.vector / angle
    cross = np.array([[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]])
    c, s = math.cos(angle), math.sin(angle)
    # the evolution exp[-i gamma.S] rotates the Stokes vector by -gamma about n
    return c * np.eye(3) + (1 - c) * np.outer(n, n) - s * cross


def rotate_stokes_exact(s: StokesVector, g: GammaVector) -> StokesVector:
    out = rotation_matrix(g) @ s.vector
    return StokesVector(s.s0, *map(float, out))


def rotate_stokes_small(s: StokesVector, g: GammaVector) -> StokesVector:
    """Second-order expansion of the rotation, s - g x s + g x (g x s) / 2.

    Results with |gamma| >= SMALL_ANGLE_LIMIT carry ``small_angle_warning``.
    """
    v, gv = s.vector, g.vector
    gxs = np.cross(gv, v)
    out = v - gxs + np.cross(gv, gxs) / 2
    return StokesVector(s.s0, *map(float, out), small_angle_warning=g.norm >= SMALL_ANGLE_LIMIT)


class PathKind(enum.Enum):
    XZ_PLANE = "xz"
    XY_PLANE = "xy"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PathSpec:
    """Adiabatic path of the mean spin.

    XZ_PLANE sweeps theta from pi/2 to -pi/2 at phi = 0; XY_PLANE sweeps phi
    from 0 to pi at theta = pi/2.  CUSTOM uses ``custom_points``.
    """

    kind: PathKind
    samples: int = 201
    custom_points: Optional[Sequence[SpinOrientation]] = None

    def __post_init__(self) -> None:
        if self.kind is PathKind.CUSTOM:
            if not self.custom_points:
                raise DomainError("custom path needs at least one point")
        elif self.samples < 1:
            raise DomainError("path needs at least one sample")

    def points(self) -> tuple[np.ndarray, list[SpinOrientation]]:
        """Path parameter values and the corresponding orientations."""
        if self.kind is PathKind.XZ_PLANE:
            param = np.linspace(math.pi / 2, -math.pi / 2, self.samples)
            return param, [SpinOrientation.from_angles(float(t), 0.0) for t in param]
        if self.kind is PathKind.XY_PLANE:
            param = np.linspace(0.0, math.pi, self.samples)
            return param, [SpinOrientation.from_angles(math.pi / 2, float(p)) for p in param]
        pts = list(self.custom_points)
        return np.arange(len(pts), dtype=float), pts


@dataclass(frozen=True)
class TrajectoryResult:
    """Output sy and sz divided by the input s0 (equal to input sx for x polarization)."""

    parameter: np.ndarray
    sy_norm: np.ndarray
    sz_norm: np.ndarray
    gamma_max: float = 0.0

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.parameter.tolist(), self.sy_norm.tolist(), self.sz_norm.tolist()))


def simulate_trajectory(
    species: AtomSpecies, cloud: CloudParams, probe: ProbeParams, path: PathSpec
) -> TrajectoryResult:
    """Rotate an x-polarized (or ``probe.pol_angle``) probe for every point on ``path``.

    The spin is held fixed at each sample; there is no probe backaction.
    """
    sums = polarizability_sums(species, probe.detuning)
    g0 = gamma0(species, cloud)
    f = float(species.ground_f)
    s_in = input_stokes(probe.pol_angle)
    param, orients = path.points()
    sy = np.empty(len(orients))
    sz = np.empty(len(orients))
    gmax = 0.0
    for k, orient in enumerate(orients):
        g = _gamma(g0, sums, f, orient)
        out = rotate_stokes_exact(s_in, g)
        sy[k], sz[k] = out.sy / s_in.s0, out.sz / s_in.s0
        gmax = max(gmax, g.norm)
    return TrajectoryResult(param, sy, sz, gmax)


@dataclass(frozen=True)
class ScanPoint:
    """Signed extremal sy on the xz path (vector) and sz on the xy path (tensor)."""

    detuning: float
    vector_peak: float
    tensor_peak: float


def _signed_peak(values: np.ndarray) -> float:
    k = int(np.argmax(np.abs(values)))
    return float(values[k])


def worker_count() -> int:
    """Thread cap from POLARISCOPE_THREADS (0 or unset means automatic)."""
    raw = os.environ.get("POLARISCOPE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"POLARISCOPE_THREADS={raw!r} is not an integer") from None
    return n if n > 0 else min(8, os.cpu_count() or 1)


def ordered_map(fn: Callable, items: Iterable) -> list:
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def detuning_scan(
    species: AtomSpecies,
    cloud: CloudParams,
    probe_template: ProbeParams,
    detunings: Sequence[float],
    samples: int = 201,
) -> list[ScanPoint]:
    """Vector and tensor signal peaks versus probe detuning (rad/s)."""
    bad = [d for d in detunings if species.resonances(d)]
    if bad:
        raise DomainError(f"detunings on resonance: {', '.join(f'{d:.6g}' for d in bad)} rad/s")
    xz = PathSpec(PathKind.XZ_PLANE, samples)
    xy = PathSpec(PathKind.XY_PLANE, samples)

    def one(delta: float) -> ScanPoint:
        probe = probe_template.replace(detuning=float(delta))
        vec = simulate_trajectory(species, cloud, probe, xz).sy_norm
        ten = simulate_trajectory(species, cloud, probe, xy).sz_norm
        return ScanPoint(float(delta), _signed_peak(vec), _signed_peak(ten))

    return ordered_map(one, detunings)


# --------------------------------------------------------------------------
# trace analysis


def zero_crossings(x: np.ndarray, y: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Locations where y vanishes or changes sign.

    Samples with |y| <= rel_tol * max|y| count as zeros (runs of them are
    merged); sign changes between non-zero neighbours are located by linear
    interpolation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = np.max(np.abs(y)) if y.size else 0.0
    if scale == 0.0:
        return np.array([])
    sign = np.where(np.abs(y) <= rel_tol * scale, 0, np.sign(y)).astype(int)
    zeros: list[float] = []
    k = 0
    n = len(y)
    while k < n:
        if sign[k] == 0:
            start = k
            while k + 1 < n and sign[k + 1] == 0:
                k += 1
            zeros.append(0.5 * (x[start] + x[k]))
        elif k + 1 < n and sign[k + 1] != 0 and sign[k + 1] != sign[k]:
            t = y[k] / (y[k] - y[k + 1])
            zeros.append(x[k] + t * (x[k + 1] - x[k]))
        k += 1
    return np.array(zeros)


def crossing_frequency(x: np.ndarray, y: np.ndarray, rel_tol: float = 1e-9) -> float:
    """Angular frequency pi / (mean zero spacing) of a trace; NaN with fewer than two zeros."""
    z = zero_crossings(x, y, rel_tol)
    if len(z) < 2:
        return math.nan
    return math.pi / float(np.mean(np.abs(np.diff(z))))


def loglog_slopes(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    """Local slopes d log|y| / d log|x| between consecutive points."""
    lx = np.log(np.abs(np.asarray(x, dtype=float)))
    ly = np.log(np.abs(np.asarray(y, dtype=float)))
    return np.diff(ly) / np.diff(lx)
