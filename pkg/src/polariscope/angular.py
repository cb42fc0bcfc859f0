"""Angular-momentum engine.

Clebsch-Gordan coefficients and 6-j symbols follow the Condon-Shortley
phase convention.  Both are evaluated with the Racah single-sum formulas;
the alternating sums are accumulated exactly over Python integers and only
the final square root is taken in double precision, so there is no
cancellation error for the spins used here (j <= 6 and well beyond).

Spin matrices are expressed in units of hbar in the basis |f, m> ordered by
descending m, so that index 0 is the stretched state |f, f>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

import numpy as np

from polariscope.errors import DomainError

__all__ = [
    "HalfInt",
    "SpinOperatorSet",
    "SpinOrientation",
    "CoherentSpinMoments",
    "half",
    "clebsch_gordan",
    "wigner6j",
    "spin_matrices",
    "coherent_state",
    "coherent_spin_moments",
    "projections",
]


@dataclass(frozen=True, order=True)
class HalfInt:
    """An integer or half-integer, stored exactly as twice its value."""

    twice: int

    @classmethod
    def coerce(cls, value: "HalfIntLike") -> "HalfInt":
        if isinstance(value, HalfInt):
            return value
        if isinstance(value, str):
            text = value.strip()
            if "/" in text:
                num, den = text.split("/", 1)
                value = Fraction(int(num), int(den))
            else:
                value = Fraction(text)
        doubled = 2 * float(value)
        twice = round(doubled)
        if abs(doubled - twice) > 1e-9:
            raise DomainError(f"{value!r} is not an integer or half-integer")
        return cls(int(twice))

    @property
    def value(self) -> float:
        return self.twice / 2

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def __float__(self) -> float:
        return self.twice / 2

    def __neg__(self) -> "HalfInt":
        return HalfInt(-self.twice)

    def __add__(self, other: "HalfIntLike") -> "HalfInt":
        return HalfInt(self.twice + HalfInt.coerce(other).twice)

    def __sub__(self, other: "HalfIntLike") -> "HalfInt":
        return HalfInt(self.twice - HalfInt.coerce(other).twice)

    def __repr__(self) -> str:
        return f"HalfInt({self})"

    def __str__(self) -> str:
        if self.twice % 2 == 0:
            return str(self.twice // 2)
        return f"{self.twice}/2"


HalfIntLike = Union[HalfInt, int, float, Fraction, str]


def half(value: HalfIntLike) -> HalfInt:
    """Shorthand for :meth:`HalfInt.coerce`."""
    return HalfInt.coerce(value)


def _twice(value: HalfIntLike) -> int:
    return HalfInt.coerce(value).twice


def projections(f: HalfIntLike) -> list[HalfInt]:
    """Allowed m values for spin f in descending order."""
    tf = _twice(f)
    return [HalfInt(tf - 2 * k) for k in range(tf + 1)]


def _check_projection(tj: int, tm: int, name: str) -> None:
    if tj < 0:
        raise DomainError(f"spin {name}={tj}/2 is negative")
    if abs(tm) > tj or (tj - tm) % 2:
        raise DomainError(f"projection {tm}/2 is not valid for spin {name}={tj}/2")


def _triad_ok(ta: int, tb: int, tc: int) -> bool:
    return (
        (ta + tb + tc) % 2 == 0
        and tc <= ta + tb
        and tc >= abs(ta - tb)
        and min(ta, tb, tc) >= 0
    )


_fact = math.factorial


def _delta_sq(ta: int, tb: int, tc: int) -> Fraction:
    # triangle coefficient squared, arguments given as twice values
    return Fraction(
        _fact((ta + tb - tc) // 2) * _fact((ta - tb + tc) // 2) * _fact((-ta + tb + tc) // 2),
        _fact((ta + tb + tc) // 2 + 1),
    )


def _signed_sqrt(total: Fraction, radicand: Fraction) -> float:
    """Return total * sqrt(radicand) with a single rounding of the square."""
    if total == 0 or radicand == 0:
        return 0.0
    mag = math.sqrt(total * total * radicand)
    return mag if total > 0 else -mag


@lru_cache(maxsize=65536)
def _cg_twice(j1: int, m1: int, j2: int, m2: int, jj: int, mm: int) -> float:
    if m1 + m2 != mm or not _triad_ok(j1, j2, jj) or abs(mm) > jj:
        return 0.0
    # all of the following are integers for a valid coupling
    a = (j1 + j2 - jj) // 2
    b = (j1 - m1) // 2
    c = (j2 + m2) // 2
    d = (jj - j2 + m1) // 2
    e = (jj - j1 - m2) // 2
    kmin = max(0, -d, -e)
    kmax = min(a, b, c)
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = _fact(k) * _fact(a - k) * _fact(b - k) * _fact(c - k) * _fact(d + k) * _fact(e + k)
        total += Fraction((-1) ** k, den)
    radicand = (jj + 1) * _delta_sq(j1, j2, jj) * (
        _fact((jj + mm) // 2)
        * _fact((jj - mm) // 2)
        * _fact((j1 - m1) // 2)
        * _fact((j1 + m1) // 2)
        * _fact((j2 - m2) // 2)
        * _fact((j2 + m2) // 2)
    )
    return _signed_sqrt(total, radicand)


def clebsch_gordan(
    j1: HalfIntLike, m1: HalfIntLike, j2: HalfIntLike, m2: HalfIntLike, J: HalfIntLike, M: HalfIntLike
) -> float:
    """Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M>.

    Returns 0 when m1 + m2 != M or when (j1, j2, J) is not a valid triad.
    Raises DomainError if any projection is inconsistent with its spin.
    """
    t = [_twice(x) for x in (j1, m1, j2, m2, J, M)]
    _check_projection(t[0], t[1], "j1")
    _check_projection(t[2], t[3], "j2")
    if t[4] < 0:
        raise DomainError(f"spin J={t[4]}/2 is negative")
    if (t[4] - t[5]) % 2:
        raise DomainError(f"projection M={t[5]}/2 has the wrong parity for J={t[4]}/2")
    if abs(t[5]) > t[4]:
        return 0.0
    return _cg_twice(*t)


@lru_cache(maxsize=65536)
def _sixj_twice(a: int, b: int, c: int, d: int, e: int, f: int) -> float:
    triads = ((a, b, c), (a, e, f), (d, b, f), (d, e, c))
    if not all(_triad_ok(*t) for t in triads):
        return 0.0
    s = [sum(t) // 2 for t in triads]
    p = [(a + b + d + e) // 2, (b + c + e + f) // 2, (c + a + f + d) // 2]
    total = Fraction(0)
    for t in range(max(s), min(p) + 1):
        den = 1
        for si in s:
            den *= _fact(t - si)
        for pi in p:
            den *= _fact(pi - t)
        total += Fraction((-1) ** t * _fact(t + 1), den)
    radicand = Fraction(1)
    for tri in triads:
        radicand *= _delta_sq(*tri)
    return _signed_sqrt(total, radicand)


def wigner6j(
    j1: HalfIntLike, j2: HalfIntLike, j3: HalfIntLike, j4: HalfIntLike, j5: HalfIntLike, j6: HalfIntLike
) -> float:
    """Wigner 6-j symbol {j1 j2 j3; j4 j5 j6}; zero if any triad is invalid."""
    t = [_twice(x) for x in (j1, j2, j3, j4, j5, j6)]
    if min(t) < 0:
        return 0.0
    return _sixj_twice(*t)


@dataclass(frozen=True)
class SpinOperatorSet:
    """Cartesian spin matrices for a single spin f (hbar = 1)."""

    f: HalfInt
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray

    @property
    def dim(self) -> int:
        return self.f.twice + 1

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    @property
    def raising(self) -> np.ndarray:
        """f_x + i f_y."""
        return self.fx + 1j * self.fy

    @property
    def lowering(self) -> np.ndarray:
        """f_x - i f_y."""
        return self.fx - 1j * self.fy

    def spherical(self, q: int) -> np.ndarray:
        """Spherical component f_q, with f_{+-1} = -+(f_x +- i f_y)/sqrt(2) and f_0 = f_z."""
        if q == 0:
            return self.fz
        if q == 1:
            return -self.raising / np.sqrt(2)
        if q == -1:
            return self.lowering / np.sqrt(2)
        raise DomainError(f"spherical component q={q} not in (-1, 0, 1)")

    def casimir(self) -> np.ndarray:
        return self.fx @ self.fx + self.fy @ self.fy + self.fz @ self.fz


@lru_cache(maxsize=64)
def _spin_matrices_cached(tf: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dim = tf + 1
    m = (tf - 2 * np.arange(dim)) / 2.0
    f = tf / 2.0
    jp = np.zeros((dim, dim))
    # <m+1| f+ |m> sits one row above column m
    k = np.arange(1, dim)
    jp[k - 1, k] = np.sqrt(f * (f + 1) - m[k] * (m[k] + 1))
    fx = (jp + jp.T) / 2
    fy = (jp - jp.T) / 2j
    fz = np.diag(m)
    return fx.astype(complex), fy.astype(complex), fz.astype(complex)


def spin_matrices(f: HalfIntLike) -> SpinOperatorSet:
    """Spin-f matrices in the descending-m basis.

    f = 0 is allowed and yields 1x1 zero matrices.
    """
    hf = HalfInt.coerce(f)
    if hf.twice < 0:
        raise DomainError(f"spin f={hf} is negative")
    fx, fy, fz = _spin_matrices_cached(hf.twice)
    return SpinOperatorSet(hf, fx.copy(), fy.copy(), fz.copy())


@dataclass(frozen=True)
class SpinOrientation:
    """Polar and azimuthal angles of the mean spin direction."""

    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta <= math.pi):
            raise DomainError(f"theta={self.theta} outside [0, pi]")
        if not (0.0 <= self.phi < 2 * math.pi):
            raise DomainError(f"phi={self.phi} outside [0, 2 pi)")

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "SpinOrientation":
        """Fold arbitrary angles onto the canonical ranges.

        A negative polar angle at azimuth phi is the same direction as
        -theta at phi + pi; this is how the xz-plane path sweeps through
        the -x hemisphere.
        """
        theta = math.remainder(theta, 2 * math.pi)
        if theta < 0:
            theta, phi = -theta, phi + math.pi
        return cls(theta, phi % (2 * math.pi))


@dataclass(frozen=True)
class CoherentSpinMoments:
    fz_mean: float
    quad_diff: float
    quad_cross: float


def coherent_state(f: HalfIntLike, orient: SpinOrientation) -> np.ndarray:
    """Amplitudes of exp(-i fz phi) exp(-i fy theta) |f, f> in the descending-m basis."""
    hf = HalfInt.coerce(f)
    tf = hf.twice
    c, s = math.cos(orient.theta / 2), math.sin(orient.theta / 2)
    amps = np.empty(tf + 1, dtype=complex)
    for k in range(tf + 1):
        m = (tf - 2 * k) / 2
        # Wigner small-d element d^f_{m f}(theta)
        d = math.sqrt(math.comb(tf, k)) * c ** (tf - k) * s**k
        amps[k] = np.exp(-1j * m * orient.phi) * d
    return amps


def coherent_spin_moments(f: HalfIntLike, orient: SpinOrientation) -> CoherentSpinMoments:
    """Closed-form moments of a spin coherent state.

    The cross moment is the symmetrised <fx fy + fy fx>; the antisymmetric
    ordering would give the purely imaginary i<fz>.
    """
    fv = float(HalfInt.coerce(f))
    s2 = math.sin(orient.theta) ** 2
    quad = fv * (fv - 0.5) * s2
    return CoherentSpinMoments(
        fz_mean=fv * math.cos(orient.theta),
        quad_diff=quad * math.cos(2 * orient.phi),
        quad_cross=quad * math.sin(2 * orient.phi),
    )
