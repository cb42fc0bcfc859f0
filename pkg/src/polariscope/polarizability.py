"""Polarizability dyad and its irreducible rank-0/1/2 decomposition.

Two independent constructions are provided and are meant to be checked
against each other:

* the *dyad route* builds dipole matrix elements from Clebsch-Gordan
  coefficients and 6-j symbols, forms P_f d P_f' d^dagger P_f, and projects
  the dyad onto irreducible components with a second set of CG sums;
* the *closed-form route* writes each component directly as a polynomial in
  the ground-state spin operators with the coefficients alpha^(j)_{f,f'}.

Matrices on the ground manifold carry units of |<j||d||j'>|^2 in the dyad
route and are reported in units of alpha_0 by both routes.  In reduced
units alpha_0 = (2j+1)/(2j'+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as const

from polariscope.angular import (
    HalfInt,
    HalfIntLike,
    clebsch_gordan,
    projections,
    spin_matrices,
    wigner6j,
)
from polariscope.atomdata import AtomSpecies
from polariscope.errors import DomainError

__all__ = [
    "DipoleBlock",
    "PolarizabilityDyad",
    "IrreducibleCoefficients",
    "TensorOperator",
    "reduced_element_factor",
    "dipole_block",
    "polarizability_dyad",
    "project_dyad_onto_rank",
    "reconstruct_dyad",
    "alpha_coefficients",
    "extract_alpha_coefficients",
    "irreducible_tensor_operator",
    "closed_form_components",
    "decomposition_residual",
    "tensor_hamiltonian_operators",
    "alpha_zero",
]

HELICITIES = (-1, 0, 1)


@dataclass(frozen=True)
class DipoleBlock:
    """Matrices <f m| d_q |f' m'> / <j||d||j'> for q = -1, 0, +1."""

    f: HalfInt
    fprime: HalfInt
    d: dict[int, np.ndarray]

    def __getitem__(self, q: int) -> np.ndarray:
        return self.d[q]


@dataclass(frozen=True)
class PolarizabilityDyad:
    """Components A_{q,q'} = D_q D_{q'}^dagger of P_f d P_f' d^dagger P_f.

    ``alpha0`` is alpha_0 expressed in the same reduced units, so
    ``A / alpha0`` is the dyad in units of alpha_0.
    """

    f: HalfInt
    fprime: HalfInt
    components: dict[tuple[int, int], np.ndarray]
    alpha0: float

    def __getitem__(self, key: tuple[int, int]) -> np.ndarray:
        return self.components[key]


@dataclass(frozen=True)
class IrreducibleCoefficients:
    """alpha^(0,1,2)_{f,f'} / alpha_0."""

    f: HalfInt
    fprime: HalfInt
    alpha0_norm: tuple[float, float, float]

    def __getitem__(self, rank: int) -> float:
        return self.alpha0_norm[rank]


@dataclass(frozen=True)
class TensorOperator:
    rank: int
    component: int
    matrix: np.ndarray


def _coerce_levels(species: AtomSpecies, f: HalfIntLike, fprime: HalfIntLike) -> tuple[HalfInt, HalfInt]:
    hf, hfp = HalfInt.coerce(f), HalfInt.coerce(fprime)
    i, j, jp = species.nuclear_spin, species.ground_j, species.excited_j
    if hf != species.ground_f and not (abs(i.twice - j.twice) <= hf.twice <= i.twice + j.twice):
        raise DomainError(f"f={hf} is not a ground level of {species.name}")
    if not (abs(i.twice - jp.twice) <= hfp.twice <= i.twice + jp.twice):
        raise DomainError(f"f'={hfp} is not an excited level of {species.name}")
    return hf, hfp


def _alpha0_reduced(species: AtomSpecies) -> float:
    return (species.ground_j.twice + 1) / (species.excited_j.twice + 1)


def reduced_element_factor(species: AtomSpecies, f: HalfIntLike, fprime: HalfIntLike) -> float:
    """<f||d||f'> / <j||d_e||j'>, including the phase.

    (-1)^(f'+j+i+1) sqrt((2f'+1)(2j+1)) {1 j j'; i f' f}; zero when the
    levels are not dipole coupled.
    """
    hf, hfp = _coerce_levels(species, f, fprime)
    i, j, jp = species.nuclear_spin, species.ground_j, species.excited_j
    sixj = wigner6j(1, j, jp, i, hfp, hf)
    if sixj == 0.0:
        return 0.0
    phase = -1.0 if ((hfp.twice + j.twice + i.twice) // 2 + 1) % 2 else 1.0
    return phase * math.sqrt((hfp.twice + 1) * (j.twice + 1)) * sixj


def dipole_block(species: AtomSpecies, f: HalfIntLike, fprime: HalfIntLike) -> DipoleBlock:
    """Wigner-Eckart dipole matrices <f m| d_q |f' m'> = <1 q; f' m' | f m> <f||d||f'>."""
    hf, hfp = _coerce_levels(species, f, fprime)
    red = reduced_element_factor(species, hf, hfp)
    ms, mps = projections(hf), projections(hfp)
    blocks = {}
    for q in HELICITIES:
        mat = np.zeros((len(ms), len(mps)))
        if red != 0.0:
            for a, m in enumerate(ms):
                tmp = m.twice - 2 * q
                if abs(tmp) <= hfp.twice:
                    b = (hfp.twice - tmp) // 2
                    mat[a, b] = clebsch_gordan(1, q, hfp, mps[b], hf, m) * red
        blocks[q] = mat
    return DipoleBlock(hf, hfp, blocks)


def polarizability_dyad(species: AtomSpecies, f: HalfIntLike, fprime: HalfIntLike) -> PolarizabilityDyad:
    block = dipole_block(species, f, fprime)
    comps = {(q, qp): block[q] @ block[qp].conj().T for q in HELICITIES for qp in HELICITIES}
    return PolarizabilityDyad(block.f, block.fprime, comps, _alpha0_reduced(species))


def _raising_product(dyad: PolarizabilityDyad, q: int, qp: int) -> np.ndarray:
    # d_q times the q' spherical component of the raising operator d^dagger:
    # (d^dagger)_{q'} = (-1)^q' (d_{-q'})^dagger, so the product is (-1)^q' A_{q,-q'}
    sign = -1.0 if qp % 2 else 1.0
    return sign * dyad[(q, -qp)] / dyad.alpha0


def project_dyad_onto_rank(dyad: PolarizabilityDyad, j: int) -> dict[int, np.ndarray]:
    """Rank-j components T^(j)_m = sum_{q,q'} d_q d^dagger_q' <1 q; 1 q' | j m>, in alpha_0 units."""
    if j not in (0, 1, 2):
        raise DomainError(f"rank {j} not in (0, 1, 2)")
    out = {}
    for m in range(-j, j + 1):
        acc = np.zeros_like(dyad[(0, 0)], dtype=complex)
        for q in HELICITIES:
            qp = m - q
            if abs(qp) <= 1:
                cg = clebsch_gordan(1, q, 1, qp, j, m)
                if cg:
                    acc = acc + cg * _raising_product(dyad, q, qp)
        out[m] = acc
    return out


def reconstruct_dyad(components: dict[int, dict[int, np.ndarray]], alpha0: float) -> dict[tuple[int, int], np.ndarray]:
    """Invert the projection: rebuild every A_{q,q'} (reduced units) from {rank: {m: T}}."""
    out = {}
    for q in HELICITIES:
        for qp in HELICITIES:
            # A_{q,q'} = (-1)^q' d_q (d^dagger)_{-q'}
            s = -qp
            acc = 0
            for j, comps in components.items():
                m = q + s
                if abs(m) <= j:
                    acc = acc + clebsch_gordan(1, q, 1, s, j, m) * comps[m]
            sign = -1.0 if qp % 2 else 1.0
            out[(q, qp)] = sign * alpha0 * acc
    return out


def alpha_coefficients(species: AtomSpecies, f: HalfIntLike, fprime: HalfIntLike) -> IrreducibleCoefficients:
    """Closed-form alpha^(j)_{f,f'} / alpha_0 for j = 0, 1, 2."""
    hf, hfp = _coerce_levels(species, f, fprime)
    i, j, jp = species.nuclear_spin, species.ground_j, species.excited_j
    sixj = wigner6j(1, j, jp, i, hfp, hf)
    scale = ((jp.twice + 1) / (j.twice + 1)) ** 2 * sixj**2
    fv = float(hf)
    diff = hfp.twice - hf.twice
    if scale == 0.0 or abs(diff) > 2:
        return IrreducibleCoefficients(hf, hfp, (0.0, 0.0, 0.0))
    if diff == -2:
        a = (2 * fv - 1, -(2 * fv - 1) / fv, 1 / fv)
    elif diff == 0:
        a = (2 * fv + 1, -(2 * fv + 1) / (fv * (fv + 1)), -(2 * fv + 1) / (fv * (fv + 1)))
    else:
        a = (2 * fv + 3, (2 * fv + 3) / (fv + 1), 1 / (fv + 1))
    return IrreducibleCoefficients(hf, hfp, tuple(scale * x for x in a))


def _rank_basis(f: HalfInt, j: int) -> dict[int, np.ndarray]:
    """Spin-operator matrices multiplying alpha^(j) in each closed-form component."""
    s = spin_matrices(f)
    one, fz = s.identity, s.fz
    fp, fm = s.spherical(1), s.spherical(-1)
    fv = float(f)
    if j == 0:
        return {0: -one / math.sqrt(3)}
    if j == 1:
        return {0: fz / math.sqrt(2), 1: fp / math.sqrt(2), -1: fm / math.sqrt(2)}
    if j == 2:
        return {
            0: -(3 * fz @ fz - fv * (fv + 1) * one) / math.sqrt(6),
            1: -math.sqrt(2) * fp @ (fz + one / 2),
            -1: -math.sqrt(2) * fm @ (fz - one / 2),
            2: -fp @ fp,
            -2: -fm @ fm,
        }
    raise DomainError(f"rank {j} not in (0, 1, 2)")


def irreducible_tensor_operator(species: AtomSpecies, f: HalfIntLike, fprime: HalfIntLike, j: int, m: int) -> TensorOperator:
    """Closed-form T^(j)_m on the ground manifold, in alpha_0 units.

    The spherical spin components use f_{+-1} = -+(f_x +- i f_y)/sqrt(2).
    """
    if abs(m) > j:
        raise DomainError(f"component m={m} invalid for rank {j}")
    coeffs = alpha_coefficients(species, f, fprime)
    basis = _rank_basis(coeffs.f, j)
    return TensorOperator(j, m, coeffs[j] * basis[m])


def closed_form_components(species: AtomSpecies, f: HalfIntLike, fprime: HalfIntLike, j: int) -> dict[int, np.ndarray]:
    return {m: irreducible_tensor_operator(species, f, fprime, j, m).matrix for m in range(-j, j + 1)}


def extract_alpha_coefficients(dyad: PolarizabilityDyad) -> IrreducibleCoefficients:
    """alpha^(j) / alpha_0 recovered from the projected dyad.

    Each rank is fitted by least squares on its m = 0 component against the
    closed-form spin matrix.  When that matrix vanishes the largest-magnitude
    element of any other component is used instead; ranks whose spin
    matrices vanish identically (rank 2 at f = 1/2) are undetermined and
    returned as NaN.
    """
    out = []
    for j in (0, 1, 2):
        proj = project_dyad_onto_rank(dyad, j)
        basis = _rank_basis(dyad.f, j)
        den = np.vdot(basis[0], basis[0]).real
        if den > 1e-24:
            out.append(float(np.vdot(basis[0], proj[0]).real / den))
            continue
        best = None
        for m, b in basis.items():
            idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
            if abs(b[idx]) > 1e-12 and (best is None or abs(b[idx]) > abs(best[0])):
                best = (b[idx], proj[m][idx])
        out.append(float((best[1] / best[0]).real) if best else math.nan)
    return IrreducibleCoefficients(dyad.f, dyad.fprime, tuple(out))


def decomposition_residual(species: AtomSpecies, f: HalfIntLike, fprime: HalfIntLike) -> float:
    """Largest elementwise difference between the two routes over all ranks and components (alpha_0 units)."""
    dyad = polarizability_dyad(species, f, fprime)
    worst = 0.0
    for j in (0, 1, 2):
        proj = project_dyad_onto_rank(dyad, j)
        closed = closed_form_components(species, f, fprime, j)
        for m in proj:
            worst = max(worst, float(np.max(np.abs(proj[m] - closed[m]))))
    return worst


def tensor_hamiltonian_operators(f: HalfIntLike) -> dict[str, np.ndarray]:
    """Spin operators multiplying S_x, S_y and S_0 in the rank-2 Hamiltonian."""
    s = spin_matrices(f)
    fv = float(s.f)
    return {
        "fx2_minus_fy2": s.fx @ s.fx - s.fy @ s.fy,
        "fxfy_plus_fyfx": s.fx @ s.fy + s.fy @ s.fx,
        "quadrupole_z": (3 * s.fz @ s.fz - fv * (fv + 1) * s.identity) / 3,
    }


def alpha_zero(species: AtomSpecies) -> float:
    """alpha_0 = 3 eps0 hbar Gamma lambda0^3 / (8 pi^2), SI units (C^2 m^2 J^-1)."""
    return 3 * const.epsilon_0 * const.hbar * species.linewidth * species.wavelength**3 / (8 * math.pi**2)
