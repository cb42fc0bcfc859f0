"""Species, cloud and probe configuration.

Files are INI-style (``[section]`` headers, ``key = value`` lines, ``#``
comments).  Every dimensioned value must carry a unit suffix; bare numbers
are only accepted for dimensionless quantities.  Ordinary frequencies are
converted to angular frequency (rad/s) on ingestion.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

import scipy.constants as const

from polariscope.angular import HalfInt, HalfIntLike
from polariscope.errors import ConfigError, DomainError

__all__ = [
    "AtomSpecies",
    "CloudParams",
    "ProbeParams",
    "SimulationParams",
    "ExperimentConfig",
    "parse_quantity",
    "load_species",
    "load_experiment",
    "dump_experiment",
    "builtin_path",
    "REFERENCE_EXPERIMENT",
]

TWO_PI = 2.0 * math.pi

# kind -> {suffix: power of ten to SI}
_UNITS: dict[str, dict[str, int]] = {
    "frequency": {"Hz": 0, "kHz": 3, "MHz": 6, "GHz": 9},
    "power": {"W": 0, "mW": -3, "uW": -6, "µW": -6, "nW": -9},
    "length": {"m": 0, "cm": -2, "mm": -3, "um": -6, "µm": -6, "nm": -9},
    "time": {"s": 0, "ms": -3, "us": -6, "µs": -6, "ns": -9},
}
_DEG = math.pi / 180.0


def _scaled(number: float, exponent: int) -> float:
    # divide for sub-unit prefixes so that e.g. 10 uW is exactly 1e-05
    return number * 10**exponent if exponent >= 0 else number / 10 ** (-exponent)


_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d].*?)?\s*$")


def parse_quantity(text: str, kind: str) -> float:
    """Parse ``"150 MHz"``-style text into SI units.

    ``kind="frequency"`` returns angular frequency in rad/s: values given in
    Hz-family units are multiplied by 2 pi, values given in ``rad/s`` are
    taken as-is.
    """
    m = _QUANTITY.match(text)
    if not m:
        raise ConfigError(f"cannot parse quantity {text!r}")
    number, unit = float(m.group(1)), (m.group(2) or "").strip()
    if not unit:
        raise ConfigError(f"{text!r} needs a unit suffix ({kind})")
    if kind == "frequency":
        if unit == "rad/s":
            return number
        if unit in _UNITS["frequency"]:
            return TWO_PI * _scaled(number, _UNITS["frequency"][unit])
    elif kind == "angle":
        if unit == "rad":
            return number
        if unit == "deg":
            return number * _DEG
    elif unit in _UNITS[kind]:
        return _scaled(number, _UNITS[kind][unit])
    raise ConfigError(f"unit {unit!r} in {text!r} is not a {kind} unit")


@dataclass(frozen=True)
class AtomSpecies:
    """Ground manifold plus the excited hyperfine levels of one optical line.

    ``excited_levels`` holds ``(f', offset)`` pairs, with offsets in rad/s
    measured from the reference line (the level with zero offset, normally
    f' = f + 1).
    """

    name: str
    nuclear_spin: HalfInt
    ground_j: HalfInt
    excited_j: HalfInt
    ground_f: HalfInt
    linewidth: float
    wavelength: float
    excited_levels: tuple[tuple[HalfInt, float], ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        i, j, jp, f = self.nuclear_spin, self.ground_j, self.excited_j, self.ground_f
        if not (abs(i.twice - j.twice) <= f.twice <= i.twice + j.twice) or (f.twice - i.twice - j.twice) % 2:
            raise DomainError(f"ground f={f} is not allowed for i={i}, j={j}")
        if not self.linewidth > 0:
            raise DomainError("linewidth must be positive")
        if not self.wavelength > 0:
            raise DomainError("wavelength must be positive")
        if not self.excited_levels:
            raise DomainError("species needs at least one excited level")
        seen = set()
        for fp, _ in self.excited_levels:
            lo, hi = abs(jp.twice - i.twice), jp.twice + i.twice
            if not (lo <= fp.twice <= hi) or (fp.twice - lo) % 2:
                raise DomainError(f"excited level f'={fp} outside [{HalfInt(lo)}, {HalfInt(hi)}] for j'={jp}, i={i}")
            if fp in seen:
                raise DomainError(f"excited level f'={fp} listed twice")
            seen.add(fp)
        offsets = [off for _, off in sorted(self.excited_levels)]
        diffs = [b - a for a, b in zip(offsets, offsets[1:])]
        if not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
            raise DomainError("excited level offsets must be strictly ordered in f'")
        if sum(1 for off in offsets if off == 0.0) != 1:
            raise DomainError("exactly one excited level must have offset 0 (the reference line)")

    @property
    def levels(self) -> list[HalfInt]:
        return sorted(fp for fp, _ in self.excited_levels)

    @property
    def reference_level(self) -> HalfInt:
        return next(fp for fp, off in self.excited_levels if off == 0.0)

    def offset(self, fprime: HalfIntLike) -> float:
        fp = HalfInt.coerce(fprime)
        for level, off in self.excited_levels:
            if level == fp:
                return off
        raise DomainError(f"species {self.name!r} has no excited level f'={fp}")

    def level_detuning(self, probe_detuning: float, fprime: HalfIntLike) -> float:
        """Delta_{f,f'} for a probe detuned ``probe_detuning`` from the reference line."""
        return probe_detuning - self.offset(fprime)

    def resonances(self, probe_detuning: float, rel_tol: float = 1e-9) -> list[HalfInt]:
        """Excited levels on which the probe sits (|Delta_{f,f'}| below rel_tol * linewidth)."""
        return [
            fp for fp, off in self.excited_levels if abs(probe_detuning - off) <= rel_tol * self.linewidth
        ]

    def check_off_resonance(self, probe_detuning: float) -> None:
        hits = self.resonances(probe_detuning)
        if hits:
            names = ", ".join(f"f'={fp}" for fp in hits)
            raise DomainError(f"probe detuning {probe_detuning:.6g} rad/s is on resonance with {names}")

    @property
    def omega0(self) -> float:
        return TWO_PI * const.c / self.wavelength

    @property
    def sigma0(self) -> float:
        """Resonant scattering cross section 3 lambda^2 / 2 pi."""
        return 3.0 * self.wavelength**2 / TWO_PI

    def with_ground(self, f: HalfIntLike) -> "AtomSpecies":
        """A synthetic species with ground spin f, keeping j, j', linewidth and wavelength.

        The nuclear spin is chosen as f - j (or j - f) so that f is allowed,
        and every excited level permitted by (j', i) is included with a
        placeholder spacing of one linewidth, reference on the top level.
        """
        hf = HalfInt.coerce(f)
        i = HalfInt(abs(hf.twice - self.ground_j.twice))
        return AtomSpecies.synthetic(hf, i=i, j=self.ground_j, jp=self.excited_j,
                                     linewidth=self.linewidth, wavelength=self.wavelength)

    @classmethod
    def synthetic(
        cls,
        f: HalfIntLike,
        *,
        i: Optional[HalfIntLike] = None,
        j: HalfIntLike = "1/2",
        jp: HalfIntLike = "3/2",
        linewidth: float = TWO_PI * 5e6,
        wavelength: float = 852e-9,
        spacing: Optional[float] = None,
    ) -> "AtomSpecies":
        hf, hj, hjp = HalfInt.coerce(f), HalfInt.coerce(j), HalfInt.coerce(jp)
        hi = HalfInt.coerce(i) if i is not None else HalfInt(abs(hf.twice - hj.twice))
        spacing = linewidth if spacing is None else spacing
        lo, hi_f = abs(hjp.twice - hi.twice), hjp.twice + hi.twice
        fps = [HalfInt(t) for t in range(lo, hi_f + 1, 2)]
        top = fps[-1].twice
        levels = tuple((fp, -spacing * (top - fp.twice) / 2) for fp in fps)
        return cls(
            name=f"synthetic f={hf} i={hi} j={hj} j'={hjp}",
            nuclear_spin=hi, ground_j=hj, excited_j=hjp, ground_f=hf,
            linewidth=linewidth, wavelength=wavelength, excited_levels=levels,
        )


@dataclass(frozen=True)
class CloudParams:
    """Uniform cylindrical cloud of cross section pi r^2 and depth L."""

    n_atoms: float
    radius: float
    wavelength: float
    length: Optional[float] = None

    def __post_init__(self) -> None:
        if self.length is None:
            object.__setattr__(self, "length", 2.0 * self.radius)
        for name in ("radius", "wavelength", "length"):
            if not getattr(self, name) > 0:
                raise DomainError(f"cloud {name} must be positive")
        if self.n_atoms < 0:
            raise DomainError("atom number must be non-negative")

    @classmethod
    def for_species(cls, species: AtomSpecies, n_atoms: float, radius: float,
                    length: Optional[float] = None) -> "CloudParams":
        return cls(n_atoms=n_atoms, radius=radius, wavelength=species.wavelength, length=length)

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    @property
    def volume(self) -> float:
        return self.area * self.length

    @property
    def sigma0(self) -> float:
        return 3.0 * self.wavelength**2 / TWO_PI

    @property
    def od(self) -> float:
        """On-resonance optical depth N sigma0 / A."""
        return self.n_atoms * self.sigma0 / self.area


@dataclass(frozen=True)
class ProbeParams:
    """Probe power (W), photon energy (J), detuning from the reference line (rad/s)."""

    power: float
    photon_energy: float
    detuning: float
    efficiency: float = 1.0
    pol_angle: float = 0.0

    def __post_init__(self) -> None:
        if self.power < 0:
            raise DomainError("probe power must be non-negative")
        if not self.photon_energy > 0:
            raise DomainError("photon energy must be positive")
        if not 0.0 <= self.efficiency <= 1.0:
            raise DomainError(f"efficiency {self.efficiency} outside [0, 1]")

    @classmethod
    def from_wavelength(cls, power: float, wavelength: float, detuning: float, **kw) -> "ProbeParams":
        return cls(power=power, photon_energy=const.h * const.c / wavelength, detuning=detuning, **kw)

    def replace(self, **changes) -> "ProbeParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SimulationParams:
    dt: float = 1e-6
    duration: float = 1e-3
    seed: int = 0
    samples: int = 201
    trials: int = 500
    theta: float = math.pi / 2
    phi: float = 0.0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.duration < self.dt:
            raise DomainError("duration must be at least one time step")
        if self.samples < 1:
            raise DomainError("samples must be at least 1")
        if self.trials < 1:
            raise DomainError("trials must be at least 1")


@dataclass(frozen=True)
class ExperimentConfig:
    species: AtomSpecies
    cloud: CloudParams
    probe: ProbeParams
    simulation: SimulationParams = field(default_factory=SimulationParams)
    species_ref: str = ""
    source: str = ""


# --------------------------------------------------------------------------
# file ingestion

_BUILTIN = {"cesium_d2": "cesium_d2.ini"}
REFERENCE_EXPERIMENT = "reference_experiment.ini"


def builtin_path(name: str) -> Path:
    """Path of a data file shipped with the package."""
    fname = _BUILTIN.get(name, name)
    return Path(str(resources.files("polariscope") / "data" / fname))


class _Source:
    """ConfigParser wrapper that remembers which line each key came from."""

    def __init__(self, text: str, origin: str):
        self.origin = origin
        self.parser = configparser.ConfigParser(
            inline_comment_prefixes=("#",), comment_prefixes=("#",), interpolation=None
        )
        self.parser.optionxform = str
        try:
            self.parser.read_string(text, source=origin)
        except configparser.Error as exc:
            raise ConfigError(f"{origin}: {exc}") from None
        self.lines: dict[tuple[str, str], int] = {}
        section = None
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
            elif "=" in line and section is not None:
                self.lines[(section, line.split("=", 1)[0].strip())] = n

    def where(self, section: str, key: str) -> str:
        n = self.lines.get((section, key))
        return f"{self.origin}:{n}" if n else f"{self.origin} [{section}]"

    def section(self, name: str) -> configparser.SectionProxy:
        if not self.parser.has_section(name):
            raise ConfigError(f"{self.origin}: missing section [{name}]")
        return self.parser[name]

    def raw(self, section: str, key: str, default: Optional[str] = None) -> str:
        sec = self.section(section)
        if key not in sec:
            if default is not None:
                return default
            raise ConfigError(f"{self.origin}: [{section}] is missing required field {key!r}")
        return sec[key]

    def quantity(self, section: str, key: str, kind: str, default: Optional[str] = None) -> float:
        text = self.raw(section, key, default)
        try:
            return parse_quantity(text, kind)
        except ConfigError as exc:
            raise ConfigError(f"{self.where(section, key)}: {key}: {exc}") from None

    def number(self, section: str, key: str, default: Optional[str] = None, cast=float):
        text = self.raw(section, key, default)
        try:
            return cast(float(text)) if cast is int else cast(text)
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: {key}: expected a number, got {text!r}") from None

    def spin(self, section: str, key: str) -> HalfInt:
        text = self.raw(section, key)
        try:
            return HalfInt.coerce(text)
        except (ValueError, DomainError):
            raise ConfigError(f"{self.where(section, key)}: {key}: {text!r} is not a spin value") from None


def _read(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def load_species(path: "str | Path") -> AtomSpecies:
    """Load and validate a species file (or a built-in name such as ``cesium_d2``)."""
    p = Path(path)
    if not p.exists() and str(path) in _BUILTIN:
        p = builtin_path(str(path))
    src = _Source(_read(p), str(p))
    sp = "species"
    name = src.raw(sp, "name")
    i, j, jp, f = (src.spin(sp, k) for k in ("nuclear_spin", "ground_j", "excited_j", "ground_f"))
    linewidth = src.quantity(sp, "linewidth", "frequency")
    wavelength = src.quantity(sp, "wavelength", "length")
    levels = []
    for key in src.section("levels"):
        try:
            fp = HalfInt.coerce(key)
        except (ValueError, DomainError):
            raise ConfigError(f"{src.where('levels', key)}: {key!r} is not an excited f' value") from None
        lo, hi = abs(jp.twice - i.twice), jp.twice + i.twice
        if not (lo <= fp.twice <= hi) or (fp.twice - lo) % 2:
            raise ConfigError(
                f"{src.where('levels', key)}: excited level f'={fp} outside [{HalfInt(lo)}, {HalfInt(hi)}] "
                f"allowed by j'={jp}, i={i}"
            )
        levels.append((fp, src.quantity("levels", key, "frequency")))
    try:
        return AtomSpecies(
            name=name, nuclear_spin=i, ground_j=j, excited_j=jp, ground_f=f,
            linewidth=linewidth, wavelength=wavelength, excited_levels=tuple(levels),
            provenance=src.raw(sp, "provenance", ""),
        )
    except DomainError as exc:
        raise ConfigError(f"{p}: {exc}") from None


def load_experiment(path: "str | Path") -> ExperimentConfig:
    """Load and validate an experiment file; the species is resolved relative to it."""
    p = Path(path)
    src = _Source(_read(p), str(p))
    species_ref = src.raw("experiment", "species")
    sp_path = Path(species_ref)
    if not sp_path.is_absolute() and (p.parent / sp_path).exists():
        sp_path = p.parent / sp_path
    if sp_path.exists():
        species = load_species(sp_path)
        species_ref = str(sp_path.resolve())
    else:
        species = load_species(species_ref)

    try:
        length = src.quantity("cloud", "length", "length") if "length" in src.section("cloud") else None
        cloud = CloudParams.for_species(
            species,
            n_atoms=src.number("cloud", "atoms"),
            radius=src.quantity("cloud", "radius", "length"),
            length=length,
        )
        probe = ProbeParams.from_wavelength(
            power=src.quantity("probe", "power", "power"),
            wavelength=species.wavelength,
            detuning=src.quantity("probe", "detuning", "frequency"),
            efficiency=src.number("probe", "efficiency", "1"),
            pol_angle=src.quantity("probe", "polarization_angle", "angle", "0 rad"),
        )
        sim = SimulationParams(
            dt=src.quantity("simulation", "dt", "time", "1 us"),
            duration=src.quantity("simulation", "duration", "time", "1 ms"),
            seed=src.number("simulation", "seed", "0", int),
            samples=src.number("simulation", "samples", "201", int),
            trials=src.number("simulation", "trials", "500", int),
            theta=src.quantity("simulation", "theta", "angle", "90 deg"),
            phi=src.quantity("simulation", "phi", "angle", "0 deg"),
        )
    except DomainError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    if not probe.power > 0:
        raise ConfigError(f"{src.where('probe', 'power')}: probe power must be positive")
    try:
        species.check_off_resonance(probe.detuning)
    except DomainError as exc:
        raise ConfigError(f"{src.where('probe', 'detuning')}: {exc}") from None
    return ExperimentConfig(species, cloud, probe, sim, species_ref=species_ref, source=str(p))


def dump_experiment(cfg: ExperimentConfig, path: "str | Path") -> None:
    """Write ``cfg`` back out in SI units; reloading reproduces it bit-exactly."""
    sim = cfg.simulation
    lines = [
        "[experiment]",
        f"species = {cfg.species_ref or cfg.species.name}",
        "",
        "[cloud]",
        f"atoms = {cfg.cloud.n_atoms!r}",
        f"radius = {cfg.cloud.radius!r} m",
        f"length = {cfg.cloud.length!r} m",
        "",
        "[probe]",
        f"power = {cfg.probe.power!r} W",
        f"detuning = {cfg.probe.detuning!r} rad/s",
        f"efficiency = {cfg.probe.efficiency!r}",
        f"polarization_angle = {cfg.probe.pol_angle!r} rad",
        "",
        "[simulation]",
        f"dt = {sim.dt!r} s",
        f"duration = {sim.duration!r} s",
        f"seed = {sim.seed}",
        f"samples = {sim.samples}",
        f"trials = {sim.trials}",
        f"theta = {sim.theta!r} rad",
        f"phi = {sim.phi!r} rad",
        "",
    ]
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def iter_levels(species: AtomSpecies, coupled_only: bool = True) -> Iterable[HalfInt]:
    f = species.ground_f.twice
    for fp in species.levels:
        if not coupled_only or abs(fp.twice - f) <= 2:
            yield fp
