"""Command-line front end.

    polariscope <decompose|trajectory|scan|photocurrent|squeeze> [--config PATH] [--out DIR] [flags]

Each command writes ``<command>.csv``, a ``<command>.png`` figure of the
same data and a ``<command>.json`` run manifest into ``--out``.  Exit codes:
0 success, 2 user or configuration error, 3 internal-consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from polariscope import __version__
from polariscope import measurement as meas
from polariscope import plotting
from polariscope.angular import HalfInt, SpinOrientation
from polariscope.atomdata import (
    REFERENCE_EXPERIMENT,
    TWO_PI,
    ExperimentConfig,
    builtin_path,
    load_experiment,
    parse_quantity,
)
from polariscope.errors import ConfigError, ConsistencyError, DomainError, PolariscopeError
from polariscope.polarizability import alpha_coefficients, decomposition_residual, tensor_hamiltonian_operators
from polariscope.semiclassical import (
    PathKind,
    PathSpec,
    crossing_frequency,
    detuning_scan,
    loglog_slopes,
    simulate_trajectory,
)

__all__ = ["main", "build_parser", "UsageError"]

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 3


class UsageError(PolariscopeError, ValueError):
    """Bad command-line flag value."""


# --------------------------------------------------------------------------
# output helpers


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        moment = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return moment.isoformat().replace("+00:00", "Z")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class Run:
    """Collects output files and manifest fields for one command."""

    def __init__(self, command: str, args: argparse.Namespace, cfg: ExperimentConfig, seed: int):
        self.command = command
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config_path = args.config or f"builtin:{REFERENCE_EXPERIMENT}"
        self.seed = int(seed)
        self.paths: list[str] = []
        self.extras: dict[str, Any] = {}
        self.warnings: list[str] = []
        self.plots = not args.no_plot

    def path(self, suffix: str, stem: Optional[str] = None) -> Path:
        p = self.out / f"{stem or self.command}{suffix}"
        self.paths.append(p.name)
        return p

    def figure(self, draw: Callable[[Path], Path], stem: Optional[str] = None) -> None:
        if self.plots:
            draw(self.path(".png", stem))

    def finish(self) -> Path:
        target = self.out / f"{self.command}.json"
        manifest = {
            "command": self.command,
            "config_path": self.config_path,
            "seed": self.seed,
            "output_paths": self.paths + [target.name],
            "tool_version": __version__,
            "timestamp": _timestamp(),
            "warnings": self.warnings,
            "extras": _jsonable(self.extras),
        }
        target.write_text(json.dumps(manifest, indent=2, sort_keys=False) + "\n", encoding="utf-8")
        return target


# --------------------------------------------------------------------------
# commands


def cmd_decompose(args: argparse.Namespace, cfg: ExperimentConfig) -> Run:
    species = cfg.species
    if args.spin is not None:
        f = HalfInt.coerce(args.spin)
        try:
            species = species if f == species.ground_f else _species_for_spin(species, f)
        except DomainError as exc:
            raise UsageError(f"--spin {args.spin}: {exc}") from None
    f = species.ground_f
    run = Run("decompose", args, cfg, cfg.simulation.seed)
    rows, table = [], []
    worst = 0.0
    for fp in species.levels:
        a = alpha_coefficients(species, f, fp)
        res = decomposition_residual(species, f, fp)
        worst = max(worst, res)
        rows.append((str(f), str(fp), a[0], a[1], a[2], res))
        table.append(a.alpha0_norm)
    if worst > 1e-12:
        raise ConsistencyError(f"dyad and closed-form decompositions differ by {worst:.3g}")
    write_csv(run.path(".csv"), ["f", "fprime", "alpha0_norm", "alpha1_norm", "alpha2_norm", "residual_norm"], rows)
    norms = [(name, float(np.linalg.norm(op))) for name, op in tensor_hamiltonian_operators(f).items()]
    write_csv(run.path(".csv", "decompose_rank2"), ["operator", "frobenius_norm"], norms)
    run.figure(lambda p: plotting.plot_decomposition(p, [str(fp) for fp in species.levels], np.array(table), species.name))
    run.extras.update(species=species.name, ground_f=str(f), max_residual=worst,
                      rank2_operator_norms=dict(norms))
    return run


def _species_for_spin(species, f: HalfInt):
    try:
        return type(species)(
            name=species.name, nuclear_spin=species.nuclear_spin, ground_j=species.ground_j,
            excited_j=species.excited_j, ground_f=f, linewidth=species.linewidth,
            wavelength=species.wavelength, excited_levels=species.excited_levels,
            provenance=species.provenance,
        )
    except DomainError:
        return species.with_ground(f)


def _positive_samples(value: Optional[int], default: int) -> int:
    n = default if value is None else value
    if n < 1:
        raise UsageError(f"--samples must be at least 1 (got {n})")
    return n


def cmd_trajectory(args: argparse.Namespace, cfg: ExperimentConfig) -> Run:
    samples = _positive_samples(args.samples, cfg.simulation.samples)
    kind = PathKind(args.path)
    result = simulate_trajectory(cfg.species, cfg.cloud, cfg.probe, PathSpec(kind, samples))
    run = Run("trajectory", args, cfg, cfg.simulation.seed)
    write_csv(run.path(".csv"), ["path_parameter", "sy_norm", "sz_norm"], result.rows())
    xlabel = r"$\theta$ (rad)" if kind is PathKind.XZ_PLANE else r"$\phi$ (rad)"
    run.figure(lambda p: plotting.plot_trajectory(p, result.parameter, result.sy_norm, result.sz_norm, xlabel, args.measure))
    measured = result.sy_norm if args.measure == "sy" else result.sz_norm
    other = result.sz_norm if args.measure == "sy" else result.sy_norm
    run.extras.update(
        path=kind.value,
        measure=args.measure,
        samples=samples,
        detuning_rad_s=cfg.probe.detuning,
        gamma_max=result.gamma_max,
        measured_peak=float(np.max(np.abs(measured))),
        other_peak=float(np.max(np.abs(other))),
        crossing_frequency=crossing_frequency(result.parameter, measured),
    )
    return run


def _frequency(text: str, flag: str) -> float:
    try:
        return parse_quantity(text, "frequency")
    except ConfigError as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _slope_summary(x: np.ndarray, y: np.ndarray) -> dict[str, Any]:
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & (y != 0)
    if ok.sum() < 2:
        return {"fit": None, "local_min": None, "local_max": None, "far_end": None, "variation": None}
    lx, ly = np.log(np.abs(x[ok])), np.log(np.abs(y[ok]))
    local = loglog_slopes(x[ok], y[ok])
    order = np.argsort(np.abs(x[ok]))
    far = loglog_slopes(x[ok][order][-2:], y[ok][order][-2:])[0]
    return {
        "fit": float(np.polyfit(lx, ly, 1)[0]),
        "local_min": float(local.min()),
        "local_max": float(local.max()),
        "far_end": float(far),
        "variation": float((local.max() - local.min()) / abs(local.mean())),
    }


def cmd_scan(args: argparse.Namespace, cfg: ExperimentConfig) -> Run:
    lo = _frequency(getattr(args, "from"), "--from")
    hi = _frequency(args.to, "--to")
    if args.points < 1:
        raise UsageError(f"--points must be at least 1 (got {args.points})")
    samples = _positive_samples(args.samples, cfg.simulation.samples)
    species = cfg.species
    a, b = min(lo, hi), max(lo, hi)
    hits = [(fp, off) for fp, off in species.excited_levels
            if a - 1e-9 * species.linewidth <= off <= b + 1e-9 * species.linewidth
            and any(alpha_coefficients(species, species.ground_f, fp).alpha0_norm)]
    if hits:
        listing = ", ".join(f"f'={fp} at {off / TWO_PI / 1e6:.6g} MHz" for fp, off in hits)
        raise UsageError(f"scan range contains resonances: {listing}")
    if args.points == 1:
        grid = np.array([lo])
    elif args.log:
        if lo == 0 or hi == 0 or (lo < 0) != (hi < 0):
            raise UsageError("--log needs --from and --to of the same nonzero sign")
        grid = np.sign(lo) * np.geomspace(abs(lo), abs(hi), args.points)
    else:
        grid = np.linspace(lo, hi, args.points)
    points = detuning_scan(species, cfg.cloud, cfg.probe, grid, samples)
    det = np.array([p.detuning for p in points])
    vec = np.array([p.vector_peak for p in points])
    ten = np.array([p.tensor_peak for p in points])
    run = Run("scan", args, cfg, cfg.simulation.seed)
    write_csv(run.path(".csv"), ["detuning_hz", "detuning_rad_s", "vector_peak", "tensor_peak"],
              zip((det / TWO_PI).tolist(), det.tolist(), vec.tolist(), ten.tolist()))
    run.figure(lambda p: plotting.plot_scan(p, det, vec, ten, args.log))
    run.extras.update(points=len(points), log=args.log, samples=samples)
    if len(points) > 1:
        run.extras["slopes"] = {"vector": _slope_summary(det, vec), "tensor": _slope_summary(det, ten)}
    return run


def cmd_photocurrent(args: argparse.Namespace, cfg: ExperimentConfig) -> Run:
    sim = cfg.simulation
    probe = cfg.probe if args.eta is None else cfg.probe.replace(efficiency=args.eta)
    if not 0.0 <= probe.efficiency <= 1.0:
        raise UsageError(f"--eta must lie in [0, 1] (got {probe.efficiency})")
    seed = sim.seed if args.seed is None else args.seed
    mp = meas.measurement_strength(cfg.species, cfg.cloud, probe)
    v0 = meas.coherent_prior_variance(cfg.species, cfg.cloud)
    fz = math.sqrt(v0) if args.fz is None else args.fz
    rec = meas.simulate_photocurrent(mp, fz, probe.efficiency, sim.dt, sim.duration, seed)
    trace = meas.filter_trace(rec.samples, rec.dt, v0, mp.meas_strength, probe.efficiency)
    closed = meas.conditional_variance(v0, mp.meas_strength, probe.efficiency, trace.elapsed)
    worst = float(np.max(np.abs(trace.variance - closed) / closed))
    if worst > 1e-12:
        raise ConsistencyError(f"filter variance departs from closed form by {worst:.3g}")
    run = Run("photocurrent", args, cfg, seed)
    write_csv(run.path(".csv"), ["t", "y", "estimate", "variance", "variance_closed_form"],
              zip(trace.elapsed.tolist(), rec.samples.tolist(), trace.estimate.tolist(),
                  trace.variance.tolist(), closed.tolist()))
    run.figure(lambda p: plotting.plot_photocurrent(p, trace.elapsed, rec.samples, trace.estimate, trace.variance, fz))
    run.extras.update(
        fz_true=fz, eta=probe.efficiency, dt=sim.dt, duration=sim.duration, steps=len(rec.samples),
        prior_variance=v0, meas_strength=mp.meas_strength, scattering_rate=mp.scat_rate,
        final_estimate=float(trace.estimate[-1]), final_variance=float(trace.variance[-1]),
        max_variance_rel_error=worst,
    )
    return run


def parse_tau_grid(text: str) -> np.ndarray:
    """``"start:stop:count"`` or a comma list of times; a bare ``0`` needs no unit."""

    def one(item: str) -> float:
        item = item.strip()
        try:
            bare = float(item)
        except ValueError:
            return parse_quantity(item, "time")
        if bare != 0.0:
            raise ConfigError(f"{item!r} needs a time unit")
        return 0.0

    try:
        if ":" in text:
            start, stop, count = text.split(":")
            n = int(count)
            if n < 1:
                raise UsageError("tau grid needs at least one point")
            return np.linspace(one(start), one(stop), n)
        return np.array([one(x) for x in text.split(",")])
    except (ConfigError, ValueError) as exc:
        raise UsageError(f"--tau-grid {text!r}: {exc}") from None


def cmd_squeeze(args: argparse.Namespace, cfg: ExperimentConfig) -> Run:
    sim = cfg.simulation
    taus = parse_tau_grid(args.tau_grid) if args.tau_grid else np.linspace(0.0, sim.duration, 11)
    if np.any(taus < 0):
        raise UsageError("tau values must be non-negative")
    orient = SpinOrientation.from_angles(sim.theta, sim.phi)
    run = Run("squeeze", args, cfg, sim.seed)
    rows = []
    for tau in taus:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", meas.ValidityWarning)
            r = meas.snr_squeezing(cfg.species, cfg.cloud, cfg.probe, float(tau), orient)
        if not r.valid:
            run.warnings.append(f"tau={float(tau)!r} s: tau/tau_s={r.tau_over_tau_s:.4g} > 0.1, decoherence not negligible")
        rows.append((float(tau), r.snr2, r.w, r.tau_over_tau_s, r.valid))
    write_csv(run.path(".csv"), ["tau", "snr2", "w", "tau_over_tau_s", "valid"], rows)
    arr = np.array([row[:3] for row in rows])
    run.figure(lambda p: plotting.plot_squeezing(p, arr[:, 0], arr[:, 2], arr[:, 1]))
    mp = meas.measurement_strength(cfg.species, cfg.cloud, cfg.probe)
    run.extras.update(
        od=cfg.cloud.od, eta=cfg.probe.efficiency, f=str(cfg.species.ground_f),
        tau_s=1.0 / mp.scat_rate, dual_route_check="passed (relative tolerance 1e-12)",
    )
    return run


COMMANDS = {
    "decompose": cmd_decompose,
    "trajectory": cmd_trajectory,
    "scan": cmd_scan,
    "photocurrent": cmd_photocurrent,
    "squeeze": cmd_squeeze,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment file (default: shipped Cs D2 reference)")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--no-plot", action="store_true", help="skip the PNG figure")

    parser = argparse.ArgumentParser(prog="polariscope", description="Faraday polarimetry of a spin-polarized atomic cloud.")
    parser.add_argument("--version", action="version", version=f"polariscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", parents=[common], help="polarizability coefficients per excited level")
    p.add_argument("--spin", help="override the ground spin f, e.g. 1/2")

    p = sub.add_parser("trajectory", parents=[common], help="Stokes signals along a spin path")
    p.add_argument("--path", choices=["xz", "xy"], default="xz")
    p.add_argument("--measure", choices=["sy", "sz"], default="sy")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("scan", parents=[common], help="peak signals versus detuning")
    p.add_argument("--from", required=True, help="start detuning with unit, e.g. 150MHz")
    p.add_argument("--to", required=True, help="stop detuning with unit")
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--log", action="store_true", help="logarithmic spacing")
    p.add_argument("--samples", type=int, help="path samples per trajectory")

    p = sub.add_parser("photocurrent", parents=[common], help="simulated photocurrent and filter")
    p.add_argument("--fz", type=float, help="true F_z in units of hbar (default: one prior standard deviation)")
    p.add_argument("--seed", type=int)
    p.add_argument("--eta", type=float, help="override detection efficiency")

    p = sub.add_parser("squeeze", parents=[common], help="SNR and squeezing versus measurement time")
    p.add_argument("--tau-grid", help='"start:stop:count" or comma list, e.g. "0:2ms:21"')
    return parser


def _load(path: Optional[str]) -> ExperimentConfig:
    return load_experiment(path if path else builtin_path(REFERENCE_EXPERIMENT))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load(args.config)
        run = COMMANDS[args.command](args, cfg)
        run.finish()
    except ConsistencyError as exc:
        print(f"polariscope: internal consistency failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (PolariscopeError, OSError) as exc:
        print(f"polariscope {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
