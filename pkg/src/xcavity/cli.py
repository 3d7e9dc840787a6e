"""Command-line entry point: ``xcavity simulate``."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .dispersion import ResonanceLine, dispersion_from_xas, fit_xas_lineshape, load_xas
from .errors import ConfigError, XCavityError
from .greens import dipole_from_f0
from .io import (
    RunConfig,
    data_path,
    load_config,
    load_stack,
    sha256_of,
    write_curve,
    write_manifest,
    write_map,
)
from .matrix_model import bare_cavity, cavity_shifts
from .parratt import field_profile
from .scan import SOLVERS, fit_parameter, locate_first_mode, reflection, scan_map
from .stack import ScanPoint


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xcavity", description="Resonant x-ray cavity reflectivity.")
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="compute maps, rocking curves or spectra")
    sim.add_argument("--config", type=Path, default=None,
                     help="run configuration (default: bundled reference cavity)")
    sim.add_argument("--solver", choices=SOLVERS + ("all",), help="override [solver] name")
    mode = sim.add_mutually_exclusive_group()
    mode.add_argument("--map", action="store_true", help="energy-angle map")
    mode.add_argument("--rocking", action="store_true", help="rocking curve at --energy")
    mode.add_argument("--spectrum", type=float, metavar="OFFSET",
                      help="spectrum at this angle offset from the first mode (deg)")
    sim.add_argument("--energy", type=float, help="energy (eV) for rocking curves and field profiles")
    sim.add_argument("--fit", choices=("f0", "dipole"), help="fit f0 (matrix) or dipole_sq (greens)")
    sim.add_argument("--benchmark", choices=("parratt",), default="parratt")
    sim.add_argument("--sublayers", type=int, help="Green's model sublayer count")
    sim.add_argument("--field-profile", action="store_true", help="also write |a(z)|^2 through the stack")
    sim.add_argument("--fluorescence", action="store_true", help="also write the fluorescence yield")
    sim.add_argument("--out", type=Path, help="output directory")
    return parser


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.solver:
        cfg.solver = args.solver
    if args.map:
        cfg.mode = "map"
    elif args.rocking:
        cfg.mode = "rocking"
    elif args.spectrum is not None:
        cfg.mode = "spectrum"
        cfg.angle_offset = args.spectrum
    if args.energy is not None:
        cfg.rocking_energy = args.energy
    if args.fit:
        cfg.fit = args.fit
    cfg.benchmark = args.benchmark
    if args.sublayers is not None:
        cfg.sublayers = args.sublayers
    if args.field_profile:
        cfg.field_profile = True
    if args.fluorescence:
        cfg.fluorescence = True
    if args.out is not None:
        cfg.output_dir = args.out
    if cfg.f0 == "fit" and cfg.fit is None:
        cfg.fit = "f0"
    if cfg.dipole_sq == "fit" and cfg.fit is None:
        cfg.fit = "dipole"
    return cfg.validate()


def _xas_benchmark(cfg: RunConfig):
    """Complex resonant correction from the white line of a measured XAS."""
    if cfg.xas_scale is None:
        raise ConfigError("[resonance] xas_scale is required with xas_file", cfg.source)
    energies, intensity = load_xas(cfg.xas_file)
    decomposition = fit_xas_lineshape(energies, intensity)
    wl = decomposition.lorentzian
    # evaluate the fitted white line on a wide, fine grid so the transform
    # is accurate across the scan window
    grid = np.arange(wl.omega0 - 200 * wl.gamma, wl.omega0 + 200 * wl.gamma, wl.gamma / 20)
    table, _ = dispersion_from_xas(grid, decomposition.white_line(grid), cfg.xas_scale)
    return table, decomposition


class Runner:
    """Executes one configured run and records what it wrote."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.outputs: list[str] = []
        self.fitted: dict = {}
        self.timings: dict = {}

    def _timed(self, name, func, *args, **kwargs):
        t0 = time.perf_counter()
        result = func(*args, **kwargs)
        self.timings[name] = round(time.perf_counter() - t0, 6)
        return result

    def _record(self, name):
        self.outputs.append(name)
        return self.out / name

    def run(self):
        cfg = self.cfg
        self.out.mkdir(parents=True, exist_ok=True)
        stack = self._timed("load_stack", load_stack, cfg.stack_file)
        f0 = cfg.f0 if isinstance(cfg.f0, float) else 0.0
        dipole = cfg.dipole_sq if isinstance(cfg.dipole_sq, float) else float(dipole_from_f0(f0))
        line = ResonanceLine(cfg.omega0, cfg.gamma, f0, dipole)
        benchmark_res = line
        if cfg.xas_file is not None:
            benchmark_res, decomposition = self._timed("xas", _xas_benchmark, cfg)
            self.fitted["xas_white_line"] = {
                "omega0": decomposition.lorentzian.omega0,
                "gamma": decomposition.lorentzian.gamma,
                "height": decomposition.lorentzian.f0,
            }
        theta1 = cfg.theta1
        if theta1 is None:
            theta1 = self._timed("mode_search", locate_first_mode, stack, cfg.omega0)
        self.fitted["theta1_deg"] = theta1
        energies = cfg.energies

        if cfg.fit is not None:
            if cfg.mode == "rocking":
                raise ConfigError("fitting needs a map or spectrum scan", cfg.source)
            offsets = cfg.angle_offsets if cfg.mode == "map" else np.array([cfg.angle_offset])
            bench = self._timed("benchmark", scan_map, stack, cfg.benchmark, energies, offsets,
                                benchmark_res, theta1)
            solver, param = ("matrix", "f0") if cfg.fit == "f0" else ("greens", "dipole_sq")
            result = self._timed(f"fit_{param}", fit_parameter, bench, solver, stack, line, param,
                                 sublayers=cfg.sublayers)
            line = line.with_f0(result.value) if param == "f0" else line.with_dipole(result.value)
            record = {
                "parameter": param, "value": result.value, "residual": result.residual,
                "iterations": result.iterations, "converged": result.converged,
                "solver": solver, "benchmark": cfg.benchmark,
                "candidates": [list(c) for c in result.candidates],
            }
            self.fitted[param] = record
            self._record(f"fit_{param}.json").write_text(
                json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")

        solvers = SOLVERS if cfg.solver == "all" else (cfg.solver,)
        for solver in solvers:
            res = benchmark_res if solver == "parratt" else line
            if cfg.mode == "map":
                smap = self._timed(f"map_{solver}", scan_map, stack, solver, energies, cfg.angle_offsets,
                                   res, theta1, cfg.sublayers)
                write_map(self._record(f"map_{solver}.dat"), smap)
            elif cfg.mode == "rocking":
                energy = cfg.rocking_energy if cfg.rocking_energy is not None else cfg.omega0
                thetas = cfg.thetas
                refl = np.abs(reflection(solver, stack, ScanPoint(energy, thetas), res, cfg.sublayers)) ** 2
                write_curve(self._record(f"rocking_{solver}.dat"),
                            {"theta_deg": thetas, "reflectance": refl},
                            [f"model: {solver}", f"energy_eV: {energy!r}"])
            else:
                angle = theta1 + cfg.angle_offset
                refl = np.abs(reflection(solver, stack, ScanPoint(energies, angle), res, cfg.sublayers)) ** 2
                write_curve(self._record(f"spectrum_{solver}.dat"),
                            {"energy_eV": energies, "reflectance": refl},
                            [f"model: {solver}", f"theta_deg: {angle!r}",
                             f"angle_offset_deg: {cfg.angle_offset!r}"])

        if "matrix" in solvers:
            self._cavity_curves(stack, line, theta1)

        if cfg.fluorescence:
            if cfg.mode == "map":
                fmap = self._timed("fluorescence", scan_map, stack, "parratt", energies, cfg.angle_offsets,
                                   benchmark_res, theta1, quantity="fluorescence", mu=_absorption(line),
                                   scale=cfg.fluorescence_scale)
                write_map(self._record("map_fluorescence.dat"), fmap)
            else:
                angle = theta1 + cfg.angle_offset
                fmap = scan_map(stack, "parratt", energies, np.array([cfg.angle_offset]), benchmark_res,
                                theta1, quantity="fluorescence", mu=_absorption(line),
                                scale=cfg.fluorescence_scale)
                write_curve(self._record("fluorescence.dat"),
                            {"energy_eV": energies, "yield": fmap.values[:, 0]},
                            [f"theta_deg: {angle!r}"])

        if cfg.field_profile:
            energy = cfg.rocking_energy if cfg.rocking_energy is not None else cfg.omega0
            angle = theta1 + (cfg.angle_offset if cfg.mode == "spectrum" else 0.0)
            prof = field_profile(stack, ScanPoint(energy, angle), resonance=benchmark_res)
            write_curve(self._record("field_profile.dat"),
                        {"depth_nm": prof.depths, "re_a": prof.a_values.real,
                         "im_a": prof.a_values.imag, "intensity": prof.intensity},
                        [f"energy_eV: {energy!r}", f"theta_deg: {angle!r}"])

        return self._finish(stack)

    def _cavity_curves(self, stack, line, theta1):
        """Back-action factor and cavity shifts across the angle window at omega0."""
        cfg = self.cfg
        thetas = theta1 + (cfg.angle_offsets if cfg.mode == "map" else np.linspace(-0.01, 0.01, 201))
        resp = bare_cavity(stack, ScanPoint(cfg.omega0, thetas))
        delta_c, gamma_c = cavity_shifts(resp, line, stack.resonant_layer.thickness)
        comments = [f"energy_eV: {cfg.omega0!r}", f"f0: {line.f0!r}"]
        write_curve(self._record("eta.dat"),
                    {"theta_deg": thetas, "re_eta": resp.eta.real, "im_eta": resp.eta.imag}, comments)
        write_curve(self._record("cavity_shifts.dat"),
                    {"theta_deg": thetas, "gamma_c_eV": gamma_c, "delta_c_eV": delta_c}, comments)

    def _finish(self, stack):
        cfg = self.cfg
        inputs = {"config": str(cfg.source) if cfg.source else None, "stack": str(cfg.stack_file),
                  "stack_sha256": sha256_of(cfg.stack_file), "solver": cfg.solver, "mode": cfg.mode,
                  "sublayers": cfg.sublayers, "omega0": cfg.omega0, "gamma": cfg.gamma,
                  "f0": cfg.f0, "dipole_sq": cfg.dipole_sq, "fit": cfg.fit}
        if cfg.source is not None:
            inputs["config_sha256"] = sha256_of(cfg.source)
        if cfg.xas_file is not None:
            inputs["xas_sha256"] = sha256_of(cfg.xas_file)
        run = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(), "timings_s": self.timings}
        self.outputs.append("manifest.json")
        return write_manifest(self.out / "manifest.json", inputs, self.outputs, self.fitted, run)


def _absorption(line):
    from .scan import natural_absorption

    return natural_absorption(line)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config if args.config is not None else data_path("reference.cfg"))
        cfg = apply_overrides(cfg, args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            manifest = Runner(cfg).run()
        for w in caught:
            print(f"xcavity: warning: {w.message}", file=sys.stderr)
    except ConfigError as exc:
        print(f"xcavity: config error: {exc}", file=sys.stderr)
        return 2
    except XCavityError as exc:
        print(f"xcavity: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"xcavity: I/O error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest['outputs'])} files to {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
