"""Configuration, stack files and output serialization.

All text inputs use INI syntax (sections of ``key = value`` lines, ``#``
or ``;`` comments).  Map and curve outputs are plain text with ``#``
header lines and 17 significant digits, enough to round-trip any double.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import platform
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .dispersion import compound_table, load_f1f2
from .errors import ConfigError, XCavityError
from .scan import SOLVERS, SpectralMap
from .stack import CavityStack, ConstantIndex, Layer

FMT = "%.17g"


def data_path(name: str) -> Path:
    """Path of a file shipped in the package data directory."""
    return Path(str(resources.files("xcavity") / "data" / name))


def _parser(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.exists():
        raise ConfigError("file not found", path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str.lower
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(str(exc).splitlines()[0], path, line) from None
    return parser


def _line_of(path, section, key=None):
    """1-based line number of a section header or a key inside it."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError:
        return None
    in_section = False
    for no, text in enumerate(lines, 1):
        stripped = text.strip()
        if stripped.startswith("["):
            in_section = stripped[1:stripped.find("]")].strip() == section
            if in_section and key is None:
                return no
            continue
        if in_section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.I):
            return no
    return None


class _Section:
    """Typed access to one config section with located errors."""

    def __init__(self, parser, path, name):
        self.path = path
        self.name = name
        self.data = parser[name] if parser.has_section(name) else {}

    def error(self, key, message):
        line = _line_of(self.path, self.name, key) or _line_of(self.path, self.name)
        return ConfigError(f"[{self.name}] {key}: {message}", self.path, line)

    def has(self, key):
        return key in self.data

    def str(self, key, default=None, required=False):
        if key not in self.data:
            if required:
                raise ConfigError(f"[{self.name}] missing key {key!r}", self.path, _line_of(self.path, self.name))
            return default
        return self.data[key].strip()

    def float(self, key, default=None, required=False):
        raw = self.str(key, None, required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise self.error(key, f"expected a number, got {raw!r}") from None

    def int(self, key, default=None, required=False):
        raw = self.str(key, None, required)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise self.error(key, f"expected an integer, got {raw!r}") from None

    def bool(self, key, default=False):
        raw = self.str(key)
        if raw is None:
            return default
        value = raw.lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        raise self.error(key, f"expected true/false, got {raw!r}")


# --------------------------------------------------------------------------
# stack files


def _composition(text):
    out = {}
    for part in re.split(r"[,\s]+", text.strip()):
        if not part:
            continue
        el, _, count = part.partition(":")
        out[el.strip()] = float(count) if count else 1.0
    return out


def load_stack(path) -> CavityStack:
    """Read a stack file: one section per layer, top (vacuum) first.

    Keys per layer: ``label`` (defaults to the section name),
    ``thickness_nm`` (number or ``inf``), ``resonant`` (bool) and one index
    source: ``delta``/``beta`` constants, ``table`` (path to an
    ``energy f1 f2`` file) with ``density`` in nm^-3, or ``composition``
    such as ``W:2, Si:4`` with ``density`` in formula units per nm^3.
    Optional ``table_dir`` points at elemental tables for ``composition``.
    """
    path = Path(path)
    parser = _parser(path)
    layers = []
    if not parser.sections():
        raise ConfigError("stack file has no layers", path)
    for name in parser.sections():
        sec = _Section(parser, path, name)
        label = sec.str("label", name)
        raw = sec.str("thickness_nm", required=True)
        try:
            thickness = math.inf if raw.lower() in ("inf", "infinite", "semi-infinite") else float(raw)
        except ValueError:
            raise sec.error("thickness_nm", f"expected a number or 'inf', got {raw!r}") from None
        resonant = sec.bool("resonant")
        density = sec.float("density")
        sources = [k for k in ("table", "composition") if sec.has(k)]
        if sec.has("delta") or sec.has("beta"):
            sources.append("delta/beta")
        if len(sources) > 1:
            raise ConfigError(f"[{name}] give only one of delta/beta, table, composition", path,
                              _line_of(path, name))
        try:
            if sec.has("table"):
                if density is None:
                    raise sec.error("density", "required with 'table'")
                tpath = Path(sec.str("table"))
                if not tpath.is_absolute():
                    tpath = path.parent / tpath
                index = load_f1f2(tpath, density, label)
            elif sec.has("composition"):
                if density is None:
                    raise sec.error("density", "required with 'composition'")
                tdir = sec.str("table_dir")
                if tdir is not None and not Path(tdir).is_absolute():
                    tdir = path.parent / tdir
                index = compound_table(_composition(sec.str("composition")), density, table_dir=tdir, label=label)
            else:
                index = ConstantIndex(sec.float("delta", 0.0), sec.float("beta", 0.0), density)
        except ConfigError:
            raise
        except (XCavityError, OSError, ValueError) as exc:
            raise ConfigError(f"[{name}] {exc}", path, _line_of(path, name)) from None
        layers.append(Layer(label, thickness, index, resonant, density if resonant else None))
    try:
        return CavityStack(tuple(layers))
    except XCavityError as exc:
        raise ConfigError(str(exc), path) from None


def reference_stack() -> CavityStack:
    """The bundled Pt/C/WSi2/C/Pt on Si cavity."""
    return load_stack(data_path("reference_cavity.stack"))


# --------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    stack_file: Path
    omega0: float
    gamma: float
    f0: float | str | None = None
    dipole_sq: float | str | None = None
    xas_file: Path | None = None
    xas_scale: float | None = None
    solver: str = "parratt"
    sublayers: int = 8
    mode: str = "map"
    energy_min: float | None = None
    energy_max: float | None = None
    energy_count: int = 301
    angle_min: float = -0.01
    angle_max: float = 0.01
    angle_count: int = 201
    theta_min: float = 0.05
    theta_max: float = 1.0
    theta_count: int = 2000
    rocking_energy: float | None = None
    angle_offset: float = 0.0
    theta1: float | None = None
    output_dir: Path = Path("xcavity-out")
    field_profile: bool = False
    fluorescence: bool = False
    fluorescence_scale: float = 1.0
    fit: str | None = None
    benchmark: str = "parratt"
    source: Path | None = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.solver not in SOLVERS + ("all",):
            raise ConfigError(f"solver must be one of {SOLVERS + ('all',)}, got {self.solver!r}", self.source)
        if self.mode not in ("map", "rocking", "spectrum"):
            raise ConfigError(f"scan mode must be map, rocking or spectrum, got {self.mode!r}", self.source)
        if self.gamma is None or not self.gamma > 0:
            raise ConfigError("[resonance] gamma must be given and > 0", self.source)
        for lo, hi, n, what in (
            (self.energy_min, self.energy_max, self.energy_count, "energy"),
            (self.angle_min, self.angle_max, self.angle_count, "angle"),
            (self.theta_min, self.theta_max, self.theta_count, "theta"),
        ):
            if n < 2:
                raise ConfigError(f"{what}_count must be >= 2", self.source)
            if lo is not None and hi is not None and not lo < hi:
                raise ConfigError(f"{what}_min must be < {what}_max", self.source)
        if not 1 <= self.sublayers <= 64:
            raise ConfigError("sublayers must be between 1 and 64", self.source)
        if self.fit not in (None, "f0", "dipole"):
            raise ConfigError(f"fit must be f0 or dipole, got {self.fit!r}", self.source)
        return self

    @property
    def energies(self):
        lo = self.energy_min if self.energy_min is not None else self.omega0 - 15.0
        hi = self.energy_max if self.energy_max is not None else self.omega0 + 15.0
        return np.linspace(lo, hi, self.energy_count)

    @property
    def angle_offsets(self):
        return np.linspace(self.angle_min, self.angle_max, self.angle_count)

    @property
    def thetas(self):
        return np.linspace(self.theta_min, self.theta_max, self.theta_count)


def _number_or_fit(sec, key):
    raw = sec.str(key)
    if raw is None:
        return None
    if raw.lower() == "fit":
        return "fit"
    try:
        value = float(raw)
    except ValueError:
        raise sec.error(key, f"expected a number or 'fit', got {raw!r}") from None
    if value < 0:
        raise sec.error(key, "must be non-negative")
    return value


def load_config(path) -> RunConfig:
    """Parse a run configuration file."""
    path = Path(path)
    parser = _parser(path)
    known = {"stack", "resonance", "solver", "scan", "output", "options"}
    for name in parser.sections():
        if name not in known:
            raise ConfigError(f"unknown section [{name}]", path, _line_of(path, name))
    stack = _Section(parser, path, "stack")
    res = _Section(parser, path, "resonance")
    sol = _Section(parser, path, "solver")
    scan = _Section(parser, path, "scan")
    out = _Section(parser, path, "output")
    opt = _Section(parser, path, "options")

    def rel(p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else path.parent / p

    stack_file = stack.str("file", required=True)
    if stack_file.startswith("builtin:"):
        stack_path = data_path(stack_file.split(":", 1)[1])
    else:
        stack_path = rel(stack_file)
    theta1 = scan.str("theta1")
    cfg = RunConfig(
        stack_file=stack_path,
        omega0=res.float("omega0", required=True),
        gamma=res.float("gamma", required=True),
        f0=_number_or_fit(res, "f0"),
        dipole_sq=_number_or_fit(res, "dipole_sq"),
        xas_file=rel(res.str("xas_file")),
        xas_scale=res.float("xas_scale"),
        solver=sol.str("name", "parratt"),
        sublayers=sol.int("sublayers", 8),
        mode=scan.str("mode", "map"),
        energy_min=scan.float("energy_min"),
        energy_max=scan.float("energy_max"),
        energy_count=scan.int("energy_count", 301),
        angle_min=scan.float("angle_min", -0.01),
        angle_max=scan.float("angle_max", 0.01),
        angle_count=scan.int("angle_count", 201),
        theta_min=scan.float("theta_min", 0.05),
        theta_max=scan.float("theta_max", 1.0),
        theta_count=scan.int("theta_count", 2000),
        rocking_energy=scan.float("energy"),
        angle_offset=scan.float("angle_offset", 0.0),
        theta1=None if theta1 in (None, "auto") else scan.float("theta1"),
        output_dir=rel(out.str("directory", "xcavity-out")),
        field_profile=opt.bool("field_profile"),
        fluorescence=opt.bool("fluorescence"),
        fluorescence_scale=opt.float("fluorescence_scale", 1.0),
        source=path,
    )
    if cfg.f0 is None and cfg.xas_file is None:
        raise ConfigError("[resonance] needs f0 (or xas_file for an XAS-derived benchmark)", path,
                          _line_of(path, "resonance"))
    if cfg.f0 == "fit" and cfg.xas_file is None:
        raise res.error("f0", "'fit' needs xas_file to define the benchmark")
    return cfg.validate()


# --------------------------------------------------------------------------
# serialization


def _fmt_row(values):
    return " ".join(FMT % v for v in values)


def write_map(path, smap: SpectralMap):
    """Write a map: '#' header with axes and metadata, then one row per energy."""
    masked = np.argwhere(smap.error_mask)
    lines = [
        "# xcavity spectral map",
        f"# model: {smap.model_tag}",
        f"# quantity: {smap.quantity}",
        f"# theta1_deg: {FMT % smap.theta1}",
        f"# parameters: {json.dumps(smap.parameters, sort_keys=True)}",
        f"# energy_axis_eV: {_fmt_row(smap.energy_axis)}",
        f"# angle_offset_deg: {_fmt_row(smap.angle_axis)}",
        "# error_mask: " + (" ".join(f"{i},{j}" for i, j in masked) if masked.size else "none"),
        "# rows follow energy_axis_eV, columns follow angle_offset_deg",
    ]
    lines += [_fmt_row(row) for row in smap.values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_map(path) -> SpectralMap:
    """Parse a file written by :func:`write_map`."""
    path = Path(path)
    header = {}
    rows = []
    for no, text in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if text.startswith("#"):
            key, sep, value = text[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
            continue
        if text.strip():
            try:
                rows.append([float(v) for v in text.split()])
            except ValueError:
                raise ConfigError("malformed numeric row", path, no) from None
    try:
        energy = np.array([float(v) for v in header["energy_axis_eV"].split()])
        angle = np.array([float(v) for v in header["angle_offset_deg"].split()])
        mask = np.zeros((energy.size, angle.size), dtype=bool)
        if header.get("error_mask", "none") != "none":
            for pair in header["error_mask"].split():
                i, j = pair.split(",")
                mask[int(i), int(j)] = True
        return SpectralMap(
            energy, angle, np.array(rows, dtype=float), header["model"], float(header["theta1_deg"]),
            header.get("quantity", "reflectance"), mask, json.loads(header.get("parameters", "{}")),
        )
    except KeyError as exc:
        raise ConfigError(f"map header lacks {exc.args[0]!r}", path) from None


def write_curve(path, columns: dict, comments=()):
    """Columns of equal length with a '#' header naming them (with units)."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    lines = [f"# {c}" for c in comments] + ["# " + " ".join(names)]
    lines += [_fmt_row(row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_curve(path):
    """Return ``(names, data)`` from a file written by :func:`write_curve`."""
    names = None
    rows = []
    for text in Path(path).read_text(encoding="utf-8").splitlines():
        if text.startswith("#"):
            names = text[1:].split()
        elif text.strip():
            rows.append([float(v) for v in text.split()])
    return names, np.array(rows)


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, inputs: dict, outputs: list, fitted: dict, run: dict):
    """JSON manifest.  Only the ``run`` block (timestamp, timings) varies
    between otherwise identical runs."""
    import scipy

    manifest = {
        "tool": "xcavity",
        "versions": {
            "xcavity": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "inputs": inputs,
        "outputs": sorted(outputs),
        "fitted": fitted,
        "run": run,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
