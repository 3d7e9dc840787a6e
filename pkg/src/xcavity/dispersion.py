"""Energy-dependent refractive indices and resonant scattering corrections.

Scattering-length convention
----------------------------
Inside the package a complex scattering length ``f`` enters the index as::

    n = 1 - (2 pi rho r0 / k^2) * f

so that ``Im f < 0`` is absorptive (``beta > 0``).  Tabulated anomalous
factors come as ``f1 + i f2`` with ``f2 > 0`` meaning absorption; they are
converted once, in :meth:`ScatteringFactorTable.from_f1f2`, to
``f = f1 - i f2``.  The Lorentzian white line ``f0 / (eps + i)`` already has a
negative imaginary part and is used unchanged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import optimize

from .constants import R0, wavenumber
from .errors import (
    AccuracyWarning,
    DataQualityError,
    DispersionRangeError,
    FitError,
    InputError,
)


def index_deviation_from_f(f, atom_density, energy):
    """``n - 1 = -(2 pi rho r0 / k^2) f`` for scattering length ``f`` per atom."""
    k = wavenumber(np.asarray(energy, dtype=float))
    return -(2.0 * np.pi * atom_density * R0 / k**2) * np.asarray(f, dtype=complex)


def _interp_complex(x, xp, fp, what="table"):
    x = np.asarray(x, dtype=float)
    lo, hi = xp[0], xp[-1]
    if np.any(x < lo) or np.any(x > hi):
        bad = x[(x < lo) | (x > hi)]
        raise DispersionRangeError(
            f"energy {bad.flat[0]:.6g} eV outside {what} range [{lo:.6g}, {hi:.6g}] eV"
        )
    return np.interp(x, xp, fp.real) + 1j * np.interp(x, xp, fp.imag)


@dataclass(frozen=True, eq=False)
class ScatteringFactorTable:
    """Tabulated complex scattering length of one formula unit.

    ``f`` uses the package convention (``Im f <= 0`` absorbs).  The table is
    an index source: :meth:`deviation` returns ``n - 1``.
    """

    energies: np.ndarray
    f: np.ndarray
    atom_density: float
    label: str = ""

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        f = np.asarray(self.f, dtype=complex)
        if e.ndim != 1 or e.shape != f.shape:
            raise InputError("energies and f must be 1-D arrays of equal length")
        if e.size < 3:
            raise InputError("a scattering-factor table needs at least 3 points")
        if np.any(np.diff(e) <= 0):
            raise InputError("table energies must be strictly increasing")
        if not self.atom_density >= 0:
            raise InputError("atom density must be non-negative")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_f1f2(cls, energies, f1, f2, atom_density, label=""):
        """Build from tabulated ``f1`` (including Z) and absorptive ``f2 >= 0``.

        This is the only place where the tabulated sign convention is mapped
        onto the internal one.
        """
        f2 = np.asarray(f2, dtype=float)
        if np.any(f2 < 0):
            raise DataQualityError(f"{label or 'table'}: f2 must be non-negative")
        return cls(energies, np.asarray(f1, dtype=float) - 1j * f2, atom_density, label)

    def f_at(self, energy):
        return _interp_complex(energy, self.energies, self.f, self.label or "table")

    def deviation(self, energy):
        return index_deviation_from_f(self.f_at(energy), self.atom_density, energy)

    @property
    def energy_range(self):
        return float(self.energies[0]), float(self.energies[-1])


def index_from_f(table: ScatteringFactorTable, energy):
    """Complex refractive index ``1 - (2 pi rho r0/k^2) f`` from a table."""
    return 1.0 + table.deviation(energy)


def load_f1f2(path, atom_density, label=None) -> ScatteringFactorTable:
    """Read a three-column ``energy_eV f1 f2`` file ('#' starts a comment)."""
    path = Path(path)
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 3:
        raise InputError(f"{path}: expected 3 columns (energy_eV f1 f2), got {data.shape[1]}")
    return ScatteringFactorTable.from_f1f2(
        data[:, 0], data[:, 1], data[:, 2], atom_density, label or path.stem
    )


def bundled_table_path(element: str) -> Path:
    """Path of a packaged Chantler-derived table for ``element``."""
    ref = resources.files("xcavity") / "data" / "tables" / f"{element}.f1f2"
    path = Path(str(ref))
    if not path.exists():
        raise InputError(f"no bundled scattering-factor table for {element!r}")
    return path


def compound_table(composition: Mapping[str, float], unit_density: float,
                   tables: Mapping[str, ScatteringFactorTable] | None = None,
                   table_dir=None, label=None) -> ScatteringFactorTable:
    """Stoichiometric sum of elemental tables for one formula unit.

    Parameters
    ----------
    composition : mapping
        Element symbol to count per formula unit, e.g. ``{"W": 2, "Si": 4}``.
    unit_density : float
        Formula units per nm^3.
    tables : mapping, optional
        Pre-loaded elemental tables; otherwise files ``<El>.f1f2`` are read
        from ``table_dir`` or from the bundled data.
    """
    loaded = {}
    for el in composition:
        if tables is not None and el in tables:
            loaded[el] = tables[el]
        elif table_dir is not None:
            loaded[el] = load_f1f2(Path(table_dir) / f"{el}.f1f2", 0.0, el)
        else:
            loaded[el] = load_f1f2(bundled_table_path(el), 0.0, el)
    lo = max(t.energies[0] for t in loaded.values())
    hi = min(t.energies[-1] for t in loaded.values())
    grid = np.unique(np.concatenate([t.energies for t in loaded.values()]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    f = sum(count * loaded[el].f_at(grid) for el, count in composition.items())
    if label is None:
        label = "".join(f"{el}{count:g}" for el, count in composition.items())
    return ScatteringFactorTable(grid, f, unit_density, label)


@dataclass(frozen=True)
class ResonanceLine:
    """Single Lorentzian white line.

    Parameters
    ----------
    omega0 : float
        Transition energy, eV.
    gamma : float
        Natural full width, eV.
    f0 : float
        Resonant scattering-length amplitude per formula unit (electrons).
    dipole_sq : float
        Squared transition dipole in the units used by the Green's model.
    """

    omega0: float
    gamma: float
    f0: float = 0.0
    dipole_sq: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError("resonance width gamma must be > 0")
        if self.f0 < 0 or self.dipole_sq < 0:
            raise InputError("f0 and dipole_sq must be non-negative")

    def detuning(self, energy):
        return np.asarray(energy, dtype=float) - self.omega0

    def delta_f(self, energy):
        return lorentzian_delta_f(self, energy)

    def with_f0(self, f0):
        return ResonanceLine(self.omega0, self.gamma, f0, self.dipole_sq)

    def with_dipole(self, dipole_sq):
        return ResonanceLine(self.omega0, self.gamma, self.f0, dipole_sq)


def lorentzian_delta_f(line: ResonanceLine, energy):
    """``f0 / (eps + i)`` with ``eps = 2 (w - w0) / gamma``."""
    eps = 2.0 * (np.asarray(energy, dtype=float) - line.omega0) / line.gamma
    return line.f0 / (eps + 1j)


@dataclass(frozen=True, eq=False)
class DispersionTable:
    """Sampled resonant correction ``delta_f(w)``, e.g. from measured XAS."""

    energies: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if e.ndim != 1 or e.shape != v.shape or e.size < 3:
            raise InputError("dispersion table needs matching 1-D arrays of >= 3 points")
        if np.any(np.diff(e) <= 0):
            raise InputError("dispersion table energies must be strictly increasing")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "values", v)

    def delta_f(self, energy):
        return _interp_complex(energy, self.energies, self.values, "dispersion table")

    def index_change(self, atom_density, energy):
        """``(delta, beta)`` contributed by the correction."""
        dev = index_deviation_from_f(self.delta_f(energy), atom_density, energy)
        return -dev.real, dev.imag


# --------------------------------------------------------------------------
# absorption and Kramers-Kronig


def absorption_to_im_f(energies, mu, scale=1.0):
    """Imaginary part of the resonant correction from an absorption curve.

    Returns ``-(k / 4 pi) * scale * mu``; the minus sign is the package's
    absorptive sign for ``Im f``.  ``scale`` converts the measured intensity
    into a cross section in nm^2.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise DataQualityError("absorption curve is negative after background subtraction")
    k = wavenumber(np.asarray(energies, dtype=float))
    return -(k / (4.0 * np.pi)) * scale * mu


def calibrate_absorption_scale(energies, mu, reference_im_f, mask=None):
    """Least-squares scale mapping ``mu`` onto a reference ``Im f``.

    ``reference_im_f`` is the tabulated absorptive part (package sign,
    negative) at the same energies; ``mask`` selects the far-from-resonance
    points used for the match.
    """
    e = np.asarray(energies, dtype=float)
    unit = absorption_to_im_f(e, mu, 1.0)
    ref = np.asarray(reference_im_f, dtype=float)
    if mask is not None:
        unit, ref = unit[mask], ref[mask]
    denom = np.dot(unit, unit)
    if denom == 0:
        raise DataQualityError("absorption curve vanishes on the calibration points")
    return float(np.dot(unit, ref) / denom)


@dataclass(frozen=True, eq=False)
class KramersKronigResult:
    energies: np.ndarray
    real: np.ndarray
    imag: np.ndarray
    warnings: tuple[str, ...] = ()

    def as_table(self) -> DispersionTable:
        return DispersionTable(self.energies, self.real + 1j * self.imag)


def kramers_kronig(energies, im, width=None, min_span=100.0, chunk=512):
    """Real part of a causal response from its imaginary part.

    Evaluates ``Re(w) = (2/pi) P int_0^inf w' Im(w') / (w'^2 - w^2) dw'``.
    Because ``P int_0^inf dw' / (w'^2 - w^2) = 0``, subtracting
    ``w Im(w)`` from the numerator removes the pole without changing the
    integral, leaving a regular integrand that is integrated with the
    trapezoid rule on the sample grid.  Beyond the grid the imaginary part
    is continued as ``Im(b) (b/w')^2`` above the top sample ``b`` and as a
    linear ramp to zero below the bottom sample ``a``; both tails are
    integrated in closed form.

    Parameters
    ----------
    energies : array_like
        Strictly increasing sample energies (eV), all positive.
    im : array_like
        Imaginary part at those energies.
    width : float, optional
        Line width used only for the wing-span check: a warning is recorded
        when the grid extends less than ``min_span * width`` on either side
        of the strongest feature.
    """
    w = np.asarray(energies, dtype=float)
    y = np.asarray(im, dtype=float)
    if w.ndim != 1 or w.shape != y.shape:
        raise InputError("energies and im must be 1-D arrays of equal length")
    if w.size < 3:
        raise InputError("need at least 3 samples")
    steps = np.diff(w)
    if np.any(steps == 0):
        raise InputError("duplicate energies in Kramers-Kronig input")
    if np.any(steps < 0):
        raise InputError("Kramers-Kronig input must be sorted by energy")
    if w[0] <= 0:
        raise InputError("energies must be positive")

    notes = []
    if width is not None:
        center = w[np.argmax(np.abs(y))]
        if min(center - w[0], w[-1] - center) < min_span * width:
            notes.append(
                f"wing span below {min_span:g} widths; tail truncation may dominate the error"
            )

    a, b = w[0], w[-1]
    ya, yb = y[0], y[-1]
    wy = w * y
    # derivative of w*Im at each node gives the removable-pole limit
    dwy = np.gradient(wy, w)
    weights = np.empty_like(w)
    weights[1:-1] = 0.5 * (w[2:] - w[:-2])
    weights[0] = 0.5 * (w[1] - w[0])
    weights[-1] = 0.5 * (w[-1] - w[-2])

    out = np.empty_like(w)
    for start in range(0, w.size, chunk):
        sl = slice(start, start + chunk)
        wi = w[sl, None]
        num = wy[None, :] - (w[sl] * y[sl])[:, None]
        den = w[None, :] ** 2 - wi**2
        with np.errstate(divide="ignore", invalid="ignore"):
            g = num / den
        idx = np.arange(w[sl].size)
        g[idx, idx + start] = dwy[sl] / (2.0 * w[sl])
        out[sl] = g @ weights
    out += _upper_tail(w, y, b, yb) + _lower_tail(w, y, a, ya)
    return KramersKronigResult(w, (2.0 / np.pi) * out, y, tuple(notes))


def _xlogx(c, x):
    """``c * log(x)`` with the convention ``0 * log(0) = 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = c * np.log(x)
    return np.where(c == 0, 0.0, r)


def _upper_tail(w, y, b, yb):
    # int_b^inf (w' T(w') - w y) / (w'^2 - w^2) dw' with T = yb (b/w')^2
    #   = -(b^2 yb / 2w^2) ln(1 - w^2/b^2) - (y / 2) ln((b + w)/(b - w))
    # grouped so that the ln(b - w) terms cancel exactly at w = b
    c = (w**2 * y - b**2 * yb) / (2.0 * w**2)
    return (
        _xlogx(c, b - w)
        - (b**2 * yb / (2.0 * w**2)) * (np.log(b + w) - 2.0 * np.log(b))
        - 0.5 * y * np.log(b + w)
    )


def _lower_tail(w, y, a, ya):
    # int_0^a (w' T(w') - w y) / (w'^2 - w^2) dw' with T = ya w'/a
    #   = ya + (ya w^2/a - w y) (1/2w) ln((w - a)/(w + a))
    c = (ya * w / a - y) / 2.0
    return ya + _xlogx(c, w - a) - c * np.log(w + a)


# --------------------------------------------------------------------------
# XAS line-shape decomposition


@dataclass(frozen=True)
class ContinuumStep:
    """Arctangent edge step ``amplitude * (1/2 + arctan((w - center)/width)/pi)``."""

    center: float
    width: float
    amplitude: float

    def __call__(self, energy):
        e = np.asarray(energy, dtype=float)
        return self.amplitude * (0.5 + np.arctan((e - self.center) / self.width) / np.pi)


@dataclass(frozen=True)
class XasDecomposition:
    """Lorentzian white line plus arctangent continuum plus flat background.

    ``lorentzian.f0`` holds the peak height of the white line in the units
    of the fitted curve.
    """

    lorentzian: ResonanceLine
    continuum: ContinuumStep
    background: float
    residual_norm: float
    degenerate: bool = False
    iterations: int = 0

    def white_line(self, energy):
        e = np.asarray(energy, dtype=float)
        x = 2.0 * (e - self.lorentzian.omega0) / self.lorentzian.gamma
        return self.lorentzian.f0 / (1.0 + x * x)

    def __call__(self, energy):
        return self.white_line(energy) + self.continuum(energy) + self.background


def _xas_model(params, e):
    w0, gam, amp, ec, wc, ac, bg = params
    x = 2.0 * (e - w0) / gam
    return amp / (1.0 + x * x) + ac * (0.5 + np.arctan((e - ec) / wc) / np.pi) + bg


def fit_xas_lineshape(energies, intensity, max_nfev=2000, degenerate_ratio=1e-3):
    """Least-squares Lorentzian + arctangent step + constant decomposition.

    Raises
    ------
    FitError
        When the optimizer does not converge within ``max_nfev`` evaluations;
        the exception carries the best parameters found.  Fits whose white
        line collapses below ``degenerate_ratio`` of the signal are returned
        with ``degenerate=True`` instead.
    """
    e = np.asarray(energies, dtype=float)
    y = np.asarray(intensity, dtype=float)
    if e.shape != y.shape or e.size < 8:
        raise InputError("need matching energy/intensity arrays with >= 8 points")
    span = e[-1] - e[0]
    yrange = float(np.ptp(y))
    scale = max(yrange, float(np.max(np.abs(y))), 1e-300)
    i_peak = int(np.argmax(y))
    bg0 = float(y[0])
    top = float(np.median(y[-max(3, e.size // 10):]))
    ac0 = top - bg0
    amp0 = max(float(y[i_peak]) - bg0 - 0.5 * ac0, 0.0)
    step = float(np.median(np.diff(e)))
    x0 = np.array([e[i_peak], max(span / 20.0, 2 * step), amp0, e[i_peak] + span / 50.0,
                   max(span / 50.0, step), ac0, bg0])
    lower = [e[0], step / 2.0, 0.0, e[0], step / 4.0, -np.inf, -np.inf]
    upper = [e[-1], span, np.inf, e[-1], span, np.inf, np.inf]
    x0 = np.clip(x0, np.array(lower) + 1e-12, np.array(upper) - 1e-12)

    def resid(p):
        return (_xas_model(p, e) - y) / scale

    sol = optimize.least_squares(resid, x0, bounds=(lower, upper), max_nfev=max_nfev,
                                 x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    w0, gam, amp, ec, wc, ac, bg = sol.x
    res = float(np.linalg.norm(sol.fun * scale))
    degenerate = amp <= degenerate_ratio * scale
    result = XasDecomposition(
        ResonanceLine(float(w0), float(gam), float(amp)),
        ContinuumStep(float(ec), float(wc), float(ac)),
        float(bg), res, bool(degenerate), int(sol.nfev),
    )
    # without a white line its width and position are undetermined and the
    # optimizer crawls; report such fits as degenerate instead of failed
    if sol.status == 0 and not degenerate:
        raise FitError("XAS decomposition did not converge", best=result)
    return result


def load_xas(path):
    """Read a two-column ``energy_eV intensity`` file."""
    path = Path(path)
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise InputError(f"{path}: expected 2 columns (energy_eV intensity), got {data.shape[1]}")
    return data[:, 0], data[:, 1]


def dispersion_from_xas(energies, mu, scale, width=None) -> tuple[DispersionTable, KramersKronigResult]:
    """Calibrated absorption to a full complex resonant correction."""
    im = absorption_to_im_f(energies, mu, scale)
    kk = kramers_kronig(energies, im, width=width)
    for note in kk.warnings:
        warnings.warn(note, AccuracyWarning, stacklevel=2)
    return kk.as_table(), kk
