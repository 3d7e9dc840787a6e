"""Rocking curves, spectra, energy-angle maps and single-parameter fits."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.signal import find_peaks

from .dispersion import ResonanceLine
from .errors import (
    AccuracyWarning,
    ExpansionWarning,
    FitAmbiguityError,
    FitError,
    InputError,
    SearchError,
    XCavityError,
)
from .greens import F0_PER_DIPOLE, GreensModel
from .matrix_model import MatrixModel
from .parratt import field_amplitude, parratt_reflectance, resonant_slices
from .stack import CavityStack, ScanPoint

SOLVERS = ("parratt", "matrix", "greens")
QUANTITIES = ("reflectance", "field_intensity", "fluorescence")


def worker_count(limit: int | None = None) -> int:
    """Number of worker threads: ``XCAVITY_THREADS`` caps the CPU count."""
    n = os.cpu_count() or 1
    env = os.environ.get("XCAVITY_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise InputError(f"XCAVITY_THREADS must be an integer, got {env!r}") from None
    if limit is not None:
        n = min(n, limit)
    return max(1, n)


# --------------------------------------------------------------------------
# single evaluations


def reflection(solver: str, stack: CavityStack, point: ScanPoint, line=None, sublayers: int = 8):
    """Complex reflection coefficient from the named solver.

    ``line=None`` gives the bare cavity for every solver.
    """
    if solver == "parratt":
        return parratt_reflectance(stack, point, line)
    if solver not in SOLVERS:
        raise InputError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    if line is None:
        return parratt_reflectance(stack, point)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExpansionWarning)
        if solver == "matrix":
            return MatrixModel(stack, point).reflectance(line)
        return GreensModel(stack, point, sublayers).reflectance(line, check=True)


def natural_absorption(line):
    """Lorentzian absorption profile of the white line, unit peak height."""
    def mu(energy):
        eps = 2.0 * (np.asarray(energy, dtype=float) - line.omega0) / line.gamma
        return 1.0 / (1.0 + eps * eps)
    return mu


def _quantity(quantity, solver, stack, point, line, sublayers, mu=None, scale=1.0):
    if quantity == "reflectance":
        return np.abs(reflection(solver, stack, point, line, sublayers)) ** 2
    if solver != "parratt":
        raise InputError(f"{quantity} maps are computed with the parratt solver only")
    depths = resonant_slices(stack)
    intensity = np.mean(np.abs(field_amplitude(stack, point, depths, line)) ** 2, axis=-1)
    if quantity == "field_intensity":
        return intensity
    if quantity == "fluorescence":
        if mu is None:
            mu = natural_absorption(line)
        return scale * mu(point.energy) * intensity
    raise InputError(f"unknown quantity {quantity!r}")


def rocking_curve(stack: CavityStack, energy: float, angles, solver="parratt", line=None, sublayers=8):
    """``|R|^2`` versus grazing angle (deg) at fixed energy."""
    point = ScanPoint(energy, np.asarray(angles, dtype=float))
    return np.abs(reflection(solver, stack, point, line, sublayers)) ** 2


def spectrum(stack: CavityStack, energies, angle: float, solver="parratt", line=None, sublayers=8):
    """``|R|^2`` versus energy (eV) at fixed angle."""
    point = ScanPoint(np.asarray(energies, dtype=float), angle)
    return np.abs(reflection(solver, stack, point, line, sublayers)) ** 2


# --------------------------------------------------------------------------
# mode search


def _interior_minima(values, rel_depth=1e-9):
    v = np.asarray(values)
    scale = max(float(np.max(np.abs(v))), 1e-300)
    idx, props = find_peaks(-v, prominence=rel_depth * scale)
    return idx


def find_dips(stack: CavityStack, energy: float, theta_range=(0.01, 1.0), n_coarse=4000, tol=1e-9):
    """Angles (deg) of every bare-cavity reflection dip in ``theta_range``."""
    lo, hi = theta_range
    if not 0 < lo < hi < 90:
        raise InputError("theta_range must satisfy 0 < lo < hi < 90")
    grid = np.linspace(lo, hi, n_coarse)
    refl = rocking_curve(stack, energy, grid)
    idx = _interior_minima(refl)
    if idx.size == 0:
        raise SearchError(f"no reflection dip between {lo} and {hi} deg at {energy} eV")

    def f(theta):
        return float(np.abs(parratt_reflectance(stack, ScanPoint(energy, theta))) ** 2)

    dips = []
    for i in idx:
        res = optimize.minimize_scalar(
            f, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden", tol=tol
        )
        dips.append(float(res.x))
    return np.array(dips)


def locate_first_mode(stack: CavityStack, energy: float, theta_range=(0.01, 1.0), n_coarse=4000):
    """Angle (deg) of the smallest-angle reflection dip of the bare cavity.

    A coarse scan finds the first interior minimum of ``|r0|^2``; a
    golden-section search then refines it well below 1e-6 deg.
    """
    return float(find_dips(stack, energy, theta_range, n_coarse)[0])


# --------------------------------------------------------------------------
# maps


@dataclass(frozen=True, eq=False)
class SpectralMap:
    """Values on an energy (rows) by angle-offset (columns) grid.

    ``angle_axis`` holds offsets from ``theta1`` in degrees.  Points where
    the solver failed are NaN and flagged in ``error_mask``.
    """

    energy_axis: np.ndarray
    angle_axis: np.ndarray
    values: np.ndarray
    model_tag: str
    theta1: float
    quantity: str = "reflectance"
    error_mask: np.ndarray | None = None
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.energy_axis, dtype=float)
        a = np.asarray(self.angle_axis, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if e.ndim != 1 or a.ndim != 1 or v.shape != (e.size, a.size):
            raise InputError("values must have shape (len(energy_axis), len(angle_axis))")
        for name, ax in (("energy_axis", e), ("angle_axis", a)):
            if ax.size > 1 and np.any(np.diff(ax) <= 0):
                raise InputError(f"{name} must be strictly increasing")
        mask = np.zeros(v.shape, dtype=bool) if self.error_mask is None else np.asarray(self.error_mask, dtype=bool)
        if self.quantity == "reflectance":
            good = v[~mask]
            if np.any(good < -1e-12) or np.any(good > 1 + 1e-12):
                raise InputError("reflectance values must lie in [0, 1]")
        object.__setattr__(self, "energy_axis", e)
        object.__setattr__(self, "angle_axis", a)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "error_mask", mask)

    @property
    def angles(self):
        """Absolute grazing angles in degrees."""
        return self.theta1 + self.angle_axis

    def point(self) -> ScanPoint:
        return ScanPoint(self.energy_axis[:, None], self.angles[None, :])

    def equals(self, other: "SpectralMap") -> bool:
        """Bit-exact equality of axes, values (NaN-aware) and metadata."""
        return (
            self.model_tag == other.model_tag
            and self.quantity == other.quantity
            and self.theta1 == other.theta1
            and np.array_equal(self.energy_axis, other.energy_axis)
            and np.array_equal(self.angle_axis, other.angle_axis)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.error_mask, other.error_mask)
        )


def _evaluate_rows(func, energies, angles):
    """Evaluate one block of rows; isolate failures point by point."""
    try:
        return func(ScanPoint(energies[:, None], angles[None, :])), None, None
    except XCavityError as exc:
        first = exc
        values = np.full((energies.size, angles.size), np.nan)
        mask = np.zeros(values.shape, dtype=bool)
        for i, e in enumerate(energies):
            for j, a in enumerate(angles):
                try:
                    values[i, j] = func(ScanPoint(e, a))
                except XCavityError:
                    mask[i, j] = True
        return values, mask, first


def scan_map(stack: CavityStack, solver: str, energy_grid, angle_grid, line=None, theta1=None,
             sublayers=8, quantity="reflectance", mu=None, scale=1.0, workers=None,
             rows_per_task=16) -> SpectralMap:
    """Evaluate ``solver`` on every (energy, angle offset) grid point.

    Rows are dispatched to a thread pool and gathered by index, so the
    result does not depend on scheduling.  Solver errors at individual
    points are recorded in the error mask instead of aborting the scan;
    only a scan in which every point fails re-raises the error.
    """
    energies = np.asarray(energy_grid, dtype=float)
    offsets = np.asarray(angle_grid, dtype=float)
    if quantity not in QUANTITIES:
        raise InputError(f"unknown quantity {quantity!r}")
    if theta1 is None:
        ref_energy = line.omega0 if isinstance(line, ResonanceLine) else float(np.median(energies))
        theta1 = locate_first_mode(stack, ref_energy)
    angles = theta1 + offsets

    def func(point):
        return _quantity(quantity, solver, stack, point, line, sublayers, mu, scale)

    blocks = [energies[i:i + rows_per_task] for i in range(0, energies.size, rows_per_task)]
    n_workers = worker_count(len(blocks))
    if n_workers > 1 and workers != 1:
        with ThreadPoolExecutor(max_workers=workers or n_workers) as pool:
            results = list(pool.map(lambda b: _evaluate_rows(func, b, angles), blocks))
    else:
        results = [_evaluate_rows(func, b, angles) for b in blocks]
    values = np.concatenate([r[0] for r in results], axis=0)
    mask = np.concatenate(
        [r[1] if r[1] is not None else np.zeros(r[0].shape, dtype=bool) for r in results], axis=0
    )
    if mask.all():
        raise next(r[2] for r in results if r[2] is not None)
    if mask.any():
        warnings.warn(f"{solver}: {int(mask.sum())} of {mask.size} map points failed and are masked",
                      AccuracyWarning, stacklevel=2)
    params = {"sublayers": sublayers} if solver == "greens" else {}
    if isinstance(line, ResonanceLine):
        params.update(omega0=line.omega0, gamma=line.gamma, f0=line.f0, dipole_sq=line.dipole_sq)
    return SpectralMap(energies, offsets, values, solver, float(theta1), quantity, mask, params)


def rms_difference(a: SpectralMap, b: SpectralMap) -> float:
    ok = ~(a.error_mask | b.error_mask)
    return float(np.sqrt(np.mean((a.values[ok] - b.values[ok]) ** 2)))


def max_difference(a: SpectralMap, b: SpectralMap) -> float:
    ok = ~(a.error_mask | b.error_mask)
    return float(np.max(np.abs(a.values[ok] - b.values[ok])))


# --------------------------------------------------------------------------
# anti-crossing analysis


@dataclass(frozen=True, eq=False)
class AvoidedCrossing:
    """Minimum-reflectance ridge split into its two branches.

    The ridge is split where its energy jumps the most; ``gap`` is that
    jump.  ``separated`` is True when the branches stay on opposite sides
    of the bare transition energy ``omega0``, one entirely below it and the
    other entirely above, so they can never meet.  A cavity mode that
    merely crosses a weak line leaves one branch straddling ``omega0``.
    """

    angles: np.ndarray
    energies: np.ndarray
    split: int
    gap: float
    separated: bool
    omega0: float

    @property
    def first_branch(self):
        return self.angles[: self.split], self.energies[: self.split]

    @property
    def second_branch(self):
        return self.angles[self.split:], self.energies[self.split:]


def ridge(smap: SpectralMap, prominence=0.005):
    """Energy of the most prominent reflectance dip in every angle column.

    Columns without a dip of at least ``prominence`` are skipped.
    """
    angles, energies = [], []
    for j, offset in enumerate(smap.angle_axis):
        col = smap.values[:, j]
        if np.any(~np.isfinite(col)):
            continue
        idx, props = find_peaks(-col, prominence=prominence)
        if idx.size == 0:
            continue
        best = idx[np.argmax(props["prominences"])]
        angles.append(offset)
        energies.append(smap.energy_axis[best])
    return np.array(angles), np.array(energies)


def avoided_crossing(smap: SpectralMap, omega0=None, prominence=0.005) -> AvoidedCrossing:
    """Split the dip ridge at its largest energy jump and test separation.

    ``omega0`` defaults to the transition energy stored in the map
    parameters.
    """
    if omega0 is None:
        if "omega0" not in smap.parameters:
            raise InputError("omega0 is needed to classify the ridge branches")
        omega0 = smap.parameters["omega0"]
    angles, energies = ridge(smap, prominence)
    if energies.size < 4:
        raise SearchError("too few ridge points to analyse the crossing")
    jumps = np.abs(np.diff(energies))
    k = int(np.argmax(jumps)) + 1
    first, second = energies[:k], energies[k:]
    separated = bool(
        (first.max() < omega0 < second.min()) or (second.max() < omega0 < first.min())
    )
    return AvoidedCrossing(angles, energies, k, float(jumps[k - 1]), separated, float(omega0))


# --------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class FitResult:
    parameter: str
    value: float
    residual: float
    iterations: int
    converged: bool
    candidates: tuple = ()


def _model_factory(solver, stack, point, sublayers):
    if solver == "matrix":
        model = MatrixModel(stack, point)
        return lambda line: model.reflectance(line)
    if solver == "greens":
        model = GreensModel(stack, point, sublayers)
        return lambda line: model.reflectance(line)
    if solver == "parratt":
        return lambda line: parratt_reflectance(stack, point, line)
    raise InputError(f"unknown solver {solver!r}")


def fit_parameter(benchmark: SpectralMap, solver: str, stack: CavityStack, line,
                  parameter: str = "f0", bounds=None, seeds=None, sublayers: int = 8,
                  tol: float = 1e-12, agree: float = 1e-6) -> FitResult:
    """Fit ``f0`` or ``dipole_sq`` so that ``solver`` reproduces ``benchmark``.

    The residual is the root-mean-square of ``|R|^2`` differences over the
    benchmark grid.  The parameter is searched on a logarithmic scale: from
    each of three seeds a downhill bracket is grown and refined by
    golden-section search.  Distinct converged minima raise
    :class:`FitAmbiguityError`.
    """
    if parameter not in ("f0", "dipole_sq"):
        raise InputError("parameter must be 'f0' or 'dipole_sq'")
    if benchmark.quantity != "reflectance":
        raise InputError("benchmark must be a reflectance map")
    if bounds is None:
        bounds = (1e-4, 1e3) if parameter == "f0" else (1e-4 / F0_PER_DIPOLE, 1e3 / F0_PER_DIPOLE)
    lo, hi = (math.log(b) for b in bounds)
    if seeds is None:
        seeds = [math.exp(lo + (hi - lo) * f) for f in (0.25, 0.5, 0.75)]

    model = _model_factory(solver, stack, benchmark.point(), sublayers)
    target = benchmark.values
    ok = ~benchmark.error_mask
    count = [0]

    def make_line(value):
        return line.with_f0(value) if parameter == "f0" else line.with_dipole(value)

    def residual_of(value):
        count[0] += 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExpansionWarning)
            refl = np.abs(model(make_line(value))) ** 2
        return float(np.sqrt(np.mean((refl[ok] - target[ok]) ** 2)))

    def objective(u):
        return residual_of(math.exp(min(max(u, lo - 10), hi + 10)))

    candidates = []
    for seed in seeds:
        u0 = math.log(seed)
        try:
            xa, xb, xc, *_ = optimize.bracket(objective, u0, u0 + 0.25, maxiter=200)
        except RuntimeError:  # no downhill direction from this seed
            continue
        if not (xa < xb < xc or xc < xb < xa):
            continue
        res = optimize.minimize_scalar(objective, bracket=(xa, xb, xc), method="golden",
                                       options={"xtol": tol})
        u = float(res.x)
        if lo - 1e-9 <= u <= hi + 1e-9:
            candidates.append((math.exp(u), float(res.fun)))
    if not candidates:
        raise FitError(f"no minimum of the {parameter} residual inside {bounds}")
    candidates.sort(key=lambda c: c[1])
    best_value, best_res = candidates[0]
    distinct = [c for c in candidates if abs(c[0] - best_value) > agree * best_value]
    if distinct:
        raise FitAmbiguityError(f"multistart fits of {parameter} disagree", candidates)
    return FitResult(parameter, best_value, best_res, count[0], True, tuple(candidates))


# --------------------------------------------------------------------------
# line-shape helpers


@dataclass(frozen=True)
class FanoFit:
    """Parameters of ``A (q + x)^2 / (1 + x^2) + B``.

    The form is invariant under ``q -> -1/q`` with a compensating change of
    ``A`` and ``B``, so ``q`` alone is not unique.  The decomposition
    ``A + [A (q^2 - 1) + 2 A q x] / (1 + x^2)`` is: :attr:`dispersive` and
    :attr:`absorptive` are the amplitudes of its two components.
    """

    q: float
    center: float
    width: float
    amplitude: float
    background: float

    @property
    def dispersive(self):
        return 2.0 * self.amplitude * self.q

    @property
    def absorptive(self):
        return self.amplitude * (self.q * self.q - 1.0)


def fano_profile(energy, q, center, width, amplitude, background):
    x = 2.0 * (np.asarray(energy, dtype=float) - center) / width
    return amplitude * (q + x) ** 2 / (1.0 + x * x) + background


def fit_fano(energies, values) -> FanoFit:
    """Least-squares Fano profile ``A (q + x)^2 / (1 + x^2) + B``."""
    e = np.asarray(energies, dtype=float)
    y = np.asarray(values, dtype=float)
    center0 = float(e[np.argmax(np.abs(y - np.median(y)))])
    width0 = float(np.ptp(e)) / 6.0
    best = None
    for q0 in (-2.0, -0.5, 0.5, 2.0):
        amp0 = float(np.ptp(y)) / (1.0 + q0 * q0)
        p0 = [q0, center0, width0, amp0, float(np.min(y))]
        try:
            p, _ = optimize.curve_fit(fano_profile, e, y, p0=p0, maxfev=20000)
        except RuntimeError:
            continue
        cost = float(np.sum((fano_profile(e, *p) - y) ** 2))
        if best is None or cost < best[0]:
            best = (cost, p)
    if best is None:
        raise FitError("Fano fit did not converge")
    q, c, w, a, b = best[1]
    return FanoFit(float(q), float(c), abs(float(w)), float(a), float(b))


def lorentzian(energy, amplitude, center, width, background):
    x = 2.0 * (np.asarray(energy, dtype=float) - center) / width
    return amplitude / (1.0 + x * x) + background


def lorentzian_width(energies, values) -> float:
    """Full width at half maximum of a Lorentzian-plus-offset fit (eV)."""
    e = np.asarray(energies, dtype=float)
    y = np.asarray(values, dtype=float)
    i = int(np.argmax(y))
    half = y[i] - 0.5 * (y[i] - np.min(y))
    above = e[y >= half]
    width0 = max(float(above[-1] - above[0]), float(np.median(np.diff(e))))
    p, _ = optimize.curve_fit(lorentzian, e, y, p0=[y[i] - np.min(y), e[i], width0, np.min(y)],
                              maxfev=20000)
    return abs(float(p[2]))
