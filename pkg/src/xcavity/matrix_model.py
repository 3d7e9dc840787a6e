"""Transfer matrices, bare-cavity factors and the thin-film resonant response.

Amplitudes in a layer are the pair ``(A_+, A_-)`` of down- and up-going
waves.  The matrix of an interface maps the pair just above it onto the pair
just below it; a propagation matrix advances the pair by a distance ``s``
inside a layer.  Multiplying these from the surface down gives ``M(z)``,
which maps the ambient amplitudes ``(1, r)`` at ``z = 0`` onto the
amplitudes at depth ``z``.

Two field factors of the bare cavity follow from ``M(z)``::

    p(z) = M11 + M21,   q(z) = M12 + M22,   a(z) = p(z) + r0 q(z)

(``a`` is evaluated from the transmitted wave upwards, which gives the
same function without cancellation inside evanescent layers.)

``a`` is the normalized field for unit illumination from above, ``q`` is the
field produced by a unit up-going wave leaving the surface.  The resonant
layer, collapsed onto a plane at ``z_a``, couples to the cavity through
``a(z_a)`` (excitation and emission) and ``eta = a(z_a) q(z_a)`` (the
cavity's back-action on the plane, which sets the cavity-enhanced width and
the cavity-induced shift).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constants import R0
from .errors import ExpansionWarning, GeometryError, SingularCavityError
from .stack import CavityStack, Layer, ScanPoint, fresnel, layer_kz

SINGULAR_THRESHOLD = 1e-12
VALIDITY_BOUND = 0.1


@dataclass(frozen=True, eq=False)
class Transfer2x2:
    """Stack of 2x2 complex matrices with shape ``(..., 2, 2)``."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=complex)
        if m.shape[-2:] != (2, 2):
            raise ValueError("transfer matrices must have trailing shape (2, 2)")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls, shape=()):
        m = np.zeros(tuple(shape) + (2, 2), dtype=complex)
        m[..., 0, 0] = m[..., 1, 1] = 1.0
        return cls(m)

    @classmethod
    def from_entries(cls, m11, m12, m21, m22):
        m11, m12, m21, m22 = np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in (m11, m12, m21, m22)))
        return cls(np.stack([np.stack([m11, m12], -1), np.stack([m21, m22], -1)], -2))

    def __matmul__(self, other: "Transfer2x2") -> "Transfer2x2":
        return Transfer2x2(self.m @ other.m)

    m11 = property(lambda self: self.m[..., 0, 0])
    m12 = property(lambda self: self.m[..., 0, 1])
    m21 = property(lambda self: self.m[..., 1, 0])
    m22 = property(lambda self: self.m[..., 1, 1])

    @property
    def det(self):
        return self.m11 * self.m22 - self.m12 * self.m21


def interface_matrix(k_above, k_below) -> Transfer2x2:
    """Map amplitudes just above an interface onto those just below it.

    ``(1/t)[[1, r], [r, 1]]`` with ``r, t = fresnel(k_below, k_above)``.
    """
    r, t = fresnel(k_below, k_above)
    inv_t = 1.0 / t
    return Transfer2x2.from_entries(inv_t, r * inv_t, r * inv_t, inv_t)


def propagation_matrix(kz, s) -> Transfer2x2:
    """``diag(exp(i kz s), exp(-i kz s))``."""
    kz = np.asarray(kz)
    ph = np.exp(1j * kz * s)
    zero = np.zeros_like(ph)
    return Transfer2x2.from_entries(ph, zero, zero, np.exp(-1j * kz * s))


def layer_matrix(layer: Layer, point: ScanPoint, method: str = "fresnel", delta_f=None) -> Transfer2x2:
    """Matrix of a finite layer expressed in ambient (vacuum) amplitudes.

    With ``method="fresnel"`` the matrix is composed as interface into the
    layer, propagation over its thickness, and interface back out.  With
    ``method="exponential"`` it is ``exp(i F d)`` for::

        F = [[k0 + phi, phi], [-phi, -k0 - phi]],  phi = (k^2 - k0^2) / (2 k0)

    evaluated through the spectral decomposition of ``F`` (eigenvalues
    ``+-k``).  Both routes describe the same physics and agree to rounding.
    """
    if layer.semi_infinite:
        raise GeometryError(f"layer {layer.label!r} has no finite thickness")
    k0 = point.kz_vacuum.astype(complex)
    k = np.broadcast_to(layer_kz(layer, point, delta_f), point.shape)
    d = layer.thickness
    if method == "fresnel":
        return interface_matrix(k, k0) @ propagation_matrix(k, d) @ interface_matrix(k0, k)
    if method == "exponential":
        phi = (k * k - k0 * k0) / (2.0 * k0)
        f11, f12, f21, f22 = k0 + phi, phi, -phi, -k0 - phi
        ep, em = np.exp(1j * k * d), np.exp(-1j * k * d)
        with np.errstate(divide="ignore", invalid="ignore"):
            # exp(iFd) = e^{ikd} (F + k)/(2k) + e^{-ikd} (k - F)/(2k)
            c = 0.5 * (ep + em)
            s = np.where(k == 0, 1j * d, 0.5 * (ep - em) / k)
        return Transfer2x2.from_entries(c + s * f11, s * f12, s * f21, c + s * f22)
    raise ValueError(f"unknown method {method!r}")


def layer_tops_transfer(stack: CavityStack, kz) -> list[Transfer2x2]:
    """``M`` at the top of every layer below the ambient, in that layer's basis.

    Entry ``m - 1`` belongs to layer ``m``; the last one is the full-stack
    matrix at the substrate.
    """
    out = []
    current = interface_matrix(kz[0], kz[1])
    out.append(current)
    for m in range(1, len(stack.layers) - 1):
        current = interface_matrix(kz[m], kz[m + 1]) @ propagation_matrix(kz[m], stack.layers[m].thickness) @ current
        out.append(current)
    return out


def _reflection(full: Transfer2x2):
    scale = np.max(np.abs(full.m), axis=(-2, -1))
    m22 = full.m22
    if np.any(np.abs(m22) <= SINGULAR_THRESHOLD * scale):
        raise SingularCavityError("M22 vanishes; the stack sits on a pole")
    return -full.m21 / m22


def transfer_reflectance(stack: CavityStack, point: ScanPoint, resonance=None):
    """Reflection coefficient from the full-stack matrix, ``-M21/M22``."""
    delta_f = None if resonance is None else resonance.delta_f(point.energy)
    kz = stack.wavevectors(point, delta_f)
    return _reflection(layer_tops_transfer(stack, kz)[-1])


def _transmitted_solution(stack: CavityStack, kz):
    """Amplitudes at each layer top of the wave that is purely down-going
    in the substrate, normalized to unit incident amplitude.

    Built bottom-up with inverse interface and propagation matrices.  In
    evanescent layers this follows the solution that grows towards the
    surface, so it stays accurate where ``p + r0 q`` would cancel.
    Returns a list of ``(A_+, A_-)`` pairs indexed by layer.
    """
    n = len(stack.layers)
    shape = np.shape(kz[0])
    plus = np.ones(shape, dtype=complex)
    minus = np.zeros(shape, dtype=complex)
    amps = [None] * n
    logs = [None] * n
    amps[n - 1] = (plus, minus)
    log_scale = np.zeros(shape)
    logs[n - 1] = log_scale
    for m in range(n - 2, -1, -1):
        up = interface_matrix(kz[m + 1], kz[m])
        plus, minus = up.m11 * plus + up.m12 * minus, up.m21 * plus + up.m22 * minus
        if m > 0:
            d = stack.layers[m].thickness
            plus, minus = plus * np.exp(-1j * kz[m] * d), minus * np.exp(1j * kz[m] * d)
        # renormalize to keep the recursion inside floating-point range
        c = np.maximum(np.abs(plus), np.abs(minus))
        c = np.where(c > 0, c, 1.0)
        plus, minus = plus / c, minus / c
        log_scale = log_scale + np.log(c)
        amps[m] = (plus, minus)
        logs[m] = log_scale
    surface = amps[0][0]
    out = []
    for (ap, am), lg in zip(amps, logs):
        factor = np.exp(lg - logs[0]) / surface
        out.append((ap * factor, am * factor))
    return out


def field_factors(stack: CavityStack, point: ScanPoint, depths):
    """Bare-cavity ``(r0, p, q, a)`` at each depth.

    ``p``, ``q`` and ``a`` have shape ``point.shape + (len(depths),)``.
    ``q`` comes from the top-down layer matrices; ``a`` is taken from the
    transmitted solution (see :func:`_transmitted_solution`), which equals
    ``p + r0 q`` but does not suffer cancellation in evanescent layers.
    The resonant layer carries only its background index here.
    """
    depths = np.atleast_1d(np.asarray(depths, dtype=float))
    kz = stack.wavevectors(point)
    tops = layer_tops_transfer(stack, kz)
    r0 = _reflection(tops[-1])
    trans = _transmitted_solution(stack, kz)
    shape = point.shape + depths.shape
    q = np.empty(shape, dtype=complex)
    a = np.empty(shape, dtype=complex)
    for i, z in enumerate(depths):
        m = stack.locate(z)
        if m == 0:
            q[..., i] = np.exp(-1j * kz[0] * z)
            a[..., i] = np.exp(1j * kz[0] * z) + r0 * q[..., i]
            continue
        c = tops[m - 1]
        s = z - stack.tops[m]
        ep = np.exp(1j * kz[m] * s)
        em = np.exp(-1j * kz[m] * s)
        q[..., i] = ep * c.m12 + em * c.m22
        plus, minus = trans[m]
        a[..., i] = plus * ep + minus * em
    p = a - r0[..., None] * q
    return r0, p, q, a


@dataclass(frozen=True, eq=False)
class CavityResponse:
    """Bare-cavity quantities at the resonant plane ``z_a``.

    Attributes
    ----------
    r0 : reflection coefficient of the bare cavity
    p, q : field factors at ``z_a``
    a : normalized field at ``z_a`` (``p + r0 q``)
    kz0 : ambient wave-vector component ``k sin(theta)`` (nm^-1)
    atom_density : resonant scatterer density (nm^-3)
    z_a : plane depth (nm)
    """

    r0: np.ndarray
    p: np.ndarray
    q: np.ndarray
    a: np.ndarray
    kz0: np.ndarray
    atom_density: float
    z_a: float

    @property
    def eta(self):
        """Cavity back-action factor ``a(z_a) q(z_a)``."""
        return self.a * self.q

    @property
    def eta_pq(self):
        """``p q``; equals :attr:`eta` only where ``q r0`` is negligible."""
        return self.p * self.q


def bare_cavity(stack: CavityStack, point: ScanPoint, z_a: float | None = None) -> CavityResponse:
    """Bare-cavity response at the resonant plane (default: layer center)."""
    if z_a is None:
        z_a = stack.resonant_center
    r0, p, q, a = field_factors(stack, point, [z_a])
    density = stack.resonant_layer.density if stack.resonant_index is not None else 0.0
    return CavityResponse(r0, p[..., 0], q[..., 0], a[..., 0], point.kz_vacuum, density or 0.0, float(z_a))


def coupling_strength(resp: CavityResponse, delta_f, d):
    """Dimensionless sheet strength ``kappa = -2 pi rho r0 d delta_f / kz0``.

    This is the single conversion from the per-atom scattering length to the
    scattering strength of a resonant sheet of thickness ``d`` (nm); it is
    the linearization of ``d (k_layer^2 - k_bg^2) / (2 kz0)`` in ``delta_f``.
    """
    return -2.0 * np.pi * resp.atom_density * R0 * d * np.asarray(delta_f) / resp.kz0


def expansion_parameter(resp: CavityResponse, delta_f, d):
    kappa = np.abs(coupling_strength(resp, delta_f, d))
    return kappa * np.maximum(np.abs(resp.eta), np.abs(resp.a) ** 2)


def resonant_reflection(resp: CavityResponse, line, d: float, energy, check=True):
    """Resonant pathway ``r_a`` of a thin resonant sheet.

    ``r_a = i kappa a^2 / (1 - i kappa eta)`` where ``kappa`` is the sheet
    strength from :func:`coupling_strength`.  The denominator re-sums the
    multiple scattering between the sheet and the cavity exactly, so the
    only approximation is collapsing the layer onto one plane.

    ``line`` may be any object with a ``delta_f(energy)`` method.  An
    :class:`~xcavity.errors.ExpansionWarning` is issued where the expansion
    parameter exceeds 0.1.
    """
    delta_f = line.delta_f(energy)
    if check:
        x = expansion_parameter(resp, delta_f, d)
        if np.any(x > VALIDITY_BOUND):
            warnings.warn(
                f"thin-film expansion parameter reaches {float(np.max(x)):.3g} (> {VALIDITY_BOUND})",
                ExpansionWarning,
                stacklevel=2,
            )
    kappa = coupling_strength(resp, delta_f, d)
    return 1j * kappa * resp.a**2 / (1.0 - 1j * kappa * resp.eta)


def sheet_coupling(resp: CavityResponse, line, d: float):
    """Real coupling ``g = 2 pi rho r0 d f0 / kz0`` of a Lorentzian sheet."""
    return 2.0 * np.pi * resp.atom_density * R0 * d * line.f0 / resp.kz0


def cavity_shifts(resp: CavityResponse, line, d: float):
    """Cavity-induced shift and cavity-enhanced width ``(delta_c, gamma_c)`` in eV.

    They enter the resonant pathway as::

        r_a = -i g (gamma/2) a^2 / (detuning + delta_c + i (gamma + gamma_c)/2)

    with ``gamma_c = gamma g Re(eta)`` and ``delta_c = -(gamma/2) g Im(eta)``.
    A positive ``delta_c`` moves the apparent line to lower energy.
    """
    g = sheet_coupling(resp, line, d)
    gamma_c = line.gamma * g * resp.eta.real
    delta_c = -0.5 * line.gamma * g * resp.eta.imag
    return delta_c, gamma_c


def lorentzian_reflection(resp: CavityResponse, line, d: float, energy):
    """Resonant pathway written with the cavity shifts (same value as
    :func:`resonant_reflection` for a Lorentzian line)."""
    g = sheet_coupling(resp, line, d)
    delta_c, gamma_c = cavity_shifts(resp, line, d)
    detuning = np.asarray(energy, dtype=float) - line.omega0
    return -1j * g * 0.5 * line.gamma * resp.a**2 / (detuning + delta_c + 0.5j * (line.gamma + gamma_c))


class MatrixModel:
    """Resonance-aware reflectance on a fixed grid.

    The bare-cavity factors are computed once; :meth:`reflectance` then only
    evaluates the two-pathway formula, which makes repeated evaluation with
    different line strengths cheap.
    """

    def __init__(self, stack: CavityStack, point: ScanPoint, z_a: float | None = None):
        self.stack = stack
        self.point = point
        self.response = bare_cavity(stack, point, z_a)
        self.thickness = stack.resonant_layer.thickness

    def reflectance(self, line, check=False):
        r_a = resonant_reflection(self.response, line, self.thickness, self.point.energy, check=check)
        return self.response.r0 + r_a


def matrix_reflectance(stack: CavityStack, point: ScanPoint, line, z_a=None, check=True):
    """Total reflection ``r0 + r_a`` of the matrix model."""
    return MatrixModel(stack, point, z_a).reflectance(line, check=check)


def expansion_error(stack: CavityStack, point: ScanPoint, line, d: float):
    """``|r_exact - r_expanded|`` for a resonant layer of thickness ``d``.

    ``r_exact`` propagates through the resonant layer with its full complex
    index (transfer matrices, no expansion); ``r_expanded`` is the thin-sheet
    result ``r0 + r_a`` with the sheet at the layer center.
    """
    thin = stack.with_resonant_thickness(d)
    exact = transfer_reflectance(thin, point, line)
    expanded = matrix_reflectance(thin, point, line, check=False)
    return np.abs(exact - expanded)
