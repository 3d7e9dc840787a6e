"""Recursive (Parratt) reflectance, in-stack field amplitudes and fluorescence.

This solver treats the resonant layer like any other layer: its index is the
background index plus the contribution of the resonant scattering length.
That makes it the neutral benchmark for the two resonance-aware models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .stack import CavityStack, ScanPoint, fresnel


def _delta_f(resonance, energy):
    if resonance is None:
        return None
    return resonance.delta_f(energy)


def _ratios(stack: CavityStack, kz):
    """Bottom-up ratios ``X_j = A_-/A_+`` just above each interface j|j+1."""
    n = len(stack.layers)
    X = [None] * (n - 1)
    ratio_below = np.zeros_like(kz[0])  # no upward wave in the substrate
    for j in range(n - 2, -1, -1):
        r, _ = fresnel(kz[j], kz[j + 1])
        if j + 1 < n - 1:
            phase = np.exp(2j * kz[j + 1] * stack.layers[j + 1].thickness)
            y = ratio_below * phase
        else:
            y = ratio_below
        X[j] = (r + y) / (1.0 + r * y)
        ratio_below = X[j]
    return X


def parratt_reflectance(stack: CavityStack, point: ScanPoint, resonance=None):
    """Complex reflection coefficient of ``stack``.

    Parameters
    ----------
    stack : CavityStack
    point : ScanPoint
        Energies and angles; arrays broadcast.
    resonance : ResonanceLine or DispersionTable, optional
        Resonant correction added to the resonant layer's index.

    Returns
    -------
    ndarray of complex
        ``r = A_-/A_+`` at the surface, shaped like ``point.shape``.
    """
    kz = stack.wavevectors(point, _delta_f(resonance, point.energy))
    return _ratios(stack, kz)[0]


@dataclass(frozen=True, eq=False)
class FieldProfile:
    depths: np.ndarray
    a_values: np.ndarray

    @property
    def intensity(self):
        return np.abs(self.a_values) ** 2


def field_amplitude(stack: CavityStack, point: ScanPoint, depths, resonance=None):
    """Normalized field ``a(z) = (A_+ + A_-)/A_0`` at each depth.

    Returns an array shaped ``point.shape + (len(depths),)``.  Amplitudes are
    carried top-down as ``A_+`` at each layer top, which only ever decays,
    while the down-going ratio comes from the bottom-up recursion; this keeps
    evanescent layers well conditioned.
    """
    depths = np.atleast_1d(np.asarray(depths, dtype=float))
    kz = stack.wavevectors(point, _delta_f(resonance, point.energy))
    X = _ratios(stack, kz)
    n = len(stack.layers)
    shape = point.shape
    out = np.empty(shape + depths.shape, dtype=complex)

    # A_+ at the top of each layer (for the ambient: at z = 0)
    a_plus_top = [np.ones(shape, dtype=complex)]
    for j in range(n - 1):
        # field at interface j|j+1 from above, divided by the top ratio below
        if j == 0:
            field_at = a_plus_top[0] * (1.0 + X[0])
        else:
            d = stack.layers[j].thickness
            a_plus_bottom = a_plus_top[j] * np.exp(1j * kz[j] * d)
            field_at = a_plus_bottom * (1.0 + X[j])
        if j + 1 < n - 1:
            y = X[j + 1] * np.exp(2j * kz[j + 1] * stack.layers[j + 1].thickness)
        else:
            y = np.zeros(shape, dtype=complex)
        a_plus_top.append(field_at / (1.0 + y))

    for idx, z in enumerate(depths):
        m = stack.locate(z)
        if m == 0:
            val = np.exp(1j * kz[0] * z) + X[0] * np.exp(-1j * kz[0] * z)
        else:
            s = z - stack.tops[m]
            up = a_plus_top[m] * np.exp(1j * kz[m] * s)
            if m < n - 1:
                d = stack.layers[m].thickness
                down = a_plus_top[m] * X[m] * np.exp(1j * kz[m] * (2.0 * d - s))
            else:
                down = 0.0
            val = up + down
        out[..., idx] = val
    return out


def field_profile(stack: CavityStack, point: ScanPoint, depths=None, resonance=None,
                  step=0.1, margin=5.0) -> FieldProfile:
    """Field amplitude profile; default depths span the stack in 0.1 nm steps."""
    if depths is None:
        depths = np.arange(0.0, stack.total_thickness + margin + step / 2, step)
    depths = np.asarray(depths, dtype=float)
    return FieldProfile(depths, field_amplitude(stack, point, depths, resonance))


def resonant_slices(stack: CavityStack, step=0.1):
    """Slice centers covering the resonant layer at roughly ``step`` spacing."""
    layer = stack.resonant_layer
    n = max(1, int(round(layer.thickness / step)))
    top, _ = stack.layer_bounds(stack.resonant_index)
    return top + (np.arange(n) + 0.5) * layer.thickness / n


def fluorescence(stack: CavityStack, point: ScanPoint, mu, z_a=None, c=1.0,
                 resonance=None, emission=None, step=0.1):
    """Fluorescence yield ``c * mu(w) * I(w, theta, z_a) * I_f``.

    Parameters
    ----------
    mu : callable or array_like
        Absorption coefficient of the resonant atoms, evaluated at
        ``point.energy`` when callable.
    z_a : float, optional
        Emitter depth.  When omitted, the field intensity is averaged over
        the resonant layer sliced at ``step`` nm.
    emission : callable or array_like, optional
        Exit-channel factor ``I_f``; unity when omitted.
    """
    if z_a is None:
        depths = resonant_slices(stack, step)
    else:
        top, bottom = stack.layer_bounds(stack.resonant_index) if stack.resonant_index is not None else (0, -1)
        if not (top <= z_a <= bottom):
            raise GeometryError(f"emitter depth {z_a} nm is outside the resonant layer")
        depths = np.array([z_a], dtype=float)
    intensity = np.mean(np.abs(field_amplitude(stack, point, depths, resonance)) ** 2, axis=-1)
    m = mu(point.energy) if callable(mu) else np.asarray(mu, dtype=float)
    if emission is None:
        f_exit = 1.0
    else:
        f_exit = emission(point.energy) if callable(emission) else np.asarray(emission)
    return c * m * intensity * f_exit
