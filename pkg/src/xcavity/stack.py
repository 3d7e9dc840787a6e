"""Multilayer geometry, per-layer wave vectors and Fresnel coefficients.

Conventions
-----------
Energies are in eV, lengths in nm and angles in degrees at the API surface.
Fields carry the time dependence ``exp(-i w t)`` and propagate downward as
``exp(+i k_z z)``; the refractive index is ``n = 1 - delta + i beta`` with
``beta >= 0`` for absorbing media, so the physical branch of ``k_z`` has a
non-negative imaginary part.

The depth origin is the interface between the top vacuum and the first
finite layer; ``z`` increases into the stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .constants import wavenumber
from .errors import DegenerateInterfaceError, GeometryError, StackValidationError

INF = math.inf


class IndexSource(Protocol):
    """Anything that yields ``n - 1`` as a function of photon energy.

    Returning the deviation from unity instead of ``n`` keeps the small
    quantity exact; ``n^2 - cos^2(theta)`` at grazing angles is otherwise
    a difference of two numbers close to one.
    """

    def deviation(self, energy) -> np.ndarray: ...


@dataclass(frozen=True)
class ConstantIndex:
    """Energy-independent index ``1 - delta + i*beta``."""

    delta: float = 0.0
    beta: float = 0.0
    atom_density: float | None = None

    def deviation(self, energy):
        e = np.asarray(energy, dtype=float)
        return np.full(e.shape, complex(-self.delta, self.beta))

    @property
    def is_vacuum(self) -> bool:
        return self.delta == 0.0 and self.beta == 0.0


VACUUM = ConstantIndex(0.0, 0.0)


@dataclass(frozen=True)
class Layer:
    """One homogeneous slab of the stack.

    Parameters
    ----------
    label : str
    thickness : float
        nm; ``math.inf`` marks the semi-infinite ambient and substrate.
    index : IndexSource
        Background index (Thomson scattering plus any edge background).
    resonant : bool
        Marks the atomic layer that carries the white-line resonance.
    atom_density : float, optional
        Number density of resonant scatterers in nm^-3.  Only needed for the
        resonant layer; defaults to the ``atom_density`` of ``index``.
    """

    label: str
    thickness: float
    index: IndexSource = VACUUM
    resonant: bool = False
    atom_density: float | None = None

    @property
    def semi_infinite(self) -> bool:
        return math.isinf(self.thickness)

    @property
    def density(self) -> float | None:
        if self.atom_density is not None:
            return self.atom_density
        return getattr(self.index, "atom_density", None)

    def deviation(self, energy):
        return np.asarray(self.index.deviation(energy), dtype=complex)

    def refractive_index(self, energy):
        return 1.0 + self.deviation(energy)


@dataclass(frozen=True)
class ScanPoint:
    """Photon energy (eV) and grazing angle (deg); both may be arrays.

    Arrays broadcast against each other, so ``ScanPoint(E[:, None], th[None, :])``
    describes a full energy-angle grid.
    """

    energy: np.ndarray
    angle: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energy, dtype=float)
        a = np.asarray(self.angle, dtype=float)
        if not np.all(e > 0):
            raise GeometryError("photon energy must be positive")
        if not np.all((a > 0) & (a < 90)):
            raise GeometryError("grazing angle must lie in (0, 90) degrees")
        object.__setattr__(self, "energy", e)
        object.__setattr__(self, "angle", a)

    @property
    def k(self):
        return wavenumber(self.energy)

    @property
    def theta(self):
        return np.deg2rad(self.angle)

    @property
    def shape(self):
        return np.broadcast_shapes(self.energy.shape, self.angle.shape)

    @property
    def kz_vacuum(self):
        """``k sin(theta)``, the ambient wave-vector component along z."""
        return np.broadcast_to(self.k * np.sin(self.theta), self.shape)


def kz_from_deviation(deviation, point: ScanPoint):
    """Return ``k sqrt(n^2 - cos^2 theta)`` on the decaying branch.

    ``n^2 - cos^2 = sin^2 + dev (2 + dev)`` with ``dev = n - 1``.
    """
    s = np.sin(point.theta)
    arg = s * s + deviation * (2.0 + deviation)
    root = np.sqrt(np.asarray(arg, dtype=complex))
    # principal sqrt has Re >= 0; flip to the Im >= 0 branch where needed
    # (a negative-zero imaginary part on lossless media lands here too)
    root = np.where(root.imag < 0, -root, root)
    # keep the vacuum case exact: sqrt(sin^2) can differ from sin by an ulp
    root = np.where(deviation == 0, s + 0j, root)
    return point.k * root


def layer_kz(layer: Layer, point: ScanPoint, delta_f=None):
    """z-component of the wave vector inside ``layer`` (nm^-1).

    ``delta_f`` optionally adds a resonant scattering-length correction to
    the layer's index (see :func:`resonant_deviation`).
    """
    dev = layer.deviation(point.energy)
    if delta_f is not None:
        dev = dev + resonant_deviation(layer, point.energy, delta_f)
    return kz_from_deviation(dev, point)


def resonant_deviation(layer: Layer, energy, delta_f):
    """Index change ``-(2 pi rho r0 / k^2) * delta_f`` produced by a resonance."""
    from .dispersion import index_deviation_from_f

    rho = layer.density
    if rho is None:
        raise StackValidationError("resonant layer needs an atom density", layer.label)
    return index_deviation_from_f(delta_f, rho, energy)


def fresnel(k_i, k_j):
    """Fresnel coefficients ``(r_ij, t_ij)`` for scalar waves.

    ``r_ij = (k_i - k_j)/(k_i + k_j)`` and ``t_ij = 2 k_i/(k_i + k_j)``.
    """
    k_i = np.asarray(k_i, dtype=complex)
    k_j = np.asarray(k_j, dtype=complex)
    total = k_i + k_j
    if np.any(total == 0):
        raise DegenerateInterfaceError("k_i + k_j = 0 at an interface")
    return (k_i - k_j) / total, 2.0 * k_i / total


@dataclass(frozen=True)
class CavityStack:
    """Ordered layers from the top vacuum (index 0) to the substrate."""

    layers: tuple[Layer, ...]
    tops: tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 2:
            raise StackValidationError("a stack needs an ambient and a substrate")
        top, bottom = layers[0], layers[-1]
        if not (isinstance(top.index, ConstantIndex) and top.index.is_vacuum):
            raise StackValidationError("first layer must be vacuum (n = 1)", top.label)
        if not top.semi_infinite:
            raise StackValidationError("ambient must be semi-infinite", top.label)
        if not bottom.semi_infinite:
            raise StackValidationError("substrate must be semi-infinite", bottom.label)
        for layer in layers[1:-1]:
            if layer.semi_infinite or not layer.thickness > 0:
                raise StackValidationError(
                    f"thickness must be finite and > 0, got {layer.thickness}", layer.label
                )
        for layer in layers:
            if isinstance(layer.index, ConstantIndex):
                if layer.index.delta < 0 or layer.index.beta < 0:
                    raise StackValidationError("delta and beta must be >= 0", layer.label)
        resonant = [i for i, layer in enumerate(layers) if layer.resonant]
        if len(resonant) > 1:
            raise StackValidationError(
                "at most one resonant layer is supported", layers[resonant[1]].label
            )
        if resonant and layers[resonant[0]].semi_infinite:
            raise StackValidationError("resonant layer must be finite", layers[resonant[0]].label)
        tops = [-INF, 0.0]
        for layer in layers[1:-1]:
            tops.append(tops[-1] + layer.thickness)
        object.__setattr__(self, "tops", tuple(tops))

    def __len__(self):
        return len(self.layers)

    @property
    def total_thickness(self) -> float:
        return self.tops[-1]

    @property
    def resonant_index(self) -> int | None:
        for i, layer in enumerate(self.layers):
            if layer.resonant:
                return i
        return None

    @property
    def resonant_layer(self) -> Layer:
        i = self.resonant_index
        if i is None:
            raise GeometryError("stack has no resonant layer")
        return self.layers[i]

    def layer_bounds(self, i: int) -> tuple[float, float]:
        top = self.tops[i]
        bottom = self.tops[i + 1] if i + 1 < len(self.tops) else INF
        return top, bottom

    @property
    def resonant_center(self) -> float:
        self.resonant_layer  # raises GeometryError if absent
        top, bottom = self.layer_bounds(self.resonant_index)
        return 0.5 * (top + bottom)

    def locate(self, z: float) -> int:
        """Index of the layer containing depth ``z`` (interfaces belong below)."""
        if z < 0:
            return 0
        i = int(np.searchsorted(self.tops[1:], z, side="right"))
        return i

    def with_resonant_thickness(self, thickness: float) -> "CavityStack":
        i = self.resonant_index
        if i is None:
            raise GeometryError("stack has no resonant layer")
        layers = list(self.layers)
        layers[i] = replace(layers[i], thickness=thickness)
        return CavityStack(tuple(layers))

    def deviations(self, energy, delta_f=None) -> list[np.ndarray]:
        """``n - 1`` for every layer; ``delta_f`` is added to the resonant one."""
        out = []
        for layer in self.layers:
            dev = layer.deviation(energy)
            if layer.resonant and delta_f is not None:
                dev = dev + resonant_deviation(layer, energy, delta_f)
            out.append(dev)
        return out

    def wavevectors(self, point: ScanPoint, delta_f=None) -> list[np.ndarray]:
        """Broadcast ``k_z`` arrays for every layer at ``point``."""
        shape = point.shape
        kz = [
            np.broadcast_to(kz_from_deviation(dev, point), shape)
            for dev in self.deviations(point.energy, delta_f)
        ]
        kz[0] = point.kz_vacuum.astype(complex)
        return kz


def make_stack(layers: Sequence[Layer]) -> CavityStack:
    return CavityStack(tuple(layers))
