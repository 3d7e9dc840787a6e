"""Sublayer-resolved Green's function model of the resonant layer.

The resonant layer is sliced into ``N`` planes.  Within linear response each
plane ``l`` carries a collective dipole amplitude ``sigma_l`` obeying::

    sum_l' [(detuning + i gamma/2) delta_ll' + G_ll'] sigma_l' = -Omega_l

where ``G_ll' = J_ll' + i Gamma_ll'/2`` is the photon-mediated coupling
between planes and ``Omega_l`` the drive by the bare-cavity field.  The
reflected field is the bare reflection plus the emission of all planes
carried back to the surface.

Propagation between depths uses the quasi one-dimensional kernel::

    K(z, z') = (i / 2 kz0) a(max(z, z')) q(min(z, z'))

built from the bare-cavity field factors of :mod:`xcavity.matrix_model`.
The Wronskian of ``a`` and ``q`` is ``2 i kz0`` at every depth, which makes
``K`` the exact Green's function of the bare stack at fixed in-plane
momentum.

Dipole calibration
------------------
All prefactors linking the squared dipole to the coupling are collapsed into
one constant.  A plane of ``n`` scatterers per nm^2 with squared dipole
``dipole_sq`` couples with strength ``n * c`` where::

    c = 2 pi r0 * gamma * F0_PER_DIPOLE * dipole_sq      (nm eV)

With one plane this reproduces the matrix model with
``f0 = F0_PER_DIPOLE * dipole_sq``.  The constant is set so that a squared
dipole of 3.3e-7 corresponds to f0 = 0.36.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import R0
from .errors import GeometryError, InputError, ResonancePoleError
from .matrix_model import field_factors
from .stack import CavityStack, ScanPoint

F0_PER_DIPOLE = 0.36 / 3.3e-7
MAX_SUBLAYERS = 64
CONDITION_LIMIT = 1e12


def f0_from_dipole(dipole_sq):
    return F0_PER_DIPOLE * np.asarray(dipole_sq, dtype=float)


def dipole_from_f0(f0):
    return np.asarray(f0, dtype=float) / F0_PER_DIPOLE


def dipole_coupling(line):
    """Per-scatterer coupling constant ``c`` in nm eV."""
    return 2.0 * np.pi * R0 * line.gamma * F0_PER_DIPOLE * line.dipole_sq


@dataclass(frozen=True, eq=False)
class SublayerGrid:
    """Planes standing in for the resonant layer.

    Attributes
    ----------
    z_positions : center depth of each plane, nm
    thickness : thickness represented by each plane, nm
    area_density : scatterers per nm^2 in each plane
    """

    z_positions: np.ndarray
    thickness: np.ndarray
    area_density: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z_positions, dtype=float))
        d = np.atleast_1d(np.asarray(self.thickness, dtype=float))
        n = np.atleast_1d(np.asarray(self.area_density, dtype=float))
        if z.size == 0:
            raise InputError("sublayer grid is empty")
        if not (z.shape == d.shape == n.shape):
            raise InputError("sublayer arrays must have equal length")
        if z.size > MAX_SUBLAYERS:
            raise InputError(f"at most {MAX_SUBLAYERS} sublayers are supported")
        if np.any(np.diff(z) <= 0):
            raise InputError("sublayer depths must be strictly increasing")
        for name, v in (("z_positions", z), ("thickness", d), ("area_density", n)):
            object.__setattr__(self, name, v)

    def __len__(self):
        return self.z_positions.size

    @classmethod
    def slice_layer(cls, stack: CavityStack, n: int) -> "SublayerGrid":
        """Split the resonant layer into ``n`` equal slabs."""
        if n < 1:
            raise InputError("need at least one sublayer")
        if n > MAX_SUBLAYERS:
            raise InputError(f"at most {MAX_SUBLAYERS} sublayers are supported")
        layer = stack.resonant_layer
        top, _ = stack.layer_bounds(stack.resonant_index)
        d = layer.thickness / n
        z = top + (np.arange(n) + 0.5) * d
        rho = layer.density
        if rho is None:
            raise GeometryError("resonant layer has no atom density")
        return cls(z, np.full(n, d), np.full(n, rho * d))


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """``G = J + i Gamma/2`` (eV) with shape ``(..., N, N)``."""

    G: np.ndarray

    @property
    def J(self):
        return self.G.real

    @property
    def Gamma(self):
        return 2.0 * self.G.imag


def _kernel_from_factors(a, q, kz0):
    """Kernel matrix from field factors at increasing depths (last axis)."""
    n = a.shape[-1]
    upper = np.triu(np.ones((n, n), dtype=bool))
    # entry (i, j) with i <= j: deeper point is j -> a_j q_i
    aq = a[..., None, :] * q[..., :, None]
    full = np.where(upper, aq, np.swapaxes(aq, -1, -2))
    return (0.5j / kz0)[..., None, None] * full


def greens_kernel(stack: CavityStack, point: ScanPoint, z_i, z_j):
    """Bare-cavity Green's kernel between two depths (nm); symmetric."""
    z_i = float(z_i)
    z_j = float(z_j)
    lo, hi = sorted((z_i, z_j))
    _, _, q, a = field_factors(stack, point, [lo, hi])
    return 0.5j / point.kz_vacuum * a[..., 1] * q[..., 0]


def coupling_matrix(stack: CavityStack, point: ScanPoint, grid: SublayerGrid, line) -> CouplingMatrix:
    """Plane-plane coupling ``sqrt(n_l n_l') c K(z_l, z_l')``."""
    if len(grid) == 0:
        raise InputError("sublayer grid is empty")
    _, _, q, a = field_factors(stack, point, grid.z_positions)
    kernel = _kernel_from_factors(a, q, point.kz_vacuum)
    weight = np.sqrt(np.outer(grid.area_density, grid.area_density))
    return CouplingMatrix(dipole_coupling(line) * weight * kernel)


def rabi_drive(stack: CavityStack, point: ScanPoint, grid: SublayerGrid, line):
    """Drive of each plane by the bare-cavity field, ``sqrt(n_l c) a(z_l)``."""
    _, _, _, a = field_factors(stack, point, grid.z_positions)
    return np.sqrt(grid.area_density * dipole_coupling(line)) * a


def steady_state(coupling: CouplingMatrix, drive, detuning, gamma0, check=True, point=None):
    """Steady-state plane amplitudes ``sigma = -(M^-1) Omega``.

    ``M = (detuning + i gamma0/2) I + G``.  ``detuning`` broadcasts over the
    leading axes of ``G``.
    """
    G = np.asarray(coupling.G)
    n = G.shape[-1]
    det = np.asarray(detuning, dtype=float)[..., None, None]
    M = G + (det + 0.5j * gamma0) * np.eye(n)
    if check:
        cond = np.linalg.cond(M)
        if np.any(~np.isfinite(cond) | (cond > CONDITION_LIMIT)):
            idx = np.unravel_index(np.argmax(np.where(np.isfinite(cond), cond, np.inf)), cond.shape)
            where = None
            if point is not None:
                e = np.broadcast_to(point.energy, point.shape)[idx]
                th = np.broadcast_to(point.angle, point.shape)[idx]
                where = f"energy {e:.6f} eV, angle {th:.8f} deg"
            raise ResonancePoleError(f"steady-state matrix is singular (condition {cond[idx]:.3g})", where)
    drive = np.broadcast_to(np.asarray(drive, dtype=complex), M.shape[:-1])
    return -np.linalg.solve(M, drive[..., None])[..., 0]


def reflectance(stack: CavityStack, point: ScanPoint, grid: SublayerGrid, line, sigma):
    """Bare reflection plus the emission of all planes reaching the surface."""
    r0, _, _, a = field_factors(stack, point, grid.z_positions)
    emit = np.sqrt(grid.area_density * dipole_coupling(line)) * a
    return r0 + (0.5j / point.kz_vacuum) * np.sum(emit * sigma, axis=-1)


class GreensModel:
    """Green's-function reflectance on a fixed grid.

    Bare-cavity factors and the kernel are computed once, so evaluating
    several dipole strengths only costs the linear solves.
    """

    def __init__(self, stack: CavityStack, point: ScanPoint, sublayers: int = 8):
        self.stack = stack
        self.point = point
        self.grid = SublayerGrid.slice_layer(stack, sublayers)
        self.r0, _, q, a = field_factors(stack, point, self.grid.z_positions)
        self.a = a
        self.kernel = _kernel_from_factors(a, q, point.kz_vacuum)
        self.weight = np.sqrt(np.outer(self.grid.area_density, self.grid.area_density))

    def coupling(self, line) -> CouplingMatrix:
        return CouplingMatrix(dipole_coupling(line) * self.weight * self.kernel)

    def amplitudes(self, line, check=False):
        c = dipole_coupling(line)
        drive = np.sqrt(self.grid.area_density * c) * self.a
        detuning = np.broadcast_to(self.point.energy - line.omega0, self.point.shape)
        return steady_state(self.coupling(line), drive, detuning, line.gamma, check, self.point)

    def reflectance(self, line, check=False):
        sigma = self.amplitudes(line, check)
        emit = np.sqrt(self.grid.area_density * dipole_coupling(line)) * self.a
        return self.r0 + (0.5j / self.point.kz_vacuum) * np.sum(emit * sigma, axis=-1)


def greens_reflectance(stack: CavityStack, point: ScanPoint, line, sublayers: int = 8, check=True):
    return GreensModel(stack, point, sublayers).reflectance(line, check=check)
