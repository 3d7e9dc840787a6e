"""Resonant x-ray reflectivity of planar thin-film cavities.

Three solvers share one stack description:

* :func:`parratt_reflectance`, the recursive benchmark with the resonance
  folded into the layer index;
* :class:`MatrixModel`, the ultrathin-film expansion around the bare cavity;
* :class:`GreensModel`, sublayer-resolved collective dipoles coupled through
  the bare-cavity Green's function.
"""

__version__ = "0.1.0"

from .constants import HBARC, R0, wavenumber
from .dispersion import (
    DispersionTable,
    ResonanceLine,
    ScatteringFactorTable,
    compound_table,
    dispersion_from_xas,
    fit_xas_lineshape,
    kramers_kronig,
    load_f1f2,
)
from .errors import *  # noqa: F401,F403
from .greens import F0_PER_DIPOLE, GreensModel, SublayerGrid, greens_reflectance
from .io import load_config, load_stack, reference_stack
from .matrix_model import MatrixModel, bare_cavity, matrix_reflectance, transfer_reflectance
from .parratt import field_amplitude, field_profile, fluorescence, parratt_reflectance
from .scan import (
    SpectralMap,
    avoided_crossing,
    find_dips,
    fit_parameter,
    locate_first_mode,
    rocking_curve,
    scan_map,
    spectrum,
)
from .stack import VACUUM, CavityStack, ConstantIndex, Layer, ScanPoint, make_stack
