"""Physical constants in the package unit system (eV, nm)."""

HBARC = 197.3269804  # eV nm
R0 = 2.8179403262e-6  # classical electron radius, nm


def wavenumber(energy):
    """Vacuum wave number in nm^-1 for a photon energy in eV."""
    return energy / HBARC
