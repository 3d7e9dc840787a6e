"""Regenerate the bundled f1/f2 tables from the Chantler data in xraydb.

Run from the repository root::

    python tools/make_tables.py

Only needed when the energy range changes; xraydb is not a runtime dependency.
"""
import numpy as np
import xraydb

ELEMENTS = ("Pt", "C", "W", "Si")
OUT = "src/xcavity/data/tables"


def main(emin=9500.0, emax=11000.0, step=0.5):
    energies = np.arange(emin, emax + step / 2, step)
    for el in ELEMENTS:
        z = xraydb.atomic_number(el)
        f1 = z + xraydb.f1_chantler(el, energies)
        f2 = xraydb.f2_chantler(el, energies)
        header = (
            f"{el} atomic scattering factors, Chantler tables via xraydb {xraydb.__version__}\n"
            "f1 includes Z; f2 > 0 is absorptive\n"
            "energy_eV f1 f2"
        )
        np.savetxt(f"{OUT}/{el}.f1f2", np.column_stack([energies, f1, f2]),
                   fmt=["%.2f", "%.8f", "%.8f"], header=header)


if __name__ == "__main__":
    main()
