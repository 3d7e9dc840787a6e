import math

import numpy as np
import pytest
from hypothesis import given, settings

from xcavity.errors import GeometryError
from xcavity.parratt import (
    field_amplitude,
    field_profile,
    fluorescence,
    parratt_reflectance,
    resonant_slices,
)
from xcavity.stack import CavityStack, ConstantIndex, Layer, ScanPoint

from conftest import GAMMA, OMEGA0, angles, constant_stack, energies, make_line, stack_params, substrate_params

# Reference values from an independent 40-digit evaluation with Abeles
# characteristic matrices (vacuum / 10 nm / 25 nm / substrate, 8 keV).
ABELES_STACK = [(2e-5, 3e-7, 10.0), (8e-6, 1e-8, 25.0)]
ABELES_SUB = (1.5e-5, 2e-7)
ABELES_R = {
    0.3: 0.4252695617732948 - 0.87145261917117285j,
    0.45: 0.39887819407784541 + 0.0078482849147828704j,
}


@pytest.mark.parametrize("angle", sorted(ABELES_R))
def test_matches_characteristic_matrix_oracle(angle):
    s = constant_stack(ABELES_STACK, ABELES_SUB)
    r = parratt_reflectance(s, ScanPoint(8000.0, angle))
    assert abs(r - ABELES_R[angle]) < 1e-12


def test_single_interface_fresnel():
    s = CavityStack((Layer("v", math.inf), Layer("s", math.inf, ConstantIndex(1e-5, 1e-7))))
    p = ScanPoint(10000.0, np.linspace(0.05, 1.0, 50))
    n = 1 - 1e-5 + 1e-7j
    k0 = p.k * np.sin(p.theta)
    k1 = p.k * np.sqrt(n**2 - np.cos(p.theta) ** 2)
    assert np.allclose(parratt_reflectance(s, p), (k0 - k1) / (k0 + k1), rtol=1e-9)


def test_total_external_reflection():
    delta = 2e-5
    s = CavityStack((Layer("v", math.inf), Layer("s", math.inf, ConstantIndex(delta, 0.0))))
    theta_c = math.degrees(math.sqrt(2 * delta))
    p = ScanPoint(10000.0, np.linspace(0.01, 0.98 * theta_c, 200))
    assert np.max(np.abs(np.abs(parratt_reflectance(s, p)) ** 2 - 1.0)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(stack_params, substrate_params, energies, angles)
def test_passive_stack_reflectance_bounded(params, sub, energy, angle):
    s = constant_stack(params, sub)
    r = parratt_reflectance(s, ScanPoint(energy, angle))
    assert abs(r) ** 2 <= 1.0 + 1e-12


class TestField:
    def test_surface_value(self, ref_stack, theta1):
        p = ScanPoint(OMEGA0, theta1 + np.array([-0.01, 0.0, 0.02]))
        r = parratt_reflectance(ref_stack, p)
        a0 = field_amplitude(ref_stack, p, [0.0])[..., 0]
        assert np.allclose(a0, 1 + r, rtol=1e-12)

    def test_continuity_at_interfaces(self, ref_stack, theta1):
        p = ScanPoint(OMEGA0, theta1)
        for z in ref_stack.tops[1:]:
            eps = 1e-7
            above, below = field_amplitude(ref_stack, p, [z - eps, z + eps])
            assert abs(above - below) < 1e-5 * max(abs(above), 1e-3)

    def test_slope_continuity(self, ref_stack, theta1):
        # for s-polarized waves dE/dz is continuous across interfaces too
        p = ScanPoint(OMEGA0, theta1)
        h = 1e-4
        for z in ref_stack.tops[2:]:
            up = field_amplitude(ref_stack, p, [z - 2 * h, z - h])
            dn = field_amplitude(ref_stack, p, [z + h, z + 2 * h])
            assert abs((up[1] - up[0]) - (dn[1] - dn[0])) / h < 1e-3 * np.max(np.abs(up))

    def test_mode_order_at_resonant_layer(self, ref_stack, theta1):
        # first mode: one hump across the guiding layers, strongly enhanced
        # at the resonant layer; the next dip puts a node there instead
        z = ref_stack.resonant_center
        first = abs(field_amplitude(ref_stack, ScanPoint(OMEGA0, theta1), [z])[0]) ** 2
        prof = field_profile(ref_stack, ScanPoint(OMEGA0, theta1), step=0.5)
        core = (prof.depths > 12.0) & (prof.depths < 50.0)
        assert first > 5.0
        assert prof.intensity[core].min() > 5.0
        p2 = ScanPoint(OMEGA0, 0.20106)
        second = abs(field_amplitude(ref_stack, p2, [z])[0]) ** 2
        assert second < 0.01 * field_profile(ref_stack, p2, step=0.5).intensity.max()

    def test_evanescent_substrate_decays(self, ref_stack):
        p = ScanPoint(OMEGA0, 0.1)
        deep = field_amplitude(ref_stack, p, [200.0, 400.0])
        assert np.all(np.isfinite(deep))
        assert abs(deep[1]) < abs(deep[0])

    def test_resonant_slices(self, ref_stack):
        z = resonant_slices(ref_stack, 0.1)
        assert len(z) == 20
        assert z[0] == pytest.approx(30.35) and z[-1] == pytest.approx(32.25)


class TestFluorescence:
    def test_point_emitter_outside_layer(self, ref_stack, theta1):
        with pytest.raises(GeometryError):
            fluorescence(ref_stack, ScanPoint(OMEGA0, theta1), 1.0, z_a=5.0)

    def test_point_emitter_and_average(self, ref_stack, theta1):
        p = ScanPoint(OMEGA0, theta1)
        at_center = fluorescence(ref_stack, p, 1.0, z_a=ref_stack.resonant_center)
        inten = abs(field_amplitude(ref_stack, p, [ref_stack.resonant_center])[0]) ** 2
        assert at_center == pytest.approx(inten)
        avg = fluorescence(ref_stack, p, lambda e: 2.0, c=0.5, emission=3.0)
        assert avg == pytest.approx(3.0 * np.mean(np.abs(field_amplitude(ref_stack, p, resonant_slices(ref_stack))) ** 2))

    def test_resonance_modifies_field(self, ref_stack, theta1):
        p = ScanPoint(OMEGA0, theta1)
        bare = fluorescence(ref_stack, p, 1.0)
        loaded = fluorescence(ref_stack, p, 1.0, resonance=make_line(10.0))
        assert loaded < bare
