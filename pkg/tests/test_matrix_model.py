import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xcavity.errors import ExpansionWarning, GeometryError, SingularCavityError
from xcavity.matrix_model import (
    MatrixModel,
    Transfer2x2,
    _reflection,
    bare_cavity,
    cavity_shifts,
    coupling_strength,
    expansion_error,
    field_factors,
    interface_matrix,
    layer_matrix,
    lorentzian_reflection,
    matrix_reflectance,
    resonant_reflection,
    transfer_reflectance,
)
from xcavity.parratt import field_amplitude, parratt_reflectance
from xcavity.stack import ScanPoint

from conftest import OMEGA0, angles, constant_stack, energies, make_line, stack_params, substrate_params


@settings(max_examples=300, deadline=None)
@given(stack_params, substrate_params, energies, angles)
def test_transfer_equals_recursion(params, sub, energy, angle):
    s = constant_stack(params, sub)
    p = ScanPoint(energy, angle)
    r_tm = transfer_reflectance(s, p)
    r_pa = parratt_reflectance(s, p)
    assert abs(r_tm - r_pa) <= 1e-10 * max(abs(r_pa), 1e-300)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e-4), st.floats(0, 1e-5), st.floats(1, 50), energies, angles)
def test_layer_matrix_two_routes(delta, beta, d, energy, angle):
    s = constant_stack([(delta, beta, d)])
    p = ScanPoint(energy, angle)
    a = layer_matrix(s.layers[1], p, "fresnel").m
    b = layer_matrix(s.layers[1], p, "exponential").m
    assert np.max(np.abs(a - b)) <= 1e-9 * np.max(np.abs(a))
    # both sides are vacuum, so the matrix is unimodular (up to cancellation
    # among entries that grow large in evanescent layers)
    assert abs(np.linalg.det(b) - 1) < 1e-12 * max(1.0, np.max(np.abs(b)) ** 2)


def test_layer_matrix_rejects_semi_infinite():
    s = constant_stack([(1e-6, 0, 5.0)])
    with pytest.raises(GeometryError):
        layer_matrix(s.layers[-1], ScanPoint(1e4, 0.3))
    with pytest.raises(ValueError):
        layer_matrix(s.layers[1], ScanPoint(1e4, 0.3), method="nope")


def test_interface_determinant(rng):
    ka = rng.normal(size=50) + 1j * rng.uniform(0, 1, 50)
    kb = rng.normal(size=50) + 1j * rng.uniform(0, 1, 50)
    assert np.allclose(interface_matrix(ka, kb).det, ka / kb, rtol=1e-12)


def test_transfer_matmul_and_identity():
    m = Transfer2x2.from_entries(1 + 1j, 2, 3, 4 - 1j)
    assert np.array_equal((Transfer2x2.identity() @ m).m, m.m)
    assert m.det == pytest.approx((1 + 1j) * (4 - 1j) - 6)
    with pytest.raises(ValueError):
        Transfer2x2(np.zeros((3, 3)))


def test_singular_guard():
    with pytest.raises(SingularCavityError):
        _reflection(Transfer2x2.from_entries(1.0, 1.0, 1.0, 0.0))


class TestFieldFactors:
    def test_a_matches_recursive_field(self, ref_stack, theta1):
        p = ScanPoint(OMEGA0, theta1 + np.array([-0.02, 0.0, 0.03]))
        z = np.array([-3.0, 0.0, 1.0, 15.0, 31.3, 45.0, 60.0, 70.0])
        _, _, _, a = field_factors(ref_stack, p, z)
        ref = field_amplitude(ref_stack, p, z)
        assert np.allclose(a, ref, rtol=1e-9, atol=1e-12)

    def test_wronskian(self, ref_stack, theta1):
        # a'(z) q(z) - a(z) q'(z) = 2 i kz0 at every depth
        p = ScanPoint(OMEGA0, theta1 + 0.01)
        h = 1e-3
        for z in (-2.0, 1.0, 15.0, 31.3, 50.0, 65.0, 120.0):
            _, _, q, a = field_factors(ref_stack, p, [z - h, z, z + h])
            da = (a[2] - a[0]) / (2 * h)
            dq = (q[2] - q[0]) / (2 * h)
            w = da * q[1] - a[1] * dq
            assert w == pytest.approx(2j * p.kz_vacuum, rel=1e-5)

    def test_ambient_factors(self, ref_stack):
        p = ScanPoint(OMEGA0, 0.3)
        r0, pp, q, a = field_factors(ref_stack, p, [-5.0])
        k = p.kz_vacuum
        assert pp[0] == pytest.approx(np.exp(-5j * k))
        assert q[0] == pytest.approx(np.exp(5j * k))
        assert a[0] == pytest.approx(pp[0] + r0 * q[0])


class TestResonantPathway:
    def test_lorentzian_form_matches(self, ref_stack, theta1):
        e = np.linspace(OMEGA0 - 15, OMEGA0 + 15, 61)
        p = ScanPoint(e, theta1 + 0.002)
        resp = bare_cavity(ref_stack, p)
        line = make_line(0.36)
        d = ref_stack.resonant_layer.thickness
        direct = resonant_reflection(resp, line, d, e, check=False)
        assert np.allclose(lorentzian_reflection(resp, line, d, e), direct, rtol=1e-12)

    def test_eta_vs_pq(self, ref_stack, theta1):
        resp = bare_cavity(ref_stack, ScanPoint(OMEGA0, theta1))
        # at the mode r0 q is not small, so a q and p q differ substantially
        assert abs(resp.eta - resp.eta_pq) > 0.3 * abs(resp.eta_pq)

    def test_shift_signs(self, ref_stack, theta1):
        line = make_line(10.0)
        d = ref_stack.resonant_layer.thickness
        resp = bare_cavity(ref_stack, ScanPoint(OMEGA0, theta1 + np.array([-0.005, 0.005])))
        delta_c, gamma_c = cavity_shifts(resp, line, d)
        assert np.all(gamma_c > 0)
        assert np.all(np.sign(delta_c) == -np.sign(resp.eta.imag))

    def test_weak_line_linear(self, ref_stack, theta1):
        # for a vanishing line strength the model reduces to first-order
        # perturbation of the exact reflectance
        p = ScanPoint(np.linspace(OMEGA0 - 10, OMEGA0 + 10, 41), theta1)
        line = make_line(1e-4)
        dr_exact = parratt_reflectance(ref_stack, p, line) - parratt_reflectance(ref_stack, p)
        dr_model = matrix_reflectance(ref_stack, p, line) - parratt_reflectance(ref_stack, p)
        assert np.max(np.abs(dr_model - dr_exact)) < 0.02 * np.max(np.abs(dr_exact))

    def test_expansion_warning(self, ref_stack, theta1):
        p = ScanPoint(OMEGA0, theta1)
        with pytest.warns(ExpansionWarning):
            matrix_reflectance(ref_stack, p, make_line(10.0))
        with warnings.catch_warnings():
            warnings.simplefilter("error", ExpansionWarning)
            matrix_reflectance(ref_stack, p, make_line(0.001))

    def test_coupling_sign(self, ref_stack, theta1):
        resp = bare_cavity(ref_stack, ScanPoint(OMEGA0, theta1))
        kappa = coupling_strength(resp, -1j, 2.0)
        # an absorptive correction (negative imaginary part) gives Im(kappa) > 0
        assert kappa.imag > 0

    def test_expansion_error_scaling(self, ref_stack, theta1):
        p = ScanPoint(np.linspace(OMEGA0 - 15, OMEGA0 + 15, 61), theta1)
        line = make_line(10.0)
        e2 = expansion_error(ref_stack, p, line, 2.0).max()
        e1 = expansion_error(ref_stack, p, line, 1.0).max()
        assert e2 / e1 >= 3.5

    def test_model_caches_bare_cavity(self, ref_stack, theta1):
        p = ScanPoint(np.linspace(OMEGA0 - 5, OMEGA0 + 5, 11), theta1)
        model = MatrixModel(ref_stack, p)
        for f0 in (0.1, 1.0):
            assert np.array_equal(model.reflectance(make_line(f0)),
                                  matrix_reflectance(ref_stack, p, make_line(f0), check=False))


@settings(max_examples=200, deadline=None)
@given(stack_params, substrate_params, energies, angles, st.lists(st.floats(-5, 400), min_size=1, max_size=5))
def test_field_factor_matches_recursion_random(params, sub, energy, angle, depths):
    s = constant_stack(params, sub)
    p = ScanPoint(energy, angle)
    depths = sorted(depths)
    _, _, _, a = field_factors(s, p, depths)
    ref = field_amplitude(s, p, depths)
    assert np.all(np.abs(a - ref) <= 1e-8 * np.maximum(np.abs(ref), 1e-12) + 1e-300)
