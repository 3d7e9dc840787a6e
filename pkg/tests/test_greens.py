import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xcavity.dispersion import ResonanceLine
from xcavity.errors import InputError, ResonancePoleError
from xcavity.greens import (
    F0_PER_DIPOLE,
    MAX_SUBLAYERS,
    CouplingMatrix,
    GreensModel,
    SublayerGrid,
    coupling_matrix,
    dipole_coupling,
    dipole_from_f0,
    f0_from_dipole,
    greens_kernel,
    greens_reflectance,
    rabi_drive,
    reflectance,
    steady_state,
)
from xcavity.matrix_model import matrix_reflectance
from xcavity.stack import ScanPoint

from conftest import OMEGA0, constant_stack, make_line, random_stack


def spectrum_point(theta, n=121, half=15.0):
    return ScanPoint(np.linspace(OMEGA0 - half, OMEGA0 + half, n), theta)


def test_calibration_anchor():
    assert f0_from_dipole(3.3e-7) == pytest.approx(0.36, rel=1e-15)
    assert dipole_from_f0(f0_from_dipole(1.234e-6)) == pytest.approx(1.234e-6, rel=1e-15)
    line = ResonanceLine(OMEGA0, 5.0, 0.0, 2e-7)
    assert dipole_coupling(line) == pytest.approx(2 * np.pi * 2.8179403262e-6 * 5.0 * F0_PER_DIPOLE * 2e-7)


class TestGrid:
    def test_slicing(self, ref_stack):
        g = SublayerGrid.slice_layer(ref_stack, 4)
        assert np.allclose(g.z_positions, [30.55, 31.05, 31.55, 32.05])
        assert np.allclose(g.thickness, 0.5)
        assert g.area_density.sum() == pytest.approx(12.42 * 2.0)

    @pytest.mark.parametrize("n", [0, MAX_SUBLAYERS + 1])
    def test_bad_count(self, ref_stack, n):
        with pytest.raises(InputError):
            SublayerGrid.slice_layer(ref_stack, n)

    def test_validation(self):
        with pytest.raises(InputError):
            SublayerGrid([], [], [])
        with pytest.raises(InputError):
            SublayerGrid([1.0, 1.0], [0.5, 0.5], [1.0, 1.0])
        with pytest.raises(InputError):
            SublayerGrid([1.0, 2.0], [0.5], [1.0, 1.0])


class TestKernel:
    def test_reciprocity_exact(self, ref_stack, theta1):
        p = ScanPoint(OMEGA0, theta1 + 0.003)
        for z1, z2 in [(30.4, 32.1), (5.0, 31.3), (31.3, 60.0), (-1.0, 10.0)]:
            assert greens_kernel(ref_stack, p, z1, z2) == greens_kernel(ref_stack, p, z2, z1)

    def test_derivative_jump(self, ref_stack, theta1):
        # d/dz K(z, z') jumps by -1 across z = z': K solves the wave equation
        # with a unit point source
        p = ScanPoint(OMEGA0, theta1 + 0.003)
        zs, h = 31.0, 1e-4
        k = [greens_kernel(ref_stack, p, zs + dz, zs) for dz in (-2 * h, -h, h, 2 * h)]
        jump = (k[3] - k[2]) / h - (k[1] - k[0]) / h
        assert jump == pytest.approx(-1.0, abs=1e-3)

    def test_random_configurations(self):
        # symmetric coupling and non-negative self-decay on random lossy cavities
        rng = np.random.default_rng(3)
        for _ in range(100):
            s = random_stack(rng, resonant=True)
            p = ScanPoint(rng.uniform(5000, 15000), rng.uniform(0.05, 2.0))
            grid = SublayerGrid.slice_layer(s, int(rng.integers(1, 9)))
            G = coupling_matrix(s, p, grid, ResonanceLine(1e4, 1.0, 0.0, 1e-6)).G
            assert np.array_equal(G, G.T)
            assert np.all(np.diag(CouplingMatrix(G).Gamma) >= 0)


class TestSteadyState:
    def test_single_layer_equals_matrix_model(self, ref_stack, theta1):
        for off in (-0.005, 0.0, 0.005):
            p = spectrum_point(theta1 + off)
            line = make_line(10.0)
            r_g = greens_reflectance(ref_stack, p, line, sublayers=1)
            r_m = matrix_reflectance(ref_stack, p, line, check=False)
            assert np.max(np.abs(np.abs(r_g) ** 2 - np.abs(r_m) ** 2)) < 1e-12

    def test_slicing_convergence(self, ref_stack, theta1):
        p = spectrum_point(theta1)
        line = make_line(10.0)
        r = {n: np.abs(greens_reflectance(ref_stack, p, line, n)) ** 2 for n in (4, 8, 16)}
        assert np.max(np.abs(r[8] - r[16])) < np.max(np.abs(r[4] - r[8]))

    def test_one_vs_eight_planes(self, ref_stack, theta1):
        line = make_line(0.36)
        for off in (-0.005, 0.0, 0.005):
            p = spectrum_point(theta1 + off)
            r1 = np.abs(greens_reflectance(ref_stack, p, line, 1)) ** 2
            r8 = np.abs(greens_reflectance(ref_stack, p, line, 8)) ** 2
            assert np.max(np.abs(r1 - r8)) < 1e-3

    def test_model_pieces_match_function(self, ref_stack, theta1):
        p = spectrum_point(theta1, n=11)
        line = make_line(2.0)
        grid = SublayerGrid.slice_layer(ref_stack, 8)
        G = coupling_matrix(ref_stack, p, grid, line)
        sigma = steady_state(G, rabi_drive(ref_stack, p, grid, line), p.energy - OMEGA0, line.gamma)
        direct = reflectance(ref_stack, p, grid, line, sigma)
        assert np.allclose(GreensModel(ref_stack, p, 8).reflectance(line), direct, rtol=1e-12)

    def test_lossless_cavity_passive(self):
        s = constant_stack([(3e-5, 0.0, 2.0), (5e-6, 0.0, 25.0), (2e-5, 0.0, 2.0), (5e-6, 0.0, 25.0), (3e-5, 0.0, 15.0)],
                           substrate=(1e-5, 0.0), resonant=2)
        for theta in np.linspace(0.15, 0.35, 9):
            p = ScanPoint(np.linspace(OMEGA0 - 20, OMEGA0 + 20, 81), theta)
            r = greens_reflectance(s, p, make_line(10.0), 8)
            assert np.all(np.abs(r) ** 2 <= 1 + 1e-12)

    def test_pole_reported_with_context(self):
        G = CouplingMatrix(np.full((1, 1, 1), -0.5j * 2.0))
        point = ScanPoint(np.array([OMEGA0]), 0.2)
        with pytest.raises(ResonancePoleError, match="energy 10208"):
            steady_state(G, np.ones((1, 1)), np.zeros(1), 2.0, point=point)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-30, 30), st.floats(0.01, 20.0))
    def test_far_detuning_recovers_bare(self, detuning, f0):
        # the resonant pathway dies off away from the line
        from xcavity.io import reference_stack

        s = reference_stack()
        p = ScanPoint(OMEGA0 + 400.0 + detuning, 0.19)
        r = greens_reflectance(s, p, make_line(f0), 4)
        r0 = greens_reflectance(s, p, make_line(0.0), 4)
        assert abs(abs(r) ** 2 - abs(r0) ** 2) < 0.02 * f0 / 10
