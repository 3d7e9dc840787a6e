import math

import numpy as np
import pytest
from hypothesis import strategies as st

from xcavity.dispersion import ResonanceLine
from xcavity.greens import dipole_from_f0
from xcavity.io import reference_stack
from xcavity.scan import locate_first_mode
from xcavity.stack import CavityStack, ConstantIndex, Layer

OMEGA0 = 10208.0
GAMMA = 5.0

_ACCEPTANCE_LINES = []


def record_acceptance(line):
    """Collect a criterion verdict for the terminal summary."""
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref_stack():
    return reference_stack()


@pytest.fixture(scope="session")
def theta1(ref_stack):
    return locate_first_mode(ref_stack, OMEGA0)


def make_line(f0=10.0, dipole_sq=None):
    if dipole_sq is None:
        dipole_sq = float(dipole_from_f0(f0))
    return ResonanceLine(OMEGA0, GAMMA, f0, dipole_sq)


def constant_stack(params, substrate=(1e-5, 1e-7), resonant=None, density=30.0):
    """Stack of constant-index slabs ``params = [(delta, beta, d), ...]``."""
    layers = [Layer("ambient", math.inf)]
    for i, (delta, beta, d) in enumerate(params):
        is_res = resonant == i
        layers.append(Layer(f"L{i}", d, ConstantIndex(delta, beta, density if is_res else None), is_res))
    layers.append(Layer("substrate", math.inf, ConstantIndex(*substrate)))
    return CavityStack(tuple(layers))


def random_stack(rng, max_inner=6, resonant=False):
    n = int(rng.integers(1, max_inner + 1))
    params = [(rng.uniform(0, 1e-4), rng.uniform(0, 1e-5), rng.uniform(1, 50)) for _ in range(n)]
    sub = (rng.uniform(0, 1e-4), rng.uniform(0, 1e-5))
    return constant_stack(params, sub, resonant=int(rng.integers(n)) if resonant else None)


layer_params = st.tuples(
    st.floats(0, 1e-4), st.floats(0, 1e-5), st.floats(1, 50)
)
stack_params = st.lists(layer_params, min_size=1, max_size=6)
substrate_params = st.tuples(st.floats(0, 1e-4), st.floats(0, 1e-5))
angles = st.floats(0.02, 3.0)
energies = st.floats(5000, 15000)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
