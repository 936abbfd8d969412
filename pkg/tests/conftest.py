"""Shared fixtures: small meshes and mixing matrices built once per session."""
import numpy as np
import pytest

from helmloc.fem import assemble
from helmloc.mesh import build_mesh, control_node_set, locate_node
from helmloc.observation import build_mixing
from helmloc.scenario import mixing_for

# two wavenumbers in the audible band used throughout (c = 345 m/s)
KS = (2 * np.pi * 261.6 / 345.0, 2 * np.pi * 349.2 / 345.0)
MIC_POINTS = ((3.75, 1.0), (3.75, 2.0), (3.75, 3.0))


@pytest.fixture(scope="session")
def mesh3():
    return build_mesh((4, 4), 3)


@pytest.fixture(scope="session")
def systems3(mesh3):
    return [assemble(mesh3, k) for k in KS]


@pytest.fixture(scope="session")
def model3(mesh3, systems3):
    """Level-3 mixing matrix with two frequencies and three microphones on [0,3]x[0,4]."""
    mics = np.array([locate_node(mesh3, p)[0] for p in MIC_POINTS])
    controls = control_node_set(mesh3, ((0, 3), (0, 4)))
    return mesh3, build_mixing(systems3, mics, controls)


@pytest.fixture(scope="session")
def model5():
    mesh = build_mesh((4, 4), 5)
    mics = np.array([locate_node(mesh, p)[0] for p in MIC_POINTS])
    controls = control_node_set(mesh, ((0, 3), (0, 4)))
    return mesh, mixing_for(mesh, KS, 1.0, mics, controls)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_measure(rng, controls, count, n_freq):
    from helmloc.measure import DiscreteMeasure

    nodes = rng.choice(controls, size=count, replace=False)
    coeffs = rng.standard_normal((count, n_freq)) + 1j * rng.standard_normal((count, n_freq))
    return DiscreteMeasure(nodes, coeffs)


def random_obs(rng, mixing):
    shape = (mixing.n_freq, mixing.n_mics)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
