import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helmloc.diagnostics import (
    add_noise,
    certificate,
    error_e1,
    error_e2,
    optimality_residuals,
)
from helmloc.fem import HeatSemigroup
from helmloc.measure import DiscreteMeasure, unweight
from helmloc.mesh import build_mesh
from helmloc.observation import apply_weight, compute_weight, forward
from helmloc.solvers import SolverSettings, continuation, run


@pytest.fixture(scope="module")
def solved(model3):
    mesh, mix = model3
    w = compute_weight("omega2", mix)
    u_star = DiscreteMeasure([mix.controls[60]], [[1 + 1j, 0.5j]])
    p = forward(mix, u_star)
    alpha = 1e-3
    rep = run(apply_weight(mix, w), p, SolverSettings(alpha=alpha))
    return mesh, mix, w, p, alpha, unweight(rep.measure, w), u_star


def test_residuals_at_solution(solved):
    mesh, mix, w, p, alpha, u, _ = solved
    r1, r2 = optimality_residuals(u, mix, w, alpha, p)
    assert r1 <= 1e-6 and r2 <= 1e-6
    _, r2_bad = optimality_residuals(u.scaled(10.0), mix, w, alpha, p)
    assert r2_bad > 1e-3


def test_residuals_zero_measure(solved):
    mesh, mix, w, p, alpha, _, _ = solved
    r1, r2 = optimality_residuals(DiscreteMeasure.empty(2), mix, w, alpha, p)
    assert r2 == 0.0 and r1 > 0


def test_residuals_need_unweighted_mixing(solved):
    mesh, mix, w, p, alpha, u, _ = solved
    with pytest.raises(ValueError):
        optimality_residuals(u, apply_weight(mix, w), w, alpha, p)


def test_certificate(solved):
    mesh, mix, w, p, alpha, u, u_star = solved
    cert = certificate(u, mix, w, alpha, p, mesh)
    assert abs(cert.max_value - 1) <= 1e-6 and cert.max_node == u_star.nodes[0]
    assert cert.second_node != cert.max_node and cert.second_value <= cert.max_value
    zero = certificate(DiscreteMeasure.empty(2), mix, w, alpha, np.zeros((2, 3)))
    assert not np.any(zero.values)


def test_certificate_bounded_at_minimum_norm_endpoint(model3):
    mesh, mix = model3
    w = compute_weight("omega2", mix)
    u_star = DiscreteMeasure([mix.controls[60], mix.controls[170]], [[1, 1j], [0.5, -0.5]])
    p = forward(mix, u_star)
    alphas = [10.0 ** -j for j in range(0, 10)]
    steps = continuation(apply_weight(mix, w), p, alphas, SolverSettings(alpha=1e-9))
    u = unweight(steps[-1].report.measure, w)
    assert certificate(u, mix, w, 1e-9, p).max_value <= 1 + 1e-6


def test_e1():
    controls = np.arange(10)
    from helmloc.observation import WeightTable

    w = WeightTable("t", controls, np.linspace(1, 2, 20).reshape(2, 10))
    u = DiscreteMeasure([2, 5], [[1, 2j], [3, 1]])
    assert error_e1(u, u, w) == 0
    assert error_e1(u, DiscreteMeasure.empty(2), w) == 1
    assert error_e1(u, u.scaled(0.5), w) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        error_e1(DiscreteMeasure.empty(2), u, w)


MESH4 = build_mesh((4, 4), 4)
HEAT4 = HeatSemigroup(MESH4)


def test_e2_identity_and_errors():
    u = DiscreteMeasure([MESH4.node_id(10, 10), MESH4.node_id(40, 30)], [[1 + 1j], [2.0]])
    assert error_e2(u, u, 0.2, MESH4, HEAT4) <= 1e-14
    with pytest.raises(ValueError):
        error_e2(u, u, 0.0, MESH4, HEAT4)
    with pytest.raises(ValueError):
        error_e2(DiscreteMeasure.empty(1), u, 0.2, MESH4, HEAT4)


@pytest.mark.parametrize("sigma", [0.2, 0.05])
def test_e2_monotone_under_translation(sigma):
    start = MESH4.node_id(20, 32)
    u = DiscreteMeasure([start], [[1.0]])
    errs = [error_e2(u, DiscreteMeasure([MESH4.node_id(20 + s, 32)], [[1.0]]), sigma, MESH4, HEAT4)
            for s in range(0, 16)]
    assert errs[0] == 0
    assert all(b >= a - 1e-12 for a, b in zip(errs, errs[1:]))


def test_noise_exact_level_and_seeding():
    rng = np.random.default_rng(3)
    p = rng.standard_normal((3, 30)) + 1j * rng.standard_normal((3, 30))
    noisy = add_noise(p, 0.05, 7)
    assert abs(np.linalg.norm(noisy - p) / np.linalg.norm(p) - 0.05) <= 1e-14
    assert np.array_equal(noisy, add_noise(p, 0.05, 7))
    assert not np.array_equal(noisy, add_noise(p, 0.05, 8))
    assert np.array_equal(add_noise(p, 0.0, 7), p)
    with pytest.raises(ValueError):
        add_noise(p, -0.1, 0)
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), 0.1, 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1.0), st.integers(0, 2**32 - 1))
def test_noise_level_property(level, seed):
    p = np.arange(1, 13).reshape(2, 6) * (1 + 0.5j)
    f = add_noise(p, level, seed) - p
    assert abs(np.linalg.norm(f) / np.linalg.norm(p) - level) <= 1e-13 * max(level, 1e-3)
