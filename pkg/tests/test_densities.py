from math import pi, sqrt

import numpy as np
import pytest

from gsquant.densities import (density_I, density_I_u, density_J_u, density_limits, hessian_rho,
                               hessian_rho_u, laplace_leading, observable, s1_corrected_oracle,
                               s1_density_oracle, truncation_radius)
from gsquant.errors import DomainError, PreconditionError, StructuralError
from gsquant.integration import lie_ball_rule
from gsquant.toric_geometry import ChartPoint, point_from_moment
from gsquant.torus_action import orbit_volume_u

from conftest import zero_set_u

EQUATOR = np.array([[0.5, 0.5]])


def test_laplace_leading_examples():
    assert laplace_leading([0.0], [1.0], [[1.0]], 1, 100) == pytest.approx(sqrt(2 * pi / 100), rel=1e-15)
    assert laplace_leading([0.0], [1.0], np.eye(2), 2, 7) == pytest.approx(2 * pi / 7, rel=1e-15)
    assert laplace_leading([0.0], [1.0], 4 * np.eye(1), 1, 3) == \
        pytest.approx(0.5 * laplace_leading([0.0], [1.0], np.eye(1), 1, 3), rel=1e-15)
    assert laplace_leading([0.3, 0.0], [9.0, 2.0], [[1.0]], 1, 5) == pytest.approx(2 * sqrt(2 * pi / 5))


def test_laplace_leading_rejects():
    with pytest.raises(DomainError):
        laplace_leading([0.0], [1.0], [[-1.0]], 1, 4)
    with pytest.raises(StructuralError):
        laplace_leading([0.0], [1.0], np.eye(2), 1, 4)
    with pytest.raises(PreconditionError):
        laplace_leading([0.1], [1.0], [[1.0]], 1, 4)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_laplace_against_exact_gaussian(d, rng):
    A = rng.normal(size=(d, d))
    H = A @ A.T + d * np.eye(d)
    for k in (4, 16, 64):
        L = np.linalg.cholesky(np.linalg.inv(H))
        rule = lie_ball_rule(d, sqrt(80.0 / k), 40)
        xs = rule.nodes @ L.T * 1.0
        # change variables xi = L y so that xi.H.xi = |y|^2
        g = np.exp(-k * np.einsum("ij,jk,ik->i", xs, H, xs) / 2) * abs(np.linalg.det(L))
        exact = rule.weights @ g
        assert laplace_leading([0.0], [1.0], H, d, k) == pytest.approx(exact, rel=1e-10)


def test_hessian_s1(S1):
    m, a = S1
    H = hessian_rho(a, m, ChartPoint((0,), [1.0]))
    assert H.shape == (1, 1)
    assert H[0, 0] == pytest.approx(4 * pi ** 2, rel=1e-12)
    with pytest.raises(PreconditionError):
        hessian_rho(a, m, ChartPoint((0,), [0.5]))


def test_hessian_det_is_orbit_volume(S2, rng):
    m, a = S2
    u = zero_set_u(a, 50, rng)
    H = hessian_rho_u(a, u)
    vol = orbit_volume_u(a, u)
    assert np.allclose(np.linalg.det(H), 2 ** a.d * vol ** 2, rtol=1e-6, atol=0)
    for j in range(5):
        x0 = point_from_moment(m, u[j], rng.uniform(0, 2 * pi, 4))
        assert np.allclose(hessian_rho(a, m, x0), H[j], rtol=1e-10)


def test_hessian_matches_finite_difference(S2, rng):
    from gsquant.integration import flow_tables
    m, a = S2
    u = zero_set_u(a, 4, rng)
    h = 1e-3
    xi = np.array([[-h], [0.0], [h]])
    rho = flow_tables(a, u, xi)[0]
    fd = (rho[:, 0] - 2 * rho[:, 1] + rho[:, 2]) / h ** 2
    assert np.allclose(fd, hessian_rho_u(a, u)[:, 0, 0], rtol=1e-5)


def test_s1_oracles(S1):
    m, a = S1
    assert s1_density_oracle(2) == pytest.approx(4 * sqrt(pi) / 3, rel=1e-14)
    for k in (2, 4, 8, 16, 32, 64, 128):
        assert density_I_u(a, EQUATOR, k)[0] == pytest.approx(s1_density_oracle(k), rel=1e-8)
        assert density_J_u(a, EQUATOR, k)[0] == pytest.approx(s1_corrected_oracle(k), rel=1e-8)
    assert abs(s1_corrected_oracle(64) - 1) < 0.05
    assert abs(s1_density_oracle(128) - pi) < 0.05 * pi


def test_density_I_chart_form(S1):
    m, a = S1
    assert density_I(a, m, ChartPoint((0,), [1.0]), 8) == pytest.approx(s1_density_oracle(8), rel=1e-8)


def test_density_linear_in_f(S2, rng):
    m, a = S2
    u = zero_set_u(a, 6, rng)
    base = density_I_u(a, u, 8)
    assert np.allclose(density_I_u(a, u, 8, f=observable("const:0")), 0, atol=1e-15)
    assert np.allclose(density_I_u(a, u, 8, f=observable("const:2.5")), 2.5 * base, rtol=1e-13)
    f, g = observable("u:1"), observable("u:3")
    both = density_J_u(a, u, 8, f=lambda v: f(v) + 3 * g(v))
    assert np.allclose(both, density_J_u(a, u, 8, f=f) + 3 * density_J_u(a, u, 8, f=g), rtol=1e-12)


def test_density_rejects_off_zero_set(S2):
    m, a = S2
    with pytest.raises(PreconditionError):
        density_I_u(a, [[0.0, 1.0, 0.0, 1.0]], 4)


def test_laplace_consistency(S2, rng):
    m, a = S2
    u = zero_set_u(a, 8, rng)
    lim = 2 ** (-a.d / 2) * orbit_volume_u(a, u)
    for k in (16, 32, 64):
        assert np.max(np.abs(density_I_u(a, u, k) / lim - 1)) < 3 / k
        assert np.max(np.abs(density_J_u(a, u, k) - 1)) < 3 / k


def test_truncation_radius_policy(S1, S2):
    from gsquant.torus_action import zero_set_rule
    m, a = S1
    for k in (8, 64):
        assert truncation_radius(a, k) >= sqrt(40 / (k * 4 * pi ** 2))
    m, a = S2
    lam_max = np.linalg.eigvalsh(hessian_rho_u(a, zero_set_rule(a, level=2).u)).max()
    for k in (8, 64):
        R = truncation_radius(a, k)
        assert R >= sqrt(40 / (k * lam_max))
        assert truncation_radius(a, k) == R


def test_density_limits_report(S2, rng):
    m, a = S2
    u = zero_set_u(a, 6, rng)
    rep = density_limits(a, m, u, [8, 16, 32, 64], scenario="S2")
    assert np.all(np.diff(rep.max_dev_I) < 0)
    assert np.all(np.diff(rep.max_dev_J) < 0)
    assert rep.slope_I < 0 and rep.slope_J < 0
    assert np.allclose(rep.limit_I, 2 ** -0.5 * orbit_volume_u(a, u))
    rows = rep.rows()
    assert len(rows) == 4 * 6
    assert rows[0][0] == "S2" and len(rows[0]) == 2 + 2 + 5


def test_observables(S2):
    m, a = S2
    u = np.array([[0.3, 0.7, 0.6, 0.4]])
    assert observable("moment_sum", m)(u)[0] == pytest.approx(1.1)
    assert observable("one")(u)[0] == 1.0
    with pytest.raises(StructuralError):
        observable("moment_sum")
    with pytest.raises(StructuralError):
        observable("nope")
