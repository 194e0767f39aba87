"""Acceptance criteria 1-11. Each test records one PASS/FAIL line; the lines are
printed in the pytest terminal summary and by running this file directly."""
import time
from math import pi, sqrt

import numpy as np
import pytest

from gsquant.densities import (density_I_u, density_J_u, hessian_rho_u, laplace_leading, observable,
                               s1_corrected_oracle, s1_density_oracle, truncation_radius)
from gsquant.integration import integrate_M, lie_ball_rule, monomial_norm_exact, tail_monitor, tau
from gsquant.reduction_maps import gram_report, identity_check, toeplitz_pair
from gsquant.scenarios import s1, s2
from gsquant.sections import (CorrectedSection, MonomialSection, all_multi_indices, descend_contract,
                              invariant_basis, magnitude, magnitude_closed, predicted_magnitude_flow)
from gsquant.toric_geometry import ModelManifold, point_from_moment
from gsquant.torus_action import complex_flow, orbit_volume, orbit_volume_quadrature, orbit_volume_u

from conftest import zero_set_u

RESULTS = {}

IDENTITY_RTOL = 1e-5
LIMIT_RTOL = 0.05
POINTWISE_RTOL = 1e-8
HESSIAN_RTOL = 1e-6
DEFECT_FLOOR = 0.02
DEFECT_FINAL = 0.05
ORACLE_RTOL = 1e-8
GAUSS_RTOL = 1e-10
TAIL_RTOL = 1e-10
K_LIMIT = [8, 16, 32, 64, 128]
K_DEFECT = [16, 32, 64, 128]
SEED = 20240611


def record(n, passed, detail):
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    assert passed, RESULTS[n]


def decreasing(xs, strict=False):
    return all((b < a) if strict else (b <= a) for a, b in zip(xs, xs[1:]))


def nodes_on_zero_set(action, n):
    return zero_set_u(action, n, np.random.default_rng(SEED))


def test_criterion_01_norm_identity_uncorrected():
    t0 = time.perf_counter()
    worst, cells = 0.0, 0
    for model, action in (s1(), s2()):
        for k in (2, 4, 8, 16):
            rep, err = identity_check(action, k)
            assert rep.dim == len(invariant_basis(action, k))
            worst = max(worst, float(np.max(err)))
            cells += rep.dim
    dt = time.perf_counter() - t0
    record(1, worst < IDENTITY_RTOL and dt < 120,
           f"upstairs norm = downstairs int |A_k s|^2 I_k, {cells} sections, "
           f"max rel err {worst:.2e} (< {IDENTITY_RTOL:g}), {dt:.1f} s")


def test_criterion_02_norm_identity_corrected():
    worst, cells = 0.0, 0
    # S1 carries a half-form lift only for odd k
    for (model, action), ks in ((s2(), (2, 4, 8, 16)), (s1(), (3, 5, 9, 15))):
        for k in ks:
            rep, err = identity_check(action, k, corrected=True)
            assert rep.dim > 0
            worst = max(worst, float(np.max(err)))
            cells += rep.dim
    record(2, worst < IDENTITY_RTOL,
           f"upstairs norm = downstairs int |B_k r|^2 J_k, {cells} sections, "
           f"max rel err {worst:.2e} (< {IDENTITY_RTOL:g})")


def test_criterion_03_I_limit():
    m, a = s1()
    eq = np.array([[0.5, 0.5]])
    I1 = np.array([density_I_u(a, eq, k)[0] for k in K_LIMIT])
    dev1 = np.abs(I1 - pi)
    oracle = max(abs(I1[i] / s1_density_oracle(k) - 1) for i, k in enumerate(K_LIMIT))
    m, a = s2()
    u = nodes_on_zero_set(a, 16)
    lim = 2 ** (-a.d / 2) * orbit_volume_u(a, u)
    dev2 = [float(np.max(np.abs(density_I_u(a, u, k) - lim))) for k in K_LIMIT]
    ok = (decreasing(dev1) and dev1[-1] < LIMIT_RTOL * pi and oracle < ORACLE_RTOL
          and decreasing(dev2))
    record(3, ok, f"S1 |I_128 - pi|/pi = {dev1[-1] / pi:.2e} (< 5%), decreasing, "
                  f"oracle rel err {oracle:.1e}; S2 max dev {dev2[0]:.2e} -> {dev2[-1]:.2e} decreasing")


def test_criterion_04_J_limit():
    m, a = s1()
    eq = np.array([[0.5, 0.5]])
    ks1 = [9, 17, 33, 65, 129]
    dev1 = [abs(density_J_u(a, eq, k)[0] - 1) for k in ks1]
    oracle = max(abs(density_J_u(a, eq, k)[0] / s1_corrected_oracle(k) - 1) for k in ks1)
    m, a = s2()
    u = nodes_on_zero_set(a, 16)
    dev2 = [float(np.max(np.abs(density_J_u(a, u, k) - 1))) for k in K_LIMIT]
    ok = (decreasing(dev1) and dev1[-1] < LIMIT_RTOL and decreasing(dev2) and dev2[-1] < LIMIT_RTOL
          and oracle < ORACLE_RTOL)
    record(4, ok, f"max |J_k - 1|: S1 {dev1[-1]:.2e} @k=129, S2 {dev2[-1]:.2e} @k=128 (< 5%), "
                  f"both decreasing; S1 oracle rel err {oracle:.1e}")


def test_criterion_05_descent_ratio():
    m, a = s2()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for u in nodes_on_zero_set(a, 50):
        x0 = point_from_moment(m, u, rng.uniform(0, 2 * pi, 4))
        want = 2 ** (-a.d / 2) * orbit_volume(a, x0)
        for idx in invariant_basis(a, 4, True):
            r = CorrectedSection.monomial(m, 4, idx)
            worst = max(worst, abs(descend_contract(r, x0, a) / magnitude(r, x0) / want - 1))
    record(5, worst < POINTWISE_RTOL,
           f"|B_k r|^2 / |r|^2 = 2^(-d/2) vol(G.x) at 50 nodes via contraction, "
           f"max rel err {worst:.2e} (< {POINTWISE_RTOL:g})")


def test_criterion_06_magnitude_law_and_hessian():
    m, a = s2()
    rng = np.random.default_rng(SEED)
    worst, flows = 0.0, 0
    for corrected, k in ((False, 4), (True, 4)):
        cls = CorrectedSection if corrected else MonomialSection
        basis = invariant_basis(a, k, corrected)
        for j in range(100):
            s = cls.monomial(m, k, basis[j % len(basis)])
            u = zero_set_u(a, 1, rng)[0]
            x0 = point_from_moment(m, u, rng.uniform(0, 2 * pi, 4))
            xi = rng.uniform(-0.8, 0.8, size=a.d)
            direct = magnitude(s, complex_flow(a, xi, 1.0, x0))
            worst = max(worst, abs(predicted_magnitude_flow(s, xi, x0, a) / direct - 1))
            flows += 1
    u = nodes_on_zero_set(a, 200)
    det_err = float(np.max(np.abs(np.linalg.det(hessian_rho_u(a, u))
                                  / (2 ** a.d * orbit_volume_u(a, u) ** 2) - 1)))
    record(6, worst < POINTWISE_RTOL and det_err < HESSIAN_RTOL,
           f"magnitude law on {flows} flows max rel err {worst:.2e} (< {POINTWISE_RTOL:g}); "
           f"det H = 2^d vol^2 max rel err {det_err:.2e} (< {HESSIAN_RTOL:g})")


def test_criterion_07_tau_and_orbit_volume():
    worst = 0.0
    rng = np.random.default_rng(SEED)
    for m, a in (s1(), s2()):
        for u in nodes_on_zero_set(a, 20):
            x0 = point_from_moment(m, u, rng.uniform(0, 2 * pi, m.n_homogeneous))
            vol = orbit_volume(a, x0)
            for other in (tau(a, np.zeros(a.d), x0), orbit_volume_quadrature(a, x0),
                          orbit_volume_u(a, u[None])[0]):
                worst = max(worst, abs(other / vol - 1))
    record(7, worst < POINTWISE_RTOL,
           f"tau(0, x) = sqrt det B(X, X) = orbit quadrature = closed form, "
           f"max rel err {worst:.2e} (< {POINTWISE_RTOL:g})")


def test_criterion_08_gram_defects():
    m, a = s2()
    up = [gram_report(a, k).defect for k in K_DEFECT]
    down = [gram_report(a, k, corrected=True).defect for k in K_DEFECT]
    ok = min(up) >= DEFECT_FLOOR and decreasing(down, strict=True) and down[-1] < DEFECT_FINAL
    record(8, ok, "S2 A_k defect " + " ".join(f"{x:.4f}" for x in up) + f" (>= {DEFECT_FLOOR}); "
                  "B_k defect " + " ".join(f"{x:.4f}" for x in down) + f" (strictly decreasing, < {DEFECT_FINAL})")


def test_criterion_09_toeplitz():
    m, a = s2()
    f = observable("moment_sum", m)
    defects = [toeplitz_pair(a, k, f).defect for k in K_DEFECT]
    record(9, decreasing(defects) and defects[-1] < DEFECT_FINAL,
           "S2 Toeplitz defect " + " ".join(f"{x:.4f}" for x in defects)
           + f" (decreasing, < {DEFECT_FINAL} at k=128)")


def test_criterion_10_oracles():
    worst, cases = 0.0, 0
    for factors in (((1, 1),), ((2, 1),), ((1, 2),), ((1, 1), (1, 1)), ((2, 1), (1, 1)), ((3, 1),)):
        model = ModelManifold(factors)
        for k in range(1, 7):
            for corrected in (False, True):
                try:
                    idx = all_multi_indices(model, k, corrected)
                except Exception:
                    continue
                cls = CorrectedSection if corrected else MonomialSection
                for alpha in idx[:8]:
                    s = cls.monomial(model, k, alpha)
                    q = integrate_M(model, lambda u, ang: magnitude_closed(s, u), level=2)
                    worst = max(worst, abs(q / monomial_norm_exact(model, alpha, k, corrected) - 1))
                    cases += 1
    gauss = 0.0
    rng = np.random.default_rng(SEED)
    for d in (1, 2, 3):
        A = rng.normal(size=(d, d))
        H = A @ A.T + d * np.eye(d)
        L = np.linalg.cholesky(np.linalg.inv(H))
        for k in (4, 16, 64, 256):
            rule = lie_ball_rule(d, sqrt(80.0 / k), 40)
            xs = rule.nodes @ L.T
            exact = rule.weights @ np.exp(-k * np.einsum("ij,jk,ik->i", xs, H, xs) / 2) * abs(np.linalg.det(L))
            gauss = max(gauss, abs(laplace_leading([0.0], [1.0], H, d, k) / exact - 1))
    record(10, cases >= 200 and worst < ORACLE_RTOL and gauss < GAUSS_RTOL,
           f"{cases} monomial norms max rel err {worst:.2e} (< {ORACLE_RTOL:g}); "
           f"Laplace vs Gaussian max rel err {gauss:.2e} (< {GAUSS_RTOL:g})")


def test_criterion_11_tails():
    worst, mono, checked = 0.0, True, 0
    for m, a in (s1(), s2()):
        for u in nodes_on_zero_set(a, 4):
            x0 = point_from_moment(m, u)
            for corrected in (False, True):
                prev = None
                for k in (8, 16, 32, 64, 128):
                    R = truncation_radius(a, k, corrected)
                    est = tail_monitor(a, m, x0, k, R, corrected=corrected)
                    worst = max(worst, est.relative_tail)
                    mono = mono and est.monotone
                    at_fixed = tail_monitor(a, m, x0, k, 0.5, corrected=corrected).masses[0]
                    if prev is not None:
                        mono = mono and at_fixed < prev
                    prev = at_fixed
                    checked += 1
    record(11, mono and worst < TAIL_RTOL,
           f"{checked} cells: shell masses decreasing in R and k; "
           f"max discarded tail / main term {worst:.2e} (< {TAIL_RTOL:g})")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
