from math import pi

import numpy as np
import pytest

from gsquant.errors import PreconditionError, StructuralError
from gsquant.integration import integrate_M
from gsquant.sections import (CorrectedSection, HalfFormValue, MonomialSection, all_multi_indices,
                              chart_half_form_norm_sq, count_monomials, descend_contract,
                              divergence_ratio, divergence_u, export_section, half_form_pairing,
                              import_section, invariant_basis, magnitude, magnitude_closed,
                              predicted_magnitude_flow, q_residual, section_degrees,
                              technical_contraction)
from gsquant.toric_geometry import (ChartPoint, ModelManifold, liouville_at, moment_coordinates,
                                    point_from_moment, rechart)
from gsquant.torus_action import complex_flow, moment, orbit_volume

from conftest import zero_set_u

CP1 = ModelManifold(((1, 1),))


def _random_point(model, rng, scale=1.0):
    z = scale * (rng.normal(size=model.n) + 1j * rng.normal(size=model.n))
    return ChartPoint([0] * len(model.factors), z)


def test_multi_indices_complete():
    model = ModelManifold(((2, 1), (1, 2)))
    idx = all_multi_indices(model, 3)
    assert len(idx) == count_monomials(2, 3) * count_monomials(1, 6)
    assert len(set(idx)) == len(idx)
    assert all(sum(i[:3]) == 3 and sum(i[3:]) == 6 for i in idx)


def test_bad_degrees_rejected():
    with pytest.raises(StructuralError):
        MonomialSection.monomial(CP1, 2, (1, 2))
    with pytest.raises(StructuralError):
        CorrectedSection.monomial(CP1, 2, (1, 1))


def test_invariant_basis_examples(S1, S2):
    m, a = S1
    assert invariant_basis(a, 2) == [(1, 1)]
    assert invariant_basis(a, 3, corrected=True) == [(1, 1)]
    assert invariant_basis(a, 2, corrected=True) == []
    m, a = S2
    assert len(invariant_basis(a, 4)) == 3
    assert all(i[1] + i[3] == 2 for i in invariant_basis(a, 4))


def test_invariant_basis_needs_valid_action(diag):
    with pytest.raises(PreconditionError):
        invariant_basis(diag[1], 2)


def test_magnitude_examples():
    s = MonomialSection.monomial(CP1, 2, (1, 1))
    assert magnitude(s, ChartPoint((0,), [np.exp(0.4j)])) == pytest.approx(0.25, rel=1e-14)
    assert magnitude(MonomialSection.monomial(CP1, 2, (2, 0)), ChartPoint((0,), [0.0])) == 1.0
    zero = MonomialSection(CP1, 2, {})
    assert magnitude(zero, ChartPoint((0,), [0.3])) == 0.0


@pytest.mark.parametrize("cls,k", [(MonomialSection, 3), (CorrectedSection, 4)])
def test_magnitude_chart_independent(cls, k, rng):
    model = ModelManifold(((1, 1), (1, 2)))
    idx = all_multi_indices(model, k, cls.corrected)
    coeffs = {i: complex(*rng.normal(size=2)) for i in idx}
    s = cls(model, k, coeffs)
    for _ in range(20):
        p = _random_point(model, rng)
        q = rechart(model, p, (1, 1))
        assert magnitude(s, q) == pytest.approx(magnitude(s, p), rel=1e-12)
        if len(section_degrees(model, k, cls.corrected)):
            u = moment_coordinates(model, p)
            for i in idx[:3]:
                mono = cls.monomial(model, k, i)
                assert magnitude_closed(mono, u)[0] == pytest.approx(magnitude(mono, p), rel=1e-12)


def test_corrected_degree_bookkeeping():
    # squaring the half-form part of (k, corrected) lands on the (n,0)-form degree m+1 per factor
    model = ModelManifold(((1, 1), (3, 1)))
    for k in (2, 4, 6):
        for idx in all_multi_indices(model, k, corrected=True)[:5]:
            sq = [2 * sum(idx[sl]) + (m + 1) for sl, m in zip(model.homogeneous_slices(), model.dims)]
            assert sq == [2 * k * c for _, c in model.factors]


def test_half_form_pairing_conventions(rng):
    p = ChartPoint((0,), [np.exp(0.2j)])
    sigma = HalfFormValue(1.0, p.charts)
    sq = chart_half_form_norm_sq(CP1, p)
    assert abs(sq.imag) < 1e-15 and sq.real > 0
    assert sq.real * liouville_at(CP1, p) == pytest.approx(2.0, rel=1e-14)
    assert half_form_pairing(sigma, sigma, p, CP1) ** 2 == pytest.approx(4.0, rel=1e-14)
    nu = HalfFormValue(0.3 + 0.4j, p.charts)
    mu = HalfFormValue(1j * (0.3 + 0.4j), p.charts)
    assert half_form_pairing(nu, mu, p, CP1) == pytest.approx(
        -1j * half_form_pairing(nu, nu, p, CP1), rel=1e-14)
    unit = HalfFormValue(sq.real ** -0.25, p.charts)
    assert half_form_pairing(unit, unit, p, CP1) == pytest.approx(1.0, rel=1e-14)
    model = ModelManifold(((2, 1), (1, 1)))
    for _ in range(20):
        q = _random_point(model, rng)
        v = HalfFormValue(complex(*rng.normal(size=2)), q.charts)
        val = half_form_pairing(v, v, q, model)
        assert abs(val.imag) < 1e-15 * abs(val) and val.real > 0
    with pytest.raises(StructuralError):
        half_form_pairing(sigma, HalfFormValue(1.0, (1,)), p, CP1)


def test_divergence_ratio(S2, rng):
    m, a = S2
    p = _random_point(m, rng, 0.5)
    assert divergence_ratio(a, [0.0], p) == 0.0
    for _ in range(5):
        p = _random_point(m, rng, 0.5)
        xi = rng.normal(size=a.d)
        h = 1e-4

        def log_volume(t):
            q = complex_flow(a, xi, t, p)
            q = rechart(m, q, p.charts)
            return np.log(liouville_at(m, q) / liouville_at(m, p)) + 2 * t * _chart_log_jac(a, xi, p)
        fd = (log_volume(h) - log_volume(-h)) / (2 * h)
        assert divergence_ratio(a, xi, p) == pytest.approx(fd, rel=1e-6)
    xi = rng.normal(size=a.d)
    total = integrate_M(m, lambda u, ang: divergence_u(a, xi, u), level=2)
    assert abs(total) < 1e-10


def _chart_log_jac(action, xi, p):
    # the flow acts on chart coordinate z_j by exp(t (w_j - w_chart)); real Jacobian |.|^2
    wx = action.w @ xi
    out = 0.0
    for a0, sl in zip(p.charts, action.model.homogeneous_slices()):
        e = wx[sl]
        out += sum(e[j] - e[a0] for j in range(len(e)) if j != a0)
    return out


@pytest.mark.parametrize("corrected,k", [(False, 2), (True, 4), (False, 8)])
def test_magnitude_law_along_flows(S2, corrected, k, rng):
    m, a = S2
    cls = CorrectedSection if corrected else MonomialSection
    basis = invariant_basis(a, k, corrected)
    assert basis
    for idx in basis:
        s = cls.monomial(m, k, idx)
        for u in zero_set_u(a, 4, rng):
            x0 = point_from_moment(m, u, rng.uniform(0, 2 * pi, 4))
            xi = rng.uniform(-0.6, 0.6, size=a.d)
            direct = magnitude(s, complex_flow(a, xi, 1.0, x0))
            pred = predicted_magnitude_flow(s, xi, x0, a)
            assert pred == pytest.approx(direct, rel=1e-8)
    x0 = point_from_moment(m, zero_set_u(a, 1, rng)[0])
    s = cls.monomial(m, k, basis[0])
    assert predicted_magnitude_flow(s, [0.0], x0, a) == pytest.approx(magnitude(s, x0), rel=1e-15)


def test_magnitude_law_s1_examples(S1, rng):
    m, a = S1
    x0 = ChartPoint((0,), [np.exp(0.9j)])
    for k, cls in ((2, MonomialSection), (3, CorrectedSection), (5, CorrectedSection)):
        s = cls.monomial(m, k, invariant_basis(a, k, cls.corrected)[0])
        for xi in rng.uniform(-1, 1, size=(10, 1)):
            direct = magnitude(s, complex_flow(a, xi, 1.0, x0))
            assert predicted_magnitude_flow(s, xi, x0, a) == pytest.approx(direct, rel=1e-8)


def test_magnitude_law_rejects_non_invariant(S1):
    m, a = S1
    s = MonomialSection.monomial(m, 2, (2, 0))
    with pytest.raises(PreconditionError):
        predicted_magnitude_flow(s, [0.1], ChartPoint((0,), [1.0]), a)


def test_invariance_operator(S2, rng):
    m, a = S2
    k = 4
    for idx in all_multi_indices(m, k):
        s = MonomialSection.monomial(m, k, idx)
        res = []
        for _ in range(10):
            p = _random_point(m, rng, 0.7)
            res.append(abs(q_residual(a, s, [1.0], p)) / max(abs(s.polynomial(
                [np.insert(p.z[:1], 0, 1), np.insert(p.z[1:], 0, 1)])), 1e-300))
        if idx in invariant_basis(a, k):
            assert max(res) < 1e-8
        else:
            assert min(res) > 0.1


def test_norm_derivative_along_gradient(S2, rng):
    m, a = S2
    k = 4
    h = 1e-5
    for idx in invariant_basis(a, k):
        s = MonomialSection.monomial(m, k, idx)
        for _ in range(5):
            p = _random_point(m, rng, 0.8)
            xi = rng.normal(size=a.d)
            fd = (magnitude(s, complex_flow(a, xi, h, p)) - magnitude(s, complex_flow(a, xi, -h, p))) / (2 * h)
            want = -2 * k * (moment(a, p) @ xi) * magnitude(s, p)
            assert fd == pytest.approx(want, rel=1e-6, abs=1e-12)


def test_descend_contract_ratio(S1, S2, rng):
    m, a = S1
    r = CorrectedSection.monomial(m, 3, (1, 1))
    x0 = ChartPoint((0,), [np.exp(0.3j)])
    assert descend_contract(r, x0, a) / magnitude(r, x0) == pytest.approx(pi, rel=1e-12)
    m, a = S2
    k = 4
    for u in zero_set_u(a, 50, rng):
        x0 = point_from_moment(m, u, rng.uniform(0, 2 * pi, 4))
        want = 2 ** (-a.d / 2) * orbit_volume(a, x0)
        for idx in invariant_basis(a, k, True):
            r = CorrectedSection.monomial(m, k, idx)
            assert descend_contract(r, x0, a) / magnitude(r, x0) == pytest.approx(want, rel=1e-8)
    assert descend_contract(CorrectedSection(m, k, {}), x0, a) == 0.0


def test_contraction_identity(S2, rng):
    m, a = S2
    phase = 1j ** a.d * (-1) ** (a.d * (a.d - 1) // 2)
    for u in zero_set_u(a, 50, rng):
        lhs, rhs = technical_contraction(a, point_from_moment(m, u, rng.uniform(0, 2 * pi, 4)))
        assert lhs == pytest.approx(phase * rhs, rel=1e-8)


def test_section_export_round_trip(tmp_path, rng):
    model = ModelManifold(((1, 1), (1, 1)))
    idx = all_multi_indices(model, 4, corrected=True)
    s = CorrectedSection(model, 4, {i: complex(*rng.normal(size=2)) for i in idx})
    path = tmp_path / "r.txt"
    export_section(s, path)
    t = import_section(path, model)
    assert t.corrected and t.k == 4
    assert t.indices == s.indices
    assert np.array_equal(t.coefficients, s.coefficients)
    (tmp_path / "bad.txt").write_text("1 1 0.5 0.0\n")
    with pytest.raises(StructuralError):
        import_section(tmp_path / "bad.txt", model)
