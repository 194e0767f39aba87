"""A_k and B_k on zero-set nodes, Gram pencils, Toeplitz pairs and peak sections."""
from dataclasses import dataclass
from math import pi

import numpy as np
from scipy.linalg import eigh

from .densities import density_I_u, density_J_u
from .errors import NumericError, PreconditionError, StructuralError
from .integration import check_invariant, integrate_M, monomial_norm_exact
from .sections import (CorrectedSection, MonomialSection, descent_square, invariant_basis,
                       is_invariant, magnitude_closed)
from .toric_geometry import homogeneous, point_from_moment
from .torus_action import slice_order, validate_scenario, zero_set_rule


@dataclass(frozen=True)
class ReducedSection:
    """Values of a reduced section at zero-set nodes against unit-norm frames."""
    values: np.ndarray
    u: np.ndarray

    def magnitude(self):
        return np.abs(self.values) ** 2


def _unit_values(s, u, angles):
    """Polynomial values at unit homogeneous representatives (|Z_i| = 1 per factor)."""
    Z = np.sqrt(u) * np.exp(1j * angles)
    if not len(s.indices):
        return np.zeros(len(u), dtype=complex)
    with np.errstate(invalid="ignore"):
        mono = np.prod(np.where(s._exp[None, :, :] > 0, Z[:, None, :] ** s._exp[None, :, :], 1.0),
                       axis=2)
    return mono @ s.coefficients


def map_A(s, action, rule):
    if s.corrected:
        raise StructuralError("map_A acts on uncorrected sections")
    if not is_invariant(s, action):
        raise PreconditionError("map_A needs an invariant section")
    return ReducedSection(_unit_values(s, rule.u, rule.angles), rule.u)


def descent_factor(action, rule):
    """sqrt((B sigma, B sigma)^2) relative to the unit frame, per node.

    The half-form of a corrected section at a unit representative has
    (nu, nu) = prod c_i^{-m_i/2}; the contraction rescales it pointwise.
    """
    model = action.model
    out = np.empty(len(rule.u))
    for j, (u, ang) in enumerate(zip(rule.u, rule.angles)):
        p = point_from_moment(model, u, ang)
        Zs = homogeneous(model, p)
        chart_sq = 1.0
        for Z, (m, c) in zip(Zs, model.factors):
            chart_sq *= np.vdot(Z, Z).real ** (m + 1)
        out[j] = np.sqrt(descent_square(action, p).real / chart_sq)
    return out


def map_B(r, action, rule, factor=None):
    if not r.corrected:
        raise StructuralError("map_B acts on corrected sections")
    if not all((m + 1) % 2 == 0 for m in action.model.dims):
        raise PreconditionError("the model has no half-form bundle")
    if not is_invariant(r, action):
        raise PreconditionError("map_B needs an invariant section")
    factor = descent_factor(action, rule) if factor is None else factor
    return ReducedSection(_unit_values(r, rule.u, rule.angles) * np.sqrt(factor), rule.u)


REFINE_RTOL = 1e-12
MAX_REFINE = 5


def level_for_degree(deg):
    level = 0
    while slice_order(level) < deg // 2 + 12:
        level += 1
    return level


@dataclass
class GramReport:
    k: int
    corrected: bool
    basis: list
    G_up: np.ndarray
    G_down: np.ndarray
    mu: np.ndarray
    defect: float
    identity_residual: float = float("nan")
    level: int = -1

    @property
    def dim(self):
        return len(self.basis)


def _section(model, k, idx, corrected):
    cls = CorrectedSection if corrected else MonomialSection
    return cls.monomial(model, k, idx)


def gram_report(action, k, corrected=False, level=None, with_identity=False):
    model = action.model
    rep = validate_scenario(model, action, k, corrected)
    if not rep.passed:
        raise PreconditionError("scenario fails validation:\n" + rep.summary())
    basis = invariant_basis(action, k, corrected)
    if not basis:
        return GramReport(k, corrected, [], np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0), 0.0)
    n, d = model.n, action.d
    secs = [_section(model, k, idx, corrected) for idx in basis]
    maxdeg = max(k * c for c in model.scales)
    up_level = level_for_degree(maxdeg)
    G_up = np.diag([(k / (2 * pi)) ** (n / 2) * integrate_M(
        model, lambda u, ang, s=s: magnitude_closed(s, u), level=up_level) for s in secs])
    pref = (k / (2 * pi)) ** ((n - d) / 2)

    def downstairs(lv):
        rule = zero_set_rule(action, level=lv)
        if corrected:
            fac = descent_factor(action, rule)
            vals = [map_B(s, action, rule, fac).magnitude() for s in secs]
        else:
            vals = [map_A(s, action, rule).magnitude() for s in secs]
        g = np.array([pref * np.dot(rule.reduced_weights, v) for v in vals])
        if with_identity:
            dens = density_J_u(action, rule.u, k) if corrected else density_I_u(action, rule.u, k)
            g = np.concatenate([g, [pref * np.dot(rule.reduced_weights, v * dens) for v in vals]])
        return rule, vals, g

    if level is not None:
        rule, vals, g = downstairs(level)
    else:
        # refine until consecutive levels agree; the integrands are only u log u smooth at the boundary
        lv = max(2, level_for_degree(2 * maxdeg))
        rule, vals, g = downstairs(lv)
        for lv in range(lv + 1, lv + MAX_REFINE + 1):
            prev = g
            rule, vals, g = downstairs(lv)
            if np.max(np.abs(g - prev) / g) < REFINE_RTOL:
                break
        else:
            raise NumericError("zero-set quadrature did not converge",
                               {"level": lv, "change": float(np.max(np.abs(g - prev) / g))})
    G_down = np.diag(g[:len(secs)])
    mu = eigh(G_down, G_up, eigvals_only=True)
    defect = float((mu.max() - mu.min()) / (mu.max() + mu.min()))
    out = GramReport(k, corrected, basis, G_up, G_down, mu, defect, level=rule.level)
    if with_identity:
        out.weighted = g[len(secs):]
        out.identity_residual = float(np.max(np.abs(out.weighted - np.diag(G_up)) / np.diag(G_up)))
    return out


def identity_check(action, k, corrected=False):
    """Upstairs norms against the downstairs integrals weighted by I_k (or J_k)."""
    rep = gram_report(action, k, corrected, with_identity=True)
    if not rep.dim:
        return rep, np.zeros(0)
    return rep, np.abs(rep.weighted - np.diag(rep.G_up)) / np.diag(rep.G_up)


@dataclass
class ToeplitzMatrices:
    k: int
    tag: str
    T_up: np.ndarray
    T_down: np.ndarray
    conjugated: np.ndarray
    defect: float


def _sqrtm_pd(G):
    w, V = np.linalg.eigh(G)
    return (V * np.sqrt(w)) @ V.conj().T, (V / np.sqrt(w)) @ V.conj().T


def toeplitz_pair(action, k, f, level=None):
    """Upstairs Toeplitz operator conjugated by B_k against the downstairs one."""
    model = action.model
    rep = gram_report(action, k, corrected=True, level=level)
    if not rep.dim:
        raise PreconditionError("empty invariant space")
    n, d = model.n, action.d
    secs = [_section(model, k, idx, True) for idx in rep.basis]
    up_level = level_for_degree(max(k * c for c in model.scales))
    F_up = np.diag([(k / (2 * pi)) ** (n / 2) * integrate_M(
        model, lambda u, ang, s=s: f(u) * magnitude_closed(s, u), level=up_level) for s in secs])
    # same rule as G_down so that f = 1 reproduces the identity exactly
    rule = zero_set_rule(action, level=rep.level)
    fvals = check_invariant(action, lambda u, ang: f(u), rule)
    fac = descent_factor(action, rule)
    pref = (k / (2 * pi)) ** ((n - d) / 2)
    F_down = np.diag([pref * np.dot(rule.reduced_weights, fvals * map_B(s, action, rule, fac).magnitude())
                      for s in secs])
    Gu_h, Gu_ih = _sqrtm_pd(rep.G_up)
    Gd_h, Gd_ih = _sqrtm_pd(rep.G_down)
    T_up = Gu_ih @ F_up @ Gu_ih
    T_down = Gd_ih @ F_down @ Gd_ih
    C_up = np.linalg.solve(rep.G_up, F_up)
    conj = Gd_h @ C_up @ Gd_ih
    defect = float(np.linalg.norm(T_down - conj, 2))
    return ToeplitzMatrices(k, getattr(f, "tag", "f"), T_up, T_down, conj, defect)


def lattice_point(model, idx, k, corrected=False):
    """Moment coordinates a/D of a monomial, per factor."""
    u = np.array(idx, dtype=float)
    for sl in model.homogeneous_slices():
        tot = u[sl].sum()
        u[sl] = u[sl] / tot if tot else 1.0 / (sl.stop - sl.start)
    return u


def peak_section(action, k, target_u):
    model = action.model
    basis = invariant_basis(action, k, False)
    if not basis:
        raise PreconditionError("empty invariant space")
    target_u = np.asarray(target_u, dtype=float)
    dist = [np.linalg.norm(lattice_point(model, idx, k) - target_u) for idx in basis]
    best = basis[int(np.argmin(dist))]
    norm = (k / (2 * pi)) ** (model.n / 2) * monomial_norm_exact(model, best, k)
    return MonomialSection.monomial(model, k, best, 1.0 / np.sqrt(norm))


def concentration(action, s, target_u, radius, rule=None):
    """Fraction of the downstairs norm of A_k s within moment distance `radius` of the target."""
    model = action.model
    rule = rule or zero_set_rule(action, level=level_for_degree(2 * s.k * max(model.scales)))
    mag = map_A(s, action, rule).magnitude()
    free = [a for sl in model.homogeneous_slices() for a in range(sl.start + 1, sl.stop)]
    c = np.concatenate([[c] * m for m, c in model.factors])
    dist = np.linalg.norm((rule.u[:, free] - np.asarray(target_u)[free]) * c, axis=1)
    w = rule.reduced_weights * mag
    return float(w[dist <= radius].sum() / w.sum())


def rayleigh_quotient(action, s):
    """<A s, A s>_down / <s, s>_up for a single invariant monomial."""
    model = action.model
    k = s.k
    n, d = model.n, action.d
    rule = zero_set_rule(action, level=level_for_degree(2 * k * max(model.scales)))
    down = (k / (2 * pi)) ** ((n - d) / 2) * np.dot(rule.reduced_weights, map_A(s, action, rule).magnitude())
    up = (k / (2 * pi)) ** (n / 2) * abs(s.coefficients[0]) ** 2 * monomial_norm_exact(model, s.indices[0], k)
    return float(down / up)
