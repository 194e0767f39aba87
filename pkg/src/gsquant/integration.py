"""Quadrature over M, the zero set, the Lie algebra and the reduced space."""
import math
from dataclasses import dataclass
from fractions import Fraction
from math import factorial, pi

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from ._backend import density_terms
from .errors import DomainError, NumericError, PreconditionError, StructuralError
from .polytope import simplex_rule
from .toric_geometry import moment_coordinates, point_from_moment
from .torus_action import orbit_volume_u, zero_set_rule


@dataclass(frozen=True)
class QuadratureRule:
    domain: str
    nodes: np.ndarray
    weights: np.ndarray
    level: int
    angles: np.ndarray = None

    def integrate(self, values):
        return math.fsum(np.asarray(self.weights * np.asarray(values), dtype=float).ravel())

    def __len__(self):
        return len(self.weights)

    def to_text(self):
        """Plain-text table: node coordinates then weight, one node per line."""
        nodes = np.asarray(self.nodes).reshape(len(self.weights), -1)
        lines = [f"# domain={self.domain} level={self.level} nodes={len(self.weights)}"]
        lines += [" ".join(repr(float(x)) for x in row) + f" {float(w)!r}"
                  for row, w in zip(nodes, self.weights)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TailEstimate:
    R: float
    b: float
    D: float
    tail_mass: float
    radii: np.ndarray
    masses: np.ndarray
    monotone: bool
    bound_ok: bool
    main_term: float

    @property
    def relative_tail(self):
        return self.tail_mass / self.main_term

    def radius_for(self, rel, k):
        """Smallest radius whose fitted tail bound is below rel * main term."""
        return float(np.log(self.b / (rel * self.main_term)) / (self.D * k))


def manifold_rule(model, level=2, torus_points=1, order=None):
    """Tensor rule on prod_i (c_i * simplex) x T^n for the Liouville measure d mu d theta."""
    order = order or 8 * 2 ** level
    us, ws = [np.zeros((1, 0))], [np.ones(1)]
    for m, c in model.factors:
        pts, w = simplex_rule(m, order)
        u = np.hstack([1.0 - pts.sum(axis=1, keepdims=True), pts])
        new_u = np.hstack([np.repeat(us[0], len(w), axis=0), np.tile(u, (len(us[0]), 1))])
        new_w = np.repeat(ws[0], len(w)) * np.tile(w * float(c) ** m, len(ws[0]))
        us, ws = [new_u], [new_w]
    u, w = us[0], ws[0]
    n = model.n
    thetas = 2.0 * pi * np.arange(torus_points) / torus_points
    ang = np.stack(np.meshgrid(*([thetas] * n), indexing="ij"), -1).reshape(-1, n)
    free = []
    for sl in model.homogeneous_slices():
        free.extend(range(sl.start + 1, sl.stop))
    angles = np.zeros((len(ang), model.n_homogeneous))
    angles[:, free] = ang
    U = np.repeat(u, len(ang), axis=0)
    A = np.tile(angles, (len(u), 1))
    W = np.repeat(w, len(ang)) * (2.0 * pi / torus_points) ** n
    return QuadratureRule("manifold", U, W, level, A)


def _evaluate(model, f, rule, pointwise):
    if pointwise:
        return np.array([f(point_from_moment(model, u, a)) for u, a in zip(rule.nodes, rule.angles)])
    return np.asarray(f(rule.nodes, rule.angles))


def integrate_M(model, f, level=2, torus_points=1, pointwise=False, rtol=1e-8, order=None):
    """Integral of f against the Liouville form.

    f takes (u, angles) arrays unless pointwise=True, in which case it takes a
    ChartPoint.  Two consecutive refinement levels must agree to rtol.
    """
    coarse = manifold_rule(model, level, torus_points, order)
    fine = manifold_rule(model, level + 1, torus_points, None if order is None else 2 * order)
    a = coarse.integrate(_evaluate(model, f, coarse, pointwise))
    vals = _evaluate(model, f, fine, pointwise)
    b = fine.integrate(vals)
    # integrals that cancel to zero are judged against int |f|
    mass = fine.integrate(np.abs(vals))
    if abs(a - b) > rtol * abs(b) and abs(a - b) > 1e-13 * mass:
        raise NumericError("integral over M did not converge between refinement levels",
                           {"coarse": a, "fine": b, "level": level})
    return b


def monomial_norm_exact(model, a, k, corrected=False):
    """int_M |Z^a|^2 / |Z|^{2D} eps (times c^{-m/2} per factor when corrected)."""
    a = tuple(int(x) for x in a)
    if len(a) != model.n_homogeneous:
        raise StructuralError("multi-index length does not match the model")
    val = Fraction(1)
    extra = 1.0
    for (m, c), sl in zip(model.factors, model.homogeneous_slices()):
        part = a[sl]
        D = Fraction(k * c) - (Fraction(m + 1, 2) if corrected else 0)
        if D.denominator != 1 or sum(part) != D or min(part) < 0:
            raise StructuralError(f"multi-index {part} does not have degree {D}")
        num = 1
        for x in part:
            num *= factorial(x)
        val *= Fraction(num * factorial(m), factorial(int(D) + m)) * Fraction(c ** m, factorial(m))
        if corrected:
            extra *= float(c) ** (-m / 2)
    return float(val) * (2.0 * pi) ** model.n * extra


def check_invariant(action, f, rule, tol=1e-8, probes=3):
    """Sample f along G-orbits through the rule nodes; raise if it varies."""
    base = np.asarray(f(rule.u, rule.angles), dtype=float)
    scale = max(1.0, float(np.max(np.abs(base)))) if base.size else 1.0
    for j in range(1, probes + 1):
        theta = np.full(action.d, 0.37 * j)
        shifted = rule.angles - (action.w @ theta)[None, :]
        val = np.asarray(f(rule.u, shifted), dtype=float)
        if np.max(np.abs(val - base)) > tol * scale:
            raise PreconditionError("function is not G-invariant on the zero set")
    return base


def integrate_reduced(action, f, rule=None, level=2, check=True):
    """int_{M//G} f as int_{Phi^{-1}(0)} f / vol(G.x0); f takes (u, angles)."""
    rule = rule or zero_set_rule(action, level=level)
    vals = check_invariant(action, f, rule) if check else np.asarray(f(rule.u, rule.angles))
    return float(np.dot(rule.reduced_weights, vals))


def _toric_terms(action, u0, xis):
    model = action.model
    offsets = np.array([sl.start for sl in model.homogeneous_slices()]
                       + [model.n_homogeneous], dtype=np.int64)
    free, zero, fac = action.layout
    wq = np.atleast_2d(xis) @ action.w.T
    logS, jac = density_terms(np.atleast_2d(u0), wq, action.w, offsets,
                              np.array(model.scales, dtype=float),
                              action.slice.N.reshape(model.n, -1), free, zero, fac)
    return logS, jac, wq


def flow_tables(action, u0, xis):
    """rho, half-divergence integral and tau on a (base point x Lie node) grid."""
    u0 = np.atleast_2d(u0)
    xis = np.atleast_2d(xis)
    model = action.model
    logS, jac, wq = _toric_terms(action, u0, xis)
    c = np.array(model.scales, dtype=float)
    rho = logS @ c - 2.0 * (xis @ action.Lambda)[None, :]
    half_div = np.zeros_like(rho)
    for i, ((m, _), sl) in enumerate(zip(model.factors, model.homogeneous_slices())):
        half_div += wq[:, sl].sum(axis=1)[None, :] - 0.5 * (m + 1) * logS[:, :, i]
    vol = orbit_volume_u(action, u0)
    tau = jac / (vol[:, None] * action.slice_density)
    return rho, half_div, tau, logS, wq


def flowed_u(action, u0, logS, wq):
    """Moment coordinates after the time-1 flow, from the kernel's log S."""
    out = np.empty(logS.shape[:2] + (u0.shape[1],))
    for i, sl in enumerate(action.model.homogeneous_slices()):
        out[:, :, sl] = u0[:, None, sl] * np.exp(2.0 * wq[None, :, sl] - logS[:, :, i:i + 1])
    return out


def tau(action, xi, x0):
    u0 = moment_coordinates(action.model, x0)
    vol = orbit_volume_u(action, u0)[0]
    if vol <= 0:
        raise DomainError("tau needs a point with a free orbit")
    _, _, t, _, _ = flow_tables(action, u0, np.atleast_2d(xi))
    if t[0, 0] <= 0:
        raise DomainError("flow differential is singular")
    return float(t[0, 0])


def _sphere(d, level):
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        nphi = 2 * level + 2
        phi = 2.0 * pi * np.arange(nphi) / nphi
        return np.stack([np.cos(phi), np.sin(phi)], -1), np.full(nphi, 2.0 * pi / nphi)
    if d == 3:
        x, w = roots_legendre(level + 1)
        nphi = 2 * level + 2
        phi = 2.0 * pi * np.arange(nphi) / nphi
        ct, ph = np.meshgrid(x, phi, indexing="ij")
        st = np.sqrt(1.0 - ct ** 2)
        dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], -1).reshape(-1, 3)
        return dirs, (w[:, None] * np.full(nphi, 2.0 * pi / nphi)[None, :]).ravel()
    raise StructuralError("Lie-algebra rules are implemented for d <= 3")


def lie_panel(action, per_unit=0.5):
    """Radial panel width: a fraction of the shortest transition length 1/max|w|."""
    return per_unit / float(np.max(np.abs(action.w)))


def _radial_nodes(d, R, n, panel):
    if panel is None:
        x, w = roots_jacobi(n, 0.0, d - 1.0)
        return 0.5 * R * (x + 1.0), w * (0.5 * R) ** d
    # composite Gauss panels of width <= panel; resolves transitions of width ~ 1/|w|
    m = max(1, int(np.ceil(R / panel)))
    x, w = roots_legendre(16)
    edges = np.linspace(0.0, R, m + 1)
    h = np.diff(edges)
    r = (edges[:-1, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
    return r, (0.5 * h[:, None] * w[None, :]).ravel() * r ** (d - 1)


def lie_ball_rule(d, R, level, panel=None):
    """Rule on the ball of radius R in R^d; radial Gauss-Jacobi of degree 2*level or composite panels."""
    if R <= 0:
        raise DomainError("radius must be positive")
    if d == 1:
        r, wr = _radial_nodes(1, R, level + 1, panel)
        return QuadratureRule("lie-ball", np.concatenate([-r[::-1], r])[:, None],
                              np.concatenate([wr[::-1], wr]), level)
    r, wr = _radial_nodes(d, R, level + 1, panel)
    dirs, wd = _sphere(d, level)
    nodes = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    weights = (wr[:, None] * wd[None, :]).ravel()
    return QuadratureRule("lie-ball", nodes, weights, level)


def shell_rule(d, R_in, R_out, panels=64, order=16, level=8):
    """Composite Gauss rule on the shell R_in <= |xi| <= R_out."""
    x, w = roots_legendre(order)
    edges = np.linspace(R_in, R_out, panels + 1)
    h = np.diff(edges)
    r = (edges[:-1, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
    wr = (0.5 * h[:, None] * w[None, :]).ravel() * r ** (d - 1)
    dirs, wd = _sphere(d, level)
    nodes = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    weights = (wr[:, None] * wd[None, :]).ravel()
    return nodes, weights


def lie_integrand(action, u0, xis, k, corrected=False, observable=None):
    """tau * f * exp(-k rho [- half-divergence]) on a (base x node) grid."""
    rho, half_div, t, logS, wq = flow_tables(action, u0, xis)
    expo = k * rho + (half_div if corrected else 0.0)
    g = t * np.exp(-expo)
    if observable is not None:
        g = g * observable(flowed_u(action, np.atleast_2d(u0), logS, wq))
    return g


def _outer_radius(action, u0, k, corrected, start, drop=80.0):
    """Radius where the log integrand has fallen by `drop` below its value at 0 in every direction."""
    dirs, _ = _sphere(action.d, 8)
    R = start
    g0 = lie_integrand(action, u0, np.zeros((1, action.d)), k, corrected)[0, 0]
    for _ in range(60):
        g = lie_integrand(action, u0, R * dirs, k, corrected)[0]
        if np.all(g < g0 * np.exp(-drop)):
            return R
        R *= 1.5
    raise NumericError("integrand does not decay along some direction", {"R": R})


def tail_monitor(action, model, x0, k, R, corrected=False, n_radii=8):
    """Tail masses beyond a grid of radii starting at R, with the fitted bound b e^{-R D k}."""
    if model != action.model:
        raise StructuralError("action and model disagree")
    u0 = moment_coordinates(model, x0)
    d = action.d
    R_out = _outer_radius(action, u0, k, corrected, max(R, 1e-3) * 1.5)
    radii = np.linspace(R, R + 0.6 * (R_out - R), n_radii)
    masses = []
    for Rj in radii:
        nodes, w = shell_rule(d, Rj, R_out)
        masses.append(float(np.dot(w, lie_integrand(action, u0, nodes, k, corrected)[0])))
    masses = np.array(masses)
    main_nodes = lie_ball_rule(d, R_out, 255, panel=lie_panel(action))
    main = float(np.dot(main_nodes.weights,
                        lie_integrand(action, u0, main_nodes.nodes, k, corrected)[0]))
    positive = masses > 0
    if positive.sum() < 2:
        raise NumericError("tail masses underflow; start radius too large", {"R": R})
    slope = np.polyfit(radii[positive], np.log(masses[positive]), 1)[0]
    D = max(-slope / k, 1e-12)
    b = float(np.max(masses[positive] * np.exp(radii[positive] * D * k)))
    monotone = bool(np.all(np.diff(masses) < 0))
    bound = b * np.exp(-radii * D * k)
    bound_ok = bool(np.all(masses <= 1.5 * bound))
    return TailEstimate(float(R), b, float(D), float(masses[0]), radii, masses, monotone,
                        bound_ok, main)
