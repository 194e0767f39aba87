"""Hamiltonian torus actions on products of projective spaces.

The torus is R^d / Z^d in lattice coordinates.  A Lie-algebra vector xi is
given in the orthonormal basis Xi, and moves the homogeneous coordinate Z_a
by the real action Z_a -> exp(-i w_a(xi)) Z_a with w(xi) = 2 pi W^T Xi xi.
The complexified flow along J X^xi scales Z_a by exp(t w_a(xi)), which makes
phi_xi increase along it.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
import itertools
import math
from math import gcd, pi

import numpy as np
from scipy.integrate import quad
from scipy.linalg import null_space

from .errors import DomainError, NumericError, PreconditionError, StructuralError
from .polytope import Slice
from .toric_geometry import (check_chart, from_homogeneous, homogeneous,
                             metric_at, moment_coordinates, point_from_moment, settle)


def as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return Fraction(int(x[0]), int(x[1]))
    return Fraction(x).limit_denominator(10 ** 9)


def haar_basis(d):
    """Gram-Schmidt on the lattice basis for the inner product with unit cell volume 1."""
    L = np.eye(d)
    Q, R = np.linalg.qr(L)
    return Q * np.sign(np.diag(R))


@dataclass(frozen=True)
class ActionSpec:
    model: object
    weights: np.ndarray
    shift: tuple
    basis: np.ndarray = None

    def __post_init__(self):
        W = np.array(self.weights, dtype=np.int64)
        if W.ndim == 1:
            W = W.reshape(1, -1)
        if W.shape[1] != self.model.n_homogeneous:
            raise StructuralError(
                f"weight matrix has {W.shape[1]} columns, model has "
                f"{self.model.n_homogeneous} homogeneous coordinates")
        d = W.shape[0]
        lam = tuple(as_fraction(x) for x in self.shift)
        if len(lam) != d:
            raise StructuralError(f"shift has {len(lam)} entries, torus dimension is {d}")
        Xi = haar_basis(d) if self.basis is None else np.array(self.basis, dtype=float)
        if Xi.shape != (d, d) or not np.allclose(Xi.T @ Xi, np.eye(d), atol=1e-12):
            raise StructuralError("basis must be orthonormal for the unit-cell inner product")
        W.setflags(write=False)
        Xi.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "shift", lam)
        object.__setattr__(self, "basis", Xi)
        if np.linalg.matrix_rank(self.A) < d:
            raise StructuralError("weight matrix does not act effectively (rank < d)")

    @property
    def d(self):
        return self.weights.shape[0]

    @cached_property
    def w(self):
        """Real weights per homogeneous coordinate in the Xi basis, shape (n_hom, d)."""
        return 2.0 * pi * self.weights.T.astype(float) @ self.basis

    @cached_property
    def Lambda(self):
        lam = np.array([float(x) for x in self.shift])
        return 2.0 * pi * self.basis.T @ lam

    @cached_property
    def coeff(self):
        c = np.concatenate([[c] * (m + 1) for m, c in self.model.factors]).astype(float)
        return c[:, None] * self.w

    @cached_property
    def layout(self):
        """Free moment coordinates: (homogeneous index, dropped index, factor) per entry."""
        free, zero, fac = [], [], []
        start = 0
        for i, (m, _) in enumerate(self.model.factors):
            for a in range(1, m + 1):
                free.append(start + a)
                zero.append(start)
                fac.append(i)
            start += m + 1
        return np.array(free), np.array(zero), np.array(fac)

    @cached_property
    def A(self):
        free, zero, _ = self.layout
        return (self.w[free] - self.w[zero]).T

    @cached_property
    def phi0(self):
        starts = [sl.start for sl in self.model.homogeneous_slices()]
        c = np.array(self.model.scales, dtype=float)
        return (c[:, None] * self.w[starts]).sum(axis=0) - self.Lambda

    @cached_property
    def slice(self):
        A = self.A
        base = -np.linalg.pinv(A) @ self.phi0
        N = null_space(A)
        for j in range(N.shape[1]):
            lead = N[np.argmax(np.abs(N[:, j]) > 1e-12), j]
            N[:, j] *= np.sign(lead)
        _, _, fac = self.layout
        rows, h = [], []
        for f in range(len(base)):
            rows.append(-N[f])
            h.append(base[f])
        for i, (m, c) in enumerate(self.model.factors):
            sel = fac == i
            rows.append(N[sel].sum(axis=0))
            h.append(c - base[sel].sum())
        return Slice(base, N, np.array(rows).reshape(len(h), N.shape[1]), np.array(h))

    @cached_property
    def slice_density(self):
        """1/sqrt(det A A^T): disintegration of d mu along Phi at the zero level."""
        return 1.0 / np.sqrt(np.linalg.det(self.A @ self.A.T))

    def u_from_mu(self, mu):
        mu = np.atleast_2d(mu)
        free, _, fac = self.layout
        out = np.zeros((mu.shape[0], self.model.n_homogeneous))
        for i, ((m, c), sl) in enumerate(zip(self.model.factors, self.model.homogeneous_slices())):
            sel = fac == i
            out[:, free[sel]] = mu[:, sel] / c
            out[:, sl.start] = 1.0 - mu[:, sel].sum(axis=1) / c
        return np.clip(out, 0.0, 1.0)


def moment_u(action, u):
    """Moment map in the Xi basis from moment coordinates, shape (..., d)."""
    return np.asarray(u) @ action.coeff - action.Lambda


def moment(action, p):
    return moment_u(action, moment_coordinates(action.model, p))


def orbit_gram_u(action, u):
    """B(X^i, X^j) from moment coordinates: 2 sum_i c_i Cov_u(w_i, w_j)."""
    u = np.atleast_2d(u)
    G = np.zeros((u.shape[0], action.d, action.d))
    for (m, c), sl in zip(action.model.factors, action.model.homogeneous_slices()):
        uu = u[:, sl]
        w = action.w[sl]
        mean = uu @ w
        second = np.einsum("na,ai,aj->nij", uu, w, w)
        G += 2.0 * c * (second - mean[:, :, None] * mean[:, None, :])
    return G


def orbit_volume_u(action, u):
    return np.sqrt(np.clip(np.linalg.det(orbit_gram_u(action, u)), 0.0, None))


def generators(action, p):
    """Columns X^{xi_1..d} followed by J X^{xi_1..d}, shape (2n, 2d)."""
    model = action.model
    check_chart(model, p)
    n, d = model.n, action.d
    out = np.zeros((2 * n, 2 * d))
    for a0, hs, asl in zip(p.charts, model.homogeneous_slices(), model.affine_slices()):
        idx = [a for a in range(hs.stop - hs.start) if a != a0]
        for j in range(d):
            wj = action.w[hs, j]
            jx = (wj[idx] - wj[a0]) * p.z[asl]
            x = -1j * jx
            out[2 * asl.start:2 * asl.stop:2, j] = x.real
            out[2 * asl.start + 1:2 * asl.stop:2, j] = x.imag
            out[2 * asl.start:2 * asl.stop:2, d + j] = jx.real
            out[2 * asl.start + 1:2 * asl.stop:2, d + j] = jx.imag
    return out


def _scaled(action, p, factors):
    model = action.model
    Zs = homogeneous(model, p)
    out = []
    for Z, hs in zip(Zs, model.homogeneous_slices()):
        Zn = Z * factors[hs]
        out.append(Zn)
    return out


def group_act(action, xi, p):
    """Real torus action of exp(xi), xi in the Xi basis."""
    phase = np.exp(-1j * (action.w @ np.asarray(xi, dtype=float)))
    return from_homogeneous(action.model, _scaled(action, p, phase), p.charts)


def complex_flow(action, xi, t, p):
    """Time-t flow of J X^xi: Z_a -> exp(t w_a(xi)) Z_a, then chart renormalisation."""
    expo = t * (action.w @ np.asarray(xi, dtype=float))
    model = action.model
    Zs = homogeneous(model, p)
    out = []
    for Z, hs in zip(Zs, model.homogeneous_slices()):
        e = expo[hs]
        live = Z != 0
        shift = e[live].max() if live.any() else 0.0
        out.append(Z * np.exp(e - shift))
    q = from_homogeneous(model, out, p.charts) if all(
        o[a] != 0 for o, a in zip(out, p.charts)) else from_homogeneous(model, out)
    return settle(model, q)


def flow_u(action, xi, u0, t=1.0):
    """Moment coordinates of the flowed point; closed form per factor."""
    u0 = np.atleast_2d(u0)
    expo = 2.0 * t * (action.w @ np.asarray(xi, dtype=float))
    out = np.empty_like(u0)
    for sl in action.model.homogeneous_slices():
        e = expo[sl] + np.log(np.where(u0[:, sl] > 0, u0[:, sl], 1.0))
        e = np.where(u0[:, sl] > 0, e, -np.inf)
        e = e - e.max(axis=1, keepdims=True)
        v = np.exp(e)
        out[:, sl] = v / v.sum(axis=1, keepdims=True)
    return out


def rho_closed(action, xi, u0):
    """rho(xi, x0) = sum_i c_i log S_i(xi) - 2 Lambda.xi with S_i = sum_a u_a e^{2 w_a}."""
    u0 = np.atleast_2d(u0)
    xi = np.asarray(xi, dtype=float)
    expo = 2.0 * (action.w @ xi)
    total = np.zeros(u0.shape[0])
    for (m, c), sl in zip(action.model.factors, action.model.homogeneous_slices()):
        uu = u0[:, sl]
        e = np.where(uu > 0, expo[sl] + np.log(np.where(uu > 0, uu, 1.0)), -np.inf)
        top = e.max(axis=1)
        total += c * (top + np.log(np.exp(e - top[:, None]).sum(axis=1)))
    return total - 2.0 * action.Lambda @ xi


def rho(action, xi, x0, tol=1e-10):
    """2 * int_0^1 phi_xi(e^{i s xi} x0) ds by adaptive Gauss-Kronrod."""
    u0 = moment_coordinates(action.model, x0)
    if np.max(np.abs(moment_u(action, u0))) > tol:
        raise PreconditionError("rho needs a base point on the zero set")
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        return 0.0

    def phi_along(s):
        return float(moment_u(action, flow_u(action, xi, u0, s))[0] @ xi)

    val, err = quad(phi_along, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    if err > 1e-9 * max(1.0, abs(val)):
        raise NumericError("line integral for rho did not converge", {"err": err})
    return 2.0 * val


def orbit_volume(action, x0):
    """sqrt det of the Gram matrix B(X^{xi_i}, X^{xi_j})."""
    md = metric_at(action.model, x0)
    X = generators(action, x0)[:, :action.d]
    gram = X.T @ md.B @ X
    det = np.linalg.det(gram)
    scale = max(1.0, np.trace(gram)) ** action.d
    if det <= 1e-20 * scale:
        raise DomainError("orbit is degenerate: the point has a nontrivial stabiliser")
    return float(np.sqrt(det))


def orbit_volume_quadrature(action, x0, n=32, h=1e-6):
    """Orbit volume by trapezoid quadrature over one period in each lattice direction.

    Tangents come from central differences of the group action; lengths from metric_at.
    """
    d = action.d
    grid = np.stack(np.meshgrid(*([np.arange(n) / n] * d), indexing="ij"), -1).reshape(-1, d)
    total = 0.0
    Xi = action.basis
    for theta in grid:
        p = group_act(action, Xi.T @ theta, x0)
        cols = []
        for j in range(d):
            e = Xi.T[:, j] * h
            zp = group_act(action, e, p).z
            zm = group_act(action, -e, p).z
            v = (zp - zm) / (2 * h)
            cols.append(np.stack([v.real, v.imag], -1).reshape(-1))
        T = np.array(cols).T
        B = metric_at(action.model, p).B
        total += np.sqrt(np.linalg.det(T.T @ B @ T))
    return total / len(grid)


@dataclass(frozen=True)
class ZeroSetRule:
    u: np.ndarray
    angles: np.ndarray
    weights: np.ndarray
    orbit_volumes: np.ndarray
    params: np.ndarray
    level: int
    torus_points: int
    model: object = field(repr=False)

    @property
    def reduced_weights(self):
        return self.weights / self.orbit_volumes

    @property
    def nodes(self):
        return [point_from_moment(self.model, u, a) for u, a in zip(self.u, self.angles)]

    def __len__(self):
        return len(self.weights)

    def integrate(self, values):
        return math.fsum(self.weights * np.asarray(values, dtype=float))


def slice_order(level):
    return 8 * 2 ** level


def zero_set_rule(action, model=None, level=2, torus_points=1, check=True, graded=True):
    """Gauss rule on the moment slice times trapezoid rules on the torus fibres.

    torus_points=1 is exact for integrands invariant under the full torus T^n.
    Grading clusters slice nodes at the polytope boundary, where densities such
    as I_k behave like dist^j log(dist).
    """
    if model is not None and model != action.model:
        raise StructuralError("action and model disagree")
    model = action.model
    if check:
        rep = validate_scenario(model, action, 0, structural_only=True)
        if not rep.passed:
            raise PreconditionError("zero-set rule needs a validated action: " + rep.summary())
    sl = action.slice
    t, wt = sl.rule(slice_order(level), graded=graded)
    u = action.u_from_mu(sl.mu(t))
    free, _, _ = action.layout
    n = model.n
    thetas = 2.0 * pi * np.arange(torus_points) / torus_points
    ang = np.stack(np.meshgrid(*([thetas] * n), indexing="ij"), -1).reshape(-1, n)
    angles = np.zeros((len(ang), model.n_homogeneous))
    angles[:, free] = ang
    vol = orbit_volume_u(action, u)
    w = wt * vol * action.slice_density * (2.0 * pi / torus_points) ** n
    U = np.repeat(u, len(ang), axis=0)
    A = np.tile(angles, (len(u), 1))
    W = np.repeat(w, len(ang))
    V = np.repeat(vol, len(ang))
    P = np.repeat(t, len(ang), axis=0)
    return ZeroSetRule(U, A, W, V, P, level, torus_points, model)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    required: bool
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    k: int
    corrected: bool
    checks: tuple
    half_weight: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks if c.required)

    def failed(self):
        return [c.name for c in self.checks if c.required and not c.passed]

    def summary(self):
        lines = []
        for c in self.checks:
            tag = "pass" if c.passed else ("FAIL" if c.required else "fail (not required)")
            lines.append(f"({c.name}) {tag}: {c.reason}")
        return "\n".join(lines)


def _int_minor_gcd(D, d):
    g = 0
    for rows in itertools.combinations(range(D.shape[0]), d):
        g = gcd(g, int(round(abs(np.linalg.det(D[list(rows)].astype(float))))))
        if g == 1:
            break
    return g


def half_weight(action):
    """Weight of the sqrt(K) lift induced by the Lie derivative: half the sum of all weights."""
    return tuple(Fraction(int(s), 2) for s in action.weights.sum(axis=1))


def validate_scenario(model, action, k, corrected=False, structural_only=False):
    if model != action.model:
        raise StructuralError("action and model disagree")
    checks = []
    sl = action.slice
    d = action.d
    nonempty = not sl.is_empty()
    checks.append(Check("a", nonempty, True,
                        "0 lies in the moment image" if nonempty else "the moment slice is empty"))
    regular = False
    free_ok = False
    if nonempty:
        verts_u = action.u_from_mu(sl.mu(sl.vertices))
        probe = verts_u
        if sl.has_interior() or sl.dim == 0:
            t, _ = sl.rule(2)
            probe = np.vstack([verts_u, action.u_from_mu(sl.mu(t))])
        eig = np.linalg.eigvalsh(orbit_gram_u(action, probe))
        regular = bool(np.all(eig[:, 0] > 1e-10 * max(1.0, eig.max())))
        checks.append(Check("b", regular, True,
                            "d Phi has full rank on the zero set" if regular
                            else "d Phi drops rank on the zero set"))
        bad = []
        for vu in verts_u:
            rows = []
            for hs in model.homogeneous_slices():
                sup = [a for a in range(hs.start, hs.stop) if vu[a] > 1e-12]
                for a in sup[1:]:
                    rows.append(action.weights[:, a] - action.weights[:, sup[0]])
            D = np.array(rows, dtype=np.int64).reshape(-1, d)
            if D.shape[0] < d or np.linalg.matrix_rank(D) < d or _int_minor_gcd(D, d) != 1:
                bad.append(np.round(vu, 12).tolist())
        free_ok = not bad
        checks.append(Check("c", free_ok, True,
                            "action is free on the zero set" if free_ok
                            else f"nontrivial stabiliser at zero-set vertex u={bad[0]}"))
    else:
        checks.append(Check("b", False, True, "no zero set to test"))
        checks.append(Check("c", False, True, "no zero set to test"))
    if not structural_only:
        klam = [k * x for x in action.shift]
        ok_d = all(x.denominator == 1 for x in klam)
        checks.append(Check("d", ok_d, not corrected,
                            "k*lambda is integral" if ok_d
                            else f"k*lambda = {[str(x) for x in klam]} is not integral; "
                                 "the action does not lift to the k-th power"))
        ok_e = all((m + 1) % 2 == 0 for m in model.dims)
        checks.append(Check("e", ok_e, corrected,
                            "each factor has even canonical degree m+1" if ok_e
                            else "some factor has odd m+1, so K has no square root"))
        hw = half_weight(action)
        comb = [kl - h for kl, h in zip(klam, hw)]
        degs_ok = all(k * c - Fraction(m + 1, 2) >= 0 for m, c in model.factors)
        ok_f = ok_e and degs_ok and all(x.denominator == 1 for x in comb)
        checks.append(Check("f", ok_f, corrected,
                            f"k*lambda - half weight = {[str(x) for x in comb]} is integral" if ok_f
                            else f"k*lambda - half weight = {[str(x) for x in comb]} is not "
                                 "integral (or degree negative); no lift to the corrected bundle "
                                 "at this parity of k"))
        return ValidationReport(int(k), bool(corrected), tuple(checks), half_weight(action))
    return ValidationReport(int(k), bool(corrected), tuple(checks), half_weight(action))
