"""Moment-polytope slices and Gauss rules on simplices."""
import itertools
from functools import lru_cache

import numpy as np
from scipy.spatial import Delaunay
from scipy.special import roots_jacobi, roots_legendre

from .errors import DomainError


@lru_cache(maxsize=None)
def simplex_rule(p, order):
    """Collapsed-coordinate Gauss rule on {x >= 0, sum x <= 1} in R^p.

    Exact for polynomials of total degree <= 2*order - 1.
    """
    if p == 0:
        return np.zeros((1, 0)), np.ones(1)
    axes = []
    for i in range(p):
        alpha = p - 1 - i
        x, w = roots_jacobi(order, alpha, 0.0) if alpha else roots_legendre(order)
        axes.append((0.5 * (x + 1.0), w * 0.5 ** (alpha + 1)))
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrid = np.ones_like(grids[0])
    for i, (_, w) in enumerate(axes):
        shape = [1] * p
        shape[i] = order
        wgrid = wgrid * w.reshape(shape)
    s = np.stack([g.ravel() for g in grids], axis=-1)
    pts = np.empty_like(s)
    rest = np.ones(s.shape[0])
    for i in range(p):
        pts[:, i] = rest * s[:, i]
        rest = rest * (1.0 - s[:, i])
    pts.setflags(write=False)
    w = wgrid.ravel()
    w.setflags(write=False)
    return pts, w


def _graded_axis(order, alpha, p_grade):
    """Gauss-Legendre in sigma with s = psi(sigma) clustering nodes at both ends.

    psi(sigma) = sigma^q / (sigma^q + (1 - sigma)^q); the weight (1 - s)^alpha is explicit.
    """
    x, w = roots_legendre(order)
    sig = 0.5 * (x + 1.0)
    a, b = sig ** p_grade, (1.0 - sig) ** p_grade
    s = a / (a + b)
    ds = p_grade * sig ** (p_grade - 1) * (1.0 - sig) ** (p_grade - 1) / (a + b) ** 2
    return s, 0.5 * w * ds * (1.0 - s) ** alpha


@lru_cache(maxsize=None)
def graded_simplex_rule(p, order, p_grade=4):
    """Collapsed-coordinate rule with nodes graded towards every face of the simplex.

    Suited to integrands with dist^j log(dist) behaviour at the boundary.
    """
    if p == 0:
        return np.zeros((1, 0)), np.ones(1)
    axes = [_graded_axis(order, p - 1 - i, p_grade) for i in range(p)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrid = np.ones_like(grids[0])
    for i, (_, w) in enumerate(axes):
        shape = [1] * p
        shape[i] = order
        wgrid = wgrid * w.reshape(shape)
    s = np.stack([g.ravel() for g in grids], axis=-1)
    pts = np.empty_like(s)
    rest = np.ones(s.shape[0])
    for i in range(p):
        pts[:, i] = rest * s[:, i]
        rest = rest * (1.0 - s[:, i])
    pts.setflags(write=False)
    w = wgrid.ravel()
    w.setflags(write=False)
    return pts, w


def map_simplex(vertices, pts, weights):
    """Push a unit-simplex rule onto the simplex with the given vertices."""
    v = np.asarray(vertices, dtype=float)
    E = (v[1:] - v[0]).T
    vol = abs(np.linalg.det(E)) if E.shape[0] == E.shape[1] else 1.0
    return v[0] + pts @ E.T, weights * vol


class Slice:
    """The set {mu = base + N t : G t <= h} in parameter coordinates t."""

    def __init__(self, base, N, G, h, tol=1e-12):
        self.base = np.asarray(base, dtype=float)
        self.N = np.asarray(N, dtype=float).reshape(len(self.base), -1)
        self.G = np.asarray(G, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.tol = tol
        self.vertices = self._enumerate()

    @property
    def dim(self):
        return self.N.shape[1]

    def _enumerate(self):
        p = self.dim
        if p == 0:
            ok = np.all(self.h >= -self.tol)
            return np.zeros((1, 0)) if ok else np.zeros((0, 0))
        found = []
        for rows in itertools.combinations(range(len(self.h)), p):
            Gs = self.G[list(rows)]
            if abs(np.linalg.det(Gs)) < 1e-12:
                continue
            t = np.linalg.solve(Gs, self.h[list(rows)])
            if np.all(self.G @ t <= self.h + 1e-10):
                if not any(np.allclose(t, q, atol=1e-10) for q in found):
                    found.append(t)
        if not found:
            return np.zeros((0, p))
        return np.array(sorted(found, key=lambda q: tuple(np.round(q, 12))))

    def is_empty(self):
        return self.vertices.shape[0] == 0

    def has_interior(self):
        return self.vertices.shape[0] > self.dim

    def cells(self):
        """Simplices (as vertex arrays) covering the slice."""
        p = self.dim
        V = self.vertices
        if V.shape[0] == 0:
            raise DomainError("the moment slice is empty")
        if p == 0:
            return [V]
        if p == 1:
            return [np.array([[V[:, 0].min()], [V[:, 0].max()]])]
        if V.shape[0] <= p:
            raise DomainError("the moment slice has empty interior")
        tri = Delaunay(V)
        return [V[s] for s in tri.simplices]

    def rule(self, order, graded=False):
        """Nodes t and weights for Lebesgue measure d^p t on the slice."""
        p = self.dim
        if p == 0:
            return np.zeros((1, 0)), np.ones(1)
        pts, w = graded_simplex_rule(p, order) if graded else simplex_rule(p, order)
        ts, ws = [], []
        for cell in self.cells():
            t, wt = map_simplex(cell, pts, w)
            ts.append(t)
            ws.append(wt)
        return np.concatenate(ts), np.concatenate(ws)

    def mu(self, t):
        return self.base + np.atleast_2d(t) @ self.N.T
