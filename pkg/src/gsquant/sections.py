"""Holomorphic sections of l^k and l^k (x) sqrt(K) as monomial coefficient vectors.

A multi-index lists the exponents of all homogeneous coordinates, factor by
factor.  Uncorrected sections have degree k*c_i on factor i; corrected ones
have degree k*c_i - (m_i+1)/2, the half-canonical twist of CP^{m_i}.
"""
from dataclasses import dataclass
from fractions import Fraction
import itertools
from math import comb

import numpy as np
from scipy.integrate import quad
from scipy.linalg import null_space

from .errors import DomainError, PreconditionError, StructuralError
from .toric_geometry import (check_chart, homogeneous, liouville_at, metric_at,
                             moment_coordinates, rechart)
from .torus_action import (complex_flow, flow_u, generators, group_act, half_weight,
                           moment, rho, validate_scenario)


def section_degrees(model, k, corrected):
    degs = []
    for m, c in model.factors:
        D = Fraction(k * c) - (Fraction(m + 1, 2) if corrected else 0)
        if D.denominator != 1 or D < 0:
            raise StructuralError(
                f"degree {D} on a CP^{m} factor is not a nonnegative integer")
        degs.append(int(D))
    return tuple(degs)


def _compositions(total, parts):
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, out = -1, []
        for c in cut:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield tuple(out)


def all_multi_indices(model, k, corrected=False):
    degs = section_degrees(model, k, corrected)
    per = [sorted(_compositions(D, m + 1)) for D, (m, _) in zip(degs, model.factors)]
    return [sum(combo, ()) for combo in itertools.product(*per)]


class _Section:
    corrected = False

    def __init__(self, model, k, coefficients):
        self.model = model
        self.k = int(k)
        degs = section_degrees(model, self.k, self.corrected)
        items = sorted((tuple(int(x) for x in idx), complex(v)) for idx, v in dict(coefficients).items())
        for idx, _ in items:
            if len(idx) != model.n_homogeneous:
                raise StructuralError(f"multi-index {idx} has the wrong length")
            for D, sl in zip(degs, model.homogeneous_slices()):
                if sum(idx[sl]) != D or min(idx[sl]) < 0:
                    raise StructuralError(f"multi-index {idx} does not have degrees {degs}")
        self.indices = tuple(i for i, _ in items)
        self.coefficients = np.array([v for _, v in items], dtype=complex)
        self._exp = np.array(self.indices, dtype=float).reshape(-1, model.n_homogeneous)

    @classmethod
    def monomial(cls, model, k, index, coefficient=1.0):
        return cls(model, k, {tuple(index): coefficient})

    @property
    def degrees(self):
        return section_degrees(self.model, self.k, self.corrected)

    def polynomial(self, Zs):
        """Value of the homogeneous polynomial at concatenated homogeneous coordinates."""
        Z = np.concatenate(Zs)
        if not len(self.indices):
            return 0j
        return complex(np.sum(self.coefficients * np.prod(Z[None, :] ** self._exp, axis=1)))

    def is_zero(self):
        return not np.any(self.coefficients)

    def __repr__(self):
        kind = "CorrectedSection" if self.corrected else "MonomialSection"
        return f"{kind}(k={self.k}, terms={len(self.indices)})"


class MonomialSection(_Section):
    corrected = False


class CorrectedSection(_Section):
    corrected = True


@dataclass(frozen=True)
class HalfFormValue:
    """nu = root * sqrt(dz_1 ^ ... ^ dz_n) in the chart named by `charts`."""
    root: complex
    charts: tuple

    @property
    def square(self):
        return self.root ** 2


def orientation_constant(n):
    return 1j ** n * (-1) ** (n * (n - 1) // 2)


def _dz(v):
    """dz_l of complexified real vectors (columns), shape (n, ncols)."""
    v = np.asarray(v, dtype=complex)
    return v[0::2] + 1j * v[1::2]


def chart_half_form_norm_sq(model, p):
    """(sigma, sigma)^2 for sigma^2 = dz_1 ^ ... ^ dz_n, from the top form on the real frame."""
    n = model.n
    E = np.eye(2 * n)
    rows = np.vstack([_dz(E), np.conj(_dz(E))])
    top = np.linalg.det(rows.T)
    val = orientation_constant(n) * top / liouville_at(model, p)
    return val


def half_form_pairing(nu, mu, p, model):
    if nu.charts != p.charts or mu.charts != p.charts:
        raise StructuralError("half-forms must be given in the chart of the point")
    sq = chart_half_form_norm_sq(model, p)
    return nu.root * np.conj(mu.root) * np.sqrt(sq.real)


def _frame_factor(s, p):
    """|p(z)|^2 times the l^k frame norm in the chart of p."""
    model = s.model
    Zs = homogeneous(model, p)
    val = abs(s.polynomial(Zs)) ** 2
    for Z, (m, c) in zip(Zs, model.factors):
        val *= np.vdot(Z, Z).real ** (-s.k * c)
    return val


def magnitude(s, p):
    check_chart(s.model, p)
    val = _frame_factor(s, p)
    if s.corrected:
        sigma = HalfFormValue(1.0, p.charts)
        val *= half_form_pairing(sigma, sigma, p, s.model).real
    return float(val)


def magnitude_closed(s, u):
    """Closed form on moment coordinates for sections with one monomial term."""
    if len(s.indices) != 1:
        raise StructuralError("closed-form magnitude needs a single monomial")
    u = np.atleast_2d(u)
    a = s._exp[0]
    with np.errstate(divide="ignore"):
        logs = np.where(a > 0, a * np.log(np.where(u > 0, u, 1.0)), 0.0)
        logs = np.where((a > 0) & (u <= 0), -np.inf, logs)
    val = abs(s.coefficients[0]) ** 2 * np.exp(logs.sum(axis=1))
    if s.corrected:
        for m, c in s.model.factors:
            val = val * float(c) ** (-m / 2)
    return val


def lattice_weight(action, index):
    return tuple(int(x) for x in action.weights @ np.array(index, dtype=np.int64))


def invariant_basis(action, k, corrected=False):
    model = action.model
    rep = validate_scenario(model, action, k, structural_only=True)
    if not rep.passed:
        raise PreconditionError("invariant basis needs a validated action: " + rep.summary())
    try:
        candidates = all_multi_indices(model, k, corrected)
    except StructuralError:
        return []
    target = [k * x for x in action.shift]
    if corrected:
        target = [t - h for t, h in zip(target, half_weight(action))]
    if any(t.denominator != 1 for t in target):
        return []
    target = np.array([int(t) for t in target], dtype=np.int64)
    E = np.array(candidates, dtype=np.int64)
    ok = np.all(E @ action.weights.T == target, axis=1)
    return [candidates[i] for i in np.nonzero(ok)[0]]


def is_invariant(s, action):
    target = [s.k * x for x in action.shift]
    if s.corrected:
        target = [t - h for t, h in zip(target, half_weight(action))]
    for idx, v in zip(s.indices, s.coefficients):
        if v != 0 and [Fraction(x) for x in lattice_weight(action, idx)] != target:
            return False
    return True


def divergence_ratio(action, xi, p):
    """L_{J X^xi} eps / eps at p: sum_i 2 sum_a w_a - 2 (m_i+1) <w>_u."""
    u = moment_coordinates(action.model, p)
    return float(divergence_u(action, xi, u)[0])


def divergence_u(action, xi, u):
    u = np.atleast_2d(u)
    wx = action.w @ np.asarray(xi, dtype=float)
    out = np.zeros(u.shape[0])
    for (m, _), sl in zip(action.model.factors, action.model.homogeneous_slices()):
        out += 2.0 * wx[sl].sum() - 2.0 * (m + 1) * (u[:, sl] @ wx[sl])
    return out


def half_divergence_integral(action, xi, x0):
    """int_0^1 L_{JX} eps / (2 eps) along the flow, by adaptive quadrature."""
    u0 = moment_coordinates(action.model, x0)
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        return 0.0
    val, _ = quad(lambda s: float(divergence_u(action, xi, flow_u(action, xi, u0, s))[0]),
                  0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 0.5 * val


def predicted_magnitude_flow(s, xi, x0, action):
    if not is_invariant(s, action):
        raise PreconditionError("the magnitude law needs an invariant section")
    if np.max(np.abs(moment(action, x0))) > 1e-10:
        raise PreconditionError("base point is not on the zero set")
    expo = s.k * rho(action, xi, x0)
    if s.corrected:
        expo += half_divergence_integral(action, xi, x0)
    return magnitude(s, x0) * float(np.exp(-expo))


def q_residual(action, s, xi, p, h=1e-6):
    """(nabla_{X^xi} - i k phi_xi) s at p, as a coefficient against the chart frame e^k.

    X f comes from central differences along the real action; the connection term
    -(i/2) JX(log h^k) from differences along the complexified flow.
    """
    model = action.model
    xi = np.asarray(xi, dtype=float)

    def f_at(q):
        Z = homogeneous(model, q)
        return s.polynomial(Z)

    def logh(q):
        Zs = homogeneous(model, q)
        return sum(-s.k * c * np.log(np.vdot(Z, Z).real) for Z, (_, c) in zip(Zs, model.factors))

    charts = p.charts
    fwd = rechart(model, group_act(action, h * xi, p), charts)
    bwd = rechart(model, group_act(action, -h * xi, p), charts)
    Xf = (f_at(fwd) - f_at(bwd)) / (2 * h)
    up = rechart(model, complex_flow(action, xi, h, p), charts)
    dn = rechart(model, complex_flow(action, xi, -h, p), charts)
    JXlogh = (logh(up) - logh(dn)) / (2 * h)
    f = f_at(p)
    phi = float(moment(action, p) @ xi)
    return Xf + f * (-0.5j) * JXlogh - 1j * s.k * phi * f


def _pfaffian(M):
    n = M.shape[0]
    if n == 0:
        return 1.0
    if n % 2:
        return 0.0
    total = 0.0
    for j in range(1, n):
        if M[0, j] == 0:
            continue
        rest = [i for i in range(1, n) if i != j]
        total = total + (-1) ** (j - 1) * M[0, j] * _pfaffian(M[np.ix_(rest, rest)])
    return total


def _shuffles(q):
    idx = range(2 * q)
    for first in itertools.combinations(idx, q):
        second = tuple(i for i in idx if i not in first)
        perm = first + second
        inv = sum(1 for a in range(2 * q) for b in range(a + 1, 2 * q) if perm[a] > perm[b])
        yield first, second, (-1) ** inv


def horizontal_frame(action, x0):
    """Real basis of the B-orthogonal complement of span{X^j, J X^j}, plus the data used."""
    md = metric_at(action.model, x0)
    G = generators(action, x0)
    d = action.d
    if np.linalg.matrix_rank(G[:, :d], tol=1e-10) < d:
        raise DomainError("generators are degenerate at this point")
    H = null_space((md.B @ G).T)
    return md, G, H


def descent_square(action, x0, root=1.0):
    """(B nu, B nu)^2 for nu = root * chart half-form, by contraction with Z^j = pi_+ X^j."""
    model = action.model
    n, d = model.n, action.d
    md, G, H = horizontal_frame(action, x0)
    X = G[:, :d]
    Z = 0.5 * (X - 1j * (md.J @ X))
    dzZ = _dz(Z)
    q = n - d
    sq = root ** 2

    def alpha(ws):
        cols = np.hstack([dzZ, _dz(np.asarray(ws).reshape(2 * n, -1))]) if q else dzZ
        return sq * np.linalg.det(cols) if n else sq

    if q == 0:
        wedge = abs(alpha(np.zeros((2 * n, 0)))) ** 2
        vol = 1.0
    else:
        wedge = 0j
        for first, second, sign in _shuffles(q):
            wedge += sign * alpha(H[:, first]) * np.conj(alpha(H[:, second]))
        omH = H.T @ md.omega @ H
        vol = _pfaffian(omH)
    val = orientation_constant(q) * wedge / vol
    return val


def descend_contract(r, x0, action):
    """|B_k r|^2 at [x0] from the multilinear contraction."""
    if not r.corrected:
        raise StructuralError("descend_contract acts on corrected sections")
    if np.max(np.abs(moment(action, x0))) > 1e-10:
        raise PreconditionError("base point is not on the zero set")
    if r.is_zero():
        return 0.0
    val = descent_square(action, x0)
    return float(_frame_factor(r, x0) * np.sqrt(val.real))


def technical_contraction(action, x0):
    """Both sides of iota(^Z) iota(^Zbar) eps = 2^{-d} vol^2 omega^{n-d}/(n-d)! on the horizontal frame.

    Returns (lhs, rhs) as complex numbers; they agree up to the unit phase i^d (-1)^{d(d-1)/2}.
    """
    d = action.d
    md, G, H = horizontal_frame(action, x0)
    X = G[:, :d]
    Z = 0.5 * (X - 1j * (md.J @ X))
    vecs = np.hstack([Z, np.conj(Z), H])
    lhs = _pfaffian(vecs.T @ md.omega @ vecs)
    vol = np.sqrt(np.linalg.det(X.T @ md.B @ X))
    rhs = 2.0 ** (-d) * vol ** 2 * _pfaffian(H.T @ md.omega @ H)
    return lhs, rhs


def export_section(s, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        kind = "corrected" if s.corrected else "plain"
        fh.write(f"# k={s.k} kind={kind}\n")
        for idx, v in zip(s.indices, s.coefficients):
            fh.write(" ".join(str(x) for x in idx) + f" {float(v.real)!r} {float(v.imag)!r}\n")


def import_section(path, model):
    k, kind, coeffs = None, None, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "k":
                        k = int(val)
                    elif key == "kind":
                        kind = val
                continue
            parts = line.split()
            idx = tuple(int(x) for x in parts[:-2])
            coeffs[idx] = complex(float(parts[-2]), float(parts[-1]))
    if k is None or kind not in ("plain", "corrected"):
        raise StructuralError("section file lacks a '# k=.. kind=..' header")
    cls = CorrectedSection if kind == "corrected" else MonomialSection
    return cls(model, k, coeffs)


def count_monomials(m, D):
    return comb(D + m, m)
