"""Products of projective spaces with scaled Fubini-Study forms.

Points live in affine charts, one chart per factor.  The chart of a factor
is the index of the homogeneous coordinate set to 1; the affine coordinates
are the remaining homogeneous coordinates in increasing index order.  Real
tangent vectors use the interleaved order (Re z1, Im z1, Re z2, ...).
"""
from dataclasses import dataclass
from math import factorial, pi

import numpy as np
from scipy.special import roots_legendre

from .errors import NumericError, StructuralError

SAFE_MODULUS = 10.0

# multiplication by i on a single complex coordinate, (x, y) -> (-y, x)
_J1 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class ModelManifold:
    """Product of CP^{m_i} with symplectic form sum c_i * omega_FS.

    omega_FS is normalised so that CP^1 has area 2*pi.
    """
    factors: tuple

    def __post_init__(self):
        facs = tuple((int(m), int(c)) for m, c in self.factors)
        if not facs:
            raise StructuralError("a model needs at least one factor")
        for m, c in facs:
            if m < 1:
                raise StructuralError(f"projective dimension must be >= 1, got {m}")
            if c < 1:
                raise StructuralError(f"scale must be a positive integer, got {c}")
        object.__setattr__(self, "factors", facs)

    @property
    def n(self):
        return sum(m for m, _ in self.factors)

    @property
    def dims(self):
        return tuple(m for m, _ in self.factors)

    @property
    def scales(self):
        return tuple(c for _, c in self.factors)

    @property
    def n_homogeneous(self):
        return sum(m + 1 for m, _ in self.factors)

    def homogeneous_slices(self):
        out, start = [], 0
        for m, _ in self.factors:
            out.append(slice(start, start + m + 1))
            start += m + 1
        return out

    def affine_slices(self):
        out, start = [], 0
        for m, _ in self.factors:
            out.append(slice(start, start + m))
            start += m
        return out

    def closed_form_volume(self):
        vol = 1.0
        for m, c in self.factors:
            vol *= (2.0 * pi * c) ** m / factorial(m)
        return vol


@dataclass(frozen=True)
class ChartPoint:
    charts: tuple
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "charts", tuple(int(a) for a in self.charts))
        z = np.array(self.z, dtype=complex).reshape(-1)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    def __eq__(self, other):
        return (isinstance(other, ChartPoint) and self.charts == other.charts
                and np.array_equal(self.z, other.z))

    def __hash__(self):
        return hash((self.charts, self.z.tobytes()))


@dataclass(frozen=True)
class MetricData:
    omega: np.ndarray
    J: np.ndarray
    B: np.ndarray
    liouville: float


def check_chart(model, p):
    if len(p.charts) != len(model.factors):
        raise StructuralError(
            f"point has {len(p.charts)} chart indices, model has {len(model.factors)} factors")
    if p.z.shape[0] != model.n:
        raise StructuralError(f"point has {p.z.shape[0]} coordinates, model needs {model.n}")
    for a, (m, _) in zip(p.charts, model.factors):
        if not 0 <= a <= m:
            raise StructuralError(f"chart index {a} outside 0..{m}")


def homogeneous(model, p):
    """Homogeneous coordinates of p, one array per factor, chart coordinate = 1."""
    check_chart(model, p)
    out = []
    for a0, sl in zip(p.charts, model.affine_slices()):
        out.append(np.insert(p.z[sl], a0, 1.0 + 0j))
    return out


def from_homogeneous(model, Zs, charts=None):
    """Chart point from homogeneous coordinates.

    Unless charts are given, each factor uses its largest-modulus coordinate.
    """
    if len(Zs) != len(model.factors):
        raise StructuralError("one homogeneous vector per factor is required")
    zs, picked = [], []
    for i, (Z, (m, _)) in enumerate(zip(Zs, model.factors)):
        Z = np.asarray(Z, dtype=complex)
        if Z.shape != (m + 1,):
            raise StructuralError(f"factor {i} needs {m + 1} homogeneous coordinates")
        a0 = int(np.argmax(np.abs(Z))) if charts is None else int(charts[i])
        if Z[a0] == 0:
            raise StructuralError(f"chart coordinate {a0} of factor {i} vanishes")
        zs.append(np.delete(Z / Z[a0], a0))
        picked.append(a0)
    return ChartPoint(tuple(picked), np.concatenate(zs))


def rechart(model, p, charts):
    return from_homogeneous(model, homogeneous(model, p), charts)


def settle(model, p):
    """Switch to the largest-modulus chart in any factor that left |z| <= 10."""
    zs = homogeneous(model, p)
    charts = list(p.charts)
    for i, (sl, Z) in enumerate(zip(model.affine_slices(), zs)):
        if np.any(np.abs(p.z[sl]) > SAFE_MODULUS):
            charts[i] = int(np.argmax(np.abs(Z)))
    if tuple(charts) == p.charts:
        return p
    return from_homogeneous(model, zs, charts)


def moment_coordinates(model, p):
    """|Z_a|^2 / |Z|^2 per factor, concatenated over all homogeneous coordinates."""
    out = []
    for Z in homogeneous(model, p):
        a2 = np.abs(Z) ** 2
        out.append(a2 / a2.sum())
    return np.concatenate(out)


def point_from_moment(model, u, angles=None, charts=None):
    """Point with |Z_a|^2/|Z|^2 = u_a and arg Z_a = angles_a (full homogeneous layout)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n_homogeneous,):
        raise StructuralError(f"need {model.n_homogeneous} moment coordinates")
    if angles is None:
        angles = np.zeros_like(u)
    Z = np.sqrt(np.clip(u, 0.0, None)) * np.exp(1j * np.asarray(angles, dtype=float))
    return from_homogeneous(model, [Z[sl] for sl in model.homogeneous_slices()], charts)


def _realify(G):
    """Real 2m x 2m matrix of v, w -> Re(v^H G w) in interleaved order."""
    m = G.shape[0]
    B = np.empty((2 * m, 2 * m))
    B[0::2, 0::2] = G.real
    B[0::2, 1::2] = -G.imag
    B[1::2, 0::2] = G.imag
    B[1::2, 1::2] = G.real
    return B


def hermitian_metric(c, z):
    """Hermitian matrix G with B(v, w) = Re(v^H G w) for c * omega_FS on CP^m."""
    z = np.asarray(z, dtype=complex)
    q = 1.0 + np.vdot(z, z).real
    return 2.0 * c * (q * np.eye(len(z)) - np.outer(z, z.conj())) / q ** 2


def factor_liouville(m, c, z):
    q = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)
    return (2.0 * c) ** m / q ** (m + 1)


def complex_structure(n):
    return np.kron(np.eye(n), _J1)


def metric_at(model, p):
    check_chart(model, p)
    blocks, dens = [], 1.0
    for (m, c), sl in zip(model.factors, model.affine_slices()):
        z = p.z[sl]
        blocks.append(_realify(hermitian_metric(c, z)))
        dens *= factor_liouville(m, c, z)
    n = model.n
    B = np.zeros((2 * n, 2 * n))
    start = 0
    for blk in blocks:
        s = blk.shape[0]
        B[start:start + s, start:start + s] = blk
        start += s
    J = complex_structure(n)
    omega = -B @ J
    return MetricData(omega=omega, J=J, B=B, liouville=float(dens))


def liouville_at(model, p):
    check_chart(model, p)
    val = 1.0
    for (m, c), sl in zip(model.factors, model.affine_slices()):
        val *= factor_liouville(m, c, p.z[sl])
    return float(val)


def _factor_chart_volume(m, c, n_radial):
    """Chart integral of the Liouville density of one factor over C^m.

    The density depends on R = |z| only; with R = tan(s) the radial integrand
    is a trigonometric polynomial in s, so Gauss-Legendre converges spectrally.
    """
    x, w = roots_legendre(n_radial)
    s = 0.25 * pi * (x + 1.0)
    R = np.tan(s)
    jac = 0.25 * pi * w / np.cos(s) ** 2
    sphere = 2.0 * pi ** m / factorial(m - 1)
    dens = factor_liouville(m, c, R[:, None])
    return float(np.sum(dens * R ** (2 * m - 1) * jac) * sphere)


def total_volume(model, level=3, rtol=1e-8):
    """Quadrature of the Liouville density over M in an affine chart per factor."""
    def at(lv):
        n_rad = 16 * 2 ** lv
        vol = 1.0
        for m, c in model.factors:
            vol *= _factor_chart_volume(m, c, n_rad)
        return vol

    coarse, fine = at(level), at(level + 1)
    if abs(fine - coarse) > rtol * abs(fine):
        raise NumericError("total volume did not converge",
                           {"coarse": coarse, "fine": fine, "level": level})
    return fine
