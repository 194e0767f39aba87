"""The densities I_k and J_k, their Laplace predictions and limits."""
from dataclasses import dataclass, field
from math import comb, pi

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, PreconditionError, StructuralError
from .integration import lie_ball_rule, lie_integrand, lie_panel, tail_monitor
from .toric_geometry import metric_at, moment_coordinates, point_from_moment
from .torus_action import generators, moment_u, orbit_gram_u, orbit_volume_u

TAIL_TARGET = 1e-12
LIE_LEVEL = {1: 127, 2: 47, 3: 23}


@dataclass(frozen=True)
class ObservableFunction:
    """A G-invariant function given by a formula in moment coordinates."""
    tag: str
    evaluator: object = field(repr=False, compare=False)

    def __call__(self, u, angles=None):
        return self.evaluator(np.asarray(u))


def observable(tag, model=None):
    if tag == "one":
        return ObservableFunction("one", lambda u: np.ones(u.shape[:-1]))
    if tag.startswith("const:"):
        c = float(tag.split(":", 1)[1])
        return ObservableFunction(tag, lambda u: np.full(u.shape[:-1], c))
    if tag == "moment_sum":
        if model is None:
            raise StructuralError("moment_sum needs the model layout")
        free = [a for sl in model.homogeneous_slices() for a in range(sl.start + 1, sl.stop)]
        return ObservableFunction(tag, lambda u: u[..., free].sum(axis=-1))
    if tag.startswith("u:"):
        a = int(tag.split(":", 1)[1])
        return ObservableFunction(tag, lambda u: u[..., a])
    raise StructuralError(f"unknown observable tag {tag!r}")


def laplace_leading(rho_vals, sigma_vals, H, d, k):
    """(2 pi / k)^{d/2} |det H|^{-1/2} sigma at the minimiser of rho."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape != (d, d):
        raise StructuralError("Hessian shape does not match d")
    if not np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max())) or \
            np.linalg.eigvalsh(H).min() <= 0:
        raise DomainError("Hessian is not positive definite")
    rho_vals = np.atleast_1d(rho_vals)
    i = int(np.argmin(rho_vals))
    if abs(rho_vals[i]) > 1e-8:
        raise PreconditionError("rho must vanish at its minimiser")
    sigma0 = float(np.atleast_1d(sigma_vals)[i])
    return (2.0 * pi / k) ** (d / 2) * abs(np.linalg.det(H)) ** -0.5 * sigma0


def hessian_rho(action, model, x0):
    """2 B(J X^i, J X^j) from the generators and the metric at x0."""
    if np.max(np.abs(moment_u(action, moment_coordinates(model, x0)))) > 1e-10:
        raise PreconditionError("x0 is not on the zero set")
    md = metric_at(model, x0)
    JX = generators(action, x0)[:, action.d:]
    return 2.0 * JX.T @ md.B @ JX


def hessian_rho_u(action, u):
    return 2.0 * orbit_gram_u(action, u)


_RADIUS_CACHE = {}


def _key(action, k, corrected):
    return (action.model.factors, action.weights.tobytes(), action.shift,
            action.basis.tobytes(), float(k), bool(corrected))


def truncation_radius(action, k, corrected=False, probe_u=None):
    """R(k) = max(R_fit, sqrt(40 / (k lambda_min(H)))) over a probe set of zero-set points."""
    key = _key(action, k, corrected) if probe_u is None else None
    if key is not None and key in _RADIUS_CACHE:
        return _RADIUS_CACHE[key]
    if probe_u is None:
        sl = action.slice
        probe_u = action.u_from_mu(sl.mu(sl.vertices))
        if sl.dim:
            t, _ = sl.rule(2)
            probe_u = np.vstack([probe_u, action.u_from_mu(sl.mu(t))])
    probe_u = np.atleast_2d(probe_u)
    lam = np.linalg.eigvalsh(hessian_rho_u(action, probe_u))[:, 0].min()
    if lam <= 0:
        raise DomainError("Hessian of rho degenerates on the probe set")
    R_gauss = float(np.sqrt(40.0 / (k * lam)))
    R_fit = 0.0
    for u in probe_u:
        est = tail_monitor(action, action.model, point_from_moment(action.model, u), k, R_gauss,
                           corrected=corrected)
        R_fit = max(R_fit, est.radius_for(TAIL_TARGET, k))
    R = max(R_fit, R_gauss)
    if key is not None:
        _RADIUS_CACHE[key] = R
    return R


def _lie_integral(action, u, k, corrected, f, R, level):
    d = action.d
    R = R if R is not None else truncation_radius(action, k, corrected)
    if level is None:
        rule = lie_ball_rule(d, R, LIE_LEVEL.get(d, 23), panel=lie_panel(action))
    else:
        rule = lie_ball_rule(d, R, level)
    g = lie_integrand(action, u, rule.nodes, k, corrected, f)
    return g @ rule.weights


def _check_nodes(action, u):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if np.max(np.abs(moment_u(action, u))) > 1e-9:
        raise PreconditionError("density nodes must lie on the zero set")
    return u


def density_I_u(action, u, k, f=None, R=None, level=None):
    u = _check_nodes(action, u)
    vol = orbit_volume_u(action, u)
    return vol * (k / (2.0 * pi)) ** (action.d / 2) * _lie_integral(action, u, k, False, f, R, level)


def density_J_u(action, u, k, f=None, R=None, level=None):
    u = _check_nodes(action, u)
    d = action.d
    return (k / (2.0 * pi)) ** (d / 2) * 2.0 ** (d / 2) * _lie_integral(action, u, k, True, f, R, level)


def density_I(action, model, x0, k, f=None, **kw):
    return float(density_I_u(action, moment_coordinates(model, x0), k, f, **kw)[0])


def density_J(action, model, x0, k, f=None, **kw):
    return float(density_J_u(action, moment_coordinates(model, x0), k, f, **kw)[0])


def s1_density_oracle(k):
    """Closed-form I_k on the S1 scenario from exact monomial norms (even k)."""
    return (k / (2.0 * pi)) ** 0.5 * 2.0 * pi * 2.0 ** k / ((k + 1) * comb(k, k // 2))


def s1_corrected_oracle(k):
    """Closed-form J_k on the S1 scenario; Gamma functions extend it to every k."""
    logval = (gammaln((k + 1) / 2.0) * 2 - gammaln(k + 1.0) + (k - 1) * np.log(2.0))
    # ||r||^2 = (k/2pi)^{1/2} 2 pi Gamma(a+1)^2/Gamma(k+1), |B r|^2 = pi 2^{-(k-1)}
    return (k / (2.0 * pi)) ** 0.5 * 2.0 * np.exp(logval)


@dataclass
class DensityReport:
    scenario: str
    ks: list
    node_u: np.ndarray
    orbit_volumes: np.ndarray
    I: np.ndarray
    J: np.ndarray
    limit_I: np.ndarray
    limit_J: np.ndarray
    max_dev_I: np.ndarray
    max_dev_J: np.ndarray
    slope_I: float
    slope_J: float
    moment_layout: list = field(default_factory=list)

    def rows(self):
        """CSV rows: scenario, node, moment coordinates, k, I_k, J_k, limit, max deviation at k."""
        out = []
        for ki, k in enumerate(self.ks):
            for j in range(len(self.node_u)):
                out.append([self.scenario, j] + [float(x) for x in self.node_u[j, self.moment_layout]]
                           + [k, float(self.I[j, ki]), float(self.J[j, ki]),
                              float(self.limit_I[j]), float(self.max_dev_I[ki])])
        return out


def _slope(ks, dev):
    ks = np.asarray(ks, dtype=float)
    dev = np.asarray(dev, dtype=float)
    ok = dev > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ks[ok]), np.log(dev[ok]), 1)[0])


def density_report(action, model, nodes_u, ks, I, J, scenario="", fval=None):
    """Assemble a DensityReport from I_k, J_k tables of shape (nodes, len(ks))."""
    vol = orbit_volume_u(action, nodes_u)
    fval = np.ones(len(nodes_u)) if fval is None else fval
    lim_I = 2.0 ** (-action.d / 2) * vol * fval
    lim_J = fval
    dev_I = np.max(np.abs(I - lim_I[:, None]), axis=0)
    dev_J = np.max(np.abs(J - lim_J[:, None]), axis=0)
    layout = [a for sl in model.homogeneous_slices() for a in range(sl.start + 1, sl.stop)]
    return DensityReport(scenario, list(ks), nodes_u, vol, I, J, lim_I, lim_J, dev_I, dev_J,
                         _slope(ks, dev_I), _slope(ks, dev_J), layout)


def density_limits(action, model, nodes_u, ks, scenario="", f=None):
    nodes_u = _check_nodes(action, nodes_u)
    I = np.column_stack([density_I_u(action, nodes_u, k, f) for k in ks])
    J = np.column_stack([density_J_u(action, nodes_u, k, f) for k in ks])
    return density_report(action, model, nodes_u, ks, I, J, scenario,
                          None if f is None else f(nodes_u))
