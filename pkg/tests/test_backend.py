import subprocess
import sys

import numpy as np
import pytest

from gsquant import _backend, _kernels_py
from gsquant.integration import lie_ball_rule
from gsquant.torus_action import zero_set_rule


def kernel_inputs(action, n_lie=257):
    model = action.model
    u0 = np.ascontiguousarray(zero_set_rule(action, level=2).u)
    xis = lie_ball_rule(action.d, 1.5, n_lie // 2).nodes
    offsets = np.array([sl.start for sl in model.homogeneous_slices()] + [model.n_homogeneous],
                       dtype=np.int64)
    free, zero, fac = action.layout
    return (u0, xis @ action.w.T, action.w, offsets, np.array(model.scales, dtype=float),
            action.slice.N.reshape(model.n, -1), free, zero, fac)


@pytest.mark.skipif(_backend.BACKEND != "cython", reason="compiled kernel not built")
def test_compiled_matches_numpy(S1, S2):
    from gsquant import _kernels
    for m, a in (S1, S2):
        args = kernel_inputs(a)
        (ls_c, jac_c), (ls_p, jac_p) = _kernels.density_terms(*args), _kernels_py.density_terms(*args)
        assert ls_c.shape == ls_p.shape and jac_c.shape == jac_p.shape
        assert np.max(np.abs(ls_c - ls_p)) <= 1e-13 * max(1.0, np.max(np.abs(ls_p)))
        # the Jacobian loses about log10(1/min u) digits to cancellation near the polytope boundary
        umin = args[0].min(axis=1)
        tol = np.maximum(1e-12, 1e-15 / umin)[:, None]
        scale = np.max(np.abs(jac_p), axis=1, keepdims=True)
        assert np.all(np.abs(jac_c - jac_p) <= tol * scale)
        interior = umin > 1e-3
        assert interior.any()
        assert np.max(np.abs(jac_c - jac_p)[interior] / scale[interior]) < 1e-12


def test_pure_python_switch():
    code = ("from gsquant import _backend; from gsquant.densities import density_I_u;"
            "from gsquant.scenarios import s1; m, a = s1();"
            "print(_backend.BACKEND, repr(float(density_I_u(a, [[0.5, 0.5]], 16)[0])))")
    outs = {}
    for flag in ("1", "0"):
        p = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                           env={"GSQUANT_PURE_PYTHON": flag, "PATH": ""})
        assert p.returncode == 0, p.stderr
        name, val = p.stdout.split()
        outs[name] = float(val)
    assert "python" in outs
    if len(outs) == 2:
        assert outs["python"] == pytest.approx(outs["cython"], rel=1e-12)
