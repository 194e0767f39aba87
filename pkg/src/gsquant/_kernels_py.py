"""NumPy implementation of the toric flow kernel."""
import numpy as np


def density_terms(u0, wq, wbasis, offsets, scales, Nmat, free, zero, fac):
    """Per (base point, Lie-algebra node): log S_i and |det[d mu'/d xi | (d mu'/d mu) N]|.

    u0: (N, A) moment coordinates; wq: (Q, A) flow exponents w_a(xi_q);
    wbasis: (A, d) weights per basis vector; Nmat: (n, p) slice directions.
    """
    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    wq = np.ascontiguousarray(wq, dtype=np.float64)
    nb, A = u0.shape
    nq = wq.shape[0]
    F = len(offsets) - 1
    d = wbasis.shape[1]
    n = len(free)
    logS = np.empty((nb, nq, F))
    uf = np.empty((nb, nq, A))
    r = np.empty((nb, nq, A))
    for i in range(F):
        lo, hi = offsets[i], offsets[i + 1]
        e2 = 2.0 * wq[None, :, lo:hi]
        live = u0[:, None, lo:hi] > 0
        top = np.where(live, e2, -np.inf).max(axis=2)
        s = np.sum(np.where(live, u0[:, None, lo:hi] * np.exp(e2 - top[..., None]), 0.0), axis=2)
        ls = top + np.log(s)
        logS[:, :, i] = ls
        r[:, :, lo:hi] = np.exp(e2 - ls[..., None])
        uf[:, :, lo:hi] = u0[:, None, lo:hi] * r[:, :, lo:hi]
    mean = np.empty((nb, nq, F, d))
    for i in range(F):
        lo, hi = offsets[i], offsets[i + 1]
        mean[:, :, i, :] = uf[:, :, lo:hi] @ wbasis[lo:hi]
    M = np.empty((nb, nq, n, n))
    c = scales[fac]
    M[..., :d] = (2.0 * c[:, None] * uf[:, :, free][..., None]
                  * (wbasis[free][None, None] - mean[:, :, fac, :]))
    same = fac[:, None] == fac[None, :]
    Fm = (np.eye(n)[None, None] * r[:, :, free][..., None]
          - uf[:, :, free][..., None] * (r[:, :, free] - r[:, :, zero])[:, :, None, :])
    Fm = np.where(same[None, None], Fm, 0.0)
    M[..., d:] = Fm @ Nmat
    jac = np.abs(np.linalg.det(M)) if n else np.ones((nb, nq))
    return logS, jac
