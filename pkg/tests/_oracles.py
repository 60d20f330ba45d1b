"""Independent brute-force references used by the tests.

Nothing here imports the package; each helper recomputes its quantity from the
definition so it can serve as an oracle.
"""
import numpy as np


def grid_gamma1(Z, res):
    """max over a simplex grid of step ``res`` of min_i z_i . a, for m <= 3."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m = Z.shape[1]
    k = int(round(1.0 / res))
    t = np.arange(k + 1) / k
    if m == 1:
        return float(Z[:, 0].min())
    if m == 2:
        vals = np.outer(Z[:, 0], t) + np.outer(Z[:, 1], 1.0 - t)
        return float(vals.min(axis=0).max())
    if m != 3:
        raise ValueError("grid oracle handles m <= 3")
    best = -np.inf
    for lo in range(0, k + 1, 200):
        a1 = t[lo:lo + 200][:, None]
        a2 = t[None, :]
        ok = a1 + a2 <= 1.0 + 1e-12
        a3 = 1.0 - a1 - a2
        worst = np.full(ok.shape, np.inf)
        for z in Z:
            np.minimum(worst, z[0] * a1 + z[1] * a2 + z[2] * a3, out=worst)
        worst[~ok] = -np.inf
        best = max(best, float(worst.max()))
    return best


def mc_gamma2_dual(Z, samples, seed=0):
    """Monte Carlo upper bound on min over the simplex of |Z^T p| / sqrt(m)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, m = Z.shape
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(max(1, samples // 100_000)):
        P = rng.dirichlet(np.ones(n), size=min(samples, 100_000))
        # vertices and edge midpoints often hold the optimum on tiny instances
        P = np.vstack([P, np.eye(n), 0.5 * (np.eye(n)[:, None] + np.eye(n)[None, :]).reshape(-1, n)])
        best = min(best, float(np.min(np.linalg.norm(P @ Z, axis=1))) / np.sqrt(m))
    return best


def linprog_gamma1(Z):
    """gamma1 through scipy's HiGHS: max g s.t. Za >= g, sum a = 1, a >= 0."""
    from scipy.optimize import linprog

    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, m = Z.shape
    c = np.r_[np.zeros(m), -1.0]
    A_ub = np.hstack([-Z, np.ones((n, 1))])
    A_eq = np.r_[np.ones(m), 0.0][None, :]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    assert res.success
    return -res.fun
