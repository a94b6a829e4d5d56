"""Shared test utilities: random operators and independent oracles."""

import math

import numpy as np
import scipy.sparse as sp

from pdsplit import SparseMatrix


def rand_sparse(rng, rows, cols, density=0.3, scale=1.0):
    """Random SparseMatrix with normal entries (may contain zero rows/cols)."""
    m = sp.random(rows, cols, density=density,
                  random_state=np.random.RandomState(int(rng.integers(2**31))))
    m.data = rng.standard_normal(m.nnz) * scale
    return SparseMatrix(m)


def line_box_chord(n, angle_deg, offset):
    """Analytic length of a ray line inside the square [-n/2, n/2]^2.

    Slab intersection of the line through offset*(cos a, sin a) with
    direction (-sin a, cos a); independent of the grid traversal used by
    the projector.
    """
    half = n / 2.0
    theta = math.radians(angle_deg)
    ux, uy = -math.sin(theta), math.cos(theta)
    ox, oy = offset * math.cos(theta), offset * math.sin(theta)
    t_lo, t_hi = -math.inf, math.inf
    for u, o in ((ux, ox), (uy, oy)):
        if u == 0.0:
            if not -half < o < half:
                return 0.0
        else:
            t1, t2 = (-half - o) / u, (half - o) / u
            t_lo = max(t_lo, min(t1, t2))
            t_hi = min(t_hi, max(t1, t2))
    return max(0.0, t_hi - t_lo)


def explicit_grad_matrix(n):
    """Materialized [I kron B; B kron I] with B the forward-difference matrix."""
    b = np.zeros((n, n))
    for i in range(n - 1):
        b[i, i] = -1.0
        b[i, i + 1] = 1.0
    eye = np.eye(n)
    return np.vstack([np.kron(eye, b), np.kron(b, eye)])


def prox_objective(f, z, v, lam):
    """The prox objective f(z) + ||z - v||^2 / (2 lam)."""
    diff = np.asarray(z, dtype=float) - v
    return f.value(z) + float(np.dot(diff, diff)) / (2.0 * lam)
