"""Pure-numpy simplex tableau kernels.

Fallback used when the compiled extension is unavailable (or when
GBDMPC_KERNEL=py is set). Same contract as ``_cy_kernel``:

* ``T`` is the dense tableau, shape (m+1, n+1), C-contiguous float64.
  Rows 0..m-1 are constraints, row m holds reduced costs; the last
  column is the rhs (objective cell holds minus the objective value).
* ``basis`` maps each constraint row to its basic column index.

Tie-breaking is by lowest index everywhere so both kernels walk the
same pivot sequence up to floating-point accumulation order.
"""

import numpy as np


def pivot(T, basis, row, col):
    """Gauss-Jordan pivot on (row, col); updates basis in place."""
    piv = T[row] / T[row, col]
    colvals = T[:, col].copy()
    T -= np.outer(colvals, piv)
    T[row] = piv
    # the pivot column is e_row exactly; enforce against roundoff
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


def entering_bland(T, allowed, tol):
    """Lowest-index allowed column with reduced cost < -tol, or -1."""
    obj = T[-1, :-1]
    mask = allowed & (obj < -tol)
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else -1


def entering_steepest(T, allowed, tol):
    """Steepest-edge-style rule on the explicit tableau.

    Picks the allowed column maximizing r_j^2 / (1 + ||T[:,j]||^2)
    among r_j < -tol; lowest index on ties. Returns -1 if none.
    """
    obj = T[-1, :-1]
    mask = allowed & (obj < -tol)
    if not mask.any():
        return -1
    cols = np.flatnonzero(mask)
    sub = T[:-1, cols]
    gamma = 1.0 + np.einsum("ij,ij->j", sub, sub)
    score = obj[cols] ** 2 / gamma
    return int(cols[np.argmax(score)])


def ratio_test(T, basis, col, tol_piv, harris_slack=1e-9):
    """Leaving row by a two-pass (Harris) ratio test.

    Pass 1 finds the slack-relaxed minimum ratio; pass 2 picks the row
    with the largest pivot among rows whose exact ratio is within it
    (numerical stability), breaking ties to the smallest basic index.
    Returns -1 when the column has no positive pivot entry.
    """
    colvals = T[:-1, col]
    rhs = T[:-1, -1]
    eligible = colvals > tol_piv
    if not eligible.any():
        return -1
    ratios = np.full(colvals.shape, np.inf)
    np.divide(rhs, colvals, out=ratios, where=eligible)
    relaxed = np.full(colvals.shape, np.inf)
    np.divide(rhs + harris_slack, colvals, out=relaxed, where=eligible)
    theta = relaxed.min()
    pass2 = eligible & (ratios <= theta)
    amax = colvals[pass2].max()
    tied = np.flatnonzero(pass2 & (colvals == amax))
    return int(tied[np.argmin(basis[tied])])
