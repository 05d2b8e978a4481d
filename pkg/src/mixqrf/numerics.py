"""Small numerical kernels shared by the estimators.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .exceptions import InvalidInputError, SingularDesignError

__all__ = [
    "OptResult",
    "Quadrature",
    "nelder_mead",
    "pca_first_scores",
    "first_component",
    "gauss_hermite",
    "chi_square_sf",
    "ols_solve",
]


@dataclass(frozen=True)
class OptResult:
    argmin: np.ndarray
    value: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray


def _safe_eval(objective, x):
    value = float(objective(x))
    return value if np.isfinite(value) else np.inf


def nelder_mead(objective, x0, max_iter=1000, x_tol=1e-8, f_tol=1e-10,
                initial_step=None):
    """Minimise ``objective`` with the Nelder-Mead simplex method.

    Parameters
    ----------
    objective : callable
        Maps a 1-d array to a float. Non-finite values are treated as +inf
        after the starting point.
    x0 : array_like
        Starting point. It is always a vertex of the initial simplex, so the
        returned value is never worse than ``objective(x0)``.
    max_iter : int
        Maximum number of simplex iterations.
    x_tol, f_tol : float
        Convergence is declared when the simplex diameter (max-norm distance
        to the best vertex) is below ``x_tol`` and the spread of function
        values is below ``f_tol``. Either test alone stops early on
        symmetric simplices straddling the minimum.
    initial_step : array_like, optional
        Per-coordinate perturbation for the initial simplex. Defaults to
        ``max(0.05 * |x0_j|, 0.01)``.

    Returns
    -------
    OptResult
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x0.ndim != 1 or not np.all(np.isfinite(x0)):
        raise InvalidInputError("x0 must be a finite 1-d vector")
    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise InvalidInputError("objective is not finite at x0")

    n = x0.size
    if initial_step is None:
        step = np.maximum(0.05 * np.abs(x0), 0.01)
    else:
        step = np.broadcast_to(np.asarray(initial_step, dtype=float), (n,))

    simplex = np.empty((n + 1, n))
    fvals = np.empty(n + 1)
    simplex[0] = x0
    fvals[0] = f0
    for j in range(n):
        vertex = x0.copy()
        vertex[j] += step[j]
        simplex[j + 1] = vertex
        fvals[j + 1] = _safe_eval(objective, vertex)

    # reflect, expand, contract, shrink
    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5
    converged = False
    it = 0
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex = simplex[order]
        fvals = fvals[order]

        diameter = np.max(np.abs(simplex[1:] - simplex[0])) if n else 0.0
        spread = fvals[-1] - fvals[0]
        if diameter < x_tol and spread < f_tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = _safe_eval(objective, xr)

        if fvals[0] <= fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = _safe_eval(objective, xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue

        if fr < fvals[-1]:
            xc = centroid + rho * (xr - centroid)
            fc = _safe_eval(objective, xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + rho * (worst - centroid)
            fc = _safe_eval(objective, xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue

        best = simplex[0]
        for j in range(1, n + 1):
            simplex[j] = best + sigma * (simplex[j] - best)
            fvals[j] = _safe_eval(objective, simplex[j])

    return OptResult(argmin=simplex[0].copy(), value=float(fvals[0]),
                     iterations=it, converged=converged)


def first_component(matrix, center=True):
    """Return ``(scores, loading, column_means)`` of the leading component.

    The loading sign is chosen so that the scores correlate positively with
    the row-wise mean of the (centred) matrix; on an exact tie the first
    non-zero score is made positive.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] < 2:
        raise InvalidInputError("need a 2-d matrix with at least 2 rows")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix contains non-finite entries")

    means = m.mean(axis=0) if center else np.zeros(m.shape[1])
    mc = m - means
    cov = mc.T @ mc / (m.shape[0] - 1)
    _, vecs = np.linalg.eigh(cov)
    loading = vecs[:, -1]
    scores = mc @ loading

    ref = mc.mean(axis=1)
    ref = ref - ref.mean()
    corr = float(scores @ ref)
    if abs(corr) > 1e-12 * np.linalg.norm(scores) * np.linalg.norm(ref):
        flip = corr < 0
    else:
        nz = np.flatnonzero(scores)
        flip = nz.size > 0 and scores[nz[0]] < 0
    if flip:
        loading = -loading
        scores = -scores
    return scores, loading, means


def pca_first_scores(matrix, center=True):
    """Scores of the first principal component (rows = time, cols = variants)."""
    return first_component(matrix, center=center)[0]


def gauss_hermite(K):
    """Probabilists' Gauss-Hermite rule with weights summing to one.

    Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix with
    off-diagonal ``sqrt(k)``; weights are the squared first components of
    the eigenvectors.
    """
    K = int(K)
    if K < 1:
        raise InvalidInputError("K must be at least 1")
    off = np.sqrt(np.arange(1, K, dtype=float))
    nodes, vecs = linalg.eigh_tridiagonal(np.zeros(K), off)
    weights = vecs[0] ** 2
    # enforce exact symmetry about zero
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    weights = weights / weights.sum()
    return Quadrature(nodes=nodes, weights=weights)


def chi_square_sf(x, df):
    """Upper tail probability ``P(chi2_df > x)``."""
    if df < 1 or int(df) != df:
        raise InvalidInputError("df must be a positive integer")
    if not x >= 0:
        raise InvalidInputError("x must be nonnegative")
    if x == 0:
        return 1.0
    return float(min(1.0, max(0.0, special.gammaincc(0.5 * df, 0.5 * x))))


def ols_solve(X, y):
    """Least-squares coefficients of ``y`` on ``X`` via pivoted QR.

    Raises
    ------
    SingularDesignError
        If a pivot of R falls below ``1e-10`` relative to the largest one.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise InvalidInputError("X must be n x q and y of length n")
    n, q = X.shape
    if n < q:
        raise InvalidInputError("need at least as many rows as columns")
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0 or diag.min() < 1e-10 * diag[0]:
        raise SingularDesignError("design matrix is rank deficient")
    beta_piv = linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(q)
    beta[piv] = beta_piv
    return beta
