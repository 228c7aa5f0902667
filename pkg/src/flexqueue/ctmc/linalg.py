"""Sparse linear solves for generators: stationary vectors and absorption times.

Small systems (and any chain with at most two cells, whose fill-in stays
modest) are factorised directly.  Larger ones use GMRES preconditioned by an
incomplete LU factorisation; the factorisation can be handed back in and
reused for a nearby matrix with the same sparsity pattern.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_MAX_STATES = 6000
DIRECT_MAX_STATES_2D = 120_000
RESIDUAL_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """A solve did not reach its residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class Preconditioner:
    """Cached incomplete-LU factorisation of one system matrix."""

    def __init__(self, A):
        self.shape = A.shape
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-3, fill_factor=6, permc_spec="MMD_AT_PLUS_A")
        self.operator = spla.LinearOperator(A.shape, ilu.solve)


def _use_direct(n, dims, method):
    if method == "direct":
        return True
    if method == "iterative":
        return False
    return n <= DIRECT_MAX_STATES or (dims <= 2 and n <= DIRECT_MAX_STATES_2D)


def _gmres(A, b, x0, precond, rtol):
    x, info = spla.gmres(A, b, x0=x0, M=precond.operator, rtol=rtol, atol=0.0,
                         restart=60, maxiter=6)
    return x, info


def _solve(A, b, x0=None, precond=None, dims=3, method="auto", residual_fn=None, tol=RESIDUAL_TOL):
    """Solve ``A x = b``; returns ``(x, precond, residual)``."""
    n = A.shape[0]
    if _use_direct(n, dims, method):
        x = spla.splu(A.tocsc(), permc_spec="COLAMD").solve(b)
        res = residual_fn(x) if residual_fn else float(np.abs(A @ x - b).max())
        return x, None, res
    A = A.tocsr()
    if precond is None or precond.shape != A.shape:
        precond = Preconditioner(A)
    x = x0
    res = np.inf
    for attempt in range(3):
        x, info = _gmres(A, b, x, precond, 1e-12)
        res = residual_fn(x) if residual_fn else float(np.abs(A @ x - b).max())
        if res <= tol:
            break
        if attempt == 0:
            # the cached factorisation belongs to a different matrix; refresh it
            precond = Preconditioner(A)
    return x, precond, res


def stationary_vector(Q, x0=None, precond=None, dims=3, method="auto", tol=RESIDUAL_TOL):
    """Solve ``pi Q = 0`` with ``sum(pi) = 1``.

    Returns ``(pi, precond, residual)`` with ``residual = max |pi Q|`` scaled
    by the largest exit rate when that exceeds one.
    """
    n = Q.shape[0]
    if n == 1:
        return np.ones(1), None, 0.0
    QT = Q.T.tocsr()
    # replace the first balance equation by the normalisation
    keep = np.ones(n)
    keep[0] = 0.0
    ones_row = sp.csr_matrix((np.ones(n), (np.zeros(n, dtype=np.int64), np.arange(n))),
                             shape=(n, n))
    A = (sp.diags(keep) @ QT + ones_row).tocsr()
    b = np.zeros(n)
    b[0] = 1.0
    scale = max(1.0, float(np.abs(Q.diagonal()).max()))

    def residual(x):
        s = x.sum()
        return float(np.abs(QT @ (x / s)).max()) / scale if s != 0 else np.inf

    pi, precond, res = _solve(A, b, x0, precond, dims, method, residual, tol)
    if not np.isfinite(res) or res > tol:
        raise ConvergenceError("stationary solve did not converge", res)
    pi = np.where(pi < 0, 0.0, pi)
    pi = pi / pi.sum()
    return pi, precond, res


def absorption_times(T, x0=None, precond=None, dims=3, method="auto", tol=RESIDUAL_TOL):
    """Expected time to absorption from every transient state.

    ``T`` is the generator restricted to transient states (rows sum to minus
    the absorption rate).  Solves ``-T t = 1``; returns ``(t, precond, residual)``.
    """
    A = (-T).tocsr()
    n = A.shape[0]
    b = np.ones(n)
    scale = max(1.0, float(np.abs(A.diagonal()).max()))

    def residual(x):
        return float(np.abs(A @ x - b).max()) / scale

    t, precond, res = _solve(A, b, x0, precond, dims, method, residual, tol)
    if not np.all(np.isfinite(t)) or res > tol:
        raise ConvergenceError("absorption-time solve did not converge", res)
    return t, precond, res


def transient_support(T, absorb) -> np.ndarray:
    """Boolean mask of transient states that can reach absorption."""
    n = T.shape[0]
    reach = np.asarray(absorb > 0).copy()
    # predecessors: i -> j with T[i, j] > 0; walk backwards from absorbing-adjacent states
    G = sp.csr_matrix(T, copy=True)
    G.setdiag(0)
    G.eliminate_zeros()
    GT = G.T.tocsr()
    frontier = np.flatnonzero(reach)
    while frontier.size:
        preds = GT[frontier].indices
        new = preds[~reach[preds]]
        new = np.unique(new)
        reach[new] = True
        frontier = new
    return reach if n else reach
