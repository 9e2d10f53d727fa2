"""Subspace quality metrics and closed-form optimum oracles.

The headline metric is the Procrustes alignment error: the squared
Frobenius distance between an estimated and a true orthonormal basis,
minimized over orthogonal alignment and normalized by the number of
components. Estimated bases are read out of a learner state by one of
four formulas, depending on the task and on whether the lateral matrix
is inverted exactly or through its near-diagonal approximation.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DegenerateSpectrumError, ShapeMismatchError
from .model import Task, Variant, approx_inverse

_GAP_FLOOR = 1e-10


@dataclass
class GroundTruth:
    """Leading eigenvectors (columns of u_k) and root-eigenvalues of G."""

    u_k: np.ndarray
    sigma_k: np.ndarray

    def __post_init__(self):
        k = self.u_k.shape[1]
        if self.sigma_k.shape != (k,):
            raise ShapeMismatchError("sigma_k length does not match u_k")
        if np.linalg.norm(self.u_k.T @ self.u_k - np.eye(k)) > 1e-10:
            raise ValueError("u_k columns are not orthonormal within 1e-10")
        if not (self.sigma_k > 0).all() or not (np.diff(self.sigma_k) < 0).all():
            raise ValueError("sigma_k must be strictly decreasing and positive")


def ground_truth(g, k):
    """Top-k eigenvectors of a covariance matrix and their root-eigenvalues.

    Requires the leading k+1 eigenvalues to be separated by more than a
    small gap so the subspace (and its per-component ordering) is
    well defined.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError("k must lie in [1, n-1]")
    w, v = linalg.sym_eig(g)
    gaps = -np.diff(w[: k + 1])
    if (gaps <= _GAP_FLOOR).any():
        raise DegenerateSpectrumError("leading eigenvalues are not separated")
    if w[k - 1] <= 0:
        raise ValueError("covariance must have positive leading eigenvalues")
    return GroundTruth(u_k=v[:, :k].copy(), sigma_k=np.sqrt(w[:k]))


def estimate_subspace(state, task, variant, sigma_k=None):
    """Estimated principal directions (N x K) read out of a learner state.

    The readout undoes the diagonal gain, and for whitening tasks also
    restores the component scales via the true root-eigenvalues.
    """
    if variant is Variant.ITERATION_FREE:
        filt = approx_inverse(state.m) @ state.w
    else:
        lu, piv = linalg.lu_factor(state.m)
        filt = linalg.lu_solve(lu, piv, state.w)
    scale = 1.0 / state.lam
    if task is Task.PSW:
        if sigma_k is None:
            raise ValueError("sigma_k is required for whitening estimates")
        scale = scale * np.asarray(sigma_k, dtype=float)
    return (scale[:, None] * filt).T


def procrustes_error(u_hat, u_true):
    """Alignment error min_Q ||u_hat Q - u_true||^2 / ||u_true||^2.

    Q ranges over K x K orthogonal matrices; the minimizer comes from the
    SVD of ``u_hat.T @ u_true``. The error is evaluated as the explicit
    residual at the optimal Q (not via the trace identity), which stays
    accurate all the way down to the rounding floor.
    """
    u_hat = np.asarray(u_hat, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    if u_hat.shape != u_true.shape or u_hat.ndim != 2:
        raise ShapeMismatchError(
            f"shape mismatch: {u_hat.shape} vs {u_true.shape}")
    k = u_true.shape[1]
    a, _, b = linalg.svd_small(u_hat.T @ u_true)
    q = a @ b.T
    resid = u_hat @ q - u_true
    return float(np.sum(resid * resid) / k)


def objective_psp(y, x, lam):
    """Similarity-matching value of an embedding, with diagonal gain.

    Evaluates ``-2 tr(X'X Y'Y) + tr(Y' L^-1 Y Y' L^-1 Y)`` for the gain
    matrix L = diag(lam).
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if y.shape[1] != x.shape[1]:
        raise ShapeMismatchError("y and x must have the same number of columns")
    # Gram-matrix form of the two traces: K x N / K x K work instead of T x T.
    cross = y @ x.T
    scaled = (y @ y.T) / lam[:, None]
    return float(-2.0 * np.sum(cross * cross) + np.sum(scaled * scaled.T))


def objective_psw(y, x, lam):
    """Whitening objective value and constraint violation.

    Returns (||X'X - Y'Y||^2, ||Y Y' - diag(lam)^2||).
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if y.shape[1] != x.shape[1]:
        raise ShapeMismatchError("y and x must have the same number of columns")
    diff = x.T @ x - y.T @ y
    gram = y @ y.T
    gram.flat[:: y.shape[0] + 1] -= lam * lam
    return float(np.sum(diff * diff)), float(np.linalg.norm(gram))


def closed_form_optimum(x, lam, k, task, signs=None):
    """Optimal K x T embedding of a data matrix, per-component sign free.

    Projects onto the top-k left singular directions of x, scaled by the
    gain (projection task) or by the gain over the singular values
    (whitening task). ``signs`` flips individual components.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (k,):
        raise ShapeMismatchError("lam must have length k")
    c = x @ x.T
    w, v = linalg.sym_eig(0.5 * (c + c.T))
    if k + 1 <= len(w):
        gaps = -np.diff(w[: k + 1])
        if (gaps <= _GAP_FLOOR).any():
            raise DegenerateSpectrumError("top singular values are not distinct")
    if w[k - 1] <= _GAP_FLOOR:
        raise DegenerateSpectrumError("rank of x is below k")
    s = np.ones(k) if signs is None else np.asarray(signs, dtype=float)
    coef = lam * s
    if task is Task.PSW:
        coef = coef / np.sqrt(w[:k])
    return coef[:, None] * (v[:, :k].T @ x)
