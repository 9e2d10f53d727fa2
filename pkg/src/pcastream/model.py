"""Online principal-subspace learners with Hebbian/anti-Hebbian plasticity.

The learner keeps a feed-forward weight matrix W (K x N), a symmetric
lateral weight matrix M (K x K) and a fixed diagonal gain vector with
strictly decreasing positive entries. The gain breaks the rotational
degeneracy of similarity matching, which drives M toward diagonal form;
because M stays near-diagonal, each output can be produced with a fixed
two-step feed-forward/lateral pass instead of running recurrent dynamics
to a fixed point. An exact-inverse variant (solving M y = W x per input)
is kept as the reference learner.
"""

from enum import Enum

import numpy as np

from . import linalg
from .errors import DegenerateDiagonalError

DIAGONAL_FLOOR = 1e-12


class Task(Enum):
    """Which lateral plasticity target to use."""

    PSP = "psp"  # projection: target is lam * M * lam
    PSW = "psw"  # whitening: target is lam ** 2


class Variant(Enum):
    """How the lateral matrix is inverted when producing an output."""

    ITERATION_FREE = "iteration_free"
    EXACT_INVERSE = "exact"


class ModelState:
    """Value-type bundle of learner weights.

    Parameters:
    ====================
    m     -- lateral weights, K x K, symmetric, strictly positive diagonal
    w     -- feed-forward weights, K x N
    lam   -- diagonal gain, length K, strictly decreasing positive
    tau   -- time-constant ratio between the M and W updates, > 0
    check -- validate invariants on construction (disable only on hot
             paths that already guarantee them)
    """

    __slots__ = ("m", "w", "lam", "tau")

    def __init__(self, m, w, lam, tau, check=True):
        if check:
            m = np.array(m, dtype=float)
            w = np.array(w, dtype=float)
            lam = np.array(lam, dtype=float)
            tau = float(tau)
            k = m.shape[0]
            if m.shape != (k, k) or w.ndim != 2 or w.shape[0] != k or lam.shape != (k,):
                raise ValueError("inconsistent state shapes")
            linalg.check_finite(m, "m")
            linalg.check_finite(w, "w")
            linalg.check_finite(lam, "lam")
            if np.linalg.norm(m - m.T) > 1e-10 * max(np.linalg.norm(m), 1e-300):
                raise ValueError("lateral matrix must be symmetric")
            if not (np.diagonal(m) > DIAGONAL_FLOOR).all():
                raise DegenerateDiagonalError("lateral diagonal not strictly positive")
            if not (lam > 0).all() or not (np.diff(lam) < 0).all():
                raise ValueError("gain entries must be strictly decreasing and positive")
            if tau <= 0:
                raise ValueError("tau must be positive")
        self.m = m
        self.w = w
        self.lam = lam
        self.tau = tau

    @property
    def k(self):
        return self.w.shape[0]

    @property
    def n(self):
        return self.w.shape[1]

    def copy(self):
        return ModelState(self.m.copy(), self.w.copy(), self.lam.copy(),
                          self.tau, check=False)

    def __repr__(self):
        return f"ModelState(k={self.k}, n={self.n}, tau={self.tau})"


def split_diag(m):
    """Split a square matrix into its diagonal and off-diagonal parts.

    Returns (d, m_o) where d is the diagonal as a vector and m_o is m
    with the diagonal zeroed, so that ``np.diag(d) + m_o == m`` exactly.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected square matrix")
    d = np.diagonal(m).copy()
    m_o = m.copy()
    np.fill_diagonal(m_o, 0.0)
    return d, m_o


def approx_inverse(m):
    """First-order near-diagonal inverse ``D^-1 - D^-1 (m - D) D^-1``.

    D is the diagonal part of m. Only elementwise reciprocals and
    diagonal scalings are used; no general inversion is performed. The
    approximation error is quadratic in the off-diagonal norm.
    """
    m = np.asarray(m, dtype=float)
    k = m.shape[0]
    d = np.diagonal(m)
    if np.any(np.abs(d) < DIAGONAL_FLOOR):
        raise DegenerateDiagonalError("diagonal entry below invertibility floor")
    inv_d = 1.0 / d
    out = -(inv_d[:, None] * m) * inv_d[None, :]
    out.flat[:: k + 1] = inv_d
    return out


def forward(state, x, variant):
    """Output for one input vector, using the pre-update weights.

    Iteration-free: a feed-forward pass scaled by the lateral diagonal,
    followed by one lateral correction of that provisional signal. Exact:
    solve ``m @ y = w @ x``.
    """
    wx = state.w @ x
    if variant is Variant.EXACT_INVERSE:
        # state invariants already guarantee a symmetric finite m, so go
        # straight to the factorization
        lu, piv = linalg.lu_factor(state.m)
        return linalg.lu_solve(lu, piv, wx)
    d = state.m.diagonal()
    if d.min() < DIAGONAL_FLOOR:
        raise DegenerateDiagonalError("diagonal entry below invertibility floor")
    y_ff = wx / d
    # lateral pass: subtract the off-diagonal contribution of the
    # provisional signal, again scaled by the diagonal
    return y_ff - (state.m @ y_ff - d * y_ff) / d


def plasticity(state, x, y, alpha, task):
    """One Hebbian/anti-Hebbian weight update for the pair (x, y).

    W moves toward the input/output correlation. M moves along the
    output correlation minus its target, ``lam M lam`` for projection or
    the fixed ``lam**2`` for whitening, at 1/tau of the W rate. Symmetry
    of M is restored exactly after the update so that rounding cannot
    accumulate over long runs.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    lam = state.lam
    w = state.w + alpha * (np.outer(y, x) - state.w)
    drive = np.outer(y, y)
    if task is Task.PSP:
        drive -= lam[:, None] * state.m * lam[None, :]
    else:
        drive.flat[:: state.k + 1] -= lam * lam
    m = state.m + (alpha / state.tau) * drive
    m = 0.5 * (m + m.T)
    d = m.diagonal()
    if not (d > DIAGONAL_FLOOR).all():
        raise DegenerateDiagonalError("updated lateral diagonal hit the floor")
    if not np.isfinite(m).all() or not np.isfinite(w).all():
        raise DegenerateDiagonalError("weights overflowed")
    return ModelState(m, w, lam, state.tau, check=False)


def online_step(state, x, alpha, task, variant):
    """Process one sample: compute the output, then update the weights.

    Returns (y, new_state). The output is computed from the pre-update
    state; plasticity is applied afterwards.
    """
    y = forward(state, x, variant)
    return y, plasticity(state, x, y, alpha, task)


def neural_filter(state, variant):
    """The effective input-to-output linear map F, with ``forward == F @ x``.

    Iteration-free uses the near-diagonal inverse approximation of M;
    exact solves ``M F = W`` through one factorization.
    """
    if variant is Variant.ITERATION_FREE:
        return approx_inverse(state.m) @ state.w
    lu, piv = linalg.lu_factor(state.m)
    return linalg.lu_solve(lu, piv, state.w)
