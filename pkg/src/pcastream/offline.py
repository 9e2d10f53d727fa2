"""Deterministic expectation dynamics over a known covariance.

With the population covariance G in hand, the stochastic updates can be
replaced by their expectations: the input/output correlation becomes
F G and the output covariance becomes F G F', where F is the learner's
current input-to-output filter. This module steps those averaged
dynamics with forward Euler, constructs their fixed points in closed
form from the eigendecomposition of G, and probes linear stability with
a finite-difference Jacobian on the flattened (W, upper-triangular M)
coordinates.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import (
    DegenerateDiagonalError,
    DegenerateSpectrumError,
    LinalgError,
    TrialDivergedError,
)
from .model import DIAGONAL_FLOOR, ModelState, Task, neural_filter


@dataclass
class OfflineTrajectory:
    """Snapshots (iteration, state) along one averaged-dynamics run."""

    checkpoints: list

    def __post_init__(self):
        steps = [t for t, _ in self.checkpoints]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("checkpoint iterations must be strictly increasing")

    def final_state(self):
        return self.checkpoints[-1][1]

    def state_at(self, t):
        for step, state in self.checkpoints:
            if step == t:
                return state
        raise KeyError(f"no snapshot at iteration {t}")


def _lateral_drive(state, fg, f, task):
    """Expected lateral update direction for the given task."""
    drive = fg @ f.T
    lam = state.lam
    if task is Task.PSP:
        return drive - lam[:, None] * state.m * lam[None, :]
    drive = drive.copy()
    drive.flat[:: state.k + 1] -= lam * lam
    return drive


def offline_step(state, g, alpha, task, variant):
    """One forward-Euler step of the averaged dynamics."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    f = neural_filter(state, variant)
    fg = f @ g
    w = state.w + alpha * (fg - state.w)
    m = state.m + (alpha / state.tau) * _lateral_drive(state, fg, f, task)
    m = 0.5 * (m + m.T)
    if not (m.diagonal() > DIAGONAL_FLOOR).all():
        raise DegenerateDiagonalError("updated lateral diagonal hit the floor")
    if not np.isfinite(m).all() or not np.isfinite(w).all():
        raise DegenerateDiagonalError("weights overflowed")
    return ModelState(m, w, state.lam, state.tau, check=False)


def construct_fixed_point(g, lam, task, signs=None, tau=None, order=None):
    """Closed-form stationary state of the averaged dynamics.

    The lateral matrix is set to the diagonal of the top-K eigenvalues of
    g; the filter rows are the matching unit eigenvectors scaled by the
    gain (projection task) or by gain over root-eigenvalue (whitening
    task), with optional per-row sign flips. ``order`` permutes which
    eigenpair feeds which row; mismatched orderings are still stationary
    but linearly unstable, which the stability checks rely on.
    """
    g = np.asarray(g, dtype=float)
    lam = np.asarray(lam, dtype=float)
    k = lam.shape[0]
    w, v = linalg.sym_eig(g)
    if k + 1 > len(w):
        raise ValueError("need at least k+1 eigenvalues")
    gaps = -np.diff(w[: k + 1])
    if (gaps <= 1e-10).any():
        raise DegenerateSpectrumError("eigenvalue gap below 1e-10")
    if order is None:
        order = np.arange(k)
    else:
        order = np.asarray(order, dtype=int)
        if sorted(order.tolist()) != list(range(k)):
            raise ValueError("order must be a permutation of range(k)")
    s = np.ones(k) if signs is None else np.asarray(signs, dtype=float)
    if not np.all(np.abs(s) == 1.0):
        raise ValueError("signs must be +/-1")
    if tau is None:
        tau = 0.5 if task is Task.PSP else 1.0

    eigvals = w[order]
    vectors = v[:, order]
    coef = lam * s
    if task is Task.PSW:
        coef = coef / np.sqrt(eigvals)
    f = coef[:, None] * vectors.T
    m = np.diag(eigvals)
    return ModelState(m, m @ f, lam, tau)


def fixed_point_residual(state, g, task, variant):
    """Norm of the averaged-dynamics vector field at a state.

    Zero exactly at stationary points: ``||F G - W||`` plus the norm of
    the lateral drive (against lam M lam for projection, lam^2 for
    whitening).
    """
    f = neural_filter(state, variant)
    fg = f @ g
    r_w = np.linalg.norm(fg - state.w)
    return float(r_w + np.linalg.norm(_lateral_drive(state, fg, f, task)))


def _pack(state):
    iu = np.triu_indices(state.k)
    return np.concatenate([state.w.ravel(), state.m[iu]])


def _unpack(vec, template):
    k, n = template.k, template.n
    w = vec[: k * n].reshape(k, n)
    m = np.zeros((k, k))
    iu = np.triu_indices(k)
    m[iu] = vec[k * n:]
    m = m + np.triu(m, 1).T
    return ModelState(m, w, template.lam, template.tau, check=False)


def _vector_field(state, g, task, variant):
    f = neural_filter(state, variant)
    fg = f @ g
    dw = fg - state.w
    dm = _lateral_drive(state, fg, f, task) / state.tau
    iu = np.triu_indices(state.k)
    return np.concatenate([dw.ravel(), dm[iu]])


def jacobian_spectrum(state, g, task, variant, eps=1e-5):
    """Real parts of the eigenvalues of the linearized averaged dynamics.

    Central finite differences of the flattened vector field around a
    near-stationary state. The symmetric lateral matrix contributes only
    its upper triangle as coordinates, so symmetry-redundant directions
    cannot produce spurious eigenvalues. Negative real parts throughout
    mean the state is linearly stable.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError("eps must lie in [1e-7, 1e-4]")
    g = np.asarray(g, dtype=float)
    if fixed_point_residual(state, g, task, variant) > 1e-6:
        raise ValueError("state is not close enough to a fixed point")
    base = _pack(state)
    dim = base.size
    jac = np.empty((dim, dim))
    for i in range(dim):
        bump = np.zeros(dim)
        bump[i] = eps
        hi = _vector_field(_unpack(base + bump, state), g, task, variant)
        lo = _vector_field(_unpack(base - bump, state), g, task, variant)
        jac[:, i] = (hi - lo) / (2.0 * eps)
    eig = np.linalg.eigvals(jac)
    return np.sort(eig.real)[::-1]


def run_offline(initial, g, schedule, t_max, checkpoints=(), *,
                task, variant):
    """Run the averaged dynamics, snapshotting at the requested iterations.

    The final iterate is always included (for ``t_max == 0`` that is the
    initial state). Any model failure is wrapped in TrialDivergedError
    carrying the iteration index.
    """
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    wanted = {int(t) for t in checkpoints}
    bad = [t for t in wanted if not 1 <= t <= max(t_max, 1)]
    if bad:
        raise ValueError(f"checkpoints outside [1, t_max]: {sorted(bad)}")
    state = initial.copy()
    if t_max == 0:
        return OfflineTrajectory([(0, state)])
    snaps = []
    for t in range(1, t_max + 1):
        try:
            state = offline_step(state, g, schedule.rate(t), task, variant)
        except (DegenerateDiagonalError, LinalgError) as exc:
            raise TrialDivergedError(t, exc) from exc
        if t in wanted and t != t_max:
            snaps.append((t, state.copy()))
    snaps.append((t_max, state.copy()))
    return OfflineTrajectory(snaps)
