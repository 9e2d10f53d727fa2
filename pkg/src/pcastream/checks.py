"""Seeded verification suite.

Every invariant promised by the library is re-checked here on fresh
seeded instances: linear-algebra contracts, update-rule structure,
fixed-point construction and its linear stability (including the
deliberately mis-ordered construction that must come out unstable),
estimator consistency, the closed-form optimum oracles, and harness
reproducibility. ``run_verification`` returns one timed result per
check; the CLI turns that into pass/fail lines and an exit code.
"""

import json
import time
from dataclasses import dataclass

import numpy as np

from . import data, harness, linalg, metrics, model, offline
from .model import ModelState, Task, Variant

ALL_PAIRS = [(t, v) for t in (Task.PSP, Task.PSW)
             for v in (Variant.ITERATION_FREE, Variant.EXACT_INVERSE)]


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    detail: str = ""


def _random_covariance(n, rng):
    pre = data.small_problem()
    rot = data.haar_orthogonal(n, rng)
    return data.build_covariance(data.CovarianceSpec(n, rot, pre.spectrum)), pre


def _random_state(rng, k=3, n=6):
    gen = rng.generator
    e = gen.normal(size=(k, k))
    m = np.eye(k) + 0.05 * (e + e.T)
    np.fill_diagonal(m, np.abs(np.diagonal(m)) + 0.5)
    lam = np.sort(gen.uniform(0.5, 1.5, size=k))[::-1]
    lam = lam + np.arange(k)[::-1] * 0.05  # enforce strict gaps
    return ModelState(0.5 * (m + m.T), gen.normal(size=(k, n)), lam, 0.5)


# ---------------------------------------------------------------------------
# linalg

def check_sym_eig_reconstruction():
    rng = data.RngStream(101).generator
    worst = 0.0
    for size in (2, 3, 5, 8, 12):
        for _ in range(4):
            a = rng.normal(size=(size, size))
            a = 0.5 * (a + a.T)
            a *= 10.0 / max(np.linalg.norm(a), 10.0)  # keep ||a|| <= 10
            w, v = linalg.sym_eig(a)
            worst = max(worst, np.linalg.norm(v @ np.diag(w) @ v.T - a))
            worst = max(worst, np.linalg.norm(v.T @ v - np.eye(size)))
    return worst <= 1e-9, f"worst residual {worst:.2e}"


def check_svd_ordering():
    rng = data.RngStream(102).generator
    for shape in ((4, 3), (3, 4), (6, 6), (5, 2)):
        a = rng.normal(size=shape)
        u, s, v = linalg.svd_small(a)
        if (np.diff(s) > 0).any() or (s < 0).any():
            return False, f"singular values out of order for {shape}"
        err = np.linalg.norm(u @ np.diag(s) @ v.T - a)
        if err > 1e-10 * max(np.linalg.norm(a), 1.0):
            return False, f"reconstruction {err:.2e} for {shape}"
    return True, "ordered, nonnegative, reconstructs"


def check_qr_determinism():
    rng = data.RngStream(103).generator
    for _ in range(5):
        a = rng.normal(size=(10, 10))
        q1, r1 = linalg.qr(a)
        q2, r2 = linalg.qr(a.copy())
        if not (q1 == q2).all() or not (r1 == r2).all():
            return False, "repeated runs differ"
        if np.linalg.norm(q1.T @ q1 - np.eye(10)) > 1e-12:
            return False, "q not orthonormal"
        if (np.diagonal(r1) < 0).any():
            return False, "negative diagonal in r"
    return True, "bit-identical, orthonormal, sign-fixed"


def check_solve_matches_eig_inverse():
    rng = data.RngStream(104).generator
    worst = 0.0
    for _ in range(5):
        a = rng.normal(size=(10, 10))
        m = a @ a.T + 0.5 * np.eye(10)
        b = rng.normal(size=10)
        x = linalg.solve_symmetric(m, b)
        w, v = linalg.sym_eig(m)
        x_eig = v @ ((v.T @ b) / w)
        worst = max(worst, np.linalg.norm(x - x_eig))
    return worst <= 1e-9, f"worst disagreement {worst:.2e}"


# ---------------------------------------------------------------------------
# model

def check_symmetry_preservation():
    rng = data.RngStream(105)
    gen = rng.generator
    for task in (Task.PSP, Task.PSW):
        st = _random_state(rng)
        for _ in range(50):
            x = gen.normal(size=st.n)
            # outputs scaled to the gain keep the lateral drive near zero
            # mean, so the diagonal stays well away from the floor
            y = st.lam * gen.normal(size=st.k)
            st = model.plasticity(st, x, y, 0.02, task)
            if (st.m != st.m.T).any():
                return False, f"asymmetry after update ({task.value})"
    return True, "m stays exactly symmetric"


def check_two_step_equivalence():
    rng = data.RngStream(106)
    gen = rng.generator
    worst = 0.0
    for _ in range(20):
        st = _random_state(rng)
        d, m_o = model.split_diag(st.m)
        explicit = (np.eye(st.k) - (m_o / d[:, None])) @ (st.w / d[:, None])
        x = gen.normal(size=st.n)
        y = model.forward(st, x, Variant.ITERATION_FREE)
        worst = max(worst, np.abs(y - explicit @ x).max())
    return worst <= 1e-13, f"worst gap {worst:.2e}"


def check_approximation_order():
    rng = data.RngStream(107).generator
    e = rng.normal(size=(5, 5))
    e = 0.5 * (e + e.T)
    np.fill_diagonal(e, 0.0)
    e /= np.linalg.norm(e)
    slopes = []
    for _ in range(3):
        x = rng.normal(size=5)
        errs = []
        eps_grid = (1e-1, 1e-2, 1e-3)
        for eps in eps_grid:
            st = ModelState(np.eye(5) + eps * e, rng.normal(size=(5, 8)),
                            np.array([1.5, 1.4, 1.3, 1.2, 1.1]), 0.5)
            xx = rng.normal(size=8)
            y_if = model.forward(st, xx, Variant.ITERATION_FREE)
            y_ex = model.forward(st, xx, Variant.EXACT_INVERSE)
            errs.append(np.linalg.norm(y_if - y_ex) / np.linalg.norm(y_ex))
        slope = np.polyfit(np.log(eps_grid), np.log(errs), 1)[0]
        slopes.append(slope)
    ok = all(1.8 <= s <= 2.2 for s in slopes)
    return ok, f"slopes {['%.3f' % s for s in slopes]}"


def check_iteration_free_cost():
    calls = []
    real_factor = linalg.lu_factor
    real_eig = linalg.sym_eig
    linalg.lu_factor = lambda *a, **k: calls.append("lu") or real_factor(*a, **k)
    linalg.sym_eig = lambda *a, **k: calls.append("eig") or real_eig(*a, **k)
    try:
        rng = data.RngStream(108)
        st = _random_state(rng)
        x = rng.generator.normal(size=st.n)
        model.online_step(st, x, 0.01, Task.PSP, Variant.ITERATION_FREE)
        model.online_step(st, x, 0.01, Task.PSW, Variant.ITERATION_FREE)
    finally:
        linalg.lu_factor = real_factor
        linalg.sym_eig = real_eig
    return not calls, f"solver calls on iteration-free path: {calls}"


def check_gain_ordering_rejected():
    try:
        ModelState(np.eye(2), np.zeros((2, 3)), np.array([0.7, 0.7]), 1.0)
    except ValueError:
        return True, "non-decreasing gain rejected"
    return False, "non-decreasing gain accepted"


# ---------------------------------------------------------------------------
# offline

def check_fixed_point_certification():
    worst = 0.0
    for i in range(20):
        g, pre = _random_covariance(10, data.RngStream(200, i))
        for task, variant in ALL_PAIRS:
            fp = offline.construct_fixed_point(g, pre.lam, task)
            worst = max(worst, offline.fixed_point_residual(fp, g, task, variant))
    return worst < 1e-10, f"worst residual {worst:.2e} over 20 covariances x 4"


def check_stability_dichotomy():
    g, pre = _random_covariance(10, data.RngStream(201))
    details = []
    ok = True
    for task, variant in ALL_PAIRS:
        fp = offline.construct_fixed_point(g, pre.lam, task)
        top = offline.jacobian_spectrum(fp, g, task, variant)[0]
        ok &= top < -1e-6
        bad = offline.construct_fixed_point(g, pre.lam, task, order=[1, 0, 2])
        top_bad = offline.jacobian_spectrum(bad, g, task, variant)[0]
        ok &= top_bad > 1e-6
        details.append(f"{task.value}/{variant.value}: {top:.2e} vs {top_bad:+.2e}")
    return ok, "; ".join(details)


def check_linearization_agreement():
    worst = 0.0
    for i in range(3):
        g, pre = _random_covariance(10, data.RngStream(202, i))
        for task in (Task.PSP, Task.PSW):
            fp = offline.construct_fixed_point(g, pre.lam, task)
            s_if = offline.jacobian_spectrum(fp, g, task, Variant.ITERATION_FREE)
            s_ex = offline.jacobian_spectrum(fp, g, task, Variant.EXACT_INVERSE)
            scale = max(np.abs(s_ex).max(), 1.0)
            worst = max(worst, np.abs(s_if - s_ex).max() / scale)
    return worst <= 1e-4, f"worst relative spectrum gap {worst:.2e}"


def _converged_offline_states(t_max=5000, checkpoints=(100, 1000)):
    pre = data.small_problem()
    out = {}
    for task, variant in ALL_PAIRS:
        rng = data.RngStream(203)
        g = data.build_covariance(pre.draw_covariance(rng))
        truth = metrics.ground_truth(g, pre.k)
        w0 = rng.generator.normal(0.0, pre.w_init_std, size=(pre.k, pre.n))
        st = ModelState(pre.m_init[task] * np.eye(pre.k), w0, pre.lam,
                        pre.tau[task])
        traj = offline.run_offline(st, g, pre.offline_schedule, t_max,
                                   checkpoints, task=task, variant=variant)
        out[(task, variant)] = (traj, g, truth)
    return out


def check_lateral_decay():
    worst = 0.0
    for (task, variant), (traj, g, truth) in _converged_offline_states().items():
        final = traj.final_state()
        d, m_o = model.split_diag(final.m)
        worst = max(worst, np.linalg.norm(m_o) / np.linalg.norm(np.diag(d)))
    return worst < 1e-6, f"worst off/diag ratio {worst:.2e}"


def check_monotone_tail():
    for (task, variant), (traj, g, truth) in _converged_offline_states().items():
        errs = []
        for t, st in traj.checkpoints:
            u = metrics.estimate_subspace(st, task, variant, truth.sigma_k)
            errs.append(metrics.procrustes_error(u, truth.u_k))
        if any(b > a for a, b in zip(errs, errs[1:])):
            return False, f"{task.value}/{variant.value} errors increase: {errs}"
    return True, "errors nonincreasing at 100/1000/5000"


# ---------------------------------------------------------------------------
# data

def check_stream_determinism():
    a = data.RngStream(7, 3).generator.standard_normal(100)
    b = data.RngStream(7, 3).generator.standard_normal(100)
    if not (a == b).all():
        return False, "same stream differs between instantiations"
    pre = data.small_problem()
    spec = pre.draw_covariance(data.RngStream(7, 1))
    rng1 = data.RngStream(9, 2)
    singles = np.array([data.sample(spec, rng1) for _ in range(8)])
    block = data.sample_block(spec, data.RngStream(9, 2), 8)
    gap = np.abs(singles - block).max()
    if gap > 1e-12:
        return False, f"block sampling deviates from single draws by {gap:.2e}"
    return True, "streams replay identically; blocks match singles"


def check_stream_independence():
    a = data.RngStream(7, 0).generator.standard_normal(4096)
    b = data.RngStream(7, 1).generator.standard_normal(4096)
    if (a == b).all():
        return False, "distinct streams identical"
    corr = abs(float(np.corrcoef(a, b)[0, 1]))
    return corr < 0.1, f"cross-stream correlation {corr:.3f}"


def check_covariance_symmetry():
    pre = data.small_problem()
    spec = pre.draw_covariance(data.RngStream(204))
    g = data.build_covariance(spec)
    if (g != g.T).any():
        return False, "covariance not bitwise symmetric"
    w, _ = linalg.sym_eig(g)
    gap = np.abs(np.sort(w) - np.sort(pre.spectrum)).max()
    return gap < 1e-10, f"eigenvalue mismatch {gap:.2e}"


def check_schedule_values():
    sched = data.InverseTime(10.0, 250.0)
    if sched.rate(0) != 0.04:
        return False, f"inverse-time rate(0) = {sched.rate(0)}"
    pieces = data.PiecewiseConstant(((10000.0, 1.1e-3), (float("inf"), 1.0e-4)))
    for s in (sched, pieces, data.Constant(0.1)):
        rates = [s.rate(t) for t in range(0, 20001, 100)]
        if any(b > a for a, b in zip(rates, rates[1:])):
            return False, f"rates increase for {s}"
    if pieces.rate(10000) != 1.1e-3 or pieces.rate(10001) != 1.0e-4:
        return False, "piecewise boundary wrong"
    return True, "boundary values and monotonicity hold"


# ---------------------------------------------------------------------------
# metrics

def check_procrustes_invariances():
    rng = data.RngStream(205)
    gen = rng.generator
    q_small = data.haar_orthogonal(3, rng)
    basis, _ = linalg.qr(gen.normal(size=(8, 6)))
    u = basis[:, :3]
    if metrics.procrustes_error(u @ q_small, u) > 1e-12:
        return False, "rotation not absorbed"
    flip = u * np.array([-1.0, 1.0, -1.0])[None, :]
    if metrics.procrustes_error(flip, u) > 1e-12:
        return False, "sign flip not absorbed"
    comp = basis[:, 3:]
    if abs(metrics.procrustes_error(comp, u) - 2.0) > 1e-12:
        return False, "orthogonal complement error is not 2"
    theta = np.pi / 3
    u1 = np.array([[1.0], [0.0]])
    u2 = np.array([[np.cos(theta)], [np.sin(theta)]])
    if abs(metrics.procrustes_error(u2, u1) - 2 * (1 - np.cos(theta))) > 1e-12:
        return False, "k=1 closed form violated"
    return True, "rotation/sign invariance, complement value, k=1 form"


def check_estimator_consistency():
    worst = 0.0
    for i in range(10):
        g, pre = _random_covariance(10, data.RngStream(206, i))
        truth = metrics.ground_truth(g, pre.k)
        for task, variant in ALL_PAIRS:
            fp = offline.construct_fixed_point(g, pre.lam, task)
            u = metrics.estimate_subspace(fp, task, variant, truth.sigma_k)
            worst = max(worst, metrics.procrustes_error(u, truth.u_k))
    return worst < 1e-9, f"worst fixed-point estimate error {worst:.2e}"


def _psp_gradient_norm(y, x, lam):
    h = 1e-6
    grad = np.zeros_like(y)
    for idx in np.ndindex(*y.shape):
        step = h * (1.0 + abs(y[idx]))
        up = y.copy()
        up[idx] += step
        dn = y.copy()
        dn[idx] -= step
        grad[idx] = (metrics.objective_psp(up, x, lam)
                     - metrics.objective_psp(dn, x, lam)) / (2 * step)
    return np.linalg.norm(grad)


def _psw_tangent_gradient_norm(y, x, lam):
    # Finite-difference gradient of the unconstrained value, then remove
    # the component normal to the constraint set {Y Y' = diag(lam)^2}.
    h = 1e-6
    grad = np.zeros_like(y)
    for idx in np.ndindex(*y.shape):
        step = h * (1.0 + abs(y[idx]))
        up = y.copy()
        up[idx] += step
        dn = y.copy()
        dn[idx] -= step
        grad[idx] = (metrics.objective_psw(up, x, lam)[0]
                     - metrics.objective_psw(dn, x, lam)[0]) / (2 * step)
    sym = grad @ y.T + y @ grad.T
    xi = sym / (lam[:, None] ** 2 + lam[None, :] ** 2)
    return np.linalg.norm(grad - xi @ y)


def check_closed_form_stationarity():
    worst = 0.0
    for i in range(5):
        gen = data.RngStream(207, i).generator
        x = gen.normal(size=(4, 7))
        lam = np.array([1.3, 1.0])
        y_psp = metrics.closed_form_optimum(x, lam, 2, Task.PSP)
        obj = metrics.objective_psp(y_psp, x, lam)
        g1 = _psp_gradient_norm(y_psp, x, lam) / (1.0 + abs(obj))
        y_psw = metrics.closed_form_optimum(x, lam, 2, Task.PSW)
        val, _ = metrics.objective_psw(y_psw, x, lam)
        g2 = _psw_tangent_gradient_norm(y_psw, x, lam) / (1.0 + abs(val))
        worst = max(worst, g1, g2)
    return worst < 1e-6, f"worst scaled gradient {worst:.2e}"


def check_closed_form_optimality():
    rng_all = data.RngStream(208)
    gen = rng_all.generator
    for i in range(10):
        x = gen.normal(size=(4, 7))
        lam = np.array([1.3, 1.0])
        y_opt = metrics.closed_form_optimum(x, lam, 2, Task.PSP)
        best = metrics.objective_psp(y_opt, x, lam)
        norm = np.linalg.norm(y_opt)
        for _ in range(1000):
            cand = gen.normal(size=y_opt.shape)
            cand *= norm / np.linalg.norm(cand)
            if metrics.objective_psp(cand, x, lam) < best - 1e-9:
                return False, f"random competitor beats optimum (instance {i})"
        y_w = metrics.closed_form_optimum(x, lam, 2, Task.PSW)
        best_w, viol = metrics.objective_psw(y_w, x, lam)
        if viol > 1e-10:
            return False, f"optimum violates whitening constraint ({viol:.1e})"
        for _ in range(1000):
            q, _ = linalg.qr(gen.normal(size=(7, 2)))
            cand = lam[:, None] * q.T
            val, _ = metrics.objective_psw(cand, x, lam)
            if val < best_w - 1e-9:
                return False, f"feasible competitor beats optimum (instance {i})"
    return True, "beats 1000 equal-norm / feasible competitors on 10 instances"


# ---------------------------------------------------------------------------
# harness

_TINY_CONFIG = json.dumps({
    "preset": "small", "task": "psp", "variant": "iteration_free",
    "mode": "online", "trials": 3, "seed": 11, "t_max": 300,
    "checkpoints": [150, 300],
})


def check_harness_reproducibility():
    cfg = harness.parse_config(_TINY_CONFIG)
    r1 = harness.run_experiment(cfg)
    r2 = harness.run_experiment(cfg)
    same = r1.comparable() == r2.comparable()
    return same, "identical reports" if same else "reports differ"


def check_trial_isolation():
    cfg = harness.parse_config(_TINY_CONFIG)
    seq = harness.run_experiment(cfg, workers=1)
    par = harness.run_experiment(cfg, workers=2)
    same = seq.comparable() == par.comparable()
    return same, "worker count does not change results" if same else "differs"


def check_estimator_dispatch():
    runs = _converged_offline_states(t_max=2000, checkpoints=())
    traj, g, truth = runs[(Task.PSW, Variant.EXACT_INVERSE)]
    final = traj.final_state()
    right = metrics.procrustes_error(
        metrics.estimate_subspace(final, Task.PSW, Variant.EXACT_INVERSE,
                                  truth.sigma_k), truth.u_k)
    wrong = metrics.procrustes_error(
        metrics.estimate_subspace(final, Task.PSP, Variant.EXACT_INVERSE),
        truth.u_k)
    ok = right < 1e-9 and wrong > 1e-4
    return ok, f"matched {right:.2e} vs mismatched {wrong:.2e}"


CHECKS = [
    ("linalg.sym_eig_reconstruction", check_sym_eig_reconstruction),
    ("linalg.svd_ordering", check_svd_ordering),
    ("linalg.qr_determinism", check_qr_determinism),
    ("linalg.solve_matches_eig_inverse", check_solve_matches_eig_inverse),
    ("model.symmetry_preservation", check_symmetry_preservation),
    ("model.two_step_equivalence", check_two_step_equivalence),
    ("model.approximation_order", check_approximation_order),
    ("model.iteration_free_cost", check_iteration_free_cost),
    ("model.gain_ordering_rejected", check_gain_ordering_rejected),
    ("offline.fixed_point_certification", check_fixed_point_certification),
    ("offline.stability_dichotomy", check_stability_dichotomy),
    ("offline.linearization_agreement", check_linearization_agreement),
    ("offline.lateral_decay", check_lateral_decay),
    ("offline.monotone_tail", check_monotone_tail),
    ("data.stream_determinism", check_stream_determinism),
    ("data.stream_independence", check_stream_independence),
    ("data.covariance_symmetry", check_covariance_symmetry),
    ("data.schedule_values", check_schedule_values),
    ("metrics.procrustes_invariances", check_procrustes_invariances),
    ("metrics.estimator_consistency", check_estimator_consistency),
    ("metrics.closed_form_stationarity", check_closed_form_stationarity),
    ("metrics.closed_form_optimality", check_closed_form_optimality),
    ("harness.reproducibility", check_harness_reproducibility),
    ("harness.trial_isolation", check_trial_isolation),
    ("harness.estimator_dispatch", check_estimator_dispatch),
]


def run_verification(name_filter=None):
    """Run all (or matching) checks; returns a list of CheckResult."""
    results = []
    for name, func in CHECKS:
        if name_filter and name_filter not in name:
            continue
        start = time.perf_counter()
        try:
            passed, detail = func()
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed),
                                   time.perf_counter() - start, detail))
    return results
