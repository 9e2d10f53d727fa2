import numpy as np
import pytest

from pcastream import data, metrics, model, offline
from pcastream.data import Constant, RngStream
from pcastream.errors import DegenerateSpectrumError, TrialDivergedError
from pcastream.model import ModelState, Task, Variant

ALL_PAIRS = [(t, v) for t in Task for v in Variant]


def small_covariance(stream=0):
    pre = data.small_problem()
    spec = pre.draw_covariance(RngStream(60, stream))
    return data.build_covariance(spec), pre


def fresh_state(pre, task, stream=0):
    rng = RngStream(61, stream)
    w0 = rng.generator.normal(0.0, pre.w_init_std, size=(pre.k, pre.n))
    return ModelState(pre.m_init[task] * np.eye(pre.k), w0, pre.lam,
                      pre.tau[task])


class TestOfflineStep:
    def test_zero_step_is_identity(self):
        g, pre = small_covariance()
        st = fresh_state(pre, Task.PSP)
        new = offline.offline_step(st, g, 0.0, Task.PSP, Variant.ITERATION_FREE)
        assert np.array_equal(new.w, st.w)
        assert np.array_equal(new.m, st.m)

    def test_fixed_point_is_stationary(self):
        g, pre = small_covariance(1)
        for task, variant in ALL_PAIRS:
            fp = offline.construct_fixed_point(g, pre.lam, task)
            new = offline.offline_step(fp, g, 0.1, task, variant)
            assert np.abs(new.w - fp.w).max() < 1e-12
            assert np.abs(new.m - fp.m).max() < 1e-12

    def test_matches_hand_assembled_update(self):
        # N=4, K=2 single projection step assembled with explicit formulas
        rng = np.random.default_rng(62)
        g = np.diag([1.0, 0.7, 0.4, 0.2])
        w = rng.normal(size=(2, 4))
        lam = np.array([1.0, 0.8])
        st = ModelState(np.eye(2), w, lam, 0.5)
        alpha = 0.1
        new = offline.offline_step(st, g, alpha, Task.PSP,
                                   Variant.ITERATION_FREE)
        filt = w.copy()  # identity lateral matrix: filter equals W
        fg = filt @ g
        w_expected = w + alpha * (fg - w)
        m_expected = np.eye(2) + (alpha / 0.5) * (
            fg @ filt.T - lam[:, None] * np.eye(2) * lam[None, :])
        assert np.allclose(new.w, w_expected, atol=1e-14)
        assert np.allclose(new.m, m_expected, atol=1e-14)


class TestConstructFixedPoint:
    def test_diagonal_projection_case(self):
        g = np.diag([1.0, 0.75, 0.5, 0.2])
        lam = np.array([1.0, 0.85])
        fp = offline.construct_fixed_point(g, lam, Task.PSP)
        assert np.allclose(fp.m, np.diag([1.0, 0.75]), atol=1e-12)
        filt = model.neural_filter(fp, Variant.EXACT_INVERSE)
        expected = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.85, 0.0, 0.0]])
        assert np.abs(np.abs(filt) - expected).max() < 1e-12

    def test_diagonal_whitening_case(self):
        g = np.diag([1.0, 0.75, 0.5, 0.2])
        lam = np.array([1.0, 0.85])
        fp = offline.construct_fixed_point(g, lam, Task.PSW)
        filt = model.neural_filter(fp, Variant.EXACT_INVERSE)
        expected = np.array([[1.0, 0.0, 0.0, 0.0],
                             [0.0, 0.85 / np.sqrt(0.75), 0.0, 0.0]])
        assert np.abs(np.abs(filt) - expected).max() < 1e-12

    def test_random_rotated_residuals(self):
        for i in range(5):
            g, pre = small_covariance(10 + i)
            for task, variant in ALL_PAIRS:
                fp = offline.construct_fixed_point(g, pre.lam, task)
                assert offline.fixed_point_residual(fp, g, task, variant) < 1e-10

    def test_signed_and_permuted_constructions_are_stationary(self):
        g, pre = small_covariance(20)
        fp = offline.construct_fixed_point(
            g, pre.lam, Task.PSP, signs=np.array([-1.0, 1.0, -1.0]),
            order=[2, 0, 1])
        r = offline.fixed_point_residual(fp, g, Task.PSP, Variant.EXACT_INVERSE)
        assert r < 1e-10

    def test_degenerate_gap_rejected(self):
        g = np.diag([1.0, 0.5, 0.5, 0.2])
        with pytest.raises(DegenerateSpectrumError):
            offline.construct_fixed_point(g, np.array([1.0, 0.8]), Task.PSP)

    def test_invalid_order_rejected(self):
        g, pre = small_covariance(21)
        with pytest.raises(ValueError):
            offline.construct_fixed_point(g, pre.lam, Task.PSP, order=[0, 0, 1])

    def test_invalid_signs_rejected(self):
        g, pre = small_covariance(22)
        with pytest.raises(ValueError):
            offline.construct_fixed_point(g, pre.lam, Task.PSP,
                                          signs=np.array([0.5, 1.0, 1.0]))


class TestFixedPointResidual:
    def test_detects_scaled_weights(self):
        # doubling W doubles the filter too, so detection comes from the
        # lateral drive term of the residual
        g, pre = small_covariance(23)
        fp = offline.construct_fixed_point(g, pre.lam, Task.PSP)
        moved = ModelState(fp.m, 2.0 * fp.w, fp.lam, fp.tau)
        r = offline.fixed_point_residual(moved, g, Task.PSP,
                                         Variant.EXACT_INVERSE)
        assert r > 0.1

    def test_sensitive_to_gain_change(self):
        g, pre = small_covariance(24)
        fp = offline.construct_fixed_point(g, pre.lam, Task.PSW)
        shrunk = ModelState(fp.m, fp.w, 0.5 * fp.lam, fp.tau)
        r0 = offline.fixed_point_residual(fp, g, Task.PSW, Variant.EXACT_INVERSE)
        r1 = offline.fixed_point_residual(shrunk, g, Task.PSW,
                                          Variant.EXACT_INVERSE)
        assert r1 > r0 + 0.1


class TestJacobianSpectrum:
    def test_correct_ordering_is_stable(self):
        g, pre = small_covariance(25)
        for task, variant in ALL_PAIRS:
            fp = offline.construct_fixed_point(g, pre.lam, task)
            spectrum = offline.jacobian_spectrum(fp, g, task, variant)
            assert spectrum[0] < -1e-6

    def test_permuted_ordering_is_unstable(self):
        g, pre = small_covariance(26)
        for task, variant in ALL_PAIRS:
            bad = offline.construct_fixed_point(g, pre.lam, task,
                                                order=[1, 0, 2])
            spectrum = offline.jacobian_spectrum(bad, g, task, variant)
            assert spectrum[0] > 1e-6

    def test_variant_linearizations_agree(self):
        g, pre = small_covariance(27)
        for task in Task:
            fp = offline.construct_fixed_point(g, pre.lam, task)
            s_if = offline.jacobian_spectrum(fp, g, task, Variant.ITERATION_FREE)
            s_ex = offline.jacobian_spectrum(fp, g, task, Variant.EXACT_INVERSE)
            scale = max(np.abs(s_ex).max(), 1.0)
            assert np.abs(s_if - s_ex).max() / scale < 1e-4

    def test_eps_bounds_enforced(self):
        g, pre = small_covariance(28)
        fp = offline.construct_fixed_point(g, pre.lam, Task.PSP)
        with pytest.raises(ValueError):
            offline.jacobian_spectrum(fp, g, Task.PSP, Variant.EXACT_INVERSE,
                                      eps=1e-8)

    def test_rejects_states_far_from_stationarity(self):
        g, pre = small_covariance(29)
        st = fresh_state(pre, Task.PSP)
        with pytest.raises(ValueError):
            offline.jacobian_spectrum(st, g, Task.PSP, Variant.EXACT_INVERSE)


class TestRunOffline:
    def test_zero_horizon_returns_initial(self):
        g, pre = small_covariance(30)
        st = fresh_state(pre, Task.PSP)
        traj = offline.run_offline(st, g, Constant(0.1), 0,
                                   task=Task.PSP, variant=Variant.ITERATION_FREE)
        assert len(traj.checkpoints) == 1
        t, snap = traj.checkpoints[0]
        assert t == 0
        assert np.array_equal(snap.w, st.w)

    def test_final_snapshot_always_present(self):
        g, pre = small_covariance(31)
        st = fresh_state(pre, Task.PSP)
        traj = offline.run_offline(st, g, Constant(0.1), 50, [10, 20],
                                   task=Task.PSP, variant=Variant.ITERATION_FREE)
        assert [t for t, _ in traj.checkpoints] == [10, 20, 50]

    def test_fixed_point_is_invariant_along_run(self):
        g, pre = small_covariance(32)
        fp = offline.construct_fixed_point(g, pre.lam, Task.PSP)
        traj = offline.run_offline(fp, g, Constant(0.1), 500,
                                   task=Task.PSP, variant=Variant.ITERATION_FREE)
        final = traj.final_state()
        assert np.abs(final.w - fp.w).max() < 1e-10
        assert np.abs(final.m - fp.m).max() < 1e-10

    def test_divergence_wrapped_with_iteration(self):
        g, pre = small_covariance(33)
        st = fresh_state(pre, Task.PSP)
        with pytest.raises(TrialDivergedError) as err:
            offline.run_offline(st, g, Constant(40.0), 100,
                                task=Task.PSP, variant=Variant.ITERATION_FREE)
        assert 1 <= err.value.iteration <= 100

    def test_bad_checkpoints_rejected(self):
        g, pre = small_covariance(34)
        st = fresh_state(pre, Task.PSP)
        with pytest.raises(ValueError):
            offline.run_offline(st, g, Constant(0.1), 10, [0],
                                task=Task.PSP, variant=Variant.ITERATION_FREE)

    def test_lateral_weights_vanish_at_convergence(self):
        g, pre = small_covariance(35)
        for task, variant in ALL_PAIRS:
            st = fresh_state(pre, task, stream=35)
            traj = offline.run_offline(st, g, pre.offline_schedule, 5000,
                                       task=task, variant=variant)
            final = traj.final_state()
            d, m_o = model.split_diag(final.m)
            assert np.linalg.norm(m_o) / np.linalg.norm(np.diag(d)) < 1e-6

    def test_error_monotone_at_tail_checkpoints(self):
        g, pre = small_covariance(36)
        truth = metrics.ground_truth(g, pre.k)
        for task, variant in ALL_PAIRS:
            st = fresh_state(pre, task, stream=36)
            traj = offline.run_offline(st, g, pre.offline_schedule, 5000,
                                       [100, 1000], task=task, variant=variant)
            errs = [metrics.procrustes_error(
                metrics.estimate_subspace(s, task, variant, truth.sigma_k),
                truth.u_k) for _, s in traj.checkpoints]
            assert all(b <= a for a, b in zip(errs, errs[1:]))


class TestOfflineTrajectory:
    def test_requires_increasing_iterations(self):
        g, pre = small_covariance(37)
        st = fresh_state(pre, Task.PSP)
        with pytest.raises(ValueError):
            offline.OfflineTrajectory([(5, st), (5, st)])

    def test_state_lookup(self):
        g, pre = small_covariance(38)
        st = fresh_state(pre, Task.PSP)
        traj = offline.OfflineTrajectory([(1, st), (4, st.copy())])
        assert traj.state_at(4) is traj.checkpoints[1][1]
        with pytest.raises(KeyError):
            traj.state_at(2)
