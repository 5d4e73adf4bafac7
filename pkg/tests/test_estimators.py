import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tensorarma.basis import DecayParams, loading_matrix
from tensorarma.estimators import (
    FitConfig,
    cross_validate_lambda,
    fit_rank_constrained,
    fit_sltr,
    initial_grid,
    initial_var_estimator,
    initialize,
    lag_features,
    procrustes_orthonormal,
    soft_threshold,
    squared_loss,
)
from tensorarma.model import VarInfModel, ar_stack, build_dgp, simulate, varma_to_var_inf
from tensorarma.tensor_ops import hosvd, matricize, mode_product


def direct_loss(y, params, g):
    """Independent oracle: the loss via explicit lag convolution of the A_j."""
    t_len, n = y.shape
    rows = loading_matrix(params, max(t_len - 1, 1))
    a = np.einsum("jk,mnk->jmn", rows, g)  # A_j stacked over j
    total = 0.0
    for t in range(t_len):
        pred = np.zeros(n)
        for j in range(1, t + 1):
            pred += a[j - 1] @ y[t - j]
        total += float(np.sum((y[t] - pred) ** 2))
    return total


def random_params_and_g(rng, n=3):
    params = DecayParams(p=1, lambdas=[-0.4, 0.55], gammas=[0.6], thetas=[1.1])
    g = rng.standard_normal((n, n, params.d)) / (2 * n)
    return params, g


class TestLoss:
    def test_zero_coefficients(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((20, 3))
        params = DecayParams(p=1)
        assert squared_loss(y, params, np.zeros((3, 3, 1))) == pytest.approx(
            float(np.sum(y**2))
        )

    def test_single_observation(self):
        y = np.array([[1.0, 2.0]])
        params = DecayParams(p=1, lambdas=[0.5])
        g = np.random.default_rng(1).standard_normal((2, 2, 2))
        assert squared_loss(y, params, g) == pytest.approx(5.0)

    def test_hand_computed_ar1(self):
        y = np.ones((3, 1))
        params = DecayParams(p=1)
        g = np.array(0.5).reshape(1, 1, 1)
        assert squared_loss(y, params, g) == pytest.approx(1.5)

    def test_two_path_equality(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            params, g = random_params_and_g(rng)
            y = rng.standard_normal((40, 3))
            fast = squared_loss(y, params, g)
            slow = direct_loss(y, params, g)
            assert fast == pytest.approx(slow, rel=1e-9)


class TestLagFeatures:
    def test_first_time_point_is_zero(self):
        rng = np.random.default_rng(3)
        params, _ = random_params_and_g(rng)
        y = rng.standard_normal((10, 3))
        np.testing.assert_array_equal(lag_features(y, params, t=1), np.zeros((3, params.d)))

    def test_indicator_column_is_lagged_value(self):
        rng = np.random.default_rng(4)
        params = DecayParams(p=1, lambdas=[0.3])
        y = rng.standard_normal((10, 2))
        for t in range(2, 11):
            np.testing.assert_allclose(lag_features(y, params, t=t)[:, 0], y[t - 2])

    def test_factor_contraction_matches_direct_lag_sum(self):
        rng = np.random.default_rng(5)
        params, g = random_params_and_g(rng, n=4)
        fac = hosvd(g, (2, 2))
        g_lr = fac.compose()
        y = rng.standard_normal((30, 4))
        z = lag_features(y, params)
        rows = loading_matrix(params, 29)
        a = np.einsum("jk,mnk->jmn", rows, g_lr)
        for t in (1, 7, 30):
            via_factors = np.zeros(4)
            for k in range(params.d):
                s_k = fac.core[:, :, k]
                via_factors += fac.u1 @ s_k @ fac.u2.T @ z[t - 1, :, k]
            direct = np.zeros(4)
            for j in range(1, t):
                direct += a[j - 1] @ y[t - 1 - j]
            np.testing.assert_allclose(via_factors, direct, atol=1e-10)


class TestProxOperators:
    @settings(max_examples=60, deadline=None)
    @given(
        arrays(np.float64, (4, 3), elements=st.floats(-5, 5)),
        st.floats(0.0, 3.0),
    )
    def test_soft_threshold_closed_form(self, x, level):
        out = soft_threshold(x, level)
        expected = np.sign(x) * np.maximum(np.abs(x) - level, 0.0)
        np.testing.assert_array_equal(out, expected)

    def test_soft_threshold_is_prox(self):
        # prox minimizes level*|w| + 0.5*(w - x)^2; check against a dense scan
        x, level = 1.3, 0.8
        w_grid = np.linspace(-3, 3, 20001)
        objective = level * np.abs(w_grid) + 0.5 * (w_grid - x) ** 2
        assert soft_threshold(np.array([x]), level)[0] == pytest.approx(
            w_grid[np.argmin(objective)], abs=1e-3
        )

    def test_procrustes_orthonormal_and_optimal(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((6, 3))
        v = procrustes_orthonormal(a)
        np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-12)
        best = float(np.sum(v * a))
        for _ in range(200):
            q, _ = np.linalg.qr(rng.standard_normal((6, 3)))
            assert float(np.sum(q * a)) <= best + 1e-9


def weak_signal_truth(n=4, lam=-0.45, seed=0):
    spec = build_dgp(1, n, lambdas=[lam], seed=seed)
    _, model = varma_to_var_inf(spec, 10)
    return spec, model


class TestFitRankConstrained:
    def test_fixed_point_near_truth(self):
        # on self-consistent data the truth is the optimum: starting there,
        # the loss cannot increase and the decay parameters stay put
        rng = np.random.default_rng(21)
        spec, truth = weak_signal_truth(seed=21)
        n, t_len = truth.n_series, 80
        a = ar_stack(truth, t_len)
        y = np.zeros((t_len, n))
        y[0] = rng.standard_normal(n)
        for t in range(1, t_len):
            for j in range(1, t + 1):
                y[t] += a[:, :, j - 1] @ y[t - j]
            y[t] += 1e-8 * rng.standard_normal(n)
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0), max_outer_iters=3,
                        tol_rel_loss=1e-14)
        init = VarInfModel(params=truth.params, g=truth.g,
                           factors=hosvd(truth.g, (1, 1)))
        report = fit_rank_constrained(y, cfg, init)
        traj = report.loss_trajectory
        assert all(b <= a + 1e-10 for a, b in zip(traj, traj[1:]))
        drift = np.abs(report.model.params.vector() - truth.params.vector())
        assert np.max(drift) < 1e-3

    def test_loss_non_increasing_from_truth_on_noisy_data(self):
        spec, truth = weak_signal_truth(seed=21)
        y = simulate(spec, 2000, seed=22)
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0), max_outer_iters=3,
                        tol_rel_loss=1e-14)
        init = VarInfModel(params=truth.params, g=truth.g,
                           factors=hosvd(truth.g, (1, 1)))
        report = fit_rank_constrained(y, cfg, init)
        traj = report.loss_trajectory
        assert all(b <= a + 1e-10 for a, b in zip(traj, traj[1:]))

    def test_near_exact_recovery_on_self_consistent_data(self):
        # impulse start plus 1e-6 innovations; scalar so the trajectory
        # identifies both decay and slice (a converted MA(1) impulse dies in
        # two steps and would leave the parameters unidentified)
        rng = np.random.default_rng(23)
        truth = VarInfModel(params=DecayParams(p=0, lambdas=[-0.6]),
                            g=np.array([[[-0.55]]]))
        t_len = 40
        a = ar_stack(truth, t_len)
        y = np.zeros((t_len, 1))
        y[0] = 1.0
        for t in range(1, t_len):
            for j in range(1, t + 1):
                y[t] += a[:, :, j - 1] @ y[t - j]
            y[t] += 1e-6 * rng.standard_normal(1)
        init = initialize(y, (1, 1), (0, 1, 0))
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0))
        report = fit_rank_constrained(y, cfg, init)
        fit_a = ar_stack(report.model, 10)
        true_a = ar_stack(truth, 10)
        assert np.max(np.abs(fit_a - true_a)) < 1e-3

    def test_recovery_accuracy_at_large_sample(self):
        from tensorarma.model import coefficient_distance

        for rep in range(3):
            spec = build_dgp(1, 10, lambdas=[-0.7], seed=40000 + rep)
            y = simulate(spec, 4000, seed=41000 + rep)
            _, truth = varma_to_var_inf(spec, 10)
            init = initialize(y, (1, 1), (0, 1, 0))
            report = fit_rank_constrained(
                y, FitConfig(ranks=(1, 1), orders=(0, 1, 0)), init)
            rel = coefficient_distance(report.model, truth, 150) / np.linalg.norm(
                ar_stack(truth, 150))
            assert rel <= 0.15

    def test_monotone_loss_on_random_instances(self):
        rng = np.random.default_rng(25)
        for rep in range(8):
            n = int(rng.integers(2, 5))
            y = rng.standard_normal((80, n))
            orders = [(1, 1, 0), (0, 1, 1), (2, 0, 0)][rep % 3]
            ranks = (1, 1)
            init = initialize(y, ranks, orders)
            cfg = FitConfig(ranks=ranks, orders=orders, max_outer_iters=12,
                            tol_rel_loss=1e-12)
            report = fit_rank_constrained(y, cfg, init)
            traj = report.loss_trajectory
            assert all(b <= a + 1e-10 for a, b in zip(traj, traj[1:]))

    def test_fitted_parameters_stay_in_box(self):
        rng = np.random.default_rng(26)
        y = rng.standard_normal((150, 3))
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 1))
        init = initialize(y, (1, 1), (0, 1, 1))
        report = fit_rank_constrained(y, cfg, init)
        params = report.model.params
        assert np.all(np.abs(params.lambdas) >= cfg.lambda_floor - 1e-12)
        assert np.all(np.abs(params.lambdas) <= cfg.rho_bar)
        assert np.all((params.gammas > 0) & (params.gammas < cfg.rho_bar))
        assert np.all((params.thetas > 0) & (params.thetas < np.pi))

    def test_degenerate_data_refused(self):
        y = np.ones((10, 2))
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0))
        with pytest.raises(ValueError, match="constant"):
            init = VarInfModel(params=DecayParams(p=0, lambdas=[0.5]),
                               g=np.zeros((2, 2, 1)))
            fit_rank_constrained(y, cfg, init)
        with pytest.raises(ValueError, match="T > d"):
            rng = np.random.default_rng(0)
            init = VarInfModel(params=DecayParams(p=3, lambdas=[0.5]),
                               g=np.zeros((2, 2, 4)))
            fit_rank_constrained(rng.standard_normal((4, 2)),
                                 FitConfig(ranks=(1, 1), orders=(3, 1, 0)), init)


class TestFitSltr:
    def test_zero_penalty_degenerates_to_rank_constrained(self):
        spec, _ = weak_signal_truth(seed=31)
        y = simulate(spec, 300, seed=32)
        init = initialize(y, (1, 1), (0, 1, 0))
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0))
        rank_loss = fit_rank_constrained(y, cfg, init).final_loss
        sltr_report = fit_sltr(y, cfg.replace(lambda_l1=0.0, max_outer_iters=80), init)
        sltr_loss = squared_loss(y, sltr_report.model.params, sltr_report.model.g)
        assert abs(sltr_loss - rank_loss) <= 0.01 * rank_loss

    def test_orthogonality_and_row_orthogonal_core(self):
        spec = build_dgp(1, 8, lambdas=[-0.7], sparsity=4, seed=33)
        y = simulate(spec, 200, seed=34)
        init = initialize(y, (1, 1), (0, 1, 0), kind="group_lasso")
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0), lambda_l1=30.0,
                        max_outer_iters=40)
        report = fit_sltr(y, cfg, init)
        fac = report.model.factors
        for u in (fac.u1, fac.u2):
            assert np.max(np.abs(u.T @ u - np.eye(u.shape[1]))) <= 1e-6
        for mode in (1, 2):
            mat = matricize(fac.core, mode)
            gram = mat @ mat.T
            off = gram - np.diag(np.diag(gram))
            assert np.max(np.abs(off)) <= 1e-6 * max(1.0, np.max(np.abs(gram)))

    def test_multirank_orthogonality(self):
        spec = build_dgp(1, 8, pairs=[(0.6, np.pi / 4)], seed=35)
        y = simulate(spec, 300, seed=36)
        init = initialize(y, (2, 2), (0, 0, 1))
        cfg = FitConfig(ranks=(2, 2), orders=(0, 0, 1), lambda_l1=5.0,
                        max_outer_iters=30)
        report = fit_sltr(y, cfg, init)
        fac = report.model.factors
        for u in (fac.u1, fac.u2):
            assert np.max(np.abs(u.T @ u - np.eye(u.shape[1]))) <= 1e-6


class TestInitialVarEstimator:
    def make_var1(self, seed, n=4, t_len=400):
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        phi = q @ np.diag(rng.uniform(0.2, 0.6, n)) @ q.T
        from tensorarma.model import VarmaSpec

        spec = VarmaSpec(phi=[phi], theta=[])
        return simulate(spec, t_len, seed=seed + 1), phi

    def test_zero_reg_matches_ols(self):
        y, _ = self.make_var1(40)
        for kind in ("nuclear", "group_lasso"):
            est = initial_var_estimator(y, kind=kind, trunc_lag=4, reg=0.0)
            x = np.column_stack([y[4 - j: len(y) - j] for j in range(1, 5)])
            yt = y[4:]
            ols = np.linalg.lstsq(x, yt, rcond=None)[0].T
            np.testing.assert_allclose(matricize(est, 1), ols, atol=1e-8)

    def test_huge_reg_shrinks_to_zero(self):
        y, _ = self.make_var1(41)
        for kind in ("nuclear", "group_lasso"):
            est = initial_var_estimator(y, kind=kind, trunc_lag=4, reg=1e9)
            assert np.linalg.norm(est) <= 1e-6

    def test_group_lasso_kills_spurious_lags_at_suitable_reg(self):
        y, phi = self.make_var1(42, t_len=600)
        for reg in (1.0, 2.0, 4.0, 8.0, 16.0):
            est = initial_var_estimator(y, kind="group_lasso", trunc_lag=5, reg=reg)
            norms = [np.linalg.norm(est[:, :, j]) for j in range(5)]
            if norms[0] >= 0.5 * np.linalg.norm(phi) \
                    and max(norms[1:]) <= 0.05 * norms[0]:
                break
        else:
            pytest.fail("no penalty level isolated the first lag")

    def test_invalid_lag_rejected(self):
        y, _ = self.make_var1(43, t_len=50)
        with pytest.raises(ValueError):
            initial_var_estimator(y, trunc_lag=50)


class TestInitialize:
    def test_grid_sizes(self):
        assert len(initial_grid((0, 1, 0))) == 6
        assert len(initial_grid((0, 2, 0))) == 15
        assert len(initial_grid((1, 1, 1))) == 36

    def test_returned_candidate_minimizes_loss(self):
        spec, _ = weak_signal_truth(seed=51)
        y = simulate(spec, 240, seed=52)
        model = initialize(y, (1, 1), (0, 1, 0))
        returned = squared_loss(y, model.params, model.g)
        # rebuild every grid candidate through the same public pieces
        t_len = y.shape[0]
        trunc_lag = min(max(int(np.ceil(t_len ** (1 / 3))), 2), t_len - 1)
        a_init = initial_var_estimator(y, kind="nuclear", trunc_lag=trunc_lag)
        fac = hosvd(a_init, (1, 1))
        losses = []
        for cand in initial_grid((0, 1, 0)):
            basis_rows = loading_matrix(cand, trunc_lag)
            core = mode_product(fac.core, np.linalg.pinv(basis_rows), 3)
            g = mode_product(mode_product(core, fac.u1, 1), fac.u2, 2)
            losses.append(squared_loss(y, cand, g))
        assert returned <= min(losses) + 1e-9

    def test_rejects_empty_orders(self):
        with pytest.raises(ValueError):
            initialize(np.random.default_rng(0).standard_normal((50, 2)),
                       (1, 1), (0, 0, 0))


class TestCrossValidateLambda:
    def test_single_element_grid(self):
        spec, _ = weak_signal_truth(seed=61)
        y = simulate(spec, 150, seed=62)
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0), max_outer_iters=10)
        assert cross_validate_lambda(y, cfg, [0.7]) == 0.7

    def test_deterministic(self):
        spec = build_dgp(1, 5, lambdas=[-0.7], sparsity=3, seed=63)
        y = simulate(spec, 180, seed=64)
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0), max_outer_iters=10)
        first = cross_validate_lambda(y, cfg, [1.0, 20.0])
        second = cross_validate_lambda(y, cfg, [1.0, 20.0])
        assert first == second

    def test_huge_penalty_loses_on_sparse_dgp(self):
        spec = build_dgp(1, 6, lambdas=[-0.7], sparsity=3, seed=65)
        y = simulate(spec, 240, seed=66)
        cfg = FitConfig(ranks=(1, 1), orders=(0, 1, 0), max_outer_iters=15)
        chosen = cross_validate_lambda(y, cfg, [1e-3, 30.0, 1e7])
        assert chosen != 1e7
