import numpy as np
import pytest

from tensorarma.basis import (
    DEFAULT_RHO_BAR,
    DecayParams,
    canonicalize,
    gamma_derivative_columns,
    lag_weight,
    loading_matrix,
    stacked_loading_matrix,
)


def omega_grid(rng, count=20):
    """Random valid parameter draws across the order combinations."""
    draws = []
    for _ in range(count):
        p = int(rng.integers(0, 3))
        r = int(rng.integers(0, 3))
        s = int(rng.integers(0, 2))
        if p + r + 2 * s == 0:
            p = 1
        lambdas = np.sort(rng.uniform(0.05, 0.9, size=r) * rng.choice([-1, 1], size=r))
        while np.any(np.diff(lambdas) < 1e-3):
            lambdas = np.sort(rng.uniform(0.05, 0.9, size=r) * rng.choice([-1, 1], size=r))
        gammas = rng.uniform(0.1, 0.9, size=s)
        thetas = rng.uniform(0.1, np.pi - 0.1, size=s)
        draws.append(DecayParams(p=p, lambdas=lambdas, gammas=gammas, thetas=thetas))
    return draws


def test_indicator_block():
    params = DecayParams(p=1, lambdas=[0.5])
    assert lag_weight(params, 1, 1) == 1.0
    assert lag_weight(params, 2, 1) == 0.0


def test_geometric_entries():
    params = DecayParams(p=0, lambdas=[0.5])
    assert lag_weight(params, 2, 1) == pytest.approx(0.25)
    assert lag_weight(params, 5, 1) == pytest.approx(0.03125)


def test_sinusoid_entries():
    params = DecayParams(p=0, gammas=[0.5], thetas=[np.pi / 2])
    assert lag_weight(params, 1, 1) == pytest.approx(0.0, abs=1e-15)
    assert lag_weight(params, 1, 2) == pytest.approx(0.5)
    assert lag_weight(params, 2, 1) == pytest.approx(-0.25)


def test_lag_weight_bounds():
    params = DecayParams(p=1, lambdas=[0.5])
    with pytest.raises(IndexError):
        lag_weight(params, 0, 1)
    with pytest.raises(IndexError):
        lag_weight(params, 1, 3)


def test_loading_matrix_identity_block():
    out = loading_matrix(DecayParams(p=2), 3)
    np.testing.assert_array_equal(out, [[1, 0], [0, 1], [0, 0]])


def test_loading_matrix_geometric_column():
    out = loading_matrix(DecayParams(p=0, lambdas=[0.5]), 3)
    np.testing.assert_allclose(out[:, 0], [0.5, 0.25, 0.125])


def test_loading_matrix_matches_entries():
    rng = np.random.default_rng(0)
    for params in omega_grid(rng, count=8):
        out = loading_matrix(params, 12)
        for j in range(1, 13):
            for k in range(1, params.d + 1):
                assert out[j - 1, k - 1] == pytest.approx(
                    lag_weight(params, j, k), abs=1e-14
                )


def test_decay_bound_on_grid():
    rng = np.random.default_rng(1)
    for params in omega_grid(rng, count=25):
        out = loading_matrix(params, 200)
        for j in range(params.p + 1, 201):
            bound = DEFAULT_RHO_BAR ** (j - params.p)
            assert np.max(np.abs(out[j - 1])) <= bound + 1e-12


def test_truncation_consistency():
    rng = np.random.default_rng(2)
    for params in omega_grid(rng, count=5):
        short = loading_matrix(params, 9)
        long = loading_matrix(params, 10)
        np.testing.assert_array_equal(short, long[:9])


def test_stacked_derivative_entry():
    params = DecayParams(p=0, lambdas=[0.5])
    stacked = stacked_loading_matrix(params, 5)
    # derivative column value at lag 3 is 3 * 0.5^2
    assert stacked[2, 1] == pytest.approx(0.75)


def finite_difference_columns(params, n_lags, h=1e-6):
    """Central differences of the loading matrix in each lambda and theta."""
    cols = []
    for i in range(params.r):
        lp = params.lambdas.copy()
        lm = params.lambdas.copy()
        lp[i] += h
        lm[i] -= h
        fd = (loading_matrix(params.replace(lambdas=lp), n_lags)
              - loading_matrix(params.replace(lambdas=lm), n_lags)) / (2 * h)
        cols.append(fd[:, params.p + i])
    for k in range(params.s):
        tp = params.thetas.copy()
        tm = params.thetas.copy()
        tp[k] += h
        tm[k] -= h
        fd = (loading_matrix(params.replace(thetas=tp), n_lags)
              - loading_matrix(params.replace(thetas=tm), n_lags)) / (2 * h)
        base = params.p + params.r + 2 * k
        cols.append(fd[:, base])
        cols.append(fd[:, base + 1])
    return np.column_stack(cols) if cols else np.zeros((n_lags, 0))


def test_stacked_derivatives_match_finite_differences():
    rng = np.random.default_rng(3)
    for params in omega_grid(rng, count=20):
        if params.r + params.s == 0:
            continue
        n_lags = 30
        stacked = stacked_loading_matrix(params, n_lags)
        grad = stacked[:, params.d:]
        fd = finite_difference_columns(params, n_lags)
        scale = max(np.max(np.abs(fd)), 1.0)
        assert np.max(np.abs(grad - fd)) <= 1e-5 * scale


def test_gamma_derivative_matches_finite_differences():
    params = DecayParams(p=1, gammas=[0.6], thetas=[1.0])
    n_lags, h = 25, 1e-6
    gp = loading_matrix(params.replace(gammas=np.array([0.6 + h])), n_lags)
    gm = loading_matrix(params.replace(gammas=np.array([0.6 - h])), n_lags)
    fd = (gp - gm)[:, params.p + params.r:] / (2 * h)
    np.testing.assert_allclose(gamma_derivative_columns(params, n_lags), fd,
                               atol=1e-5)


def test_stacked_matrix_full_column_rank():
    rng = np.random.default_rng(4)
    for params in omega_grid(rng, count=10):
        if params.r + params.s == 0:
            continue
        n_lags = max(4 * (params.r + 2 * params.s) + params.p, params.d + 1)
        stacked = stacked_loading_matrix(params, n_lags)
        sigma_min = np.linalg.svd(stacked, compute_uv=False)[-1]
        assert sigma_min > 0


def test_parameter_space_validation():
    with pytest.raises(ValueError):
        DecayParams(p=0, lambdas=[0.0])
    with pytest.raises(ValueError):
        DecayParams(p=0, lambdas=[0.99])
    with pytest.raises(ValueError):
        DecayParams(p=0, gammas=[0.5], thetas=[3.5])
    with pytest.raises(ValueError):
        DecayParams(p=-1)


def test_canonicalize_sorts_and_permutes():
    params = DecayParams(p=0, lambdas=[0.5, -0.3])
    g = np.stack([np.full((2, 2), 1.0), np.full((2, 2), 2.0)], axis=2)
    out, g_out = canonicalize(params, g)
    np.testing.assert_allclose(out.lambdas, [-0.3, 0.5])
    np.testing.assert_array_equal(g_out[:, :, 0], np.full((2, 2), 2.0))
    np.testing.assert_array_equal(g_out[:, :, 1], np.full((2, 2), 1.0))


def test_canonicalize_idempotent():
    params = DecayParams(p=1, lambdas=[-0.4, 0.2], gammas=[0.3, 0.3],
                         thetas=[0.5, 1.5])
    rng = np.random.default_rng(5)
    g = rng.standard_normal((3, 3, params.d))
    once_p, once_g = canonicalize(params, g)
    twice_p, twice_g = canonicalize(once_p, once_g)
    np.testing.assert_array_equal(once_g, twice_g)
    np.testing.assert_array_equal(once_p.vector(), twice_p.vector())


def test_canonicalize_preserves_coefficient_sequence():
    rng = np.random.default_rng(6)
    params = DecayParams(p=1, lambdas=[0.6, -0.2], gammas=[0.7, 0.3],
                         thetas=[0.4, 2.0])
    g = rng.standard_normal((3, 3, params.d))
    out_p, out_g = canonicalize(params, g)
    n_lags = 40
    before = np.einsum("jk,mnk->jmn", loading_matrix(params, n_lags), g)
    after = np.einsum("jk,mnk->jmn", loading_matrix(out_p, n_lags), out_g)
    np.testing.assert_allclose(before, after, atol=1e-12)


def test_canonicalize_rejects_duplicates():
    g = np.zeros((2, 2, 2))
    with pytest.raises(ValueError):
        canonicalize(DecayParams(p=0, lambdas=[0.5, 0.5 + 1e-10]), g)
    g4 = np.zeros((2, 2, 4))
    with pytest.raises(ValueError):
        canonicalize(
            DecayParams(p=0, gammas=[0.5, 0.5], thetas=[1.0, 1.0 + 1e-10]), g4
        )
