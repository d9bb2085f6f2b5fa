import csv

import numpy as np
import pytest

from prml.data import ScalarData
from prml.grid import make_trapezoid_grid
from prml.kernels import GaussianLocationKernel
from prml.likelihood import (
    KnEvaluator,
    LikelihoodConfig,
    Objective,
    averaged_loglik,
    averaged_loglik_and_grad,
    final_density,
    likelihood_curve,
    loglik_and_grad,
    normalized_curve,
    prml_loglik,
    profile_loglik,
    write_curve_csv,
)
from prml.recursion import pr_run
from prml.simulate import gen_density, gen_lmm, gen_studentt, studentt_logpdf
from prml.study import lmm_config

KERNEL = GaussianLocationKernel()


@pytest.fixture
def cfg():
    return LikelihoodConfig(KERNEL, make_trapezoid_grid(0, 1, 101))


@pytest.fixture
def data():
    return gen_density("beta26", 0.1, 40, seed=5)


def _fd(fn, theta, h=1e-6):
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h * (1 + abs(theta[k]))
        g[k] = (fn(theta + e) - fn(theta - e)) / (2 * e[k])
    return g


def test_prml_is_sum_of_log_predictives(cfg, data):
    state = pr_run(KERNEL, [0.1], cfg.grid, None, cfg.weights, data)
    assert prml_loglik([0.1], data, cfg) == pytest.approx(state.loglik, rel=1e-14)


def test_profile_plugs_in_final_density(cfg, data):
    state = pr_run(KERNEL, [0.1], cfg.grid, None, cfg.weights, data)
    u = cfg.grid.nodes[:, 0]
    m = [(cfg.grid.weights * state.f.values) @ np.exp(KERNEL.log_density([0.1], u, data.take(i))[0])
         for i in range(len(data))]
    assert profile_loglik([0.1], data, cfg) == pytest.approx(np.log(m).sum(), rel=1e-12)


def test_permutations_are_seeded_and_first_is_identity(data):
    grid = make_trapezoid_grid(0, 1, 51)
    cfg = LikelihoodConfig(KERNEL, grid, M=4, seed=3)
    perms = cfg.permutations(len(data))
    np.testing.assert_array_equal(perms[0], np.arange(len(data)))
    again = LikelihoodConfig(KERNEL, grid, M=4, seed=3).permutations(len(data))
    for p, q in zip(perms, again):
        np.testing.assert_array_equal(p, q)
    permuted = LikelihoodConfig(KERNEL, grid, M=2, seed=3, order="permuted").permutations(len(data))
    assert not np.array_equal(permuted[0], np.arange(len(data)))


def test_averaged_is_mean_of_single_orderings(data):
    grid = make_trapezoid_grid(0, 1, 51)
    cfg = LikelihoodConfig(KERNEL, grid, M=3, seed=1)
    vals = [prml_loglik([0.12], data.take(p), LikelihoodConfig(KERNEL, grid)) for p in cfg.permutations(len(data))]
    assert averaged_loglik([0.12], data, cfg) == pytest.approx(np.mean(vals), rel=1e-14)


def test_m_equals_one_given_order_matches_plain(cfg, data):
    assert averaged_loglik([0.1], data, cfg) == prml_loglik([0.1], data, cfg)


@pytest.mark.parametrize("which", ["prml", "profile"])
def test_gradient_matches_finite_differences(which, data):
    cfg = LikelihoodConfig(KERNEL, make_trapezoid_grid(0, 1, 101), M=3, seed=2)
    _, g = averaged_loglik_and_grad([0.13], data, cfg, which)
    fd = _fd(lambda t: averaged_loglik(t, data, cfg, which), [0.13])
    np.testing.assert_allclose(g, fd, rtol=1e-6)


def test_lmm_profile_gradient():
    data, _ = gen_lmm(15, 4, "gaussian", seed=4)
    cfg = lmm_config(data, J=61)
    theta = np.array([1.7, 5.4, 2.3])
    _, g = loglik_and_grad(theta, data, cfg, "profile")
    fd = _fd(lambda t: profile_loglik(t, data, cfg), theta)
    np.testing.assert_allclose(g, fd, rtol=1e-6)


def test_objective_memoises_and_counts(cfg, data):
    obj = Objective(data, cfg)
    v1, g1 = obj.value_and_grad([0.1])
    v2, g2 = obj.value_and_grad(np.array([0.1]))
    assert obj.n_evals == 1 and v1 == v2 and g1 is g2
    assert obj([0.1]) == v1 and obj.has_gradient
    with pytest.raises(ValueError):
        Objective(data, cfg, "posterior")


def test_config_validation():
    grid = make_trapezoid_grid(0, 1, 11)
    with pytest.raises(ValueError):
        LikelihoodConfig(KERNEL, grid, M=0)
    with pytest.raises(ValueError):
        LikelihoodConfig(KERNEL, grid, order="sorted")
    with pytest.raises(ValueError):
        prml_loglik([0.1], ScalarData([]), LikelihoodConfig(KERNEL, grid))


def test_kn_forms_agree_and_are_small_near_truth():
    data = gen_studentt(300, seed=0)
    cfg = LikelihoodConfig(KERNEL, make_trapezoid_grid(0, 1, 201))
    kn = KnEvaluator(data, cfg, studentt_logpdf)
    for sigma in (0.05, 0.1, 0.3):
        direct, via = kn.both_forms([sigma])
        assert abs(direct - via) <= 1e-12
    assert kn([0.1]) < kn([0.3])


def test_curve_and_normalization(tmp_path, data):
    cfg = LikelihoodConfig(KERNEL, make_trapezoid_grid(0, 1, 101), M=2)
    thetas = np.linspace(0.04, 0.4, 25)
    rows = likelihood_curve(thetas, data, cfg)
    assert rows.shape == (25, 3)
    assert rows[3, 1] == pytest.approx(averaged_loglik([thetas[3]], data, cfg), rel=1e-14)
    assert rows[3, 2] == pytest.approx(averaged_loglik([thetas[3]], data, cfg, "profile"), rel=1e-14)
    dens = normalized_curve(thetas, rows[:, 1])
    assert np.trapezoid(dens, thetas) == pytest.approx(1.0, abs=1e-12)
    path = tmp_path / "curve.csv"
    write_curve_csv(path, rows, ["sigma"])
    with open(path) as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["theta_1", "loglik_prml", "loglik_profile"]
    assert float(got[1][1]) == rows[0, 1]


def test_flat_curve_for_constant_kernel():
    dens = normalized_curve(np.linspace(0, 2, 11), np.full(11, -3.0))
    np.testing.assert_allclose(dens, 0.5)


def test_final_density_is_normalised_average(data):
    cfg = LikelihoodConfig(KERNEL, make_trapezoid_grid(0, 1, 101), M=3, seed=1)
    f = final_density([0.1], data, cfg)
    assert f.integral() == pytest.approx(1.0, abs=1e-12)
    single = final_density([0.1], data, cfg, averaged=False)
    ref = pr_run(KERNEL, [0.1], cfg.grid, None, cfg.weights, data).f
    np.testing.assert_allclose(single.values, ref.values, rtol=1e-12)
