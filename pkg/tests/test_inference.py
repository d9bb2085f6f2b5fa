import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prml.inference import FunctionObjective, confint, fit, from_unconstrained, hessian_at, to_unconstrained
from prml.likelihood import LikelihoodConfig, Objective
from prml.grid import make_trapezoid_grid
from prml.kernels import GaussianLocationKernel
from prml.simulate import gen_density


def _quadratic(center, prec):
    center, prec = np.asarray(center, float), np.asarray(prec, float)

    def fn(t):
        d = t - center
        return -0.5 * d @ prec @ d

    def grad(t):
        return -prec @ (t - center)

    return fn, grad


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=3, max_size=3), st.sampled_from(["identity", "log", "logit"]))
def test_transform_round_trip(vals, tr):
    theta = np.array(vals)
    if tr == "log":
        theta = np.exp(theta / 4)
    elif tr == "logit":
        theta = 1 / (1 + np.exp(-theta / 4))
    back = from_unconstrained(to_unconstrained(theta, (tr,) * 3), (tr,) * 3)
    np.testing.assert_allclose(back, theta, rtol=1e-12)


@pytest.mark.parametrize("with_grad", [True, False])
def test_quadratic_recovered_exactly(with_grad):
    prec = np.array([[4.0, 1.0], [1.0, 2.0]])
    fn, grad = _quadratic([1.0, -0.5], prec)
    obj = FunctionObjective(fn, grad if with_grad else None)
    res = fit(obj, [[-5, 5], [-5, 5]], [0.0, 0.0])
    np.testing.assert_allclose(res.theta_hat, [1.0, -0.5], atol=1e-5)
    np.testing.assert_allclose(res.hessian, prec, rtol=1e-5)
    np.testing.assert_allclose(res.cov, np.linalg.inv(prec), rtol=1e-5)
    z = 1.959963984540054
    np.testing.assert_allclose(res.intervals[:, 1] - res.theta_hat, z * np.sqrt(np.diag(np.linalg.inv(prec))),
                               rtol=1e-5)
    assert res.converged and not res.boundary and res.hessian_pd and res.ok


def test_boundary_flag():
    fn, grad = _quadratic([3.0], np.eye(1))
    res = fit(FunctionObjective(fn, grad), [[0.0, 1.0]], [0.5])
    assert res.boundary
    assert res.theta_hat[0] == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.isfinite(res.hessian))


def test_nonpositive_hessian_flagged():
    res = fit(FunctionObjective(lambda t: float(t[0] ** 2)), [[-1.0, 1.0]], [0.3], n_starts=1)
    assert not res.hessian_pd


def test_confint_nan_for_negative_variance():
    fn, grad = _quadratic([0.0], np.eye(1))
    res = fit(FunctionObjective(fn, grad), [[-1, 1]], [0.2])
    res.cov = np.array([[-1.0]])
    assert np.all(np.isnan(confint(res)))


def test_input_validation():
    fn, grad = _quadratic([0.0], np.eye(1))
    obj = FunctionObjective(fn, grad)
    with pytest.raises(ValueError):
        fit(obj, [[1.0, 0.0]], [0.5])
    with pytest.raises(ValueError):
        fit(obj, [[0.0, 1.0]], [2.0])
    with pytest.raises(FloatingPointError):
        fit(FunctionObjective(lambda t: np.nan), [[0.0, 1.0]], [0.5])
    with pytest.raises(ValueError):
        fit(FunctionObjective(fn), [[0.0, 1.0]], [0.5], method="lbfgsb")


def test_hessian_stencil_stays_in_box():
    seen = []

    def fn(t):
        seen.append(t.copy())
        return -float(np.sum(t**2))

    hessian_at(FunctionObjective(fn), [0.0, 1.0], box=np.array([[0.0, 1.0], [0.0, 1.0]]))
    pts = np.array(seen)
    assert pts.min() >= 0.0 and pts.max() <= 1.0


def test_gradient_and_value_hessians_agree():
    data = gen_density("beta26", 0.1, 60, seed=2)
    obj = Objective(data, LikelihoodConfig(GaussianLocationKernel(), make_trapezoid_grid(0, 1, 101)))
    hg = hessian_at(obj, [0.12], use_gradient=True)
    hv = hessian_at(obj, [0.12], use_gradient=False)
    np.testing.assert_allclose(hg, hv, rtol=1e-3)


def test_density_fit_report():
    data = gen_density("beta26", 0.1, 100, seed=3)
    obj = Objective(data, LikelihoodConfig(GaussianLocationKernel(), make_trapezoid_grid(0, 1, 101)))
    res = fit(obj, [[0.01, 1.0]], [0.2])
    assert 0.01 < res.theta_hat[0] < 1.0
    assert res.names() == ("sigma",)
    text = res.to_text()
    assert "sigma = " in text and "converged = true" in text
    assert res.loglik_at_max >= obj([0.2])
