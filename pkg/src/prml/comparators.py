"""Parametric random-intercept fits assuming a normal random-effect law.

These are the "Gaussian" comparison rows of the regression studies: the
intercept law is ``N(mu, tau^2)`` with ``mu`` and ``tau`` estimated along
with theta by maximum likelihood.  Intervals come from the observed
information, like the semiparametric fits.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_expit

from .inference import FitResult, fit

GH_POINTS = 20


class _FDObjective:
    """Log-likelihood with a central-difference gradient (cheap, closed-form value)."""

    has_gradient = True
    which = "gaussian"

    def __init__(self, fn, transforms):
        self.fn = fn
        self.transforms = transforms
        self.n_evals = 0

    def __call__(self, theta):
        self.n_evals += 1
        return float(self.fn(np.asarray(theta, dtype=float)))

    def value_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        h = 1e-6 * (1 + np.abs(theta))
        grad = np.empty_like(theta)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h[k]
            grad[k] = (self.fn(theta + e) - self.fn(theta - e)) / (2 * h[k])
        return self(theta), grad


def lmm_gaussian_loglik(params, data) -> float:
    """Exact marginal log-likelihood; ``params = (beta_1..beta_d, sigma, mu, tau)``."""
    d = data.d
    beta, sigma, mu, tau = params[:d], params[d], params[d + 1], params[d + 2]
    r = data.r
    e = data.y - data.x @ beta - mu  # (n, r)
    s2, t2 = sigma**2, tau**2
    tot = e.sum(axis=1)
    quad = ((e**2).sum(axis=1) - t2 / (s2 + r * t2) * tot**2) / s2
    logdet = (r - 1) * np.log(s2) + np.log(s2 + r * t2)
    return float(-0.5 * np.sum(r * np.log(2 * np.pi) + logdet + quad))


def glmm_gaussian_loglik(params, data, points: int = GH_POINTS) -> float:
    """Gauss-Hermite marginal log-likelihood; ``params = (beta_1..beta_d, mu, tau)``."""
    d = data.d
    beta, mu, tau = params[:d], params[d], params[d + 1]
    x, w = np.polynomial.hermite.hermgauss(points)
    u = mu + np.sqrt(2.0) * tau * x  # (K,)
    eta = (data.x @ beta)[:, None, :] + u[None, :, None]  # (n, K, r)
    y = data.y[:, None, :]
    ll = (y * log_expit(eta) + (1 - y) * log_expit(-eta)).sum(axis=2)  # (n, K)
    shift = ll.max(axis=1, keepdims=True)
    return float(np.sum(np.log(np.exp(ll - shift) @ (w / np.sqrt(np.pi))) + shift[:, 0]))


def _finish(res: FitResult, k: int) -> FitResult:
    """Keep only the structural components (drop the random-effect law parameters)."""
    res.theta_hat = res.theta_hat[:k]
    res.cov = res.cov[:k, :k]
    res.hessian = np.linalg.inv(res.cov) if res.hessian_pd else np.full((k, k), np.nan)
    res.intervals = res.intervals[:k]
    res.param_names = res.param_names[:k]
    return res


def fit_lmm_gaussian(data, n_starts: int = 1) -> FitResult:
    """Normal random-intercept linear model by maximum likelihood."""
    d = data.d
    X = np.column_stack([np.ones(data.y.size), data.x.reshape(-1, d)])
    coef, *_ = np.linalg.lstsq(X, data.y.reshape(-1), rcond=None)
    resid = data.y.reshape(-1) - X @ coef
    sd = max(resid.std(), 1e-3)
    init = np.array([*coef[1:], sd / np.sqrt(2), coef[0], sd / np.sqrt(2)])
    box = np.array([*[[c - 50.0, c + 50.0] for c in coef[1:]], [1e-3, 50.0], [coef[0] - 50, coef[0] + 50], [1e-3, 50.0]])
    transforms = ("identity",) * d + ("log", "identity", "log")
    obj = _FDObjective(lambda p: lmm_gaussian_loglik(p, data), transforms)
    names = tuple(f"beta{k + 1}" for k in range(d)) + ("sigma", "mu", "tau")
    res = fit(obj, box, init, n_starts=n_starts, param_names=names)
    return _finish(res, d + 1)


def fit_glmm_gaussian(data, n_starts: int = 1) -> FitResult:
    """Normal random-intercept logistic model by Gauss-Hermite maximum likelihood."""
    d = data.d
    init = np.array([0.0] * d + [0.0, 1.0])
    box = np.array([[-30.0, 30.0]] * d + [[-30.0, 30.0], [1e-2, 30.0]])
    transforms = ("identity",) * (d + 1) + ("log",)
    obj = _FDObjective(lambda p: glmm_gaussian_loglik(p, data), transforms)
    names = tuple(f"beta{k + 1}" for k in range(d)) + ("mu", "tau")
    res = fit(obj, box, init, n_starts=n_starts, param_names=names)
    return _finish(res, d)
