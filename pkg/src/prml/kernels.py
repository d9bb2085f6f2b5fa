"""Mixture kernels ``p(y | theta, u)`` with analytic theta-gradients.

All kernels work on log scale and are vectorised over a whole sample and a
whole node set: ``log_density(theta, nodes, data)`` returns an ``(n, J)``
array and ``grad_log_density`` an ``(n, J, k)`` array of
``d log p / d theta``.  Gradients of the density itself follow as
``p * grad log p``.

Parameters are always on the natural scale (bandwidth, regression
coefficients, error standard deviation, null proportion).  ``transforms``
tells the optimiser how to map each component to an unconstrained scale.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .data import KernelDomainError, ReplicatedData, ScalarData, SeriesData

LOG_2PI = np.log(2 * np.pi)


class Kernel:
    """Base class; subclasses fill in the vectorised log density."""

    name = "kernel"
    param_names: tuple[str, ...] = ()
    transforms: tuple[str, ...] = ()
    data_type: type = ScalarData
    u_dim = 1
    has_gradient = True

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.n_params,):
            raise ValueError(f"{self.name} expects {self.n_params} parameters, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise KernelDomainError(f"non-finite parameter {theta}")
        return theta

    def check_data(self, data):
        if not isinstance(data, self.data_type):
            raise TypeError(f"{self.name} kernel needs {self.data_type.__name__}, got {type(data).__name__}")

    def _nodes(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=float)
        if self.u_dim == 1:
            return nodes.reshape(-1)
        return nodes.reshape(-1, self.u_dim)

    def log_density(self, theta, nodes, data) -> np.ndarray:
        raise NotImplementedError

    def grad_log_density(self, theta, nodes, data) -> np.ndarray:
        raise NotImplementedError(f"{self.name} kernel has no gradient")

    def log_density_and_grad(self, theta, nodes, data):
        return self.log_density(theta, nodes, data), self.grad_log_density(theta, nodes, data)

    # single-point conveniences, mostly for tests and reporting
    def density(self, theta, u, obs) -> float:
        return float(np.exp(self.log_density(theta, np.atleast_1d(u)[None], obs)[0, 0]))

    def grad_density(self, theta, u, obs) -> np.ndarray:
        u = np.atleast_1d(u)[None]
        lp, glp = self.log_density_and_grad(theta, u, obs)
        return np.exp(lp[0, 0]) * glp[0, 0]


class GaussianLocationKernel(Kernel):
    """``N(y | u, sigma^2)`` with theta = (sigma,)."""

    name = "density"
    param_names = ("sigma",)
    transforms = ("log",)

    def check_theta(self, theta):
        theta = super().check_theta(theta)
        if theta[0] <= 0:
            raise KernelDomainError(f"sigma must be positive, got {theta[0]}")
        return theta

    def log_density(self, theta, nodes, data):
        (sigma,) = self.check_theta(theta)
        self.check_data(data)
        z = (data.y[:, None] - self._nodes(nodes)[None, :]) / sigma
        return -0.5 * LOG_2PI - np.log(sigma) - 0.5 * z**2

    def grad_log_density(self, theta, nodes, data):
        (sigma,) = self.check_theta(theta)
        self.check_data(data)
        z = (data.y[:, None] - self._nodes(nodes)[None, :]) / sigma
        return ((z**2 - 1.0) / sigma)[..., None]


class LinearRIKernel(Kernel):
    """Random-intercept linear regression, theta = (beta_1..beta_d, sigma).

    Only the conditional density of the responses given covariates is
    represented; the covariate density cancels from every recursion step.
    """

    name = "linear_ri"
    data_type = ReplicatedData

    def __init__(self, d: int, r: int | None = None):
        self.d = int(d)
        self.r = r
        self.param_names = tuple(f"beta{k + 1}" for k in range(self.d)) + ("sigma",)
        self.transforms = ("identity",) * self.d + ("log",)

    def check_theta(self, theta):
        theta = super().check_theta(theta)
        if theta[-1] <= 0:
            raise KernelDomainError(f"sigma must be positive, got {theta[-1]}")
        return theta

    def check_data(self, data):
        super().check_data(data)
        if data.d != self.d or (self.r is not None and data.r != self.r):
            raise ValueError(f"data has (r, d) = ({data.r}, {data.d}), kernel expects ({self.r}, {self.d})")

    def _pieces(self, theta, nodes, data):
        theta = self.check_theta(theta)
        self.check_data(data)
        beta, sigma = theta[:-1], theta[-1]
        a = data.y - data.x @ beta  # (n, r) responses net of fixed effects
        abar = a.mean(axis=1)
        ss_within = ((a - abar[:, None]) ** 2).sum(axis=1)
        u = self._nodes(nodes)
        rss = ss_within[:, None] + data.r * (abar[:, None] - u[None, :]) ** 2
        return a, u, sigma, rss

    def log_density(self, theta, nodes, data):
        _, _, sigma, rss = self._pieces(theta, nodes, data)
        r = data.r
        return -0.5 * r * (LOG_2PI + 2 * np.log(sigma)) - 0.5 * rss / sigma**2

    def grad_log_density(self, theta, nodes, data):
        return self.log_density_and_grad(theta, nodes, data)[1]

    def log_density_and_grad(self, theta, nodes, data):
        a, u, sigma, rss = self._pieces(theta, nodes, data)
        r = data.r
        lp = -0.5 * r * (LOG_2PI + 2 * np.log(sigma)) - 0.5 * rss / sigma**2
        s_ax = np.einsum("nr,nrd->nd", a, data.x)
        s_x = data.x.sum(axis=1)
        g_beta = (s_ax[:, None, :] - u[None, :, None] * s_x[:, None, :]) / sigma**2
        g_sigma = (rss / sigma**3 - r / sigma)[..., None]
        return lp, np.concatenate([g_beta, g_sigma], axis=2)


class LogisticRIKernel(Kernel):
    """Random-intercept logistic regression, theta = (beta_1..beta_d)."""

    name = "logistic_ri"
    data_type = ReplicatedData

    def __init__(self, d: int, r: int | None = None):
        self.d = int(d)
        self.r = r
        self.param_names = tuple(f"beta{k + 1}" for k in range(self.d))
        self.transforms = ("identity",) * self.d

    def check_data(self, data):
        super().check_data(data)
        if data.d != self.d or (self.r is not None and data.r != self.r):
            raise ValueError(f"data has (r, d) = ({data.r}, {data.d}), kernel expects ({self.r}, {self.d})")
        if not np.all((data.y == 0) | (data.y == 1)):
            raise ValueError("logistic kernel needs binary responses")

    def _eta(self, theta, nodes, data):
        beta = self.check_theta(theta)
        self.check_data(data)
        return self._nodes(nodes)[None, :, None] + (data.x @ beta)[:, None, :]  # (n, J, r)

    def log_density(self, theta, nodes, data):
        eta = self._eta(theta, nodes, data)
        return (data.y[:, None, :] * eta - np.logaddexp(0.0, eta)).sum(axis=2)

    def grad_log_density(self, theta, nodes, data):
        return self.log_density_and_grad(theta, nodes, data)[1]

    def log_density_and_grad(self, theta, nodes, data):
        eta = self._eta(theta, nodes, data)
        y = data.y[:, None, :]
        lp = (y * eta - np.logaddexp(0.0, eta)).sum(axis=2)
        resid = y - expit(eta)
        return lp, np.einsum("njr,nrd->njd", resid, data.x)


def ar1_sufficient_stats(y: np.ndarray) -> dict:
    """Per-series summaries that determine the AR(1) Gaussian quadratic forms."""
    y = np.atleast_2d(y)
    inner = y[:, 1:-1]
    return {
        "T": y.shape[1],
        "sq": (y**2).sum(axis=1),
        "sq_inner": (inner**2).sum(axis=1),
        "lag1": (y[:, 1:] * y[:, :-1]).sum(axis=1),
        "ends": y[:, 0] + y[:, -1],
        "sum_inner": inner.sum(axis=1),
    }


def ar1_log_normals(y, sigma2, phi):
    """``log N(y | 0, S)`` and ``log N(y | 0, S + 11')`` for every series and node.

    ``S_jk = sigma2 / (1 - phi) * phi^|j-k|`` (the scaling used by the AR
    mixture model).  ``S`` is ``c R`` with ``R`` the unit AR(1) correlation,
    whose inverse is tridiagonal, so both quadratic forms and determinants
    are O(T) per series; the rank-one term uses Sherman-Morrison and the
    matrix determinant lemma.  ``sigma2`` and ``phi`` broadcast over nodes.
    """
    stats = y if isinstance(y, dict) else ar1_sufficient_stats(y)
    sigma2 = np.asarray(sigma2, dtype=float)[None, :]
    phi = np.asarray(phi, dtype=float)[None, :]
    if np.any(sigma2 <= 0) or np.any(np.abs(phi) >= 1):
        raise KernelDomainError("AR(1) kernel needs sigma2 > 0 and |phi| < 1")
    T = stats["T"]
    col = lambda key: stats[key][:, None]  # noqa: E731
    c = sigma2 / (1 - phi)
    q = 1 - phi**2
    quad0 = (col("sq") + phi**2 * col("sq_inner") - 2 * phi * col("lag1")) / (c * q)
    logdet0 = T * np.log(c) + (T - 1) * np.log(q)
    s = (col("ends") + (1 - phi) * col("sum_inner")) / ((1 + phi) * c)
    t = (2 + (T - 2) * (1 - phi)) / ((1 + phi) * c)
    quad1 = quad0 - s**2 / (1 + t)
    logdet1 = logdet0 + np.log1p(t)
    log_n0 = -0.5 * (T * LOG_2PI + logdet0 + quad0)
    log_n1 = -0.5 * (T * LOG_2PI + logdet1 + quad1)
    return log_n0, log_n1


class AR1MixKernel(Kernel):
    """Two-component AR(1) kernel with u = (sigma2, phi) and theta = (null proportion,).

    ``p = theta N(y | 0, S_u) + (1 - theta) N(y | 0, S_u + 11')``: the
    second component has the constant mean level integrated out against a
    standard normal.
    """

    name = "ar1_mix"
    param_names = ("theta",)
    transforms = ("logit",)
    data_type = SeriesData
    u_dim = 2

    def __init__(self, T: int | None = None):
        self.T = T
        self._cache = None

    def check_theta(self, theta):
        theta = super().check_theta(theta)
        if not 0 <= theta[0] <= 1:
            raise KernelDomainError(f"null proportion must lie in [0, 1], got {theta[0]}")
        return theta

    def check_data(self, data):
        super().check_data(data)
        if self.T is not None and data.T != self.T:
            raise ValueError(f"series length {data.T} != kernel T {self.T}")

    def component_logs(self, nodes, data):
        # theta-free, so repeated evaluations on the same sample reuse one result
        if self._cache is not None and self._cache[0] is nodes and self._cache[1] is data:
            return self._cache[2]
        self.check_data(data)
        u = self._nodes(nodes)
        logs = ar1_log_normals(data.y, u[:, 0], u[:, 1])
        self._cache = (nodes, data, logs)
        return logs

    def _mix(self, theta, log_n0, log_n1):
        (th,) = self.check_theta(theta)
        with np.errstate(divide="ignore"):
            return np.logaddexp(np.log(th) + log_n0, np.log1p(-th) + log_n1)

    def log_density(self, theta, nodes, data):
        return self._mix(theta, *self.component_logs(nodes, data))

    def log_null_density(self, theta, nodes, data):
        """Log of the null component ``N(y | 0, S_u)`` alone (theta-free)."""
        return self.component_logs(nodes, data)[0]

    def grad_log_density(self, theta, nodes, data):
        return self.log_density_and_grad(theta, nodes, data)[1]

    def log_density_and_grad(self, theta, nodes, data):
        log_n0, log_n1 = self.component_logs(nodes, data)
        lp = self._mix(theta, log_n0, log_n1)
        grad = np.exp(log_n0 - lp) - np.exp(log_n1 - lp)
        return lp, grad[..., None]


def make_kernel(name: str, d: int | None = None, r: int | None = None, T: int | None = None) -> Kernel:
    """Kernel lookup by configuration name."""
    if name == "density":
        return GaussianLocationKernel()
    if name == "linear_ri":
        return LinearRIKernel(d or 2, r)
    if name == "logistic_ri":
        return LogisticRIKernel(d or 2, r)
    if name == "ar1_mix":
        return AR1MixKernel(T)
    raise ValueError(f"unknown kernel {name!r}")


def gaussian_location_kernel() -> GaussianLocationKernel:
    return GaussianLocationKernel()


def linear_ri_kernel(d: int, r: int | None = None) -> LinearRIKernel:
    return LinearRIKernel(d, r)


def logistic_ri_kernel(d: int, r: int | None = None) -> LogisticRIKernel:
    return LogisticRIKernel(d, r)


def ar1_mix_kernel(T: int | None = None) -> AR1MixKernel:
    return AR1MixKernel(T)
