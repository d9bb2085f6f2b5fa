"""Seeded data generators for the simulation studies.

Every generator is a pure function of its arguments: the same seed always
gives bit-identical output.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from .data import ReplicatedData, ScalarData, SeriesData

DENSITY_MIXES = ("beta26", "beta1030", "two_point", "beta_point")
RI_KINDS = ("gaussian", "exponential", "uniform2pt")

# product-beta mixing law for the AR(1) study: u = (sigma2, phi)
AR_SIGMA2_BOX = (0.5, 2.0)
AR_PHI_BOX = (0.05, 0.95)
AR_BETA_SHAPE = (2.0, 2.0)

STUDENT_T_DF = 5
STUDENT_T_LOC = 0.5
STUDENT_T_SCALE = 0.1


def _rng(seed):
    return np.random.default_rng(seed)


def draw_density_mixing(mix: str, n: int, rng) -> np.ndarray:
    if mix == "beta26":
        return rng.beta(2, 6, n)
    if mix == "beta1030":
        return rng.beta(10, 30, n)
    if mix == "two_point":
        return np.where(rng.random(n) < 0.5, 0.25, 0.75)
    if mix == "beta_point":
        b = rng.beta(2, 6, n)
        return np.where(rng.random(n) < 0.5, b, 0.75)
    raise ValueError(f"unknown mixing distribution {mix!r}; choose from {DENSITY_MIXES}")


def gen_density(mix: str, sigma: float, n: int, seed) -> ScalarData:
    """``y = u + sigma z`` with ``u`` from one of the four test mixing laws on [0, 1]."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = _rng(seed)
    u = draw_density_mixing(mix, n, rng)
    return ScalarData(u + sigma * rng.standard_normal(n))


def gen_studentt(n: int, seed) -> ScalarData:
    """``0.5 + 0.1 t_5`` sample."""
    rng = _rng(seed)
    return ScalarData(STUDENT_T_LOC + STUDENT_T_SCALE * rng.standard_t(STUDENT_T_DF, n))


def studentt_logpdf(y) -> np.ndarray:
    """Exact log density of ``0.5 + 0.1 t_5``."""
    y = y.y if isinstance(y, ScalarData) else np.asarray(y, dtype=float)
    return stats.t.logpdf(y, STUDENT_T_DF, loc=STUDENT_T_LOC, scale=STUDENT_T_SCALE)


def studentt_pdf(y) -> np.ndarray:
    return np.exp(studentt_logpdf(y))


def draw_ri_effects(kind: str, n: int, rng) -> np.ndarray:
    """Random intercepts with mean 0 and variance 4."""
    if kind == "gaussian":
        return 2.0 * rng.standard_normal(n)
    if kind == "exponential":
        return rng.exponential(2.0, n) - 2.0  # rate 0.5 shifted onto (-2, inf)
    if kind == "uniform2pt":
        return np.where(rng.random(n) < 0.5, -2.0, 2.0)
    raise ValueError(f"unknown random-effect law {kind!r}; choose from {RI_KINDS}")


def _ri_covariates(n, r, rng):
    x1 = rng.standard_normal((n, r))
    group = (rng.random(n) < 0.5).astype(float)
    x2 = group[:, None] + 0.1 * rng.standard_normal((n, r))
    return np.stack([x1, x2], axis=2)


def gen_lmm(n: int, r: int = 4, f_kind: str = "gaussian", seed=0, beta=(2.0, 5.0), sigma: float = 2.0):
    """Random-intercept linear model; returns ``(data, truth)``."""
    rng = _rng(seed)
    u = draw_ri_effects(f_kind, n, rng)
    x = _ri_covariates(n, r, rng)
    y = u[:, None] + x @ np.asarray(beta, dtype=float) + sigma * rng.standard_normal((n, r))
    truth = {"theta": np.array([*beta, sigma]), "u": u}
    return ReplicatedData(x, y), truth


def gen_glmm(n: int, r: int = 4, f_kind: str = "gaussian", seed=0, beta=(2.0, 5.0)):
    """Random-intercept logistic model; returns ``(data, truth)``."""
    rng = _rng(seed)
    u = draw_ri_effects(f_kind, n, rng)
    x = _ri_covariates(n, r, rng)
    eta = u[:, None] + x @ np.asarray(beta, dtype=float)
    y = (rng.random((n, r)) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    truth = {"theta": np.array(beta, dtype=float), "u": u}
    return ReplicatedData(x, y), truth


def _scaled_beta(x, box):
    lo, hi = box
    return lo + (hi - lo) * x


def ar_mixing_pdf(u) -> np.ndarray:
    """True product-beta density of ``u = (sigma2, phi)``; ``u`` is ``(J, 2)``."""
    u = np.atleast_2d(u)
    a, b = AR_BETA_SHAPE
    out = np.ones(u.shape[0])
    for col, (lo, hi) in enumerate((AR_SIGMA2_BOX, AR_PHI_BOX)):
        out *= stats.beta.pdf((u[:, col] - lo) / (hi - lo), a, b) / (hi - lo)
    return out


def draw_ar_mixing(n: int, rng) -> np.ndarray:
    a, b = AR_BETA_SHAPE
    sigma2 = _scaled_beta(rng.beta(a, b, n), AR_SIGMA2_BOX)
    phi = _scaled_beta(rng.beta(a, b, n), AR_PHI_BOX)
    return np.column_stack([sigma2, phi])


def ar1_paths(sigma2, phi, T: int, rng) -> np.ndarray:
    """Zero-mean stationary paths with covariance ``sigma2 / (1 - phi) phi^|j-k|``."""
    sigma2 = np.asarray(sigma2, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n = sigma2.shape[0]
    var = sigma2 / (1 - phi)
    innov_sd = np.sqrt(var * (1 - phi**2))
    eps = rng.standard_normal((n, T))
    z = np.empty((n, T))
    z[:, 0] = np.sqrt(var) * eps[:, 0]
    for t in range(1, T):
        z[:, t] = phi * z[:, t - 1] + innov_sd * eps[:, t]
    return z


def gen_armix(n: int, T: int = 50, theta: float = 0.75, seed=0):
    """AR(1) mixture: ``Y_i = xi_i 1 + Z_i`` with ``xi_i = 0`` w.p. ``theta`` else ``N(0, 1)``.

    Returns ``(data, truth)`` where ``truth["nonnull"]`` flags ``xi_i != 0``.
    """
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    rng = _rng(seed)
    null = rng.random(n) < theta
    xi = np.where(null, 0.0, rng.standard_normal(n))
    u = draw_ar_mixing(n, rng)
    y = xi[:, None] + ar1_paths(u[:, 0], u[:, 1], T, rng)
    return SeriesData(y), {"nonnull": ~null, "xi": xi, "u": u, "theta": theta}
