"""Marginal and profile likelihoods built on predictive recursion.

``prml`` is the sum of one-step-ahead log predictive densities
``log m_{i-1}(Y_i)``; ``profile`` plugs the final mixing density into every
observation.  Both depend on the order in which data enter the recursion,
so :func:`averaged_loglik` averages the log-likelihood over seeded
permutations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, GridDensity
from .recursion import WeightSequence, _log_integrate_rows, run_matrix

OBJECTIVES = ("prml", "profile")


@dataclass(frozen=True)
class LikelihoodConfig:
    """Everything besides theta and the data that a likelihood evaluation needs.

    ``order="given"`` uses the data order for the first of the ``M`` passes
    and seeded random permutations for the rest; ``order="permuted"``
    permutes every pass.
    """

    kernel: object
    grid: Grid
    f0: GridDensity | None = None
    weights: WeightSequence = field(default_factory=WeightSequence)
    M: int = 1
    seed: int = 0
    order: str = "given"

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one permutation")
        if self.order not in ("given", "permuted"):
            raise ValueError(f"unknown order policy {self.order!r}")

    @property
    def initial(self) -> GridDensity:
        return GridDensity.uniform(self.grid) if self.f0 is None else self.f0

    def permutations(self, n: int) -> list[np.ndarray]:
        rng = np.random.default_rng(self.seed)
        perms = [rng.permutation(n) for _ in range(self.M)]
        if self.order == "given":
            perms[0] = np.arange(n)
        return perms


def _check_which(which):
    if which not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {which!r}")


def _kernel_matrices(theta, data, cfg, grad):
    if len(data) == 0:
        raise ValueError("likelihood needs at least one observation")
    if grad:
        return cfg.kernel.log_density_and_grad(theta, cfg.grid.nodes, data)
    return cfg.kernel.log_density(theta, cfg.grid.nodes, data), None


def _one_pass(logp, glogp, cfg, perm, which):
    """Log-likelihood (and gradient) for one data ordering."""
    n = logp.shape[0]
    w = cfg.weights.values(n)
    lp = logp[perm]
    glp = None if glogp is None else glogp[perm]
    f, log_lam, grad_f, grad_ll, _ = run_matrix(lp, cfg.grid, cfg.initial.values, w, glp)
    if which == "prml":
        return float(log_lam.sum()), grad_ll
    af = cfg.grid.weights * f
    log_m = _log_integrate_rows(logp, af)
    value = float(log_m.sum())
    if glogp is None:
        return value, None
    # d log m_n(Y_i) = sum_j a_j g_ij (f_j dlog g_ij + grad f_j) / m_n(Y_i)
    ratio = np.exp(logp - log_m[:, None]) * cfg.grid.weights  # a_j g_ij / m_n(Y_i)
    grad = np.einsum("nj,njk->k", ratio * f, glogp) + (ratio.sum(axis=0) @ grad_f)
    return value, grad


def _evaluate(theta, data, cfg, which, perms, grad):
    _check_which(which)
    logp, glogp = _kernel_matrices(theta, data, cfg, grad)
    values, grads = [], []
    for perm in perms:
        v, g = _one_pass(logp, glogp, cfg, perm, which)
        values.append(v)
        grads.append(g)
    value = float(np.mean(values))
    return (value, np.mean(grads, axis=0)) if grad else value


def prml_loglik(theta, data, cfg: LikelihoodConfig) -> float:
    """``sum_i log m_{i-1}(Y_i)`` with data entering in the order given."""
    return _evaluate(theta, data, cfg, "prml", [np.arange(len(data))], False)


def profile_loglik(theta, data, cfg: LikelihoodConfig) -> float:
    """``sum_i log m_n(Y_i)`` with the final recursion estimate plugged in."""
    return _evaluate(theta, data, cfg, "profile", [np.arange(len(data))], False)


def averaged_loglik(theta, data, cfg: LikelihoodConfig, which: str = "prml") -> float:
    """Mean log-likelihood over ``cfg.M`` seeded orderings."""
    return _evaluate(theta, data, cfg, which, cfg.permutations(len(data)), False)


def averaged_loglik_and_grad(theta, data, cfg: LikelihoodConfig, which: str = "prml"):
    """Averaged log-likelihood and its theta-gradient from the gradient recursion."""
    return _evaluate(theta, data, cfg, which, cfg.permutations(len(data)), True)


def loglik_and_grad(theta, data, cfg: LikelihoodConfig, which: str = "prml"):
    """Single-pass (data order) log-likelihood and gradient."""
    return _evaluate(theta, data, cfg, which, [np.arange(len(data))], True)


class Objective:
    """Log-likelihood of theta for a fixed dataset, as the optimiser sees it.

    The most recent value/gradient pair is memoised because quasi-Newton
    routines ask for both at the same point.
    """

    def __init__(self, data, cfg: LikelihoodConfig, which: str = "prml"):
        _check_which(which)
        self.data = data
        self.cfg = cfg
        self.which = which
        self.has_gradient = bool(getattr(cfg.kernel, "has_gradient", False))
        self._perms = cfg.permutations(len(data))
        self._last = None
        self.n_evals = 0

    @property
    def kernel(self):
        return self.cfg.kernel

    def value_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self._last is not None and np.array_equal(self._last[0], theta):
            return self._last[1], self._last[2]
        self.n_evals += 1
        value, grad = _evaluate(theta, self.data, self.cfg, self.which, self._perms, True)
        self._last = (theta.copy(), value, grad)
        return value, grad

    def __call__(self, theta) -> float:
        if self.has_gradient:
            return self.value_and_grad(theta)[0]
        self.n_evals += 1
        return _evaluate(theta, self.data, self.cfg, self.which, self._perms, False)

    def grad(self, theta) -> np.ndarray:
        return self.value_and_grad(theta)[1]


class KnEvaluator:
    """Normalised marginal likelihood ``K_n(theta)`` against a known true density.

    ``true_logm`` maps a dataset to per-observation ``log m(Y_i)``; the sum
    ``ell_0n`` is computed once.
    """

    def __init__(self, data, cfg: LikelihoodConfig, true_logm):
        self.data = data
        self.cfg = cfg
        self.true_logm = np.asarray(true_logm(data), dtype=float)
        self.ell0 = float(self.true_logm.sum())

    def both_forms(self, theta):
        """``(mean log m/m_{i-1}, -(ell_n - ell_0n)/n)``."""
        logp, _ = _kernel_matrices(theta, self.data, self.cfg, False)
        n = logp.shape[0]
        _, log_lam, _, _, _ = run_matrix(logp, self.cfg.grid, self.cfg.initial.values, self.cfg.weights.values(n))
        direct = float(np.mean(self.true_logm - log_lam))
        via_loglik = -(float(log_lam.sum()) - self.ell0) / n
        return direct, via_loglik

    def __call__(self, theta) -> float:
        direct, via = self.both_forms(theta)
        if abs(direct - via) > 1e-12 * max(1.0, abs(direct)):
            raise FloatingPointError(f"K_n forms disagree: {direct!r} vs {via!r}")
        return direct


def kn_normalized(theta, data, cfg: LikelihoodConfig, true_logm) -> float:
    return KnEvaluator(data, cfg, true_logm)(theta)


def likelihood_curve(thetas, data, cfg: LikelihoodConfig, averaged: bool = True) -> np.ndarray:
    """Rows ``(theta_1..theta_k, loglik_prml, loglik_profile)`` over a theta grid."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[0] == 1 and cfg.kernel.n_params == 1:
        thetas = thetas.T
    perms = cfg.permutations(len(data)) if averaged else [np.arange(len(data))]
    rows = []
    for theta in thetas:
        logp, _ = _kernel_matrices(theta, data, cfg, False)
        prml = np.mean([_one_pass(logp, None, cfg, p, "prml")[0] for p in perms])
        prof = np.mean([_one_pass(logp, None, cfg, p, "profile")[0] for p in perms])
        rows.append([*theta, prml, prof])
    return np.array(rows)


def normalized_curve(theta_values, loglik) -> np.ndarray:
    """``exp(loglik)`` scaled to integrate to one by the trapezoid rule over theta."""
    theta_values = np.asarray(theta_values, dtype=float)
    loglik = np.asarray(loglik, dtype=float)
    dens = np.exp(loglik - loglik.max())
    total = np.trapezoid(dens, theta_values) if len(theta_values) > 1 else dens.sum()
    return dens / total


def write_curve_csv(path, rows, param_names) -> None:
    header = [f"theta_{k + 1}" for k in range(len(param_names))] + ["loglik_prml", "loglik_profile"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows([[repr(float(v)) for v in row] for row in rows])


def final_density(theta, data, cfg: LikelihoodConfig, averaged: bool = True) -> GridDensity:
    """Recursion estimate ``f_n`` at ``theta``, averaged over the configured orderings."""
    logp, _ = _kernel_matrices(theta, data, cfg, False)
    perms = cfg.permutations(len(data)) if averaged else [np.arange(len(data))]
    w = cfg.weights.values(len(data))
    fs = [run_matrix(logp[p], cfg.grid, cfg.initial.values, w)[0] for p in perms]
    return GridDensity(cfg.grid, np.mean(fs, axis=0)).renormalize()
