"""Predictive recursion over a quadrature grid, with optional theta-gradients.

The recursion itself runs on precomputed ``(n, J)`` matrices of kernel log
values, which keeps the per-step work to a handful of length-``J`` vector
operations.  ``pr_run`` / ``pr_run_grad`` are the kernel-level entry points;
``run_matrix`` is what the likelihood code uses so that one kernel
evaluation can be shared across several data orderings.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import DegenerateObservationError
from .grid import Grid, GridDensity

NORMALIZATION_DRIFT_MAX = 1e-8
RENORMALIZE_ABOVE = 1e-12


@dataclass(frozen=True)
class WeightSequence:
    """Step weights ``w_i``, either ``(i + 1)^-gamma`` or ``1 / (1 + alpha_{i-1})``.

    ``alpha`` may be a scalar (constant precision) or a sequence
    ``alpha_0, alpha_1, ...``; when given it takes precedence over ``gamma``.
    """

    gamma: float = 2.0 / 3.0
    alpha: object = None

    def __post_init__(self):
        if self.alpha is None and not 0.5 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (1/2, 1], got {self.gamma}")
        if self.alpha is not None and np.any(np.asarray(self.alpha, dtype=float) <= 0):
            raise ValueError("Dirichlet precisions must be positive")

    @classmethod
    def dirichlet(cls, alpha) -> WeightSequence:
        return cls(alpha=alpha)

    def values(self, n: int) -> np.ndarray:
        if self.alpha is None:
            return (np.arange(1, n + 1) + 1.0) ** (-self.gamma)
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim == 0:
            alpha = np.full(n, float(alpha))
        if alpha.shape[0] < n:
            raise ValueError(f"{alpha.shape[0]} precisions supplied for {n} observations")
        return 1.0 / (1.0 + alpha[:n])


@dataclass
class PRState:
    """Output of a predictive recursion pass.

    ``log_predictives[i]`` is ``log m_{i-1}(Y_i)``; ``loglik`` is their sum.
    Gradient fields are filled only by gradient runs: ``grad_f`` is
    ``(J, k)`` and ``grad_loglik`` is ``(k,)``.
    """

    f: GridDensity
    log_predictives: np.ndarray = field(default_factory=lambda: np.empty(0))
    grad_f: np.ndarray | None = None
    grad_loglik: np.ndarray | None = None
    max_drift: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.f.grid

    @property
    def loglik(self) -> float:
        return float(np.sum(self.log_predictives))

    @property
    def predictives(self) -> np.ndarray:
        return np.exp(self.log_predictives)

    @classmethod
    def initial(cls, f0: GridDensity, n_params: int | None = None) -> PRState:
        f0 = _checked_initial(f0)
        if n_params is None:
            return cls(f0)
        return cls(f0, grad_f=np.zeros((len(f0.grid), n_params)), grad_loglik=np.zeros(n_params))


def _checked_initial(f0: GridDensity) -> GridDensity:
    total = f0.integral()
    if abs(total - 1.0) > NORMALIZATION_DRIFT_MAX:
        raise ValueError(f"initial density integrates to {total}, not 1")
    return f0


def run_matrix(logp, grid: Grid, f0, w, grad_logp=None, grad_f0=None, offset: int = 0):
    """Run the recursion on precomputed kernel log values.

    ``logp`` is ``(n, J)``; ``grad_logp`` (optional) is ``(n, J, k)``.
    ``f0`` and ``grad_f0`` are plain arrays.  Returns a tuple
    ``(f, log_predictives, grad_f, grad_loglik, max_drift)`` with the
    gradient entries ``None`` when ``grad_logp`` is not given.  Errors name
    the observation as ``offset + i``.
    """
    a = grid.weights
    f = np.array(f0, dtype=float)
    n = logp.shape[0]
    w = np.asarray(w, dtype=float)
    if w.shape[0] < n:
        raise ValueError(f"{w.shape[0]} weights supplied for {n} observations")
    if np.any((w[:n] <= 0) | (w[:n] >= 1)):
        raise ValueError("weights must lie strictly between 0 and 1")
    log_lam = np.empty(n)
    max_drift = 0.0
    with_grad = grad_logp is not None
    if with_grad:
        k = grad_logp.shape[2]
        grad_f = np.zeros((f.shape[0], k)) if grad_f0 is None else np.array(grad_f0, dtype=float)
        grad_ll = np.zeros(k)
    for i in range(n):
        row = logp[i]
        shift = row.max()
        if not np.isfinite(shift):
            raise DegenerateObservationError(offset + i)
        g = np.exp(row - shift)  # kernel rescaled by a theta-dependent constant; cancels below
        gf = g * f
        lam = a @ gf
        if not (lam > 0 and np.isfinite(lam)):
            raise DegenerateObservationError(offset + i)
        log_lam[i] = np.log(lam) + shift
        wi = w[i]
        if with_grad:
            G = g[:, None] * grad_f + (gf[:, None] * grad_logp[i])
            dlog_lam = (a @ G) / lam
            grad_ll += dlog_lam
            grad_f = (1.0 - wi) * grad_f + wi * (G - gf[:, None] * dlog_lam) / lam
        f = (1.0 - wi) * f + wi * gf / lam
        drift = abs(a @ f - 1.0)
        if drift > NORMALIZATION_DRIFT_MAX:
            raise FloatingPointError(f"normalization drift {drift:.3e} after observation {offset + i}")
        if drift > RENORMALIZE_ABOVE:
            f /= a @ f
        max_drift = max(max_drift, drift)
    if with_grad:
        return f, log_lam, grad_f, grad_ll, max_drift
    return f, log_lam, None, None, max_drift


def _default_f0(grid, f0):
    return GridDensity.uniform(grid) if f0 is None else _checked_initial(f0)


def pr_step(state: PRState, kernel, theta, obs, w: float, index: int | None = None) -> PRState:
    """One recursion step on a single-observation dataset ``obs``."""
    if not 0 < w < 1:
        raise ValueError(f"weight must lie in (0, 1), got {w}")
    if len(obs) != 1:
        raise ValueError("pr_step takes exactly one observation")
    idx = len(state.log_predictives) if index is None else index
    grid = state.grid
    if state.grad_f is None:
        logp = kernel.log_density(theta, grid.nodes, obs)
        f, log_lam, _, _, drift = run_matrix(logp, grid, state.f.values, [w], offset=idx)
        return replace(
            state,
            f=GridDensity(grid, f),
            log_predictives=np.append(state.log_predictives, log_lam),
            max_drift=max(state.max_drift, drift),
        )
    logp, glogp = kernel.log_density_and_grad(theta, grid.nodes, obs)
    f, log_lam, gf, gll, drift = run_matrix(logp, grid, state.f.values, [w], glogp, state.grad_f, offset=idx)
    return PRState(
        GridDensity(grid, f),
        np.append(state.log_predictives, log_lam),
        gf,
        state.grad_loglik + gll,
        max(state.max_drift, drift),
    )


def pr_run(kernel, theta, grid: Grid, f0: GridDensity | None, weights: WeightSequence | None, data) -> PRState:
    """Fold the recursion over ``data`` in the order given."""
    f0 = _default_f0(grid, f0)
    weights = weights or WeightSequence()
    n = len(data)
    if n == 0:
        return PRState(f0)
    logp = kernel.log_density(theta, grid.nodes, data)
    f, log_lam, _, _, drift = run_matrix(logp, grid, f0.values, weights.values(n))
    return PRState(GridDensity(grid, f), log_lam, max_drift=drift)


def pr_run_grad(kernel, theta, grid: Grid, f0: GridDensity | None, weights: WeightSequence | None, data) -> PRState:
    """As :func:`pr_run`, also carrying ``grad f_i`` and accumulating ``grad log L``.

    The initial density is taken to be free of theta, so its gradient is 0.
    """
    if not getattr(kernel, "has_gradient", False):
        raise NotImplementedError(f"kernel {kernel.name!r} provides no gradient")
    f0 = _default_f0(grid, f0)
    weights = weights or WeightSequence()
    k = kernel.n_params
    n = len(data)
    if n == 0:
        return PRState.initial(f0, k)
    logp, glogp = kernel.log_density_and_grad(theta, grid.nodes, data)
    f, log_lam, grad_f, grad_ll, drift = run_matrix(logp, grid, f0.values, weights.values(n), glogp)
    return PRState(GridDensity(grid, f), log_lam, grad_f, grad_ll, drift)


def log_mixture_density(f: GridDensity | PRState, kernel, theta, data) -> np.ndarray:
    """``log m_f(y)`` for every observation in ``data``."""
    f = f.f if isinstance(f, PRState) else f
    logp = kernel.log_density(theta, f.grid.nodes, data)
    return _log_integrate_rows(logp, f.grid.weights * f.values)


def mixture_density(f: GridDensity | PRState, kernel, theta, data) -> np.ndarray:
    """``m_f(y) = sum_j a_j p(y | theta, u_j) f(u_j)`` for every observation in ``data``."""
    return np.exp(log_mixture_density(f, kernel, theta, data))


def _log_integrate_rows(logp, af):
    shift = logp.max(axis=1)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(logp - shift[:, None]) @ af) + shift
