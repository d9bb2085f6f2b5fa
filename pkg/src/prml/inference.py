"""Maximisation of a log-likelihood over a box, with curvature-based intervals.

Optimisation runs on an unconstrained scale (``log`` for scale parameters,
``logit`` for proportions); estimates, Hessians and intervals are reported
on the natural scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import expit, logit
from scipy.stats import norm

log = logging.getLogger(__name__)

_FORWARD = {"identity": lambda t: t, "log": np.log, "logit": logit}
_INVERSE = {"identity": lambda z: z, "log": np.exp, "logit": expit}


def _jac_diag(z, transforms):
    """d theta / d z for each component."""
    out = np.ones_like(z)
    for k, tr in enumerate(transforms):
        if tr == "log":
            out[k] = np.exp(z[k])
        elif tr == "logit":
            p = expit(z[k])
            out[k] = p * (1 - p)
    return out


def to_unconstrained(theta, transforms) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.array([_FORWARD[tr](t) for t, tr in zip(theta, transforms)])


def from_unconstrained(z, transforms) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.array([_INVERSE[tr](v) for v, tr in zip(z, transforms)])


@dataclass
class FitResult:
    """Maximiser of a log-likelihood and its curvature summary (natural scale)."""

    theta_hat: np.ndarray
    loglik_at_max: float
    hessian: np.ndarray
    cov: np.ndarray
    intervals: np.ndarray
    iterations: int
    converged: bool
    boundary: bool = False
    hessian_pd: bool = True
    objective: str = "prml"
    M: int = 1
    alpha: float = 0.05
    param_names: tuple = ()
    n_evals: int = 0
    starts: list = field(default_factory=list)

    @property
    def se(self) -> np.ndarray:
        diag = np.diag(self.cov)
        with np.errstate(invalid="ignore"):
            return np.where(diag >= 0, np.sqrt(np.abs(diag)), np.nan)

    @property
    def ok(self) -> bool:
        return self.converged and not self.boundary

    def names(self):
        return self.param_names or tuple(f"theta{k + 1}" for k in range(len(self.theta_hat)))

    def to_dict(self) -> dict:
        """Flat key-value report."""
        out = {"objective": self.objective, "M": self.M, "loglik": self.loglik_at_max}
        for k, name in enumerate(self.names()):
            out[f"{name}"] = self.theta_hat[k]
            out[f"{name}_se"] = self.se[k]
            out[f"{name}_lo"] = self.intervals[k, 0]
            out[f"{name}_hi"] = self.intervals[k, 1]
        out.update(
            alpha=self.alpha,
            iterations=self.iterations,
            n_evals=self.n_evals,
            converged=self.converged,
            boundary=self.boundary,
            hessian_pd=self.hessian_pd,
        )
        return out

    def to_text(self) -> str:
        return "\n".join(f"{k} = {_fmt(v)}" for k, v in self.to_dict().items()) + "\n"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _value_and_grad(objective, theta):
    if getattr(objective, "has_gradient", False):
        v, g = objective.value_and_grad(theta)
    else:
        v, g = objective(theta), None
    if np.isnan(v):
        raise FloatingPointError(f"objective is NaN at theta = {theta}")
    return float(v), g


def _start_points(z0, zbox, n_starts):
    fracs = [0.5] if n_starts == 2 else np.linspace(0.25, 0.75, max(n_starts - 1, 0))
    return [z0] + [zbox[:, 0] + frac * (zbox[:, 1] - zbox[:, 0]) for frac in fracs]


def fit(
    objective,
    box,
    init,
    transforms=None,
    method: str = "auto",
    n_starts: int = 3,
    max_iter: int = 200,
    gtol: float = 1e-7,
    alpha: float = 0.05,
    hessian: bool = True,
    steps=None,
    param_names=(),
) -> FitResult:
    """Maximise ``objective`` over ``box`` from ``init`` plus spread-out restarts.

    ``objective(theta)`` returns a log-likelihood; if it has
    ``has_gradient`` and ``value_and_grad`` the quasi-Newton route
    (L-BFGS-B on the unconstrained box) is used, otherwise bounded
    Nelder-Mead.  The best end point over all starts wins; ties go to the
    earliest start.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    init = np.atleast_1d(np.asarray(init, dtype=float))
    k = init.shape[0]
    if box.shape != (k, 2) or not np.all(np.isfinite(box)) or np.any(box[:, 0] >= box[:, 1]):
        raise ValueError(f"box must be a finite (k, 2) array with lo < hi, got {box}")
    if np.any(init < box[:, 0]) or np.any(init > box[:, 1]):
        raise ValueError(f"initial value {init} outside the box")
    if transforms is None:
        transforms = (
            getattr(objective, "transforms", None)
            or getattr(getattr(objective, "kernel", None), "transforms", None)
            or ("identity",) * k
        )
    transforms = tuple(transforms)
    zbox = np.column_stack([to_unconstrained(box[:, 0], transforms), to_unconstrained(box[:, 1], transforms)])
    use_grad = method in ("auto", "lbfgsb") and getattr(objective, "has_gradient", False)
    if method == "lbfgsb" and not use_grad:
        raise ValueError("L-BFGS-B requested but the objective has no gradient")

    def neg(z):
        theta = from_unconstrained(z, transforms)
        v, g = _value_and_grad(objective, theta)
        if not use_grad:
            return -v
        return -v, -g * _jac_diag(z, transforms)

    init_value, _ = _value_and_grad(objective, init)
    best = None
    records = []
    for z0 in _start_points(to_unconstrained(init, transforms), zbox, n_starts):
        z0 = np.clip(z0, zbox[:, 0], zbox[:, 1])
        if use_grad:
            res = optimize.minimize(
                neg, z0, jac=True, method="L-BFGS-B", bounds=zbox,
                options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-13},
            )
        else:
            res = optimize.minimize(
                neg, z0, method="Nelder-Mead", bounds=zbox,
                options={"maxiter": max_iter * 20, "xatol": 1e-8, "fatol": 1e-10},
            )
        value = -float(res.fun)
        records.append((from_unconstrained(res.x, transforms), value, bool(res.success)))
        if best is None or value > best[1]:
            best = (res, value)
    res, value = best
    theta_hat = from_unconstrained(res.x, transforms)
    if value < init_value:
        theta_hat, value = init.copy(), init_value
    zhat = to_unconstrained(theta_hat, transforms)
    width = zbox[:, 1] - zbox[:, 0]
    boundary = bool(np.any(np.minimum(zhat - zbox[:, 0], zbox[:, 1] - zhat) <= 1e-6 * width))
    theta_hat = np.clip(theta_hat, box[:, 0], box[:, 1])

    if hessian:
        H = hessian_at(objective, theta_hat, steps=steps, box=box)
    else:
        H = np.full((k, k), np.nan)
    cov, pd = _invert(H) if hessian else (np.full((k, k), np.nan), False)
    out = FitResult(
        theta_hat=theta_hat,
        loglik_at_max=value,
        hessian=H,
        cov=cov,
        intervals=np.empty((k, 2)),
        iterations=int(getattr(res, "nit", 0)),
        converged=bool(res.success),
        boundary=boundary,
        hessian_pd=pd,
        objective=getattr(objective, "which", "custom"),
        M=getattr(getattr(objective, "cfg", None), "M", 1),
        alpha=alpha,
        param_names=tuple(param_names) or tuple(getattr(getattr(objective, "kernel", None), "param_names", ())),
        n_evals=getattr(objective, "n_evals", 0),
        starts=records,
    )
    out.intervals = confint(out, alpha)
    return out


def _invert(H):
    if not np.all(np.isfinite(H)):
        return np.full_like(H, np.nan), False
    try:
        np.linalg.cholesky(H)
        return np.linalg.inv(H), True
    except np.linalg.LinAlgError:
        log.warning("Hessian is not positive definite; using pseudo-inverse")
        return np.linalg.pinv(H), False


def _centers(theta, h, box):
    if box is None:
        return theta.copy()
    return np.clip(theta, box[:, 0] + h, box[:, 1] - h)


def hessian_at(objective, theta_hat, steps=None, box=None, use_gradient: bool | None = None) -> np.ndarray:
    """``-d^2 loglik`` at ``theta_hat`` by central differences, symmetrised.

    Differences of the analytic gradient are used when the objective
    provides one (unless ``use_gradient=False``), second differences of
    the value otherwise.  Stencils that would leave ``box`` are shifted
    inward so every evaluation stays feasible.
    """
    theta = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    k = theta.shape[0]
    h = np.asarray(steps, dtype=float) if steps is not None else 1e-4 * (1 + np.abs(theta))
    h = np.broadcast_to(h, (k,)).astype(float)
    if box is not None:
        box = np.atleast_2d(np.asarray(box, dtype=float))
        h = np.minimum(h, 0.49 * (box[:, 1] - box[:, 0]))
    c = _centers(theta, h, box)
    if use_gradient is None:
        use_gradient = getattr(objective, "has_gradient", False)
    H = np.empty((k, k))
    if use_gradient:
        for j in range(k):
            e = np.zeros(k)
            e[j] = h[j]
            gp = _value_and_grad(objective, c + e)[1]
            gm = _value_and_grad(objective, c - e)[1]
            H[:, j] = -(gp - gm) / (2 * h[j])
    else:
        f = lambda t: _value_and_grad(objective, t)[0]  # noqa: E731
        f0 = f(c)
        for i in range(k):
            ei = np.zeros(k)
            ei[i] = h[i]
            H[i, i] = -(f(c + ei) - 2 * f0 + f(c - ei)) / h[i] ** 2
            for j in range(i):
                ej = np.zeros(k)
                ej[j] = h[j]
                val = f(c + ei + ej) - f(c + ei - ej) - f(c - ei + ej) + f(c - ei - ej)
                H[i, j] = H[j, i] = -val / (4 * h[i] * h[j])
    return 0.5 * (H + H.T)


def confint(fit_result: FitResult, alpha: float = 0.05) -> np.ndarray:
    """Wald intervals ``theta_j +- z_{alpha/2} sqrt(cov_jj)``; NaN rows where the variance is negative."""
    z = norm.ppf(1 - alpha / 2)
    diag = np.diag(fit_result.cov)
    out = np.full((len(diag), 2), np.nan)
    ok = np.isfinite(diag) & (diag >= 0)
    half = z * np.sqrt(np.where(ok, diag, 0.0))
    out[ok, 0] = fit_result.theta_hat[ok] - half[ok]
    out[ok, 1] = fit_result.theta_hat[ok] + half[ok]
    return out


class FunctionObjective:
    """Adapter turning plain callables into an objective for :func:`fit`."""

    def __init__(self, fn, grad=None, transforms=None):
        self.fn = fn
        self._grad = grad
        self.has_gradient = grad is not None
        self.transforms = transforms
        self.n_evals = 0

    def __call__(self, theta):
        self.n_evals += 1
        return float(self.fn(np.asarray(theta, dtype=float)))

    def value_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self(theta), np.asarray(self._grad(theta), dtype=float)
