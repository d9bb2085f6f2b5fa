"""Replication driver for the simulation studies.

A :class:`StudySpec` names the study and its settings; :func:`run_study`
generates each replication from ``seed + index``, fits it, and aggregates
RMSE, coverage and testing error rates.  Replications are independent, so
they can be spread over worker processes without changing any result.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import simulate
from .comparators import fit_glmm_gaussian, fit_lmm_gaussian
from .fdr import classify, local_fdr, metrics, oracle_lfdr
from .grid import make_grid, make_legendre_grid
from .inference import fit
from .kernels import ar1_mix_kernel, gaussian_location_kernel, linear_ri_kernel, logistic_ri_kernel
from .kl_oracle import YQuadrature, kstar_curve
from .likelihood import KnEvaluator, LikelihoodConfig, Objective, final_density
from .recursion import WeightSequence

log = logging.getLogger(__name__)

STUDIES = ("density", "kl_limit", "lmm", "glmm", "armix")
WORKERS_ENV = "PRML_WORKERS"
# bandwidth grid for the K_n / K* comparison: 0.05, 0.06, ..., 0.30
KL_SIGMAS = tuple(round(0.05 + 0.01 * k, 2) for k in range(26))


@dataclass
class StudySpec:
    """Settings for one simulation study; fields not used by a study are ignored."""

    study: str
    n: int = 50
    reps: int = 1
    seed: int = 0
    methods: tuple = ("marginal",)
    # density / kl_limit
    mix: str = "beta26"
    sigma: float = 0.1
    sigmas: tuple = KL_SIGMAS
    # regression
    r: int = 4
    f_kind: str = "gaussian"
    # AR mixture
    theta: float = 0.75
    T: int = 50
    ar_order: int = 21
    oracle_order: int = 40
    cutoff: float = 0.5
    # recursion / optimiser
    M: int = 1
    J: int = 201
    grid_rule: str = "trapezoid"
    gamma: float = 2.0 / 3.0
    n_starts: int = 3
    alpha: float = 0.05
    kstar_J: int = 101
    kstar_R: int = 101

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; choose from {STUDIES}")
        if self.reps < 1 or self.n < 1:
            raise ValueError("need at least one replication and one observation")
        self.methods = tuple(self.methods)
        self.sigmas = tuple(float(s) for s in self.sigmas)
        unknown = set(self.methods) - {"marginal", "profile", "gaussian"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.study == "armix" and not 0 < self.theta <= 1:
            raise ValueError("AR study needs theta in (0, 1]")


@dataclass
class StudyReport:
    spec: StudySpec
    rows: list
    aggregates: dict
    wall_clock: float = 0.0
    failures: list = field(default_factory=list)

    def write(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        write_rows_csv(os.path.join(out_dir, "rows.csv"), self.rows)
        with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
            fh.write(self.summary())

    def summary(self) -> str:
        lines = [f"study = {self.spec.study}", f"n = {self.spec.n}", f"reps = {self.spec.reps}",
                 f"seed = {self.spec.seed}", f"failures = {len(self.failures)}"]
        for key, val in self.aggregates.items():
            lines.append(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}")
        return "\n".join(lines) + "\n"


def write_rows_csv(path, rows) -> None:
    keys = []
    for row in rows:
        keys.extend(k for k in row if k not in keys)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


# --- fitting helpers shared with the CLI -------------------------------------------------


def density_config(grid_rule="trapezoid", J=201, gamma=2 / 3, M=1, seed=0, bounds=(0.0, 1.0)):
    return LikelihoodConfig(
        gaussian_location_kernel(), make_grid(grid_rule, [bounds], J),
        weights=WeightSequence(gamma), M=M, seed=seed,
    )


def fit_density(data, which="prml", box=(0.01, 1.0), init=0.2, n_starts=3, alpha=0.05, **cfg_kw):
    cfg = density_config(**cfg_kw)
    return fit(Objective(data, cfg, which), [box], [init], n_starts=n_starts, alpha=alpha)


def ri_support(data, width: float = 3.0):
    """``mean(Y) +- 3 sd(Y)`` over all responses."""
    y = data.y.reshape(-1)
    s = y.std(ddof=1) if y.size > 1 else 1.0
    return (y.mean() - width * s, y.mean() + width * s)


def _pooled_ols(data):
    X = np.column_stack([np.ones(data.y.size), data.x.reshape(-1, data.d)])
    coef, *_ = np.linalg.lstsq(X, data.y.reshape(-1), rcond=None)
    return coef[1:], data.y.reshape(-1) - X @ coef


def default_box_init(kernel_name: str, data):
    """Search box and starting value used when the caller gives none."""
    if kernel_name == "density":
        return np.array([[0.01, 1.0]]), np.array([0.2])
    if kernel_name == "linear_ri":
        beta0, resid = _pooled_ols(data)
        sd = max(float(resid.std()), 1e-2)
        box = np.array([*[[b - 10.0, b + 10.0] for b in beta0], [0.02 * sd + 1e-3, 5 * sd]])
        return box, np.array([*beta0, 0.7 * sd])
    if kernel_name == "logistic_ri":
        return np.array([[-10.0, 10.0]] * data.d), np.zeros(data.d)
    if kernel_name == "ar1_mix":
        return np.array([[0.01, 0.999]]), np.array([0.5])
    raise ValueError(f"unknown kernel {kernel_name!r}")


def lmm_config(data, J=201, grid_rule="trapezoid", gamma=2 / 3, M=1, seed=0, bounds=None):
    bounds = ri_support(data) if bounds is None else bounds
    return LikelihoodConfig(linear_ri_kernel(data.d, data.r), make_grid(grid_rule, [bounds], J),
                            weights=WeightSequence(gamma), M=M, seed=seed)


def fit_lmm(data, which="prml", n_starts=3, alpha=0.05, box=None, **cfg_kw):
    cfg = lmm_config(data, **cfg_kw)
    dbox, init = default_box_init("linear_ri", data)
    box = dbox if box is None else np.asarray(box, dtype=float)
    init = np.clip(init, box[:, 0], box[:, 1])
    return fit(Objective(data, cfg, which), box, init, n_starts=n_starts, alpha=alpha)


def glmm_config(data, J=201, grid_rule="trapezoid", gamma=2 / 3, M=1, seed=0, bounds=(-8.0, 8.0)):
    return LikelihoodConfig(logistic_ri_kernel(data.d, data.r), make_grid(grid_rule, [bounds], J),
                            weights=WeightSequence(gamma), M=M, seed=seed)


def fit_glmm(data, which="prml", n_starts=3, alpha=0.05, box=None, **cfg_kw):
    cfg = glmm_config(data, **cfg_kw)
    dbox, init = default_box_init("logistic_ri", data)
    box = dbox if box is None else np.asarray(box, dtype=float)
    init = np.clip(init, box[:, 0], box[:, 1])
    return fit(Objective(data, cfg, which), box, init, n_starts=n_starts, alpha=alpha)


def armix_grid(order=21, rule="legendre"):
    return make_grid(rule, [simulate.AR_SIGMA2_BOX, simulate.AR_PHI_BOX], order)


def armix_config(data, order=21, rule="legendre", gamma=2 / 3, M=25, seed=0):
    return LikelihoodConfig(ar1_mix_kernel(data.T), armix_grid(order, rule),
                            weights=WeightSequence(gamma), M=M, seed=seed, order="permuted")


def fit_armix(data, n_starts=3, alpha=0.05, box=(0.01, 0.999), init=0.5, **cfg_kw):
    """Averaged-PRML fit of the null proportion followed by plug-in local fdr.

    Returns ``(fit_result, lfdr, f_hat)``.
    """
    cfg = armix_config(data, **cfg_kw)
    res = fit(Objective(data, cfg, "prml"), [box], [init], n_starts=n_starts, alpha=alpha)
    f_hat = final_density(res.theta_hat, data, cfg)
    return res, local_fdr(data, res.theta_hat[0], f_hat, cfg.kernel), f_hat


# --- replications --------------------------------------------------------------------------

_WHICH = {"marginal": "prml", "profile": "profile"}


def _fit_rows(rep, method, res, truth):
    row = {"rep": rep, "method": method}
    names = res.names()
    for k, name in enumerate(names):
        row[f"est_{name}"] = float(res.theta_hat[k])
        row[f"se_{name}"] = float(res.se[k])
        lo, hi = res.intervals[k]
        row[f"lo_{name}"] = float(lo)
        row[f"hi_{name}"] = float(hi)
        if truth is not None:
            row[f"true_{name}"] = float(truth[k])
            row[f"cover_{name}"] = int(bool(lo <= truth[k] <= hi))
    row.update(converged=int(res.converged), boundary=int(res.boundary))
    return row


def _rep_density(spec, rep, seed):
    data = simulate.gen_density(spec.mix, spec.sigma, spec.n, seed)
    rows = []
    for method in spec.methods:
        if method == "gaussian":
            continue
        res = fit_density(data, _WHICH[method], n_starts=spec.n_starts, alpha=spec.alpha,
                          grid_rule=spec.grid_rule, J=spec.J, gamma=spec.gamma, M=spec.M, seed=seed)
        rows.append(_fit_rows(rep, method, res, [spec.sigma]))
    return rows


def _rep_kl_limit(spec, rep, seed):
    data = simulate.gen_studentt(spec.n, seed)
    cfg = density_config(spec.grid_rule, spec.J, spec.gamma)
    kn = KnEvaluator(data, cfg, simulate.studentt_logpdf)
    return [{"rep": rep, "sigma": s, "kn": kn([s])} for s in spec.sigmas]


def _rep_regression(spec, rep, seed, kind):
    gen = simulate.gen_lmm if kind == "lmm" else simulate.gen_glmm
    data, truth = gen(spec.n, spec.r, spec.f_kind, seed)
    rows = []
    for method in spec.methods:
        if method == "gaussian":
            res = (fit_lmm_gaussian if kind == "lmm" else fit_glmm_gaussian)(data)
        else:
            fitter = fit_lmm if kind == "lmm" else fit_glmm
            res = fitter(data, _WHICH[method], n_starts=spec.n_starts, alpha=spec.alpha,
                         J=spec.J, grid_rule=spec.grid_rule, gamma=spec.gamma, M=spec.M, seed=seed)
        rows.append(_fit_rows(rep, method, res, truth["theta"]))
    return rows


def _rep_armix(spec, rep, seed):
    data, truth = simulate.gen_armix(spec.n, spec.T, spec.theta, seed)
    res, lfdr, _ = fit_armix(data, n_starts=spec.n_starts, alpha=spec.alpha,
                             order=spec.ar_order, gamma=spec.gamma, M=spec.M, seed=seed)
    plug = metrics(classify(lfdr, spec.cutoff, truth["nonnull"]))
    kernel = ar1_mix_kernel(spec.T)
    orc = metrics(classify(oracle_lfdr(data, spec.theta, simulate.ar_mixing_pdf, kernel, spec.oracle_order),
                           spec.cutoff, truth["nonnull"]))
    row = _fit_rows(rep, "marginal", res, [spec.theta])
    row.update(fdr_plugin=plug.fdr, mp_plugin=plug.mp, fdr_oracle=orc.fdr, mp_oracle=orc.mp,
               discoveries=plug.discoveries)
    return [row]


def run_replication(spec: StudySpec, rep: int) -> list:
    seed = spec.seed + rep
    if spec.study == "density":
        return _rep_density(spec, rep, seed)
    if spec.study == "kl_limit":
        return _rep_kl_limit(spec, rep, seed)
    if spec.study in ("lmm", "glmm"):
        return _rep_regression(spec, rep, seed, spec.study)
    return _rep_armix(spec, rep, seed)


def _safe_replication(spec, rep):
    try:
        return rep, run_replication(spec, rep), None
    except Exception as exc:  # recorded, not fatal
        return rep, [], f"{type(exc).__name__}: {exc}"


def default_workers() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def run_study(spec: StudySpec, workers: int | None = None) -> StudyReport:
    """Run every replication and aggregate; results do not depend on ``workers``."""
    workers = default_workers() if workers is None else max(1, int(workers))
    start = time.perf_counter()
    if workers == 1:
        results = [_safe_replication(spec, rep) for rep in range(spec.reps)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_replication, [spec] * spec.reps, range(spec.reps)))
    results.sort(key=lambda t: t[0])
    rows = [row for _, rep_rows, _ in results for row in rep_rows]
    failures = [(rep, err) for rep, _, err in results if err is not None]
    for rep, err in failures:
        log.warning("replication %d failed: %s", rep, err)
    aggregates = aggregate(spec, rows)
    return StudyReport(spec, rows, aggregates, time.perf_counter() - start, failures)


def aggregate(spec: StudySpec, rows: list) -> dict:
    """Summaries recomputable from the rows alone."""
    if spec.study == "kl_limit":
        return _aggregate_kl(spec, rows)
    out = {}
    methods = [m for m in dict.fromkeys(r["method"] for r in rows)]
    for method in methods:
        mrows = [r for r in rows if r["method"] == method]
        names = [k[4:] for k in mrows[0] if k.startswith("est_")]
        out[f"{method}.count"] = len(mrows)
        for name in names:
            est = np.array([r[f"est_{name}"] for r in mrows])
            out[f"{method}.mean_{name}"] = float(est.mean())
            out[f"{method}.sd_{name}"] = float(est.std(ddof=1)) if len(est) > 1 else 0.0
            if f"true_{name}" in mrows[0]:
                err = est - np.array([r[f"true_{name}"] for r in mrows])
                out[f"{method}.rmse_{name}"] = float(np.sqrt(np.mean(err**2)))
                out[f"{method}.coverage_{name}"] = float(100 * np.mean([r[f"cover_{name}"] for r in mrows]))
        for key in ("fdr_plugin", "mp_plugin", "fdr_oracle", "mp_oracle"):
            if key in mrows[0]:
                out[f"{method}.{key}"] = float(np.mean([r[key] for r in mrows]))
    return out


def _aggregate_kl(spec, rows):
    out = {}
    yq = YQuadrature.legendre(simulate.studentt_pdf, R=spec.kstar_R)
    curve = kstar_curve(None, gaussian_location_kernel(), spec.sigmas, make_legendre_grid(0, 1, spec.kstar_J), yq)
    for s, kstar in curve:
        kn = [r["kn"] for r in rows if r["sigma"] == s]
        out[f"mean_kn[{s}]"] = float(np.mean(kn)) if kn else float("nan")
        out[f"kstar[{s}]"] = float(kstar)
    return out


def spec_dict(spec: StudySpec) -> dict:
    return asdict(spec)
