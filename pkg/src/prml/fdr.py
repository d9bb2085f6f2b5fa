"""Empirical-Bayes classification of AR(1) series as null or non-null."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import DegenerateObservationError
from .grid import GridDensity, make_legendre_grid, make_product_grid
from .simulate import AR_PHI_BOX, AR_SIGMA2_BOX

DEFAULT_CUTOFF = 0.5


@dataclass(frozen=True)
class TestDecision:
    index: int
    lfdr: float
    flagged: bool
    truth: bool | None = None  # True when the series is truly non-null


@dataclass(frozen=True)
class TestMetrics:
    fdr: float
    mp: float
    discoveries: int
    n: int


def _null_posterior(log_n0, log_n1, theta, f: GridDensity):
    """``theta int N0 f / (theta int N0 f + (1 - theta) int N1 f)`` per row."""
    af = f.grid.weights * f.values
    shift = np.maximum(log_n0.max(axis=1), log_n1.max(axis=1))
    null_mass = np.exp(log_n0 - shift[:, None]) @ af
    alt_mass = np.exp(log_n1 - shift[:, None]) @ af
    num = theta * null_mass
    den = num + (1 - theta) * alt_mass
    bad = np.flatnonzero(~(den > 0))
    if bad.size:
        raise DegenerateObservationError(bad[0], f"series {bad[0]} has zero mixture density")
    ratio = num / den
    if np.any(ratio > 1 + 1e-12) or np.any(ratio < -1e-12):
        raise FloatingPointError("local fdr outside [0, 1] beyond roundoff")
    return np.clip(ratio, 0.0, 1.0)


def local_fdr(data, theta_hat: float, f_hat: GridDensity, kernel) -> np.ndarray:
    """Plug-in local false discovery rate for every series in ``data``."""
    theta_hat = float(np.squeeze(theta_hat))
    if not 0 <= theta_hat <= 1:
        raise ValueError(f"null proportion must lie in [0, 1], got {theta_hat}")
    log_n0, log_n1 = kernel.component_logs(f_hat.grid.nodes, data)
    return _null_posterior(log_n0, log_n1, theta_hat, f_hat)


def oracle_grid(order: int = 40):
    return make_product_grid(make_legendre_grid(*AR_SIGMA2_BOX, order), make_legendre_grid(*AR_PHI_BOX, order))


def oracle_lfdr(data, theta_true: float, f_true, kernel, order: int = 40) -> np.ndarray:
    """Bayes-oracle null probability using the true ``(theta, f)``.

    ``f_true`` is a density on ``u = (sigma2, phi)``; it is integrated with a
    product Gauss-Legendre rule over the true support box.
    """
    grid = oracle_grid(order)
    f = GridDensity(grid, f_true(grid.nodes))
    return local_fdr(data, theta_true, f, kernel)


def classify(lfdrs, cutoff: float = DEFAULT_CUTOFF, truths=None) -> list[TestDecision]:
    """Flag series whose local fdr is at most ``cutoff``."""
    if not 0 < cutoff < 1:
        raise ValueError("cutoff must lie in (0, 1)")
    lfdrs = np.asarray(lfdrs, dtype=float)
    truths = [None] * len(lfdrs) if truths is None else [bool(t) for t in truths]
    return [TestDecision(i, float(v), bool(v <= cutoff), t) for i, (v, t) in enumerate(zip(lfdrs, truths))]


def metrics(decisions) -> TestMetrics:
    """Observed false discovery proportion (0 when nothing is flagged) and misclassification rate."""
    if any(d.truth is None for d in decisions):
        raise ValueError("metrics need the true status of every series")
    flagged = np.array([d.flagged for d in decisions], dtype=bool)
    truth = np.array([d.truth for d in decisions], dtype=bool)
    n = len(decisions)
    discoveries = int(flagged.sum())
    false_disc = int((flagged & ~truth).sum())
    missed = int((~flagged & truth).sum())
    return TestMetrics(
        fdr=false_disc / max(1, discoveries),
        mp=(false_disc + missed) / n if n else 0.0,
        discoveries=discoveries,
        n=n,
    )


def write_decisions_csv(path, decisions) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "lfdr", "flagged", "truth"])
        for d in decisions:
            truth = "" if d.truth is None else int(d.truth)
            writer.writerow([d.index, repr(d.lfdr), int(d.flagged), truth])
