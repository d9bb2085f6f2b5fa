"""Quadrature Kullback-Leibler divergence to a mixture family and its minimum.

``K*(theta) = min_f K(m, m_{f,theta})`` is approximated by discretising
both integrals (mixing nodes ``u_j`` with weights ``a_j``, observation
nodes ``y_r`` with weights ``b_r``) and minimising over the node values of
``f`` with the mixture-weights EM fixed point, which never increases the
objective.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import ScalarData
from .grid import Grid, GridDensity, make_legendre_grid

COVERAGE_MIN = 0.99


@dataclass(frozen=True)
class YQuadrature:
    """Observation-space nodes/weights plus the true density at the nodes."""

    nodes: np.ndarray
    weights: np.ndarray
    m_values: np.ndarray

    @classmethod
    def legendre(cls, true_density, lo: float = -0.5, hi: float = 1.5, R: int = 101) -> YQuadrature:
        g = make_legendre_grid(lo, hi, R)
        y = g.nodes[:, 0]
        yq = cls(y, g.weights, np.asarray(true_density(y), dtype=float))
        if yq.coverage() < COVERAGE_MIN:
            raise ValueError(f"true density has only {yq.coverage():.4f} mass on [{lo}, {hi}]")
        return yq

    def coverage(self) -> float:
        return float(self.weights @ self.m_values)

    def data(self) -> ScalarData:
        return ScalarData(self.nodes)


@dataclass
class KLResult:
    f: GridDensity
    kstar: float
    iterations: int
    converged: bool
    history: np.ndarray


def _kernel_matrix(kernel, theta, grid: Grid, yq: YQuadrature) -> np.ndarray:
    """``p(y_r | theta, u_j)`` as an ``(R, J)`` array."""
    return np.exp(kernel.log_density(theta, grid.nodes, yq.data()))


def _kl(bm, m, P, af):
    mix = P @ af
    bad = np.flatnonzero(~(mix > 0))
    if bad.size:
        raise ValueError(f"mixture density vanishes at y-node {bad[0]}")
    return float(bm @ (np.log(m) - np.log(mix))), mix


def kl_quadrature(m, f: GridDensity, kernel, theta, yq: YQuadrature) -> float:
    """``sum_r b_r m(y_r) log{m(y_r) / sum_j a_j p(y_r | theta, u_j) f(u_j)}``.

    ``m`` may be ``None`` when ``yq`` already holds the true density values.
    """
    m_vals = yq.m_values if m is None else np.asarray(m(yq.nodes), dtype=float)
    P = _kernel_matrix(kernel, theta, f.grid, yq)
    return _kl(yq.weights * m_vals, m_vals, P, f.grid.weights * f.values)[0]


def minimize_kl(m, kernel, theta, grid: Grid, yq: YQuadrature, tol: float = 1e-9, max_iter: int = 10000,
                f_init: GridDensity | None = None) -> KLResult:
    """EM iteration ``f_j <- f_j sum_r pi_r p_rj / m_f(y_r)`` with ``pi_r`` proportional to ``b_r m(y_r)``.

    Stops once the KL decrease over one sweep falls below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m_vals = yq.m_values if m is None else np.asarray(m(yq.nodes), dtype=float)
    bm = yq.weights * m_vals
    pi = bm / bm.sum()
    P = _kernel_matrix(kernel, theta, grid, yq)
    a = grid.weights
    f = (f_init or GridDensity.uniform(grid)).values.copy()
    kl, mix = _kl(bm, m_vals, P, a * f)
    history = [kl]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f = f * (P.T @ (pi / mix))
        f /= a @ f
        new_kl, mix = _kl(bm, m_vals, P, a * f)
        history.append(new_kl)
        if new_kl > kl + 1e-12 * max(1.0, abs(kl)):
            raise FloatingPointError(f"EM sweep {it} increased KL from {kl!r} to {new_kl!r}")
        if kl - new_kl < tol:
            converged = True
            kl = min(kl, new_kl)
            break
        kl = new_kl
    return KLResult(GridDensity(grid, f), kl, it, converged, np.array(history))


def kstar_curve(m, kernel, thetas, grid: Grid, yq: YQuadrature, tol: float = 1e-9, max_iter: int = 10000):
    """``(theta, K*(theta))`` pairs over a 1-D theta grid."""
    out = []
    for th in np.asarray(thetas, dtype=float):
        out.append((float(th), minimize_kl(m, kernel, [th], grid, yq, tol, max_iter).kstar))
    return np.array(out)


def write_kstar_csv(path, curve, J: int, R: int, tol: float, generator: str = "") -> None:
    """CSV of ``sigma,kstar`` preceded by ``#`` lines recording the settings."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# J={J}\n# R={R}\n# tol={tol}\n")
        if generator:
            fh.write(f"# generator={generator}\n")
        writer = csv.writer(fh)
        writer.writerow(["sigma", "kstar"])
        writer.writerows([[repr(float(s)), repr(float(k))] for s, k in curve])


def read_kstar_csv(path) -> tuple[dict, np.ndarray]:
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key] = val
            elif line.strip() and not line.startswith("sigma"):
                rows.append([float(v) for v in line.strip().split(",")])
    return meta, np.array(rows)
