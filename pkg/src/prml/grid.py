"""Quadrature grids over the mixing space and densities carried on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Finite quadrature rule on a box.

    ``nodes`` has shape ``(J, dim)``; ``weights`` has shape ``(J,)`` and
    ``bounds`` has shape ``(dim, 2)``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    bounds: np.ndarray
    rule: str = "custom"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        weights = np.asarray(self.weights, dtype=float)
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if nodes.shape[0] != weights.shape[0]:
            raise ValueError("nodes and weights differ in length")
        if weights.shape[0] < 1:
            raise ValueError("grid needs at least one node")
        if bounds.shape != (nodes.shape[1], 2):
            raise ValueError(f"bounds shape {bounds.shape} does not match dimension {nodes.shape[1]}")
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError("bounds must satisfy lo < hi")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        slack = 1e-12 * (1 + np.abs(bounds).max())
        if np.any(nodes < bounds[:, 0] - slack) or np.any(nodes > bounds[:, 1] + slack):
            raise ValueError("nodes outside bounds")
        for name, arr in (("nodes", nodes), ("weights", weights), ("bounds", bounds)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def volume(self) -> float:
        return float(np.prod(self.bounds[:, 1] - self.bounds[:, 0]))

    def integrate(self, values) -> float:
        return integrate(self, values)


def _check_interval(lo, hi, J, min_J):
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise ValueError(f"invalid interval [{lo}, {hi}]")
    if int(J) != J or J < min_J:
        raise ValueError(f"need an integer J >= {min_J}, got {J}")


def make_trapezoid_grid(lo: float, hi: float, J: int) -> Grid:
    """Equally spaced nodes with trapezoid weights (endpoints halved)."""
    _check_interval(lo, hi, J, 2)
    nodes = np.linspace(lo, hi, int(J))
    h = (hi - lo) / (J - 1)
    weights = np.full(int(J), h)
    weights[[0, -1]] = h / 2
    return Grid(nodes, weights, [[lo, hi]], rule="trapezoid")


def make_legendre_grid(lo: float, hi: float, J: int) -> Grid:
    """Gauss-Legendre rule of order ``J`` mapped affinely onto ``[lo, hi]``."""
    _check_interval(lo, hi, J, 1)
    x, w = np.polynomial.legendre.leggauss(int(J))
    half = 0.5 * (hi - lo)
    return Grid(half * x + 0.5 * (hi + lo), half * w, [[lo, hi]], rule="legendre")


def make_product_grid(g1: Grid, g2: Grid) -> Grid:
    """Tensor product of two 1-D grids; the first coordinate varies slowest."""
    if g1.dim != 1 or g2.dim != 1:
        raise ValueError("product grids are built from 1-D grids")
    a, b = np.meshgrid(g1.nodes[:, 0], g2.nodes[:, 0], indexing="ij")
    nodes = np.column_stack([a.ravel(), b.ravel()])
    weights = np.outer(g1.weights, g2.weights).ravel()
    rule = g1.rule if g1.rule == g2.rule else f"{g1.rule}x{g2.rule}"
    return Grid(nodes, weights, np.vstack([g1.bounds, g2.bounds]), rule=rule)


def make_grid(rule: str, bounds, J) -> Grid:
    """Build a 1-D or product grid from a rule name, bounds and node count(s)."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    Js = np.atleast_1d(J)
    if len(Js) == 1:
        Js = np.repeat(Js, bounds.shape[0])
    builders = {"trapezoid": make_trapezoid_grid, "legendre": make_legendre_grid}
    if rule not in builders:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    parts = [builders[rule](lo, hi, int(j)) for (lo, hi), j in zip(bounds, Js)]
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return make_product_grid(*parts)
    raise ValueError("only 1-D and 2-D grids are supported")


def integrate(grid: Grid, values) -> float:
    """Quadrature sum ``sum_j a_j v_j``."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        values = np.full(len(grid), float(values))
    if values.shape[0] != len(grid):
        raise ValueError(f"expected {len(grid)} values, got {values.shape[0]}")
    return float(grid.weights @ values) if values.ndim == 1 else grid.weights @ values


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative density values at the nodes of a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} density values, got shape {values.shape}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, grid: Grid) -> GridDensity:
        return cls(grid, np.full(len(grid), 1.0 / grid.volume))

    @classmethod
    def from_function(cls, grid: Grid, fn, normalize: bool = True) -> GridDensity:
        vals = np.asarray(fn(grid.nodes if grid.dim > 1 else grid.nodes[:, 0]), dtype=float)
        dens = cls(grid, vals)
        return dens.renormalize() if normalize else dens

    def integral(self) -> float:
        return integrate(self.grid, self.values)

    def renormalize(self) -> GridDensity:
        total = self.integral()
        if total <= 0:
            raise ValueError("cannot normalize a density with zero mass")
        return GridDensity(self.grid, self.values / total)

    def __call__(self, u):
        """Linear interpolation for 1-D grids (plotting only)."""
        if self.grid.dim != 1:
            raise NotImplementedError("interpolation is only provided on 1-D grids")
        return np.interp(u, self.grid.nodes[:, 0], self.values, left=0.0, right=0.0)
