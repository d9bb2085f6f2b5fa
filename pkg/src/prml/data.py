"""Containers for the three observation shapes the kernels consume.

Each container stores a whole sample as stacked arrays so kernels can be
evaluated for every observation against every grid node in one shot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateObservationError(ArithmeticError):
    """The predictive density of an observation is zero (or not finite)."""

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"observation {self.index} has zero predictive density on the grid")


class KernelDomainError(ValueError):
    """Parameter or latent value outside the kernel's domain."""


@dataclass(frozen=True)
class ScalarData:
    """``n`` scalar responses."""

    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))

    def __len__(self):
        return self.y.shape[0]

    def take(self, index) -> ScalarData:
        return ScalarData(self.y[np.atleast_1d(index)])


@dataclass(frozen=True)
class ReplicatedData:
    """``n`` subjects with ``r`` replicates: ``x`` is ``(n, r, d)``, ``y`` is ``(n, r)``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim == 2:
            x = x[..., None]
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 3 or y.ndim != 2 or x.shape[:2] != y.shape:
            raise ValueError(f"x shape {x.shape} incompatible with y shape {y.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.y.shape[0]

    @property
    def r(self) -> int:
        return self.y.shape[1]

    @property
    def d(self) -> int:
        return self.x.shape[2]

    def take(self, index) -> ReplicatedData:
        index = np.atleast_1d(index)
        return ReplicatedData(self.x[index], self.y[index])


@dataclass(frozen=True)
class SeriesData:
    """``n`` time series of common length ``T >= 2``, stored as ``(n, T)``."""

    y: np.ndarray

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if y.shape[1] < 2:
            raise ValueError("series need at least two time points")
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    def take(self, index) -> SeriesData:
        return SeriesData(self.y[np.atleast_1d(index)])
