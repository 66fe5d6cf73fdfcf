"""Uniform cell-centred grid on the reference box ``[-L, L]^d``."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_CELLS = 16


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    half_width: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if self.n < MIN_CELLS:
            raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {self.n}")
        if not self.half_width > 0:
            raise ValueError("box half-width must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    @cached_property
    def axis_centers(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n) + 0.5) * self.dx

    @cached_property
    def axis_nodes(self) -> np.ndarray:
        return -self.half_width + np.arange(self.n + 1) * self.dx

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centres with shape ``(dim, n, ..., n)``."""
        return np.stack(np.meshgrid(*([self.axis_centers] * self.dim), indexing="ij"))

    @cached_property
    def nodes(self) -> np.ndarray:
        """Cell corners with shape ``(dim, n+1, ..., n+1)``."""
        return np.stack(np.meshgrid(*([self.axis_nodes] * self.dim), indexing="ij"))

    def face_centers(self, axis: int) -> np.ndarray:
        """Centres of the interior faces normal to ``axis``.

        Shape is ``(dim, ...)`` with ``n-1`` entries along ``axis`` and ``n``
        along the other axes.
        """
        axes = [self.axis_centers] * self.dim
        axes[axis] = self.axis_nodes[1:-1]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def integrate(self, field) -> float:
        return float(np.sum(field) * self.cell_volume)
