"""Uniform truncation grids on the box [-L, L]^n with a Dirichlet boundary layer.

Grid points are enumerated lexicographically (last axis fastest).  Operators
act on interior unknowns only, ordered point-major: unknown ``p * n + k`` is
component ``k`` of the 1-form at interior point ``p``.  Full-grid fields have
shape ``grid.shape + (n,)`` with the boundary layer held at zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    n: int
    half_width: float
    points: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"grid dimension must be a positive integer, got {self.n}")
        if int(self.points) != self.points or self.points < 3:
            raise ValueError(f"points per axis must be an integer >= 3, got {self.points}")
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise ValueError(f"half width must be positive and finite, got {self.half_width}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)

    @cached_property
    def coords(self) -> np.ndarray:
        """Coordinates of every grid point, shape ``(N**n, n)``."""
        mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def multi_index(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.n, -1)
        return idx.T

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mi = self.multi_index
        return np.all((mi > 0) & (mi < self.points - 1), axis=1)

    @cached_property
    def interior_points(self) -> np.ndarray:
        """Full-grid flat indices of interior points, in increasing order."""
        return np.nonzero(self.interior_mask)[0]

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Map full flat index -> interior index, ``-1`` on the boundary."""
        out = np.full(self.points**self.n, -1, dtype=np.int64)
        out[self.interior_points] = np.arange(self.interior_points.size)
        return out

    @cached_property
    def strides(self) -> np.ndarray:
        return np.array([self.points ** (self.n - 1 - d) for d in range(self.n)], dtype=np.int64)

    @property
    def n_interior(self) -> int:
        return int(self.interior_points.size)

    @property
    def n_dof(self) -> int:
        return self.n_interior * self.n

    @property
    def total_unknowns(self) -> int:
        return self.n * self.points**self.n

    @property
    def interior_coords(self) -> np.ndarray:
        return self.coords[self.interior_points]

    def to_interior(self, field: np.ndarray) -> np.ndarray:
        """Flatten a full-grid 1-form field to the interior unknown vector."""
        field = np.asarray(field)
        if field.shape != self.shape + (self.n,):
            raise ValueError(f"field must have shape {self.shape + (self.n,)}, got {field.shape}")
        flat = field.reshape(-1, self.n)
        if np.any(flat[~self.interior_mask] != 0):
            raise ValueError("field has non-zero values on the Dirichlet boundary layer")
        return flat[self.interior_points].reshape(-1)

    def from_interior(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec)
        if vec.shape != (self.n_dof,):
            raise ValueError(f"expected a vector of length {self.n_dof}, got shape {vec.shape}")
        full = np.zeros((self.points**self.n, self.n), dtype=vec.dtype)
        full[self.interior_points] = vec.reshape(-1, self.n)
        return full.reshape(self.shape + (self.n,))

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(coords) -> (P, n)`` at interior points; returns the unknown vector."""
        vals = np.asarray(func(self.interior_coords))
        return vals.reshape(-1)

    def to_dict(self) -> dict:
        return {"n": self.n, "half_width": self.half_width, "points": self.points}


def build_grid(n: int, half_width: float, points: int) -> Grid:
    return Grid(n=int(n), half_width=float(half_width), points=int(points))
