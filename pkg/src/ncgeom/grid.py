"""Periodic torus grids and centered finite-difference stencils.

Fields are arrays whose leading ``n`` axes are the spatial grid axes;
trailing axes (matrix indices, form components) ride along untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError

# first-derivative weights on offsets -h..h
STENCILS = {
    2: np.array([-1 / 2, 0.0, 1 / 2]),
    4: np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]),
    6: np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60]),
}


def stencil_weights(order: int) -> dict:
    """offset -> weight for the first-derivative stencil (unit spacing)."""
    if order not in STENCILS:
        raise ConfigError(f"stencil order must be one of {sorted(STENCILS)}, got {order}")
    w = STENCILS[order]
    half = len(w) // 2
    return {k - half: float(c) for k, c in enumerate(w) if c != 0.0}


@dataclass(frozen=True)
class TorusGrid:
    n: int
    sizes: tuple
    lengths: tuple

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "lengths", tuple(float(s) for s in self.lengths))
        if len(self.sizes) != self.n or len(self.lengths) != self.n:
            raise InputError("sizes and lengths must have one entry per axis")
        if any(s < 1 for s in self.sizes):
            raise InputError("grid sizes must be positive")
        if any(L <= 0 for L in self.lengths):
            raise InputError("torus lengths must be positive")

    @classmethod
    def uniform(cls, n: int, size: int, length: float = 1.0) -> "TorusGrid":
        return cls(n, (size,) * n, (length,) * n)

    @property
    def spacing(self) -> tuple:
        return tuple(L / s for L, s in zip(self.lengths, self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def coords(self) -> np.ndarray:
        """Array of shape (n, *sizes) with the coordinate x^mu at each point."""
        axes = [np.arange(s) * h for s, h in zip(self.sizes, self.spacing)]
        return np.array(np.meshgrid(*axes, indexing="ij"))

    def check_stencil(self, order: int):
        half = len(STENCILS.get(order, [0] * 3)) // 2
        stencil_weights(order)
        for s in self.sizes:
            if s < 2 * half + 1 or (order >= 4 and s < 8):
                raise ConfigError(f"grid size {s} too coarse for order-{order} stencil")

    def integrate(self, density: np.ndarray) -> np.ndarray:
        """Riemann sum over the spatial axes (fixed summation order)."""
        out = density
        for _ in range(self.n):
            out = out.sum(axis=0)
        return out * self.cell_volume


def shift(f: np.ndarray, axis: int, k: int) -> np.ndarray:
    """f(x + k e_axis) on the periodic grid."""
    return np.roll(f, -k, axis=axis)


def derivative(grid: TorusGrid, f: np.ndarray, axis: int, order: int = 4) -> np.ndarray:
    grid.check_stencil(order)
    out = np.zeros(f.shape, dtype=np.result_type(f, float))
    for k, w in stencil_weights(order).items():
        out += w * shift(f, axis, k)
    return out / grid.spacing[axis]


def gradient(grid: TorusGrid, f: np.ndarray, order: int = 4) -> np.ndarray:
    """Stack of partial derivatives; the derivative index is placed first."""
    return np.stack([derivative(grid, f, mu, order) for mu in range(grid.n)])
