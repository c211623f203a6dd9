"""Uniform 1-D grids and piecewise-constant fields.

A :class:`CellField` holds cell averages on a truncated interval
``[x_min, x_max]`` together with the constant values used to extend it
to the whole real line.  :class:`InterfaceField` holds one value per cell
interface (``n_cells + 1`` values), which is where the nonlocal speed
lives.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Tuple

import numpy as np

from .errors import GridMismatch, InvalidInterval


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min={self.x_min} must be < x_max={self.x_max}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"n_cells must be an integer >= 2, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def interfaces(self) -> np.ndarray:
        """Interface coordinates ``x_min + i*dx`` for ``i = 0..n_cells``."""
        x = self.x_min + np.arange(self.n_cells + 1) * self.dx
        x[-1] = self.x_max
        return x

    def refine(self, factor: int) -> "GridSpec":
        return GridSpec(self.x_min, self.x_max, self.n_cells * int(factor))

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_cells": self.n_cells}


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CellField:
    """Cell averages on ``grid`` plus the constant extension ``(left, right)``."""

    grid: GridSpec
    values: np.ndarray
    boundary_extension: Tuple[float, float] = field(default=None)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.grid.n_cells,):
            raise ValueError(
                f"expected {self.grid.n_cells} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("cell values must be finite")
        ext = self.boundary_extension
        if ext is None:
            ext = (values[0], values[-1])
        ext = (float(ext[0]), float(ext[1]))
        if not (np.isfinite(ext[0]) and np.isfinite(ext[1])):
            raise ValueError("boundary extension must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "boundary_extension", ext)

    @property
    def left(self) -> float:
        return self.boundary_extension[0]

    @property
    def right(self) -> float:
        return self.boundary_extension[1]

    def with_values(self, values) -> "CellField":
        return CellField(self.grid, values, self.boundary_extension)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.dx)

    def reversed(self) -> "CellField":
        """Mirror image ``x -> x_min + x_max - x`` (extensions swap sides)."""
        return CellField(self.grid, self.values[::-1], (self.right, self.left))

    def restrict(self, a: float, b: float) -> np.ndarray:
        """Values of the cells whose centers lie in ``[a, b]``."""
        x = self.grid.centers
        return self.values[(x >= a) & (x <= b)]

    def coarsen(self, grid: GridSpec) -> "CellField":
        """Exact cell averaging onto a coarser grid with the same bounds."""
        if (grid.x_min, grid.x_max) != (self.grid.x_min, self.grid.x_max):
            raise GridMismatch("coarsening requires identical domain bounds")
        factor, rem = divmod(self.grid.n_cells, grid.n_cells)
        if rem:
            raise GridMismatch(
                f"{self.grid.n_cells} cells do not nest into {grid.n_cells} cells"
            )
        if factor == 1:
            return CellField(grid, self.values, self.boundary_extension)
        vals = self.values.reshape(grid.n_cells, factor).mean(axis=1)
        return CellField(grid, vals, self.boundary_extension)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in zip(self.grid.centers, self.values):
                w.writerow([repr(float(x)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, grid: GridSpec, boundary_extension=None) -> "CellField":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] != grid.n_cells or not np.allclose(
            data[:, 0], grid.centers, rtol=0, atol=1e-12 * max(1.0, abs(grid.x_max))
        ):
            raise GridMismatch(f"{path} does not match {grid}")
        return cls(grid, data[:, 1], boundary_extension)


@dataclass(frozen=True, eq=False)
class InterfaceField:
    """One value per interface ``x_min + i*dx``, ``i = 0..n_cells``.

    ``far_field`` holds the limits at minus/plus infinity, used only to add
    the boundary jumps when measuring total variation.
    """

    grid: GridSpec
    values: np.ndarray
    far_field: Tuple[float, float] = None

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.grid.n_cells + 1,):
            raise ValueError(
                f"expected {self.grid.n_cells + 1} interface values, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("interface values must be finite")
        far = self.far_field
        if far is None:
            far = (values[0], values[-1])
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "far_field", (float(far[0]), float(far[1])))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "w"])
            for x, v in zip(self.grid.interfaces, self.values):
                w.writerow([repr(float(x)), repr(float(v))])


def total_variation(f) -> float:
    """Sum of absolute jumps, including the jumps to the far-field values."""
    if isinstance(f, CellField):
        lo, hi = f.boundary_extension
    else:
        lo, hi = f.far_field
    v = f.values
    return float(
        np.sum(np.abs(np.diff(v))) + abs(v[0] - lo) + abs(hi - v[-1])
    )


def mollify(f: CellField, width: float) -> CellField:
    """Discrete convolution with a normalized cosine bump of half-width ``width``.

    The constant extensions pad both ends, so bounds, monotonicity and the
    far-field values are preserved.
    """
    dx = f.grid.dx
    m = int(np.floor(width / dx))
    if m < 1:
        return f
    k = np.arange(-m, m + 1) * dx / width
    w = 0.5 * (1.0 + np.cos(np.pi * k))
    w /= w.sum()
    padded = np.concatenate([np.full(m, f.left), f.values, np.full(m, f.right)])
    return f.with_values(np.convolve(padded, w, mode="valid"))


def _check_same_grid(f: CellField, g: CellField) -> None:
    if f.grid != g.grid:
        raise GridMismatch(f"{f.grid} != {g.grid}")


def l1_distance(f: CellField, g: CellField, window=None) -> float:
    """L1 distance of two fields restricted to ``window`` (default: whole grid)."""
    _check_same_grid(f, g)
    grid = f.grid
    a, b = (grid.x_min, grid.x_max) if window is None else map(float, window)
    if a > b:
        raise InvalidInterval(f"window [{a}, {b}] is empty")
    if a < grid.x_min - 1e-12 or b > grid.x_max + 1e-12:
        raise InvalidInterval(f"window [{a}, {b}] exceeds [{grid.x_min}, {grid.x_max}]")
    x = grid.interfaces
    overlap = np.clip(np.minimum(x[1:], b) - np.maximum(x[:-1], a), 0.0, None)
    return float(np.sum(np.abs(f.values - g.values) * overlap))


def monotonicity_defect(
    f, direction: Literal["increasing", "decreasing"] = "increasing"
) -> float:
    """Largest violation of discrete monotonicity; 0 iff monotone.

    ``f`` may be a :class:`CellField` or a plain array of values.
    """
    v = f.values if isinstance(f, CellField) else np.asarray(f, dtype=float)
    if v.size < 2:
        return 0.0
    d = np.diff(v)
    if direction == "increasing":
        worst = -d.min()
    elif direction == "decreasing":
        worst = d.max()
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return float(max(0.0, worst))
