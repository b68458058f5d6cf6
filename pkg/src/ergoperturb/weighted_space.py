"""Grids, weights V(x) = (1+|x|)^r and weighted norms on the real line.

Functions live in B_beta, normed by sup V^-beta |f|; measures are stored as
Lebesgue densities and paired with functions by quadrature.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature discretization of [-x_max, x_max]."""

    nodes: np.ndarray
    quad_weights: np.ndarray
    x_max: float

    def __post_init__(self):
        nodes = _frozen(self.nodes, float)
        weights = _frozen(self.quad_weights, float)
        if nodes.ndim != 1 or nodes.size == 0:
            raise DomainError("grid must have at least one node")
        if weights.shape != nodes.shape:
            raise DomainError("nodes and quad_weights differ in length")
        if self.x_max <= 0:
            raise DomainError(f"x_max must be positive, got {self.x_max}")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("nodes must be strictly increasing")
        if np.any(np.abs(nodes) > self.x_max * (1 + 1e-12)):
            raise DomainError("nodes must lie in [-x_max, x_max]")
        if np.any(weights <= 0):
            raise DomainError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "quad_weights", weights)
        object.__setattr__(self, "x_max", float(self.x_max))

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0]) if self.n > 1 else 2 * self.x_max

    def normalization_defect(self) -> float:
        """|sum(w) - 2 x_max|: how well the rule integrates the constant 1."""
        return abs(float(self.quad_weights.sum()) - 2 * self.x_max)

    def same_as(self, other: "Grid") -> bool:
        if self is other:
            return True
        return (
            self.n == other.n
            and self.x_max == other.x_max
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.quad_weights, other.quad_weights)
        )


def uniform_grid(n: int, x_max: float) -> Grid:
    """Composite trapezoid rule on n equispaced nodes spanning [-x_max, x_max]."""
    if n < 2:
        raise DomainError(f"uniform grid needs n >= 2, got {n}")
    nodes = np.linspace(-x_max, x_max, n)
    h = 2 * x_max / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = h / 2
    return Grid(nodes, weights, x_max)


def check_same_grid(a: Grid, b: Grid) -> None:
    if not a.same_as(b):
        raise DomainError("objects are defined on different grids")


@dataclass(frozen=True)
class WeightSpec:
    """Weight V(x) = (1+|x|)^r raised to the exponent beta in [0, 1]."""

    r: float
    beta: float = 1.0

    def __post_init__(self):
        if not self.r >= 1:
            raise DomainError(f"moment order r must be >= 1, got {self.r}")
        if not 0 <= self.beta <= 1:
            raise DomainError(f"beta must lie in [0, 1], got {self.beta}")

    def V(self, x) -> np.ndarray:
        return (1.0 + np.abs(np.asarray(x, dtype=float))) ** self.r

    def weight(self, x) -> np.ndarray:
        """V(x)^beta, the weight of B_beta."""
        return (1.0 + np.abs(np.asarray(x, dtype=float))) ** (self.r * self.beta)

    def with_beta(self, beta: float) -> "WeightSpec":
        return WeightSpec(self.r, beta)


@dataclass(frozen=True, eq=False)
class WeightedFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.grid.n,):
            raise DomainError(
                f"expected {self.grid.n} values, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: Grid, f: Callable) -> "WeightedFunction":
        return cls(grid, np.broadcast_to(f(grid.nodes), grid.nodes.shape))

    @classmethod
    def constant(cls, grid: Grid, c=1.0) -> "WeightedFunction":
        return cls(grid, np.full(grid.n, c))


@dataclass(frozen=True, eq=False)
class SignedDensity:
    """Signed measure with Lebesgue density sampled at the grid nodes."""

    grid: Grid
    density: np.ndarray

    def __post_init__(self):
        density = _frozen(self.density)
        if density.shape != (self.grid.n,):
            raise DomainError(
                f"expected {self.grid.n} density values, got shape {density.shape}"
            )
        object.__setattr__(self, "density", density)

    @classmethod
    def from_masses(cls, grid: Grid, masses) -> "SignedDensity":
        return cls(grid, np.asarray(masses) / grid.quad_weights)

    @classmethod
    def from_callable(cls, grid: Grid, p: Callable) -> "SignedDensity":
        return cls(grid, p(grid.nodes))

    @property
    def masses(self) -> np.ndarray:
        """Quadrature masses w_i p_i; sums to the total mass."""
        return self.grid.quad_weights * self.density

    @property
    def total_mass(self) -> float:
        return float(np.real(self.masses.sum()))

    def is_probability(self, tol: float = 1e-8) -> bool:
        return bool(
            np.all(np.real(self.density) >= -tol) and abs(self.total_mass - 1) <= tol
        )

    def __add__(self, other: "SignedDensity") -> "SignedDensity":
        check_same_grid(self.grid, other.grid)
        return SignedDensity(self.grid, self.density + other.density)

    def __sub__(self, other: "SignedDensity") -> "SignedDensity":
        check_same_grid(self.grid, other.grid)
        return SignedDensity(self.grid, self.density - other.density)

    def __mul__(self, c) -> "SignedDensity":
        return SignedDensity(self.grid, c * self.density)

    __rmul__ = __mul__


def weighted_norm(f: WeightedFunction, w: WeightSpec) -> float:
    """sup_i V(x_i)^-beta |f(x_i)|."""
    if f.grid.n == 0:
        raise DomainError("empty grid")
    return float(np.max(np.abs(f.values) / w.weight(f.grid.nodes)))


def dual_distance(p: SignedDensity, q: SignedDensity, w: WeightSpec) -> float:
    """Distance of p and q as functionals on the unit ball of B_beta.

    With beta = 0 this is the total variation sum_i w_i |p_i - q_i|.
    """
    check_same_grid(p.grid, q.grid)
    g = p.grid
    return float(np.sum(g.quad_weights * np.abs(p.density - q.density) * w.weight(g.nodes)))


def dual_norm(p: SignedDensity, w: WeightSpec) -> float:
    """sup over ||f||_beta <= 1 of |p(f)|."""
    g = p.grid
    return float(np.sum(g.quad_weights * np.abs(p.density) * w.weight(g.nodes)))


def integrate(f: WeightedFunction, p: SignedDensity):
    """Pairing <p, f> = sum_i w_i p_i f(x_i)."""
    check_same_grid(f.grid, p.grid)
    val = np.sum(p.grid.quad_weights * p.density * f.values)
    return float(val) if np.isrealobj(val) else complex(val)


def write_csv(path, grid: Grid, values, header_lines=()) -> None:
    """Write columns x, w, value (one row per node)."""
    values = np.asarray(values)
    if values.shape != (grid.n,):
        raise DomainError("values do not match grid")
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "w", "value"])
        for x, wt, v in zip(grid.nodes, grid.quad_weights, values):
            writer.writerow([repr(float(x)), repr(float(wt)), repr(float(np.real(v)))])


def read_csv(path) -> tuple[Grid, np.ndarray]:
    """Inverse of :func:`write_csv`. The grid's x_max is taken as max |x|."""
    rows = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.DictReader(lines)
        for row in reader:
            rows.append((float(row["x"]), float(row["w"]), float(row["value"])))
    if not rows:
        raise DomainError(f"{Path(path)} contains no data rows")
    arr = np.array(rows)
    grid = Grid(arr[:, 0], arr[:, 1], float(np.max(np.abs(arr[:, 0]))))
    return grid, arr[:, 2]
