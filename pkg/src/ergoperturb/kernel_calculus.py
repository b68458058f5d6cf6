"""Discretized integral operators on a grid.

A kernel K acts by (Tf)(x_i) = sum_j w_j K_ij f(y_j).  The matrix with the
quadrature weights folded in, ``T.operator = K * w``, is what actually gets
multiplied; ``matrix`` keeps the kernel-density form so that kernels sampled
from a formula can be compared entry by entry.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError
from .weighted_space import (
    Grid,
    SignedDensity,
    WeightSpec,
    WeightedFunction,
    _frozen,
    check_same_grid,
    uniform_grid,
)

log = logging.getLogger(__name__)

MARKOV_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DiscretizedKernel:
    grid: Grid
    matrix: np.ndarray
    is_markov: bool = False
    # raw row-sum defects |1 - sum_j w_j k(x_i, y_j)| before renormalization
    row_defect: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        n = self.grid.n
        if m.shape != (n, n):
            raise DomainError(f"kernel matrix must be {n}x{n}, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        if self.row_defect is not None:
            object.__setattr__(self, "row_defect", _frozen(self.row_defect, float))
        if self.is_markov:
            sums = self.operator.sum(axis=1)
            if np.any(np.real(m) < -1e-14) or np.max(np.abs(sums - 1)) > MARKOV_TOL:
                raise DomainError("kernel flagged Markov but is not row-stochastic")

    @cached_property
    def operator(self) -> np.ndarray:
        """Matrix acting on node values: (Tf)_i = sum_j operator_ij f_j."""
        op = self.matrix * self.grid.quad_weights[None, :]
        op.setflags(write=False)
        return op

    @classmethod
    def from_operator(cls, grid: Grid, op, is_markov: bool = False) -> "DiscretizedKernel":
        return cls(grid, np.asarray(op) / grid.quad_weights[None, :], is_markov)

    @classmethod
    def identity(cls, grid: Grid) -> "DiscretizedKernel":
        return cls(grid, np.diag(1.0 / grid.quad_weights), is_markov=True)

    def __sub__(self, other: "DiscretizedKernel") -> "DiscretizedKernel":
        check_same_grid(self.grid, other.grid)
        return DiscretizedKernel(self.grid, self.matrix - other.matrix)

    def __add__(self, other: "DiscretizedKernel") -> "DiscretizedKernel":
        check_same_grid(self.grid, other.grid)
        return DiscretizedKernel(self.grid, self.matrix + other.matrix)

    def __mul__(self, c) -> "DiscretizedKernel":
        return DiscretizedKernel(self.grid, c * self.matrix)

    __rmul__ = __mul__

    def __matmul__(self, other: "DiscretizedKernel") -> "DiscretizedKernel":
        return compose(self, other)


def compose(S: DiscretizedKernel, T: DiscretizedKernel) -> DiscretizedKernel:
    """The operator f -> S(T f)."""
    check_same_grid(S.grid, T.grid)
    return DiscretizedKernel.from_operator(
        S.grid, S.operator @ T.operator, is_markov=S.is_markov and T.is_markov
    )


def apply(T: DiscretizedKernel, f: WeightedFunction) -> WeightedFunction:
    check_same_grid(T.grid, f.grid)
    return WeightedFunction(T.grid, T.operator @ f.values)


def adjoint_apply(T: DiscretizedKernel, p: SignedDensity) -> SignedDensity:
    """Measure action p -> pT, returned as a density."""
    check_same_grid(T.grid, p.grid)
    return SignedDensity(T.grid, p.masses @ T.matrix)


def operator_norm(T: DiscretizedKernel, from_beta: WeightSpec, to_beta: WeightSpec) -> float:
    """||T||_{beta, beta'}, exact on the discretization.

    The supremum over ||f||_beta <= 1 is attained at f_j = sign(K_ij) V(x_j)^beta,
    so the norm is max_i V(x_i)^-beta' sum_j w_j |K_ij| V(x_j)^beta.
    """
    if from_beta.r != to_beta.r:
        raise DomainError("operator norms need a common moment order r")
    x = T.grid.nodes
    row = np.abs(T.operator) @ from_beta.weight(x)
    return float(np.max(row / to_beta.weight(x)))


def power(T: DiscretizedKernel, n: int) -> DiscretizedKernel:
    if n < 0:
        raise DomainError(f"power must be >= 0, got {n}")
    if n == 0:
        return DiscretizedKernel.identity(T.grid)
    return DiscretizedKernel.from_operator(
        T.grid, np.linalg.matrix_power(T.operator, n), is_markov=T.is_markov
    )


@dataclass(frozen=True)
class DriftCertificate:
    """Constants of P^N V <= delta^N V + L on the grid."""

    N: int
    delta: float
    L: float
    residual: float
    certified: bool
    l_cap: float

    @property
    def status(self) -> str:
        return "certified" if self.certified else "certification-failure"


def _upper_hull(px: np.ndarray, py: np.ndarray) -> list[int]:
    """Indices of the upper convex hull of points sorted by px (monotone chain)."""
    hull: list[int] = []
    for i in range(px.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (px[b] - px[a]) * (py[i] - py[a]) - (py[b] - py[a]) * (px[i] - px[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def fit_drift(
    T: DiscretizedKernel, w: WeightSpec, N: int = 1, l_cap: float | None = None
) -> DriftCertificate:
    """Smallest delta with T^N V <= delta^N V + L, L <= l_cap, over the grid.

    The map s -> max_i (g_i - s V_i) is piecewise linear with breakpoints at
    the slopes of the upper hull of the points (V_i, g_i), where two
    constraints are active.  Among those breakpoints the smallest slope whose
    intercept stays below ``l_cap`` gives delta^N.

    ``l_cap`` defaults to ten times T^N V at the node of smallest weight.
    """
    if not T.is_markov:
        raise DomainError("drift certification needs a Markov kernel")
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    V = w.with_beta(1.0).V(T.grid.nodes)
    g = np.real(np.linalg.matrix_power(T.operator, N) @ V)
    if l_cap is None:
        l_cap = 10.0 * float(g[np.argmin(V)])

    order = np.lexsort((g, V))
    vs, gs = V[order], g[order]
    # keep the largest g for each distinct V
    keep = np.append(vs[1:] != vs[:-1], True)
    vs, gs = vs[keep], gs[keep]
    hull = _upper_hull(vs, gs)
    slopes = [
        (gs[b] - gs[a]) / (vs[b] - vs[a]) for a, b in zip(hull[:-1], hull[1:])
    ]
    candidates = sorted({max(s, 0.0) for s in slopes} | {0.0} if len(hull) > 1 else {0.0})

    chosen = None
    for s in candidates:
        if np.max(g - s * V) <= l_cap:
            chosen = s
            break
    if chosen is None:
        # even the steepest breakpoint needs L > l_cap
        chosen = max(candidates)
    delta_n = chosen
    L = float(np.max(g - delta_n * V))
    residual = float(np.max(np.maximum(g - delta_n * V - L, 0.0)))
    delta = delta_n ** (1.0 / N) if delta_n > 0 else 0.0
    certified = delta < 1.0 and L <= l_cap and L > 0
    if not certified:
        log.info("drift certification failed: delta=%.4g L=%.4g cap=%.4g", delta, L, l_cap)
    return DriftCertificate(N, float(delta), L, residual, bool(certified), float(l_cap))


def certify_family(
    kernels: dict, w: WeightSpec, N: int = 1, l_cap: float | None = None
) -> tuple[dict, DriftCertificate]:
    """Certify every member and return the worst-case common certificate.

    The common certificate uses the largest delta and the largest L of the
    members, which keeps every member's inequality valid.
    """
    certs = {key: fit_drift(T, w, N, l_cap) for key, T in kernels.items()}
    delta = max(c.delta for c in certs.values())
    L = max(c.L for c in certs.values())
    cap = max(c.l_cap for c in certs.values())
    resid = 0.0
    for T in kernels.values():
        V = w.with_beta(1.0).V(T.grid.nodes)
        g = np.real(np.linalg.matrix_power(T.operator, N) @ V)
        resid = max(resid, float(np.max(np.maximum(g - delta**N * V - L, 0.0))))
    ok = all(c.certified for c in certs.values()) and delta < 1 and resid == 0.0
    return certs, DriftCertificate(N, delta, L, resid, ok, cap)


def write_kernel_csv(path, T: DiscretizedKernel, r: float = 1.0) -> None:
    """Dense matrix export with one header line ``# n=... x_max=... r=...``."""
    g = T.grid
    with open(path, "w") as fh:
        fh.write(f"# n={g.n} x_max={g.x_max!r} r={float(r)!r}\n")
        np.savetxt(fh, np.real(T.matrix), delimiter=",", fmt="%.17g")


def read_kernel_csv(path) -> tuple[DiscretizedKernel, float]:
    """Reload a kernel written by :func:`write_kernel_csv` (uniform grids only)."""
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=") for item in header)
        mat = np.loadtxt(fh, delimiter=",", ndmin=2)
    grid = uniform_grid(int(meta["n"]), float(meta["x_max"]))
    op = mat * grid.quad_weights[None, :]
    markov = bool(
        np.all(mat >= 0) and np.max(np.abs(op.sum(axis=1) - 1)) <= MARKOV_TOL
    )
    return DiscretizedKernel(grid, mat, is_markov=markov), float(meta["r"])
