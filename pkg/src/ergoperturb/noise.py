"""Noise densities for the AR(1) model, with symbolic derivative families."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import sympy as sp
from scipy import optimize, stats

from .errors import DomainError

_t = sp.Symbol("t", real=True)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """A probability density nu with derivatives nu^(j), j <= floor(r) + 1.

    ``r`` is the moment order the model is used with; the derivative family
    and the ratio bounds A_j = sup |nu^(j)| / nu are built from a sympy
    expression of the density, the law (cdf, ppf, tail mass, moments) from
    the matching scipy distribution.
    """

    name: str
    params: dict
    expr: sp.Expr = field(repr=False)
    law: object = field(repr=False)
    r: float = 1.0
    moment_fn: Callable[[float], float] = field(repr=False, default=None)
    # |t| beyond which every ratio nu^(j)/nu is monotone; bounds the sup search
    ratio_window: float = 200.0

    def __post_init__(self):
        if self.r < 1:
            raise DomainError(f"moment order r must be >= 1, got {self.r}")

    @property
    def floor_r(self) -> int:
        return int(math.floor(self.r))

    @property
    def max_derivative(self) -> int:
        return self.floor_r + 1

    def with_r(self, r: float) -> "NoiseModel":
        return NoiseModel(
            self.name, dict(self.params), self.expr, self.law, r, self.moment_fn, self.ratio_window
        )

    @cached_property
    def _derivs(self) -> list:
        return [
            sp.lambdify(_t, sp.diff(self.expr, _t, j), "numpy")
            for j in range(self.max_derivative + 2)
        ]

    def pdf(self, x) -> np.ndarray:
        return self.derivative(0, x)

    def derivative(self, j: int, x) -> np.ndarray:
        """nu^(j)(x); j = 0 is the density itself."""
        if j < 0:
            raise DomainError("derivative order must be >= 0")
        if j >= len(self._derivs):
            fn = sp.lambdify(_t, sp.diff(self.expr, _t, j), "numpy")
        else:
            fn = self._derivs[j]
        x = np.asarray(x, dtype=float)
        return np.asarray(fn(x), dtype=float) + 0.0 * x

    def tail_mass(self, x_max: float) -> float:
        """Probability of |theta| > x_max."""
        return float(self.law.sf(x_max) + self.law.cdf(-x_max))

    def ppf(self, u) -> np.ndarray:
        return self.law.ppf(u)

    @property
    def mean(self) -> float:
        return float(self.law.mean())

    def abs_moment(self, p: float) -> float:
        """E|theta|^p (inf when it diverges)."""
        return float(self.moment_fn(p))

    @property
    def moment_r(self) -> float:
        return self.abs_moment(self.r)

    def ratio_bound(self, j: int) -> float:
        """A_j = sup_t |nu^(j)(t)| / nu(t); inf if unbounded."""
        if j == 0:
            return 1.0
        q = sp.simplify(sp.diff(self.expr, _t, j) / self.expr)
        for end in (sp.oo, -sp.oo):
            lim = sp.limit(q, _t, end)
            if lim.is_infinite or lim is sp.nan:
                return math.inf
        f = sp.lambdify(_t, q, "numpy")
        loc = float(self.params.get("loc", 0.0))
        scale = float(self.params.get("scale", 1.0))
        ts = loc + scale * np.linspace(-self.ratio_window, self.ratio_window, 200001)
        vals = np.abs(f(ts))
        i = int(np.argmax(vals))
        lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]
        res = optimize.minimize_scalar(
            lambda s: -abs(float(f(s))), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12},
        )
        return float(max(vals[i], -res.fun))

    @cached_property
    def ratio_bounds(self) -> tuple[float, ...]:
        """(A_1, ..., A_{floor(r)+1})."""
        return tuple(self.ratio_bound(j) for j in range(1, self.max_derivative + 1))

    @property
    def positive(self) -> bool:
        # both shipped families have full support
        return self.name in ("student_t", "gaussian")

    @property
    def eligible(self) -> bool:
        """Smoothness/moment conditions for expanding pi_alpha in alpha."""
        return self.eligibility_issues() == []

    def eligibility_issues(self) -> list[str]:
        issues = []
        if float(self.r).is_integer():
            issues.append(f"r = {self.r} is an integer")
        if not self.positive:
            issues.append("density is not positive everywhere")
        if not math.isfinite(self.moment_r):
            issues.append(f"moment of order r = {self.r} is infinite")
        for j, a in enumerate(self.ratio_bounds, start=1):
            if not math.isfinite(a):
                issues.append(f"sup |nu^({j})| / nu is infinite")
        return issues


def student_t(dof: float, r: float = 1.0, scale: float = 1.0) -> NoiseModel:
    """c (1 + x^2 / (k s^2))^(-(k+1)/2) / s: smooth, bounded ratio family."""
    if dof <= 0 or scale <= 0:
        raise DomainError("student_t needs dof > 0 and scale > 0")
    k = sp.nsimplify(dof)
    s = sp.nsimplify(scale)
    c = sp.gamma((k + 1) / 2) / (sp.sqrt(k * sp.pi) * sp.gamma(k / 2))
    expr = c / s * (1 + (_t / s) ** 2 / k) ** (-(k + 1) / 2)
    law = stats.t(dof, scale=scale)

    def moment(p: float) -> float:
        if p >= dof:
            return math.inf
        return float(
            scale**p * dof ** (p / 2) * math.gamma((p + 1) / 2) * math.gamma((dof - p) / 2)
            / (math.sqrt(math.pi) * math.gamma(dof / 2))
        )

    return NoiseModel(
        "student_t", {"dof": float(dof), "scale": float(scale)}, expr, law, r, moment
    )


def gaussian(sigma: float = 1.0, r: float = 1.0, loc: float = 0.0) -> NoiseModel:
    """Normal noise; |nu'/nu| is unbounded, so never expansion-eligible."""
    if sigma <= 0:
        raise DomainError("gaussian needs sigma > 0")
    s = sp.nsimplify(sigma)
    mu = sp.nsimplify(loc)
    expr = sp.exp(-((_t - mu) ** 2) / (2 * s**2)) / (s * sp.sqrt(2 * sp.pi))
    law = stats.norm(loc, sigma)

    def moment(p: float) -> float:
        if loc == 0:
            return float(sigma**p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi))
        return float(law.expect(lambda y: abs(y) ** p))

    return NoiseModel(
        "gaussian", {"sigma": float(sigma), "loc": float(loc), "scale": float(sigma)},
        expr, law, r, moment,
    )


def make_noise(name: str, r: float = 1.0, **params) -> NoiseModel:
    """Factory used by the CLI configuration."""
    if name == "student_t":
        return student_t(params.get("dof", 5.0), r=r, scale=params.get("scale", 1.0))
    if name == "gaussian":
        return gaussian(params.get("sigma", 1.0), r=r, loc=params.get("loc", 0.0))
    raise DomainError(f"unknown noise family {name!r}")
