"""AR(1) chains X_n = alpha X_{n-1} + theta_n on a truncated grid.

Kernel rows are renormalized to unit mass, so P_alpha is exactly
row-stochastic and smooth in alpha; the derivative kernels are the exact
alpha-derivatives of the renormalized rows.  Where the raw row mass is one
(up to the truncation defect) they coincide with the formal derivative
(-1)^k x^k nu^(k)(y - alpha x).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import integrate

from .errors import DomainError, EligibilityError, PreconditionError, TruncationError
from .ergodicity import generalized_potential, invariant_measure
from .kernel_calculus import DiscretizedKernel, operator_norm
from .noise import NoiseModel
from .weighted_space import Grid, SignedDensity, WeightSpec, dual_distance, dual_norm

TAU_TRUNC = 1e-8
# raw row mass below 1 - MAX_ROW_DEFECT means the grid cannot hold the row
MAX_ROW_DEFECT = 0.5


@dataclass(frozen=True, eq=False)
class ARKernelSpec:
    alpha: float
    noise: NoiseModel
    grid: Grid

    def __post_init__(self):
        if not -1 < self.alpha < 1:
            raise DomainError(f"|alpha| must be < 1, got {self.alpha}")

    def at(self, alpha: float) -> "ARKernelSpec":
        return ARKernelSpec(alpha, self.noise, self.grid)


def check_truncation(noise: NoiseModel, grid: Grid, tau_trunc: float = TAU_TRUNC) -> float:
    """Mass of nu outside the grid; raises if it exceeds ``tau_trunc``.

    Also checks that the quadrature integrates nu to its truncated mass.
    """
    tail = noise.tail_mass(grid.x_max)
    if tail > tau_trunc:
        raise TruncationError(
            f"noise mass outside [-{grid.x_max}, {grid.x_max}] is {tail:.3g} > {tau_trunc:.3g}"
        )
    quad = float(grid.quad_weights @ noise.pdf(grid.nodes))
    if abs(quad - (1 - tail)) > tau_trunc:
        raise TruncationError(
            f"quadrature of nu gives {quad:.12f}, expected {1 - tail:.12f}; refine the grid"
        )
    return tail


def _raw_blocks(spec: ARKernelSpec, kmax: int):
    """g_k = (-x)^k nu^(k)(y - alpha x) and their quadrature row sums."""
    x = spec.grid.nodes
    w = spec.grid.quad_weights
    shift = x[None, :] - spec.alpha * x[:, None]
    g = [(-x[:, None]) ** k * spec.noise.derivative(k, shift) for k in range(kmax + 1)]
    s = [gk @ w for gk in g]
    return g, s


def _normalized_derivatives(g, s) -> list[np.ndarray]:
    """k-th alpha-derivatives of g_0 / s_0 via the Leibniz rule on K s = g."""
    K: list[np.ndarray] = []
    for k in range(len(g)):
        acc = g[k].copy()
        for m in range(k):
            acc -= comb(k, m) * K[m] * s[k - m][:, None]
        K.append(acc / s[0][:, None])
    return K


def _checked_row_mass(spec: ARKernelSpec, s0: np.ndarray) -> np.ndarray:
    defect = np.abs(1.0 - s0)
    worst = int(np.argmax(defect))
    if defect[worst] > MAX_ROW_DEFECT or s0[worst] <= 0:
        raise TruncationError(
            f"row {worst} (x = {spec.grid.nodes[worst]:.4g}) keeps only "
            f"{s0[worst]:.3g} of its mass on the grid"
        )
    return defect


def build_kernel(spec: ARKernelSpec, tau_trunc: float = TAU_TRUNC) -> DiscretizedKernel:
    """K_ij = nu(y_j - alpha x_i), rows renormalized; raw defects kept on the kernel."""
    check_truncation(spec.noise, spec.grid, tau_trunc)
    g, s = _raw_blocks(spec, 0)
    defect = _checked_row_mass(spec, s[0])
    return DiscretizedKernel(spec.grid, g[0] / s[0][:, None], is_markov=True, row_defect=defect)


def derivative_kernels(
    spec: ARKernelSpec, kmax: int, tau_trunc: float = TAU_TRUNC
) -> list[DiscretizedKernel]:
    """[P_{0,alpha}, ..., P_{kmax,alpha}] in one pass."""
    if kmax < 0 or kmax > spec.noise.max_derivative:
        raise DomainError(
            f"derivative order must lie in 0..{spec.noise.max_derivative}, got {kmax}"
        )
    if kmax >= 1 and not spec.noise.eligible:
        raise EligibilityError("; ".join(spec.noise.eligibility_issues()))
    check_truncation(spec.noise, spec.grid, tau_trunc)
    g, s = _raw_blocks(spec, kmax)
    defect = _checked_row_mass(spec, s[0])
    K = _normalized_derivatives(g, s)
    out = [DiscretizedKernel(spec.grid, K[0], is_markov=True, row_defect=defect)]
    out += [DiscretizedKernel(spec.grid, Kk) for Kk in K[1:]]
    return out


def derivative_kernel(spec: ARKernelSpec, k: int, tau_trunc: float = TAU_TRUNC) -> DiscretizedKernel:
    """P_{k,alpha}: k-th derivative in alpha of the discretized kernel."""
    return derivative_kernels(spec, k, tau_trunc)[k]


def drift_l_cap(noise: NoiseModel, r: float) -> float:
    """Default cap on L in drift certificates: 10 (1 + E|theta|^r)."""
    return 10.0 * (1.0 + noise.abs_moment(r))


@dataclass(frozen=True)
class HolderModulus:
    ratio: float
    sigma: float
    ratios: tuple[tuple[float, float, float], ...]
    A: float
    B: float

    @property
    def bound(self) -> float:
        """2 A B, the interpolation constant."""
        return 2.0 * self.A * self.B


def holder_modulus_check(
    spec: ARKernelSpec,
    k: int,
    beta: float,
    beta_prime: float,
    pairs,
    r: float | None = None,
    tau_trunc: float = TAU_TRUNC,
) -> HolderModulus:
    """max over pairs of ||P_{k,a} - P_{k,a'}||_{beta,beta'} / |a - a'|^sigma.

    sigma = r (beta' - beta) - k must lie in (0, 1].  B is the grid value of
    sup_alpha sup_x (P_alpha V^beta)(x) / V(x)^beta over the alphas involved.
    """
    r = spec.noise.r if r is None else r
    sigma = r * (beta_prime - beta) - k
    if not (0 < sigma <= 1 + 1e-12) or not beta_prime <= 1:
        raise PreconditionError(
            f"need beta + k/r < beta' <= 1 with sigma in (0, 1]; got sigma = {sigma:.4g}"
        )
    if k > spec.noise.floor_r:
        raise PreconditionError(f"k = {k} exceeds floor(r) = {spec.noise.floor_r}")
    w_from, w_to = WeightSpec(r, beta), WeightSpec(r, beta_prime)
    cache: dict[float, list[DiscretizedKernel]] = {}

    def kernels(a: float) -> list[DiscretizedKernel]:
        if a not in cache:
            cache[a] = derivative_kernels(spec.at(a), k, tau_trunc)
        return cache[a]

    rows = []
    for a, b in pairs:
        if a == b:
            raise PreconditionError("pairs must have distinct alphas")
        diff = kernels(a)[k] - kernels(b)[k]
        rows.append((a, b, operator_norm(diff, w_from, w_to) / abs(a - b) ** sigma))
    vb = w_from.weight(spec.grid.nodes)
    B = max(float(np.max((np.real(ks[0].operator) @ vb) / vb)) for ks in cache.values())
    A = max([1.0, *spec.noise.ratio_bounds])
    return HolderModulus(max(t[2] for t in rows), sigma, tuple(rows), A, B)


@dataclass(frozen=True)
class CounterexampleResult:
    a: float
    I_a: float
    ratios: tuple[tuple[float, float], ...]
    limit: float
    limit_check: float
    status: str = "ok"
    weak_norms: tuple[tuple[float, float], ...] = ()


def _mass(nu, lo, hi, weight=None) -> float:
    f = nu if weight is None else (lambda y: weight(y) * nu(y))
    return integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def separation_integral(noise: NoiseModel, a: float) -> float:
    """I(a) = int_{-a}^{a} nu - int_{-2a}^{-a} nu - int_{a}^{2a} nu."""
    nu = noise.pdf
    return _mass(nu, -a, a) - _mass(nu, -2 * a, -a) - _mass(nu, a, 2 * a)


def counterexample_values(noise: NoiseModel, a: float, alpha0: float, alpha: float):
    """(P_alpha f_alpha)(x_alpha) and (P_alpha0 f_alpha)(x_alpha), x_alpha = a/(alpha - alpha0)."""
    nu = noise.pdf
    x = a / (alpha - alpha0)
    p_alpha = _mass(nu, 0, a, lambda y: y + alpha * x) - _mass(nu, -2 * a, -a, lambda y: y + alpha * x)
    p_alpha0 = _mass(nu, a, 2 * a, lambda y: y + alpha0 * x) - _mass(nu, -a, 0, lambda y: y + alpha0 * x)
    return p_alpha, p_alpha0, x


def run_counterexample(
    noise: NoiseModel,
    alpha0: float,
    alphas,
    threshold: float = 0.01,
    max_doublings: int = 12,
    grid: Grid | None = None,
    tau_trunc: float = TAU_TRUNC,
) -> CounterexampleResult:
    """Lower bound on ||P_alpha - P_alpha0||_1 that does not vanish as alpha -> alpha0.

    Integrals are evaluated by adaptive quadrature on the whole line: the
    test point x_alpha escapes any fixed grid.  With ``grid`` given, the
    on-grid weak norms ||P_alpha - P_alpha0||_{0,1} (V = 1 + |x|) are added.
    """
    alphas = [float(a) for a in alphas]
    if not 0 < alpha0 < 1:
        raise PreconditionError(f"alpha0 must lie in (0, 1), got {alpha0}")
    if not alphas or any(a <= alpha0 or a >= 1 for a in alphas):
        raise PreconditionError("alphas must be non-empty and lie in (alpha0, 1)")
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise PreconditionError("alphas must decrease towards alpha0")

    a, I_a, status = 1.0, 0.0, "degenerate-density"
    for _ in range(max_doublings + 1):
        I_a = separation_integral(noise, a)
        if abs(I_a) > threshold:
            status = "ok"
            break
        a *= 2
    limit = alpha0 * I_a
    ratios = []
    for alpha in alphas:
        pa, pa0, x = counterexample_values(noise, a, alpha0, alpha)
        ratios.append((alpha, (pa - pa0) / (1.0 + x)))
    check = abs(ratios[-1][1] - limit)

    weak = ()
    if grid is not None:
        w0, w1 = WeightSpec(1.0, 0.0), WeightSpec(1.0, 1.0)
        base = ARKernelSpec(alpha0, noise, grid)
        P0 = build_kernel(base, tau_trunc)
        weak = tuple(
            (alpha, operator_norm(build_kernel(base.at(alpha), tau_trunc) - P0, w0, w1))
            for alpha in alphas
        )
    return CounterexampleResult(a, I_a, tuple(ratios), limit, check, status, weak)


@dataclass(frozen=True, eq=False)
class ExpansionCoefficients:
    """pi_alpha and the derivative measures mu_{alpha,j}, j = 1..order."""

    alpha: float
    beta_r: float
    pi: SignedDensity
    mus: tuple[SignedDensity, ...]
    r: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return len(self.mus)

    def partial_sum(self, eps: float, order: int | None = None) -> SignedDensity:
        """pi_alpha + sum_{j <= order} eps^j / j! mu_{alpha,j}."""
        order = self.order if order is None else order
        if order > self.order:
            raise DomainError(f"only {self.order} coefficients available")
        dens = self.pi.density.copy()
        for j in range(1, order + 1):
            dens = dens + eps**j / math.factorial(j) * self.mus[j - 1].density
        return SignedDensity(self.pi.grid, dens)

    def remainder(self, pi_eps: SignedDensity, eps: float, order: int | None = None):
        """(sup_A |defect(A)|, sup_A |R_eps(A)|) for the expansion truncated at ``order``.

        The defect pi_{alpha+eps} - partial sum has zero mass, so its sup over
        sets is half its total variation; R_eps is the defect over eps^order.
        """
        order = self.order if order is None else order
        tv = dual_distance(pi_eps, self.partial_sum(eps, order), WeightSpec(1.0, 0.0))
        defect = 0.5 * tv
        return defect, defect / abs(eps) ** order


def taylor_expansion(
    noise: NoiseModel,
    alpha: float,
    order: int,
    beta_r: float,
    grid: Grid,
    tau_trunc: float = TAU_TRUNC,
) -> ExpansionCoefficients:
    """Derivatives of alpha -> pi_alpha from the differentiated stationarity equation.

    mu_j (I - P) = sum_{m=1}^{j} C(j, m) mu_{j-m} P_m with mu_0 = pi; each
    right side has zero mass and is inverted by the generalized potential.
    """
    fr = noise.floor_r
    if order < 0 or order > fr:
        raise EligibilityError(f"order {order} exceeds floor(r) = {fr}")
    if not noise.eligible:
        raise EligibilityError("; ".join(noise.eligibility_issues()))
    if not 0 < beta_r < 1 - fr / noise.r:
        raise PreconditionError(
            f"beta_r must lie in (0, {1 - fr / noise.r:.4g}), got {beta_r}"
        )
    spec = ARKernelSpec(alpha, noise, grid)
    Ps = derivative_kernels(spec, max(order, 1), tau_trunc)
    pi = invariant_measure(Ps[0])
    R = generalized_potential(Ps[0], pi).kernel.operator
    ops = [np.real(P.operator) for P in Ps]
    masses = [pi.masses]
    for j in range(1, order + 1):
        rhs = sum(comb(j, m) * (masses[j - m] @ ops[m]) for m in range(1, j + 1))
        masses.append(np.real(rhs @ R))
    mus = tuple(SignedDensity.from_masses(grid, m) for m in masses[1:])
    w_r = WeightSpec(noise.r, beta_r)
    diag = {
        "masses": [float(m.sum()) for m in masses[1:]],
        "dual_norms_beta_r": [dual_norm(mu, w_r) for mu in mus],
        "max_row_defect": float(np.max(Ps[0].row_defect)),
    }
    return ExpansionCoefficients(alpha, beta_r, pi, mus, noise.r, diag)
