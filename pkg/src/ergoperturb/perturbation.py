"""Perturbation bounds for invariant measures of a kernel family P_eps."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ergodicity import (
    estimate_rate,
    generalized_potential,
    invariant_measure,
    resolvent_sup_norm,
)
from .errors import DomainError, NumericalError
from .kernel_calculus import DiscretizedKernel, fit_drift, operator_norm, power
from .weighted_space import SignedDensity, WeightedFunction, WeightSpec, dual_distance, dual_norm, integrate

log = logging.getLogger(__name__)

GAP_FLOOR = 1e-13


def eps_ladder(eps_start: float, rungs: int = 8) -> list[float]:
    """eps_k = eps_start 2^-k, k = 0..rungs-1."""
    return [eps_start * 2.0**-k for k in range(rungs)]


@dataclass(frozen=True)
class PerturbationReport:
    eps: float
    cont_norm_01: float
    cont_norm_beta1: float
    cont_norm_11: float
    tv_gap: float
    beta_gap: float
    weight: WeightSpec
    pi_V: float = math.nan

    def row(self) -> dict:
        return {
            "eps": self.eps,
            "cont_norm_01": self.cont_norm_01,
            "cont_norm_beta1": self.cont_norm_beta1,
            "cont_norm_11": self.cont_norm_11,
            "tv_gap": self.tv_gap,
            "beta_gap": self.beta_gap,
            "pi_V": self.pi_V,
        }


def continuity_profile(family, beta: WeightSpec) -> list[PerturbationReport]:
    """Continuity norms of P_eps - P_0 and invariant-measure gaps, sorted by |eps|.

    ``family`` maps eps to kernels (a dict or an iterable of pairs) and must
    contain eps = 0.
    """
    items = dict(family.items() if hasattr(family, "items") else family)
    if 0.0 not in items:
        raise DomainError("family must contain the unperturbed kernel at eps = 0")
    P0 = items[0.0]
    w0, wb, w1 = beta.with_beta(0.0), beta, beta.with_beta(1.0)
    pi0 = invariant_measure(P0)
    V = WeightedFunction(P0.grid, w1.V(P0.grid.nodes))
    reports = []
    for eps in sorted(items, key=abs):
        P = items[eps]
        try:
            pi = pi0 if eps == 0 else invariant_measure(P)
        except NumericalError as exc:
            raise type(exc)(f"eps = {eps}: {exc}") from exc
        D = P - P0
        reports.append(
            PerturbationReport(
                eps=float(eps),
                cont_norm_01=operator_norm(D, w0, w1),
                cont_norm_beta1=operator_norm(D, wb, w1),
                cont_norm_11=operator_norm(D, w1, w1),
                tv_gap=dual_distance(pi, pi0, w0),
                beta_gap=dual_distance(pi, pi0, wb),
                weight=beta,
                pi_V=integrate(V, pi),
            )
        )
    return reports


@dataclass(frozen=True)
class HolderBoundCheck:
    rho: float
    delta: float
    eta: float
    fitted_exponent: float
    D_hat: float
    holds: bool
    worst_eps: float
    status: str = "ok"

    def summary(self) -> dict:
        return dict(self.__dict__)


def holder_exponent(rho: float, delta: float) -> float:
    """eta = 1 - ln(rho) / ln(delta)."""
    if not (0 < delta < 1 and 0 < rho < 1):
        raise DomainError("rho and delta must lie in (0, 1)")
    return 1.0 - math.log(rho) / math.log(delta)


def check_holder_bound(profile, delta: float, rho: float) -> HolderBoundCheck:
    """Envelope tv_gap <= D (cont_norm_01)^eta with the smallest feasible D.

    ``fitted_exponent`` is the least-squares slope of log tv_gap against
    log cont_norm_01 over the nonzero samples.
    """
    eta = holder_exponent(rho, delta)
    pts = [(p.eps, p.cont_norm_01, p.tv_gap) for p in profile if p.eps != 0 and p.cont_norm_01 > 0]
    usable = [t for t in pts if t[2] > GAP_FLOOR]
    if len(pts) < 4 or len(usable) < 4:
        return HolderBoundCheck(rho, delta, eta, math.nan, math.nan, False, math.nan, "insufficient-signal")
    eps, c, g = (np.array(v) for v in zip(*usable))
    slope = float(np.polyfit(np.log(c), np.log(g), 1)[0])
    ratios = g / c**eta
    i = int(np.argmax(ratios))
    D_hat = float(ratios[i])
    holds = bool(np.all(g <= D_hat * c**eta * (1 + 1e-12)))
    return HolderBoundCheck(rho, delta, eta, slope, D_hat, holds, float(eps[i]))


def check_lipschitz_bound(profile, beta: WeightSpec) -> float:
    """C_hat = max over eps != 0 of beta_gap / cont_norm_beta1."""
    best = 0.0
    for p in profile:
        if p.weight != beta:
            raise DomainError(f"profile was built with {p.weight}, not {beta}")
        if p.eps == 0:
            continue
        if p.cont_norm_beta1 <= GAP_FLOOR:
            warnings.warn(f"eps = {p.eps}: ||P_eps - P_0||_(beta,1) numerically zero, sample excluded")
            continue
        best = max(best, p.beta_gap / p.cont_norm_beta1)
    return best


def lipschitz_constant_bound(
    P0: DiscretizedKernel, family, beta: WeightSpec, kappa: float, n_points: int = 32
) -> dict:
    """(1 - kappa)/2 * M * M0 from resolvent norms on the circle |z - 1| = (1 - kappa)/2.

    M = sup over z and the family of ||(zI - P_eps)^-1||_1, M0 = sup over z of
    ||(zI - P_0)^-1||_beta.
    """
    radius = (1.0 - kappa) / 2
    kernels = list(family.values() if hasattr(family, "values") else family)
    w1 = beta.with_beta(1.0)
    M = max(resolvent_sup_norm(P, w1, 1.0, radius, n_points) for P in [P0, *kernels])
    M0 = resolvent_sup_norm(P0, beta, 1.0, radius, n_points)
    return {"radius": radius, "M": M, "M0": M0, "bound": radius * M * M0}


@dataclass(frozen=True, eq=False)
class KartashovExpansion:
    partial_sum: SignedDensity
    tail_bound: float
    contraction: float
    term_masses: tuple[float, ...]
    # dual norms (weight at beta = 1) of pi_0 (D R)^k, k = 0..order
    term_norms: tuple[float, ...] = ()
    status: str = "ok"

    @property
    def mass(self) -> float:
        return self.partial_sum.total_mass


def kartashov_expansion(
    P0: DiscretizedKernel,
    Peps: DiscretizedKernel,
    order: int,
    w: WeightSpec = WeightSpec(1.0, 1.0),
    pi0: SignedDensity | None = None,
) -> KartashovExpansion:
    """pi_0 + sum_{k=1}^{order} pi_0 (D R)^k with D = P_eps - P_0, R the potential of P_0.

    ``contraction`` is ||D R||_1 (weight ``w`` at beta = 1).  The tail bound
    pi_0(V) q^(order+1) / (1 - q) controls the remainder in the dual norm of
    B_1, hence in total variation.  If q >= 1 the series is not summed past
    the partial sum and the status is "expansion-divergent".
    """
    if order < 0:
        raise DomainError("order must be >= 0")
    w1 = w.with_beta(1.0)
    pot = generalized_potential(P0, pi0)
    pi0 = pot.projector
    DR = (Peps - P0) @ pot.kernel
    q = operator_norm(DR, w1, w1)
    op = np.real(DR.operator)
    v1 = w1.weight(P0.grid.nodes)
    term = pi0.masses
    total = term.copy()
    masses, norms = [], [float(np.abs(term) @ v1)]
    for _ in range(order):
        term = term @ op
        masses.append(float(term.sum()))
        norms.append(float(np.abs(term) @ v1))
        total += term
    status = "ok"
    if q < 1:
        tail = dual_norm(pi0, w1) * q ** (order + 1) / (1 - q)
    else:
        tail = math.inf
        status = "expansion-divergent"
        log.warning("||D R||_1 = %.3g >= 1: Neumann expansion not guaranteed", q)
    return KartashovExpansion(
        SignedDensity.from_masses(P0.grid, total), tail, q, tuple(masses), tuple(norms), status
    )


def strong_stability_diagnostic(
    P0: DiscretizedKernel, Peps: DiscretizedKernel, w: WeightSpec, N: int, rho: float
) -> float | None:
    """Delta_N / (1 - rho - Delta_N) with Delta_N = ||P_0^N - P_eps^N||_1, or None.

    Reported only when Delta_N < 1 - rho.
    """
    w1 = w.with_beta(1.0)
    delta_n = operator_norm(power(P0, N) - power(Peps, N), w1, w1)
    if delta_n >= 1 - rho:
        return None
    return delta_n / (1 - rho - delta_n)


@dataclass(frozen=True)
class StabilityScan:
    eps1: float
    kappa: float
    rates: dict
    drift: dict


def stability_scan(family, w: WeightSpec, N: int = 1, l_cap: float | None = None) -> StabilityScan:
    """Largest sampled |eps| up to which every kernel certifies drift and a rate < 1.

    ``kappa`` is the worst rate estimate over the members up to eps1.
    """
    items = dict(family.items() if hasattr(family, "items") else family)
    rates, drift = {}, {}
    eps1, kappa = 0.0, 0.0
    for eps in sorted(items, key=abs):
        P = items[eps]
        cert = fit_drift(P, w, N, l_cap)
        try:
            rate = estimate_rate(P, w)
        except NumericalError as exc:
            log.warning("eps = %s: %s", eps, exc)
            break
        rates[eps], drift[eps] = rate, cert
        if not (cert.certified and rate.status == "ok"):
            break
        eps1 = abs(eps)
        kappa = max(kappa, rate.kappa_hat)
    return StabilityScan(eps1, kappa, rates, drift)
