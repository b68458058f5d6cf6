"""Invariant measures, geometric rates, resolvents and spectral projections."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .errors import (
    ContourError,
    DiscretizationError,
    DomainError,
    NonUniquenessError,
    NumericalError,
    SeparationError,
    SpectralProximityError,
)
from .kernel_calculus import DiscretizedKernel
from .weighted_space import SignedDensity, WeightSpec

log = logging.getLogger(__name__)

UNIQUENESS_TOL = 1e-6
NEGATIVITY_TOL = 1e-9
SOLVER_TOL = 1e-10


def _second_eigenvalue(op: np.ndarray) -> complex:
    """Subdominant eigenvalue (by modulus) of a stochastic matrix."""
    n = op.shape[0]
    if n <= 64:
        ev = np.linalg.eigvals(op)
    else:
        try:
            ev = eigs(op, k=3, which="LM", return_eigenvectors=False, tol=1e-10)
        except ArpackNoConvergence:
            ev = np.linalg.eigvals(op)
    ev = ev[np.argsort(-np.abs(ev))]
    # drop the eigenvalue closest to 1, keep the largest of the rest
    i1 = int(np.argmin(np.abs(ev - 1)))
    rest = np.delete(ev, i1)
    return complex(rest[0]) if rest.size else 0.0


def invariant_measure(P: DiscretizedKernel, check_uniqueness: bool = True) -> SignedDensity:
    """Stationary probability density of a discretized Markov kernel.

    Solves the bordered system m (I - M + 1 b^T) = b^T with b uniform, whose
    unique solution is the left eigenvector m of M for eigenvalue 1 with
    sum(m) = 1, then applies one step of iterative refinement.
    """
    if not P.is_markov:
        raise DomainError("invariant_measure needs a Markov kernel")
    M = np.real(P.operator)
    n = M.shape[0]
    if check_uniqueness:
        lam2 = _second_eigenvalue(M)
        if abs(lam2) > 1 - UNIQUENESS_TOL:
            raise NonUniquenessError(
                f"eigenvalue of modulus 1 is not simple (|lambda_2| = {abs(lam2):.12f})"
            )
    b = np.full(n, 1.0 / n)
    A = np.eye(n) - M + b[None, :]
    lu = sla.lu_factor(A.T)
    m = sla.lu_solve(lu, b)
    m = m + sla.lu_solve(lu, b - m @ A)
    resid = float(np.max(np.abs(m @ M - m)))
    if resid > SOLVER_TOL:
        raise DiscretizationError(f"stationarity residual {resid:.3g} above tolerance")
    if m.min() < -NEGATIVITY_TOL * max(m.max(), 1.0):
        raise DiscretizationError(f"invariant density negative ({m.min():.3g})")
    m = np.clip(m, 0.0, None)
    m /= m.sum()
    return SignedDensity.from_masses(P.grid, m)


def rank_one_projector(pi: SignedDensity) -> DiscretizedKernel:
    """The kernel of f -> pi(f) 1: every row equals the density of pi."""
    n = pi.grid.n
    return DiscretizedKernel(pi.grid, np.tile(pi.density, (n, 1)), is_markov=False)


@dataclass(frozen=True)
class RateEstimate:
    kappa_hat: float
    c_hat: float
    fit_window: tuple[int, int]
    residual: float
    status: str = "ok"
    norms: tuple[float, ...] = ()

    def bound(self, n) -> np.ndarray:
        return self.c_hat * self.kappa_hat ** np.asarray(n)


def rate_norms(
    P: DiscretizedKernel,
    w: WeightSpec,
    max_n: int = 200,
    floor: float = 1e-11,
    pi: SignedDensity | None = None,
) -> np.ndarray:
    """d_n = ||P^n - Pi||_beta for n = 1, 2, ... until d_n < floor or n = max_n.

    Uses P^n - Pi = (P - Pi)^n, which avoids cancellation once P^n is
    close to Pi.
    """
    if pi is None:
        pi = invariant_measure(P)
    Q = np.real(P.operator) - pi.masses[None, :]
    x = P.grid.nodes
    vb = w.weight(x)
    A = Q.copy()
    out = []
    for _ in range(max_n):
        out.append(float(np.max((np.abs(A) @ vb) / vb)))
        if out[-1] < floor:
            break
        A = A @ Q
    return np.array(out)


def estimate_rate(
    P: DiscretizedKernel,
    w: WeightSpec,
    burn_in: int = 5,
    max_n: int = 200,
    floor: float = 1e-11,
    pi: SignedDensity | None = None,
) -> RateEstimate:
    """Least-squares fit log d_n ~ log c + n log kappa over n >= burn_in.

    The window ends at the last n with d_n above ``floor``.  ``residual`` is
    max |d_n / (c kappa^n) - 1| over the window.
    """
    d = rate_norms(P, w, max_n=max_n, floor=floor, pi=pi)
    n = np.arange(1, d.size + 1)
    if d[0] < floor:
        # already at the projector after one step
        return RateEstimate(0.0, float(max(d[0], 0.0)), (1, 1), 0.0, "ok", tuple(d))
    sel = (n >= burn_in) & (d >= floor)
    if sel.sum() < 3:
        sel = d >= floor
    if sel.sum() < 2:
        kappa = float(d[sel][0] ** (1.0 / n[sel][0])) if sel.any() else 0.0
        return RateEstimate(kappa, 1.0, (1, int(n[-1])), 0.0, "ok", tuple(d))
    slope, intercept = np.polyfit(n[sel], np.log(d[sel]), 1)
    kappa, c = float(np.exp(slope)), float(np.exp(intercept))
    fit = c * kappa ** n[sel]
    residual = float(np.max(np.abs(d[sel] / fit - 1)))
    status = "ok" if kappa < 1 else "rate-failure"
    if status != "ok":
        log.warning("d_n does not decay (kappa_hat = %.4f)", kappa)
    window = (int(n[sel][0]), int(n[sel][-1]))
    return RateEstimate(kappa, c, window, residual, status, tuple(d))


def _solve_resolvent(M: np.ndarray, z: complex, cond_limit: float) -> np.ndarray:
    n = M.shape[0]
    A = z * np.eye(n) - M
    try:
        with warnings.catch_warnings():
            # exact singularity is detected from the pivots below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(A, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SpectralProximityError(f"zI - P singular at z = {z}") from exc
    if np.any(np.abs(np.diag(lu[0])) == 0):
        raise SpectralProximityError(f"zI - P singular at z = {z}")
    Rz = sla.lu_solve(lu, np.eye(n, dtype=complex))
    sup_norm = float(np.max(np.abs(Rz).sum(axis=1)))
    if not np.isfinite(sup_norm) or sup_norm > cond_limit:
        raise SpectralProximityError(
            f"z = {z} lies within the discrete spectrum's tolerance (||R(z)||_0 = {sup_norm:.3g})"
        )
    resid = np.max(np.abs(A @ Rz - np.eye(n)))
    if resid > 1e-8:
        raise SpectralProximityError(f"resolvent residual {resid:.3g} at z = {z}")
    return Rz


def resolvent(P: DiscretizedKernel, z: complex, cond_limit: float = 1e10) -> DiscretizedKernel:
    """(zI - P)^-1 as a (complex) kernel on the same grid."""
    Rz = _solve_resolvent(np.asarray(P.operator), complex(z), cond_limit)
    return DiscretizedKernel.from_operator(P.grid, Rz)


def spectral_projection(
    P: DiscretizedKernel,
    center: complex = 1.0,
    radius: float | None = None,
    n_points: int = 64,
    idempotence_tol: float = 1e-8,
) -> DiscretizedKernel:
    """Eigenprojection (1 / 2 pi i) oint_Gamma (zI - P)^-1 dz on a circle.

    Trapezoid rule on z_k = c + rho e^{i theta_k}.  When ``radius`` is None
    it is set to (1 - kappa_hat) / 2 with kappa_hat from the sup-norm rate.
    """
    if n_points < 4:
        raise DomainError("need at least 4 contour points")
    if radius is None:
        kappa = estimate_rate(P, WeightSpec(1.0, 0.0)).kappa_hat
        radius = (1.0 - kappa) / 2
    if radius <= 0:
        raise DomainError(f"contour radius must be positive, got {radius}")
    M = np.asarray(P.operator)
    n = M.shape[0]
    acc = np.zeros((n, n), dtype=complex)
    theta = 2 * np.pi * np.arange(n_points) / n_points
    for t in theta:
        e = radius * np.exp(1j * t)
        try:
            Rz = _solve_resolvent(M, center + e, cond_limit=1e8)
        except SpectralProximityError as exc:
            raise ContourError(f"contour crosses the spectrum: {exc}") from exc
        acc += e * Rz
    Pi = acc / n_points
    if np.max(np.abs(Pi.imag)) < 1e-10 and np.isrealobj(M):
        Pi = Pi.real
    trace = complex(np.trace(Pi))
    if abs(trace - 1) > 1e-6:
        raise SeparationError(
            f"contour encloses {trace.real:.3f} eigenvalues (trace of projection), expected 1"
        )
    defect = float(np.max(np.abs(Pi @ Pi - Pi).sum(axis=1)))
    if defect > idempotence_tol:
        raise SeparationError(f"projection not idempotent: ||Pi^2 - Pi||_0 = {defect:.3g}")
    return DiscretizedKernel.from_operator(P.grid, Pi)


@dataclass(frozen=True, eq=False)
class PotentialOperator:
    """R = (I - P + Pi)^-1 together with pi (Pi f = pi(f) 1)."""

    kernel: DiscretizedKernel
    projector: SignedDensity

    @property
    def projection(self) -> DiscretizedKernel:
        return rank_one_projector(self.projector)


def generalized_potential(
    P: DiscretizedKernel, pi: SignedDensity | None = None, tol: float = 1e-9
) -> PotentialOperator:
    if pi is None:
        pi = invariant_measure(P)
    M = np.real(P.operator)
    n = M.shape[0]
    m = pi.masses
    A = np.eye(n) - M + np.outer(np.ones(n), m)
    try:
        R = np.linalg.solve(A, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("I - P + Pi is singular (eigenvalue-1 defect)") from exc
    r1 = float(np.max(np.abs(R.sum(axis=1) - 1)))
    rpi = float(np.max(np.abs(m @ R - m)))
    if max(r1, rpi) > tol:
        raise NumericalError(
            f"potential identities violated: |R1 - 1| = {r1:.3g}, |pi R - pi| = {rpi:.3g}"
        )
    return PotentialOperator(DiscretizedKernel.from_operator(P.grid, R), pi)


def resolvent_sup_norm(
    P: DiscretizedKernel, w: WeightSpec, center: complex, radius: float, n_points: int = 32
) -> float:
    """max over sampled z on the circle of ||(zI - P)^-1||_{beta, beta}."""
    M = np.asarray(P.operator)
    x = P.grid.nodes
    vb = w.weight(x)
    best = 0.0
    for t in 2 * np.pi * np.arange(n_points) / n_points:
        Rz = _solve_resolvent(M, center + radius * np.exp(1j * t), cond_limit=1e12)
        best = max(best, float(np.max((np.abs(Rz) @ vb) / vb)))
    return best

