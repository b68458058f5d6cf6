"""Monte Carlo simulation of the AR(1) chain, used as an independent oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .ar_model import ARKernelSpec, build_kernel
from .errors import DomainError, NumericalError
from .ergodicity import invariant_measure
from .weighted_space import Grid, SignedDensity, WeightSpec, dual_distance

RNG_NAME = "numpy.random.Generator(PCG64)"


@dataclass(frozen=True, eq=False)
class McOracleResult:
    sample_count: int
    histogram: SignedDensity
    tv: float
    half_width: float
    lost_mass: float
    seed: int
    rng: str = RNG_NAME


def simulate_ar1(spec: ARKernelSpec, n_steps: int, rng: np.random.Generator, x0: float = 0.0) -> np.ndarray:
    """Path X_1..X_n of X_n = alpha X_{n-1} + theta_n, theta by inverse-cdf sampling."""
    u = rng.random(n_steps)
    theta = np.asarray(spec.noise.ppf(u), dtype=float)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("noise sampler returned non-finite values")
    zi = np.array([spec.alpha * x0])
    path, _ = lfilter([1.0], [1.0, -spec.alpha], theta, zi=zi)
    return path


def histogram_density(grid: Grid, samples: np.ndarray) -> tuple[SignedDensity, float]:
    """Bin samples into cells of width w_i around the nodes; returns (density, lost mass)."""
    nodes = grid.nodes
    edges = np.concatenate(([-grid.x_max], 0.5 * (nodes[1:] + nodes[:-1]), [grid.x_max]))
    counts, _ = np.histogram(samples, bins=edges)
    n = samples.size
    widths = np.diff(edges)
    dens = counts / (n * widths)
    return SignedDensity(grid, dens * widths / grid.quad_weights), 1.0 - counts.sum() / n


def mc_oracle(
    spec: ARKernelSpec,
    n_samples: int,
    burn_in: int,
    seed: int,
    pi: SignedDensity | None = None,
    n_chains: int = 1,
) -> McOracleResult:
    """TV distance between a long-run histogram and the quadrature invariant measure.

    Each chain gets an independent stream spawned from ``seed``.
    ``half_width`` is the expected size of the TV statistic under pure
    sampling noise, sqrt(2/pi) sum_b sqrt(p_b (1 - p_b) / n_eff) with
    n_eff = n (1 - |alpha|) / (1 + |alpha|).
    """
    if n_samples < 10 * burn_in or n_samples <= 0:
        raise DomainError("need n_samples >= 10 * burn_in")
    if n_chains < 1:
        raise DomainError("n_chains must be >= 1")
    if pi is None:
        pi = invariant_measure(build_kernel(spec))
    seqs = np.random.SeedSequence(seed).spawn(n_chains)
    per_chain = -(-n_samples // n_chains)
    chunks = []
    for ss in seqs:
        rng = np.random.Generator(np.random.PCG64(ss))
        chunks.append(simulate_ar1(spec, per_chain + burn_in, rng)[burn_in:])
    samples = np.concatenate(chunks)[:n_samples]
    hist, lost = histogram_density(spec.grid, samples)
    tv = dual_distance(hist, pi, WeightSpec(1.0, 0.0))
    a = abs(spec.alpha)
    n_eff = n_samples * (1 - a) / (1 + a)
    p = pi.masses
    half = float(np.sqrt(2 / np.pi) * np.sum(np.sqrt(np.clip(p * (1 - p), 0, None) / n_eff)))
    return McOracleResult(int(samples.size), hist, tv, half, float(lost), int(seed))
