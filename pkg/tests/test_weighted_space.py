import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from ergoperturb.errors import DomainError
from ergoperturb.weighted_space import (
    Grid,
    SignedDensity,
    WeightedFunction,
    WeightSpec,
    dual_distance,
    dual_norm,
    integrate as pair,
    read_csv,
    uniform_grid,
    weighted_norm,
    write_csv,
)

G = uniform_grid(201, 10.0)
finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_grid_invariants():
    g = uniform_grid(101, 5.0)
    assert np.all(np.diff(g.nodes) > 0)
    assert g.quad_weights.sum() == pytest.approx(10.0)
    assert g.normalization_defect() < 1e-12
    assert not g.nodes.flags.writeable


@pytest.mark.parametrize(
    "nodes, weights",
    [([], []), ([0.0, 0.0], [1.0, 1.0]), ([0.0, 2.0], [1.0, 1.0]), ([0.0, 0.5], [1.0, -1.0])],
)
def test_grid_rejects_bad_input(nodes, weights):
    with pytest.raises(DomainError):
        Grid(np.array(nodes), np.array(weights), 1.0)


def test_weightspec_ranges():
    with pytest.raises(DomainError):
        WeightSpec(0.5, 1.0)
    with pytest.raises(DomainError):
        WeightSpec(1.0, 1.5)


def test_weighted_norm_examples():
    for beta in (0.0, 0.3, 1.0):
        assert weighted_norm(WeightedFunction.constant(G), WeightSpec(2.0, beta)) == pytest.approx(1.0)
    w = WeightSpec(1.5, 1.0)
    assert weighted_norm(WeightedFunction.from_callable(G, w.V), w) == pytest.approx(1.0)
    f = WeightedFunction.from_callable(G, lambda x: 1 + np.abs(x))
    assert weighted_norm(f, WeightSpec(1.0, 0.0)) == pytest.approx(11.0)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 201, elements=finite), st.floats(0, 1), st.floats(0, 1), st.floats(1, 3))
def test_norm_monotone_in_beta(values, b1, b2, r):
    lo, hi = sorted((b1, b2))
    f = WeightedFunction(G, values)
    assert weighted_norm(f, WeightSpec(r, hi)) <= weighted_norm(f, WeightSpec(r, lo)) * (1 + 1e-12)


def test_dual_distance_examples():
    tv = WeightSpec(1.0, 0.0)
    p = SignedDensity.from_callable(G, stats.norm(-5, 0.5).pdf)
    q = SignedDensity.from_callable(G, stats.norm(5, 0.5).pdf)
    assert dual_distance(p, p, tv) == 0.0
    assert dual_distance(p, q, tv) == pytest.approx(2.0, abs=1e-6)


def test_dual_distance_gaussian_shift():
    # adaptive quadrature of |phi(x) - phi(x - 0.1)| against 2 (2 Phi(0.05) - 1)
    ref = integrate.quad(
        lambda x: abs(stats.norm.pdf(x) - stats.norm.pdf(x, 0.1)), -12, 12, points=[0.05], limit=200
    )[0]
    assert ref == pytest.approx(2 * (2 * stats.norm.cdf(0.05) - 1), abs=1e-10)
    assert ref == pytest.approx(0.0797552, abs=1e-7)
    g = uniform_grid(4001, 12.0)
    p = SignedDensity.from_callable(g, stats.norm.pdf)
    q = SignedDensity.from_callable(g, lambda x: stats.norm.pdf(x, 0.1))
    assert dual_distance(p, q, WeightSpec(1.0, 0.0)) == pytest.approx(ref, rel=0.02)


def test_dual_distance_rejects_other_grid():
    p = SignedDensity.from_callable(G, stats.norm.pdf)
    q = SignedDensity.from_callable(uniform_grid(101, 10.0), stats.norm.pdf)
    with pytest.raises(DomainError):
        dual_distance(p, q, WeightSpec(1.0, 0.0))


def _prob(seed):
    m = np.random.default_rng(seed).random(G.n) + 1e-3
    return SignedDensity.from_masses(G, m / m.sum())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_tv_is_a_metric(s1, s2, s3):
    tv = WeightSpec(1.0, 0.0)
    p, q, u = _prob(s1), _prob(s2), _prob(s3)
    assert dual_distance(p, q, tv) == pytest.approx(dual_distance(q, p, tv))
    assert dual_distance(p, u, tv) <= dual_distance(p, q, tv) + dual_distance(q, u, tv) + 1e-12


@settings(max_examples=50, deadline=None)
@given(arrays(float, 201, elements=finite), st.integers(0, 10**6), st.floats(0, 1))
def test_pairing_bound(values, seed, beta):
    w = WeightSpec(1.3, beta)
    f = WeightedFunction(G, values)
    p = _prob(seed) * 2.0 - _prob(seed + 1)
    assert abs(pair(f, p)) <= weighted_norm(f, w) * dual_norm(p, w) * (1 + 1e-9) + 1e-12


def test_integrate_examples():
    p = SignedDensity.from_callable(G, stats.norm(0, 1.5).pdf)
    assert pair(WeightedFunction.constant(G), p) == pytest.approx(1.0, abs=1e-10)
    assert pair(WeightedFunction.constant(G, 3.5), p) == pytest.approx(3.5, abs=1e-9)
    # symmetric stationary law of a Gaussian AR(1): zero mean
    s = 1 / np.sqrt(1 - 0.25)
    p = SignedDensity.from_callable(G, stats.norm(0, s).pdf)
    assert pair(WeightedFunction.from_callable(G, lambda x: x), p) == pytest.approx(0.0, abs=1e-12)


def test_density_algebra():
    p = SignedDensity.from_callable(G, stats.norm.pdf)
    assert p.is_probability()
    assert (p - p).total_mass == 0.0
    assert (p * 2).total_mass == pytest.approx(2.0)
    assert not (p * -1).is_probability()


def test_csv_roundtrip(tmp_path):
    vals = np.sin(G.nodes)
    write_csv(tmp_path / "f.csv", G, vals, ["demo"])
    assert (tmp_path / "f.csv").read_text().startswith("# demo")
    g2, v2 = read_csv(tmp_path / "f.csv")
    assert np.array_equal(v2, vals)
    assert g2.same_as(G)
