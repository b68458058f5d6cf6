import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ergoperturb.errors import DomainError
from ergoperturb.noise import gaussian, make_noise, student_t


def test_density_integrates_to_one():
    for nz in (student_t(5), student_t(3, scale=2.0), gaussian(0.7)):
        assert integrate.quad(nz.pdf, -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-9)


def test_pdf_matches_scipy():
    x = np.linspace(-30, 30, 301)
    np.testing.assert_allclose(student_t(5).pdf(x), stats.t(5).pdf(x), rtol=1e-12)
    np.testing.assert_allclose(gaussian(2.0).pdf(x), stats.norm(0, 2).pdf(x), rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("j", [1, 2, 3])
def test_derivatives_by_finite_differences(j):
    nz = student_t(5, r=2.5)
    x = np.linspace(-8, 8, 41)
    h = 1e-4
    fd = (nz.derivative(j - 1, x + h) - nz.derivative(j - 1, x - h)) / (2 * h)
    np.testing.assert_allclose(nz.derivative(j, x), fd, atol=1e-7)


def test_ratio_bounds_student_t():
    k = 5
    nz = student_t(k, r=1.5)
    # nu'/nu = -(k+1) t / (k + t^2), maximal at t = sqrt(k)
    assert nz.ratio_bound(1) == pytest.approx((k + 1) / (2 * math.sqrt(k)), rel=1e-9)
    # nu''/nu = (k+1)((k+2) t^2 - k) / (k + t^2)^2, scanned densely
    t = np.linspace(-50, 50, 2_000_001)
    ref = np.max(np.abs((k + 1) * ((k + 2) * t**2 - k) / (k + t**2) ** 2))
    assert nz.ratio_bound(2) == pytest.approx(ref, rel=1e-8)
    assert len(nz.ratio_bounds) == 2
    assert nz.ratio_bound(0) == 1.0


def test_gaussian_not_eligible():
    nz = gaussian(1.0, r=1.5)
    assert math.isinf(nz.ratio_bound(1))
    assert not nz.eligible
    assert any("infinite" in s for s in nz.eligibility_issues())


def test_eligibility_rules():
    assert student_t(5, r=1.5).eligible
    assert not student_t(5, r=2.0).eligible
    # E|theta|^r diverges for r >= dof
    nz = student_t(3, r=3.5)
    assert math.isinf(nz.moment_r)
    assert not nz.eligible


@settings(max_examples=20, deadline=None)
@given(st.floats(3.5, 12), st.floats(0.5, 3.0), st.floats(0.3, 3))
def test_abs_moment_matches_quadrature(dof, p, scale):
    if p >= dof - 0.5:
        return
    nz = student_t(dof, scale=scale)
    ref = stats.t(dof, scale=scale).expect(lambda y: abs(y) ** p)
    assert nz.abs_moment(p) == pytest.approx(ref, rel=1e-6)


def test_gaussian_moment():
    nz = gaussian(1.3)
    assert nz.abs_moment(1) == pytest.approx(1.3 * math.sqrt(2 / math.pi))
    assert nz.abs_moment(2) == pytest.approx(1.69)


def test_tail_mass_and_sampler():
    nz = student_t(5)
    ref = 2 * integrate.quad(nz.pdf, 40, np.inf)[0]
    assert nz.tail_mass(40.0) == pytest.approx(ref, rel=1e-6)
    u = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(nz.ppf(u), stats.t(5).ppf(u))
    assert nz.mean == 0.0


def test_factory():
    assert make_noise("student_t", 1.5).params["dof"] == 5.0
    assert make_noise("gaussian", sigma=2.0).params["sigma"] == 2.0
    with pytest.raises(DomainError):
        make_noise("cauchy")
    with pytest.raises(DomainError):
        student_t(-1)
    with pytest.raises(DomainError):
        student_t(5, r=0.5)


def test_with_r():
    nz = student_t(5).with_r(2.5)
    assert nz.r == 2.5 and nz.floor_r == 2 and nz.max_derivative == 3
