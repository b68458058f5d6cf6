import functools

import numpy as np
import pytest

from ergoperturb.ar_model import ARKernelSpec, build_kernel
from ergoperturb.noise import gaussian, student_t
from ergoperturb.weighted_space import uniform_grid

# t5 tail beyond 75 is about 8e-9, below the default truncation tolerance
T5_GRID = (1000, 75.0)

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def t5(r=1.0):
    return student_t(5, r=r)


@functools.lru_cache(maxsize=None)
def t5_grid():
    return uniform_grid(*T5_GRID)


@functools.lru_cache(maxsize=64)
def t5_kernel(alpha, r=1.0):
    return build_kernel(ARKernelSpec(alpha, t5(r), t5_grid()))


@functools.lru_cache(maxsize=None)
def small_gaussian_kernel(alpha, n=60, x_max=12.0):
    return build_kernel(ARKernelSpec(alpha, gaussian(), uniform_grid(n, x_max)), tau_trunc=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
