"""Backend parity: the numba kernels must match the numpy fallbacks."""

import numpy as np
import pytest

from polystokes import kernels


@pytest.fixture(scope="module")
def sample():
    rng = np.random.default_rng(0)
    xs = rng.uniform(-1, 1, 200)
    ys = rng.uniform(-1, 1, 200)
    ex, ey = [], []
    for d in range(6):
        for a in range(d, -1, -1):
            ex.append(a)
            ey.append(d - a)
    return xs, ys, np.array(ex), np.array(ey)


def test_values_match_fallback(sample):
    xs, ys, ex, ey = sample
    got = kernels.monomial_values(xs, ys, ex, ey)
    want = kernels._monomial_values_np(xs, ys, ex, ey)
    assert np.allclose(got, want, rtol=1e-14, atol=0)


def test_derivatives_match_fallback(sample):
    xs, ys, ex, ey = sample
    got = kernels.monomial_derivatives(xs, ys, ex, ey)
    want = kernels._monomial_derivatives_np(xs, ys, ex, ey)
    assert np.allclose(got, want, rtol=1e-14, atol=1e-300)


def test_powers_match_fallback(sample):
    xs = sample[0]
    got = kernels.powers_1d(xs, 7)
    want = kernels._powers_1d_np(xs, 7)
    assert np.array_equal(got, want)


def test_derivative_of_constant_is_zero(sample):
    xs, ys, _, _ = sample
    out = kernels.monomial_derivatives(xs, ys, np.array([0]), np.array([0]))
    assert np.all(out == 0.0)
