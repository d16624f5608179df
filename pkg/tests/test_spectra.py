import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freepoly.spectra import (
    ScalarMeasure,
    SpectralPoint,
    levy_distance,
    matrix_cauchy,
    quantile_diagonal,
    stieltjes_density,
)

FAMILIES = [
    ScalarMeasure.semicircle(0.5, 1.5),
    ScalarMeasure.arcsine(-1.0, 3.0),
    ScalarMeasure.uniform(-2.0, 1.0),
    ScalarMeasure.semicircle(0.0, 2.0, atoms=[(3.0, 0.25)]),
]


def _quad_cauchy(mu, z):
    t, w = mu.quadrature()
    return np.sum(w / (z - t))


def test_semicircle_at_i(semicircle):
    # G(z) = (z - sqrt(z^2 - 4)) / 2
    assert abs(semicircle.cauchy(1j) - (1j - np.sqrt(-5 + 0j)) / 2) < 1e-14
    assert abs(semicircle.cauchy(1j) + 0.6180339887498949j) < 1e-14


def test_bernoulli_cauchy(bernoulli):
    z = 2j
    assert abs(bernoulli.cauchy(z) - z / (z * z - 1)) < 1e-15


@pytest.mark.parametrize("mu", FAMILIES, ids=["semicircle", "arcsine", "uniform", "atoms"])
@pytest.mark.parametrize("z", [0.3 + 1j, -1.0 + 0.5j, 4.0 - 0.2j, 0.1 - 2j])
def test_closed_form_matches_quadrature(mu, z):
    assert abs(mu.cauchy(z) - _quad_cauchy(mu, z)) < 1e-9


@pytest.mark.parametrize("mu", FAMILIES, ids=["semicircle", "arcsine", "uniform", "atoms"])
def test_cauchy_derivative(mu):
    z, h = 0.4 + 0.3j, 1e-5
    fd = (mu.cauchy(z + h) - mu.cauchy(z - h)) / (2 * h)
    assert abs(mu.cauchy_derivative(z) - fd) < 1e-8 * max(1, abs(fd))


@pytest.mark.parametrize("mu", FAMILIES, ids=["semicircle", "arcsine", "uniform", "atoms"])
def test_mass_one(mu):
    y = 1e7
    assert abs(1j * y * mu.cauchy(1j * y) - 1) < 1e-6
    assert mu.quadrature()[1].sum() == pytest.approx(1.0, abs=1e-12)


def test_support_rejects_real_points(semicircle):
    with pytest.raises(ValueError):
        semicircle.cauchy(0.5)
    assert np.isfinite(semicircle.cauchy(2.5))


def test_quantiles():
    assert np.allclose(quantile_diagonal(ScalarMeasure.uniform(0, 1), 2), [0.25, 0.75])
    assert abs(quantile_diagonal(ScalarMeasure.semicircle(), 1)[0]) < 1e-12
    q = quantile_diagonal(ScalarMeasure.atomic([-1, 1]), 4)
    assert np.array_equal(q, [-1, -1, 1, 1])


def test_cdf_quantile_inverse(semicircle):
    u = np.linspace(0.01, 0.99, 25)
    assert np.allclose(semicircle.cdf(semicircle.quantile(u)), u, atol=1e-10)


def test_density_closed_forms():
    x = np.array([-1.0, 0.0, 0.5])
    assert np.allclose(ScalarMeasure.semicircle().density(x), np.sqrt(4 - x * x) / (2 * np.pi))
    assert np.allclose(ScalarMeasure.arcsine().density(x), 1 / (np.pi * np.sqrt(4 - x * x)))


def test_levy_examples(semicircle):
    assert levy_distance(ScalarMeasure.dirac(0), ScalarMeasure.dirac(0.3)) == pytest.approx(0.3, abs=1e-9)
    assert levy_distance(ScalarMeasure.dirac(0), ScalarMeasure.dirac(3)) == pytest.approx(1.0, abs=1e-9)
    assert levy_distance(semicircle, semicircle) < 1e-9


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_levy_symmetric_and_bounded(a, b):
    mu = ScalarMeasure.atomic([a, a + 1])
    nu = ScalarMeasure.uniform(min(b, b + 0.5), b + 0.5)
    d1, d2 = levy_distance(mu, nu), levy_distance(nu, mu)
    assert 0 <= d1 <= 1
    assert d1 == pytest.approx(d2, abs=1e-3)


def test_empirical_converges(semicircle):
    small = levy_distance(ScalarMeasure.empirical(quantile_diagonal(semicircle, 100)), semicircle)
    big = levy_distance(ScalarMeasure.empirical(quantile_diagonal(semicircle, 1000)), semicircle)
    assert big < small < 0.02


def test_matrix_cauchy_diagonal_gamma(semicircle):
    gamma = np.diag([1.0, -0.5])
    b = np.diag([0.2 + 1j, -0.3 + 0.5j])
    G = matrix_cauchy(gamma, semicircle, b)
    expected = [semicircle.cauchy(b[0, 0] / 1.0), semicircle.cauchy(b[1, 1] / -0.5) / -0.5]
    assert np.allclose(np.diag(G), expected, atol=1e-9)
    assert abs(G[0, 1]) < 1e-14


def test_matrix_cauchy_scalar_paths(semicircle):
    b = np.array([[0.3 + 0.2j]])
    assert matrix_cauchy(np.zeros((1, 1)), semicircle, b)[0, 0] == 1 / b[0, 0]
    assert matrix_cauchy(np.eye(1), semicircle, b)[0, 0] == semicircle.cauchy(b[0, 0])


def test_matrix_cauchy_requires_upper(semicircle):
    with pytest.raises(ValueError):
        matrix_cauchy(np.eye(2), semicircle, -1j * np.eye(2))


def test_spectral_point():
    g0 = np.array([[1.0, 2.0], [2.0, 0.0]])
    p = SpectralPoint(0.5 + 0.1j, 0.01, g0)
    assert np.allclose(p.beta, [[-0.5 + 0.11j, -2], [-2, 0.01j]])
    assert SpectralPoint.from_matrix(p.beta).eta == pytest.approx(0.01)


@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False))
def test_stieltjes_density_nonnegative(G):
    assert stieltjes_density(G) >= 0


def test_measure_json_roundtrip(tmp_path):
    for mu in FAMILIES + [ScalarMeasure.atomic([0, 1], [0.3, 0.7])]:
        path = tmp_path / "m.json"
        path.write_text(json.dumps(mu.to_dict()))
        back = ScalarMeasure.load(path)
        assert back.to_dict() == mu.to_dict()
        assert back.cauchy(0.1 + 1j) == mu.cauchy(0.1 + 1j)


def test_grid_measure():
    x = np.linspace(-2, 2, 2001)
    mu = ScalarMeasure.grid(x, np.sqrt(4 - x * x) / (2 * np.pi))
    assert abs(mu.cauchy(0.3 + 1j) - ScalarMeasure.semicircle().cauchy(0.3 + 1j)) < 1e-5
