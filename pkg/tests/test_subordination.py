import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freepoly.linearize import linearize_selfadjoint
from freepoly.ncpoly import parse
from freepoly.spectra import ScalarMeasure, SpectralPoint
from freepoly.subordination import (
    _problem,
    _solve_hybrid,
    eta_continuation,
    eta_schedule,
    fixed_point_solve,
    h_transform,
    jacobian,
    newton_refine,
    polynomial_density,
    regularity_check,
    residual_map,
)

ONE = np.eye(1)
ZERO = np.zeros((1, 1))


def sc2_cauchy(z):
    """Cauchy transform of the semicircle of variance 2."""
    return (z - np.sqrt(z - np.sqrt(8)) * np.sqrt(z + np.sqrt(8))) / 4


def min_imag_eig(a):
    return np.linalg.eigvalsh((a - a.conj().T) / 2j).min()


@pytest.fixture(scope="module")
def anticomm():
    return linearize_selfadjoint(parse("x*y + y*x"))


# -- h transform ------------------------------------------------------------

def test_h_dirac_zero_is_zero(rng):
    b = np.array([[0.2 + 1j, 0.3], [0.3, -0.1 + 2j]])
    gamma = np.array([[1.0, 2.0], [2.0, -1.0]])
    assert np.abs(h_transform(gamma, ScalarMeasure.dirac(0.0), b)).max() < 1e-14


def test_h_dirac_shift():
    b = np.array([[0.2 + 1j, 0.3], [0.3, -0.1 + 2j]])
    gamma = np.array([[1.0, 2.0], [2.0, -1.0]])
    assert np.allclose(h_transform(gamma, ScalarMeasure.dirac(0.7), b), -0.7 * gamma, atol=1e-13)


def test_h_scalar_semicircle(semicircle):
    b = 2j
    G = (b - np.sqrt(b * b - 4)) / 2
    assert abs(h_transform(ONE, semicircle, [[b]])[0, 0] - (1 / G - b)) < 1e-13


# -- fixed point and Newton --------------------------------------------------

def test_semicircle_pair_oracle(semicircle):
    beta = SpectralPoint(0.0, 3.0, ZERO)
    pair = fixed_point_solve(ONE, semicircle, ONE, semicircle, beta, tol=1e-14)
    # omega1 = omega2 = beta - G_{sc,2}(beta) by symmetry and R(G) = G for variance 1
    expected = 3j - sc2_cauchy(3j)
    assert abs(pair.omega1[0, 0] - expected) < 1e-10
    assert abs(pair.omega1[0, 0] - pair.omega2[0, 0]) < 1e-10
    assert pair.converged and pair.method == "fixed-point"


@pytest.mark.parametrize("t", [0.0, 0.7, -1.3])
def test_atom_cases(semicircle, t):
    g1 = np.array([[1.0, 2.0], [2.0, 0.0]])
    g2 = np.array([[0.0, 1.0], [1.0, 3.0]])
    beta = SpectralPoint(0.3, 0.2, np.eye(2))
    pair = fixed_point_solve(g1, semicircle, g2, ScalarMeasure.dirac(t), beta)
    assert np.abs(pair.omega1 - (beta.beta - t * g2)).max() < 1e-12


def test_fixed_point_nonconvergence_flagged(semicircle):
    beta = SpectralPoint(0.1, 1e-6, ZERO)
    pair = fixed_point_solve(ONE, semicircle, ONE, semicircle, beta, tol=1e-15, max_iter=3)
    assert not pair.converged and pair.iterations == 3


def test_newton_exact_input_unchanged(semicircle):
    beta = SpectralPoint(0.0, 3.0, ZERO)
    pair = fixed_point_solve(ONE, semicircle, ONE, semicircle, beta, tol=1e-15)
    assert pair.residual < 1e-14
    out, diag = newton_refine(pair, ONE, semicircle, ONE, semicircle, tol=1e-14)
    assert np.array_equal(out.omega1, pair.omega1) and not diag.steps


def test_newton_scalar_few_steps(semicircle):
    beta = SpectralPoint(0.4, 0.5, ZERO)
    pair = fixed_point_solve(ONE, semicircle, ONE, semicircle, beta, tol=1e-6)
    out, diag = newton_refine(pair, ONE, semicircle, ONE, semicircle, tol=1e-12)
    assert out.residual < 1e-12
    assert len(diag.steps) <= 3
    assert out.method == "newton-refined"
    assert all(s["h0"] <= 0.5 for s in diag.steps if s["kind"] == "newton")


def test_newton_quadratic_decay_anticommutator(semicircle, anticomm):
    L = anticomm
    prob = _problem(L.gamma1, semicircle, L.gamma2, semicircle)
    beta = SpectralPoint(0.5, 0.1, L.gamma0)
    w1 = beta.beta + 1j * np.eye(L.n)
    pair = fixed_point_solve(prob, None, None, None, beta, tol=3e-2, omega1_init=w1)
    out, diag = newton_refine(pair, prob, tol=1e-14)
    assert out.residual < 1e-11
    r = np.array(diag.residuals)
    newton = np.array([s["kind"] == "newton" for s in diag.steps])
    # fit r_{k+1} <= C r_k^2 over accepted Newton steps above the rounding floor
    keep = newton & (r[:-1] > 1e-10)
    assert keep.sum() >= 2
    C = np.max(r[1:][keep] / r[:-1][keep] ** 2)
    assert np.isfinite(C) and C < 1e3


def test_jacobian_gradient_check(semicircle, anticomm, rng):
    L = anticomm
    n = L.n
    prob = _problem(L.gamma1, semicircle, L.gamma2, semicircle)

    def upper(scale):
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return scale * A + 1j * (B @ B.conj().T + np.eye(n))

    beta = 0.1 * upper(0.5)
    w1, w2 = upper(0.5), upper(0.5)
    J = jacobian(prob, beta, w1, w2)
    h = 1e-5
    for _ in range(3):
        b1 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        b2 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        Fp = residual_map(prob, beta, w1 + h * b1, w2 + h * b2)
        Fm = residual_map(prob, beta, w1 - h * b1, w2 - h * b2)
        fd = np.concatenate([((Fp[k] - Fm[k]) / (2 * h)).ravel(order="F") for k in range(2)])
        lin = J @ np.concatenate([b1.ravel(order="F"), b2.ravel(order="F")])
        assert np.linalg.norm(lin - fd) / np.linalg.norm(fd) < 1e-6


def test_jacobian_scalar_closed_form(semicircle):
    prob = _problem(ONE, semicircle, 2 * ONE, ScalarMeasure.arcsine())
    w1, w2, beta = np.array([[0.3 + 0.7j]]), np.array([[-0.2 + 0.4j]]), np.array([[0.1 + 0.1j]])
    J = jacobian(prob, beta, w1, w2)
    h = 1e-6
    for k, (d1, d2) in enumerate([(h, 0), (0, h)]):
        Fp = residual_map(prob, beta, w1 + d1, w2 + d2)
        Fm = residual_map(prob, beta, w1 - d1, w2 - d2)
        col = np.array([(Fp[0] - Fm[0])[0, 0], (Fp[1] - Fm[1])[0, 0]]) / (2 * h)
        assert np.allclose(J[:, k], col, rtol=1e-7)


# -- continuation -------------------------------------------------------------

def test_schedule():
    s = eta_schedule(1e-6)
    assert s[0] == 1.0 and s[-1] == 1e-6
    assert all(b / a == 0.5 for a, b in zip(s[:-2], s[1:-1]))
    with pytest.raises(ValueError):
        eta_schedule(2.0)


def test_continuation_single_stage_matches_hybrid(semicircle):
    pair = eta_continuation(ONE, semicircle, ONE, semicircle, 0.3, [0.5])
    beta = SpectralPoint(0.3, 0.5, ZERO)
    fp = fixed_point_solve(ONE, semicircle, ONE, semicircle, beta, tol=1e-4)
    ref, _ = newton_refine(fp, ONE, semicircle, ONE, semicircle)
    assert np.allclose(pair.omega1, ref.omega1, atol=1e-12)
    assert len(pair.trail) == 1


def test_continuation_rejects_bad_schedule(semicircle):
    with pytest.raises(ValueError):
        eta_continuation(ONE, semicircle, ONE, semicircle, 0.0, [0.1, 0.5])


def test_continuation_density_at_zero(semicircle):
    pair = eta_continuation(ONE, semicircle, ONE, semicircle, 1e-3j, eta_schedule(1e-6))
    rho0 = np.sqrt(2) / (2 * np.pi)
    # smoothing at height 1e-3 shifts the value by O(1e-4)
    assert abs(-pair.G[0, 0].imag / np.pi - rho0) < 2e-4
    assert abs(pair.G[0, 0] - sc2_cauchy(1e-3j + 1e-6j)) < 1e-9
    assert all(t["residual"] <= 1e-11 for t in pair.trail)


def test_warm_start_saves_iterations(semicircle):
    z = 0.3 + 1e-3j
    warm = eta_continuation(ONE, semicircle, ONE, semicircle, z, eta_schedule(1e-5))
    prob = _problem(ONE, semicircle, ONE, semicircle)
    beta = SpectralPoint(z, 1e-5, ZERO)
    cold, _ = _solve_hybrid(prob, beta, beta.beta + 1j * ONE, 1e-11, 1e-4, 5000)
    assert warm.trail[-1]["iterations"] < cold.iterations


# -- regularity -----------------------------------------------------------------

def test_regularity_dirac(semicircle):
    beta = SpectralPoint(0.0, 1.0, ZERO)
    pair = fixed_point_solve(ONE, semicircle, ONE, ScalarMeasure.dirac(0.0), beta)
    rep = regularity_check(pair, ONE, semicircle, ONE, ScalarMeasure.dirac(0.0))
    assert rep.min_sv_condA_c >= 1 - 1e-12


@pytest.mark.parametrize("x", [0.0, 2 * np.sqrt(2) + 0.5])
def test_regularity_semicircle_sum(semicircle, x):
    pair = eta_continuation(ONE, semicircle, ONE, semicircle, x + 1e-3j, eta_schedule(1e-5))
    rep = regularity_check(pair, ONE, semicircle, ONE, semicircle)
    assert min(rep.min_sv_condA_c, rep.min_sv_condA_d) >= 1e-3
    if x == 0.0:
        assert rep.passed


def test_bernoulli_degenerate_point_flagged(bernoulli):
    curve = polynomial_density("x + y", bernoulli, bernoulli, None, x_grid=[0.0, 0.9])
    # the derivative map is singular at x = 0 (int (omega - t)^-2 = 0 at omega = i)
    assert curve.condB_min_sv[0] < 1e-3
    assert not curve.regularity_flags[0] and curve.regularity_flags[1]
    assert abs(curve.rho[0] - 1 / (2 * np.pi)) < 1e-3


# -- densities -------------------------------------------------------------------

def test_density_single_variable(semicircle):
    x = np.linspace(-1.9, 1.9, 21)
    curve = polynomial_density("x", semicircle, semicircle, (-1.9, 1.9), 21)
    assert np.array_equal(curve.x_grid, x)
    assert np.abs(curve.rho - np.sqrt(4 - x * x) / (2 * np.pi)).max() < 2e-3
    assert curve.regularity_flags.all()


def test_density_invariants(semicircle, anticomm):
    curve = polynomial_density(parse("x*y + y*x"), semicircle, semicircle, (-4, 4), 9)
    assert np.all(curve.rho >= 0) and np.all(np.isfinite(curve.rho))
    assert np.all(np.isfinite(curve.residual))
    assert curve.rho[4] == max(curve.rho)


def test_density_parallel_matches_serial(semicircle):
    a = polynomial_density("x + y", semicircle, semicircle, (-3, 3), 7, workers=1)
    b = polynomial_density("x + y", semicircle, semicircle, (-3, 3), 7, workers=3)
    assert np.array_equal(a.rho, b.rho)


def test_density_validation(semicircle):
    with pytest.raises(ValueError):
        polynomial_density("x + y", semicircle, semicircle, (-3, 3), 7, alpha=1.5)
    with pytest.raises(ValueError):
        polynomial_density("x*y", semicircle, semicircle, (-3, 3), 7)


# -- properties ---------------------------------------------------------------------

@given(st.floats(-4, 4), st.floats(1e-3, 2.0), st.sampled_from(["semicircle", "arcsine", "uniform"]))
def test_pair_invariants_scalar(x, eta, family):
    mu_c = ScalarMeasure.semicircle()
    mu_d = {"semicircle": ScalarMeasure.semicircle(0.5, 1.0),
            "arcsine": ScalarMeasure.arcsine(-1, 2),
            "uniform": ScalarMeasure.uniform(-1, 1)}[family]
    tol = 1e-11
    pair = eta_continuation(ONE, mu_c, ONE, mu_d, x, eta_schedule(eta, 1.0) if eta < 1 else [eta])
    assert pair.converged and pair.residual <= tol
    b = pair.beta.beta
    for w in (pair.omega1, pair.omega2):
        assert min_imag_eig(w) >= min_imag_eig(b) - 1e-9
    Gc = _problem(ONE, mu_c, ONE, mu_d).c.cauchy(pair.omega1)
    Gd = _problem(ONE, mu_c, ONE, mu_d).d.cauchy(pair.omega2)
    assert np.linalg.norm(Gc - Gd, 2) <= 2 * tol


@given(st.floats(-3, 3), st.floats(0.05, 1.0))
def test_pair_invariants_anticommutator(x, eta):
    mu = ScalarMeasure.semicircle(nodes=200)
    L = linearize_selfadjoint(parse("x*y + y*x"))
    pair = eta_continuation(L.gamma1, mu, L.gamma2, mu, x, eta_schedule(eta, 1.0),
                            gamma0=L.gamma0)
    assert pair.converged and pair.residual <= 1e-11
    for w in (pair.omega1, pair.omega2):
        assert min_imag_eig(w) >= eta - 1e-9
