"""
Matrix-valued subordination for ``H = gamma1 (x) c + gamma2 (x) d`` with
``c ~ mu_c`` and ``d ~ mu_d`` free.

The pair ``(omega1, omega2)`` solves

    G_c(omega1) = G_d(omega2) = (omega1 + omega2 - beta)^{-1},

where ``G_c(w) = int (w - t gamma1)^{-1} mu_c(dt)``.  Solutions are found by
the fixed-point map ``omega1 <- beta + h_d(beta + h_c(omega1))`` with
``h(w) = G(w)^{-1} - w``, refined by Newton's method on the stacked system,
and tracked towards the real axis by continuation in ``eta``.

Matrices are vectorized by column stacking (Fortran order) wherever the
``2n^2 x 2n^2`` derivative is assembled.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linearize import LinearPencil, linearize_selfadjoint
from .ncpoly import NCPolynomial, parse
from .spectra import ScalarMeasure, SpectralPoint, matrix_cauchy, stieltjes_density

__all__ = [
    "DensityCurve",
    "NewtonDiagnostics",
    "RegularityReport",
    "SubordinationError",
    "SubordinationPair",
    "eta_continuation",
    "eta_schedule",
    "fixed_point_solve",
    "h_transform",
    "jacobian",
    "newton_refine",
    "point_density",
    "polynomial_density",
    "regularity_check",
    "residual_map",
]

log = logging.getLogger(__name__)

SWITCH_TOL = 1e-4
NEWTON_TOL = 1e-11
THREADS_ENV = "FREEPOLY_THREADS"


class SubordinationError(RuntimeError):
    """Solver failure; ``eta`` records the regularization at which it happened."""

    def __init__(self, message, eta=None):
        super().__init__(message if eta is None else f"{message} (eta={eta:.3g})")
        self.eta = eta


def _norm(a) -> float:
    return float(np.linalg.norm(a, 2))


def _vec(a):
    return np.asarray(a).reshape(-1, order="F")


def _unvec(v, n):
    return np.asarray(v).reshape((n, n), order="F")


class _Side:
    """One free summand ``gamma (x) x`` with ``x ~ mu``."""

    def __init__(self, gamma, mu: ScalarMeasure):
        self.gamma = np.asarray(gamma, dtype=complex)
        self.mu = mu
        self.n = self.gamma.shape[0]
        self.t, self.w = mu.quadrature()

    def cauchy(self, b):
        return matrix_cauchy(self.gamma, self.mu, b, check=False)

    def resolvents(self, b):
        return np.linalg.inv(b[None] - self.t[:, None, None] * self.gamma[None])

    def second_moment_map(self, b):
        """Matrix of ``X -> int (b - t gamma)^{-1} X (b - t gamma)^{-1} mu(dt)``."""
        if self.n == 1:
            g = self.gamma[0, 0]
            if g == 0:
                return 1.0 / b ** 2
            return np.array([[-self.mu.cauchy_derivative(b[0, 0] / g) / g ** 2]])
        n = self.n
        R = self.resolvents(b)
        # sum_k w_k kron(R_k^T, R_k) as one matrix product over the nodes
        left = (self.w[:, None, None] * R).transpose(0, 2, 1).reshape(-1, n * n)
        M = left.T @ R.reshape(-1, n * n)
        return M.reshape(n, n, n, n).transpose(0, 2, 1, 3).reshape(n * n, n * n)

    def cubic_mass(self, b) -> float:
        """``int ||(b - t gamma)^{-1}||^3 mu(dt)`` over the quadrature."""
        if self.n == 1:
            return float(np.dot(self.w, np.abs(b[0, 0] - self.t * self.gamma[0, 0]) ** -3.0))
        R = self.resolvents(b)
        return float(np.dot(self.w, np.linalg.norm(R, 2, axis=(1, 2)) ** 3))

    def min_singular(self, b) -> float:
        if self.n == 1:
            return float(np.abs(b[0, 0] - self.t * self.gamma[0, 0]).min())
        A = b[None] - self.t[:, None, None] * self.gamma[None]
        return float(np.linalg.svd(A, compute_uv=False).min())


class _Problem:
    def __init__(self, gamma1, mu_c, gamma2, mu_d):
        self.c = _Side(gamma1, mu_c)
        self.d = _Side(gamma2, mu_d)
        if self.c.n != self.d.n:
            raise ValueError("gamma1 and gamma2 must have the same size")
        self.n = self.c.n


def h_transform(gamma, mu: ScalarMeasure, b) -> np.ndarray:
    """``G(b)^{-1} - b`` for ``G(b) = int (b - t gamma)^{-1} mu(dt)``."""
    b = np.asarray(b, dtype=complex)
    G = matrix_cauchy(gamma, mu, b)
    if np.linalg.cond(G) > 1e14:
        raise SubordinationError("Cauchy transform is numerically singular")
    return np.linalg.inv(G) - b


@dataclass
class SubordinationPair:
    omega1: np.ndarray
    omega2: np.ndarray
    beta: SpectralPoint
    residual: float
    iterations: int
    method: str
    converged: bool = True
    trail: list = field(default_factory=list)

    @property
    def G(self) -> np.ndarray:
        """``G_H(beta) = (omega1 + omega2 - beta)^{-1}``."""
        return np.linalg.inv(self.omega1 + self.omega2 - self.beta.beta)


@dataclass
class NewtonDiagnostics:
    """Kantorovich quantities at the first Newton iterate plus per-step history.

    ``A`` is a local estimate of the second-derivative norm at the iterate,
    not a supremum over a ball.
    """

    C0: float = float("nan")
    delta0: float = float("nan")
    A: float = float("nan")
    h0: float = float("nan")
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)


@dataclass
class RegularityReport:
    min_sv_condA_c: float
    min_sv_condA_d: float
    min_sv_condB: float
    tau: float

    @property
    def passed(self) -> bool:
        return min(self.min_sv_condA_c, self.min_sv_condA_d, self.min_sv_condB) >= self.tau


@dataclass
class DensityCurve:
    x_grid: np.ndarray
    rho: np.ndarray
    eta_final: float
    regularity_flags: np.ndarray
    residual: np.ndarray
    condA_min_sv: np.ndarray
    condB_min_sv: np.ndarray
    clamped: int = 0
    failures: int = 0


# ---------------------------------------------------------------------------
# residual and derivative
# ---------------------------------------------------------------------------

def residual_map(prob: _Problem, beta, w1, w2):
    """``F(w1, w2) = (S - G_c(w1), S - G_d(w2))`` with ``S = (w1 + w2 - beta)^{-1}``."""
    S = np.linalg.inv(w1 + w2 - beta)
    return S - prob.c.cauchy(w1), S - prob.d.cauchy(w2)


def _residual(prob, beta, w1, w2) -> float:
    F1, F2 = residual_map(prob, beta, w1, w2)
    return max(_norm(F1), _norm(F2))


def jacobian(prob: _Problem, beta, w1, w2) -> np.ndarray:
    """``2n^2 x 2n^2`` derivative of :func:`residual_map` (column stacking).

    In direction ``(b1, b2)`` it is
    ``-S (b1 + b2) S + int R_c b1 R_c mu_c(dt)`` and the same with ``d``.
    """
    n = prob.n
    S = np.linalg.inv(w1 + w2 - beta)
    K = np.kron(S.T, S)
    m = n * n
    J = np.empty((2 * m, 2 * m), dtype=complex)
    J[:m, :m] = prob.c.second_moment_map(w1) - K
    J[:m, m:] = -K
    J[m:, :m] = -K
    J[m:, m:] = prob.d.second_moment_map(w2) - K
    return J


def _problem(gamma1, mu_c, gamma2, mu_d) -> _Problem:
    return _Problem(gamma1, mu_c, gamma2, mu_d)


def _as_point(beta, n=None) -> SpectralPoint:
    if isinstance(beta, SpectralPoint):
        return beta
    return SpectralPoint.from_matrix(np.atleast_2d(np.asarray(beta, dtype=complex)))


# ---------------------------------------------------------------------------
# fixed point
# ---------------------------------------------------------------------------

def _fixed_point(prob, beta, w1, tol, max_iter, damping=0.0, residual_tol=None):
    """Iterate ``w1 <- beta + h_d(beta + h_c(w1))``; return (w1, w2, iters, ok).

    Stops on ``||w1_new - w1|| < tol`` or, when ``residual_tol`` is given, as
    soon as the current pair has residual below it.
    """
    for k in range(1, max_iter + 1):
        Gc = prob.c.cauchy(w1)
        w2 = beta + np.linalg.inv(Gc) - w1
        Gd = prob.d.cauchy(w2)
        # here (w1 + w2 - beta)^{-1} = Gc, so the residual is ||Gd - Gc||
        if residual_tol is not None and _norm(Gd - Gc) < residual_tol:
            return w1, w2, k, True
        new = beta + np.linalg.inv(Gd) - w2
        if damping:
            new = damping * w1 + (1.0 - damping) * new
        step = _norm(new - w1)
        w1 = new
        if not np.all(np.isfinite(w1)):
            raise SubordinationError("fixed-point iteration produced non-finite values")
        if step < tol:
            w2 = beta + np.linalg.inv(prob.c.cauchy(w1)) - w1
            return w1, w2, k, True
    w2 = beta + np.linalg.inv(prob.c.cauchy(w1)) - w1
    return w1, w2, max_iter, False


def fixed_point_solve(gamma1, mu_c, gamma2, mu_d, beta, tol=1e-12, max_iter=10_000,
                      omega1_init=None) -> SubordinationPair:
    """Denjoy-Wolff iteration for the subordination pair at ``beta``.

    Stops when successive ``omega1`` iterates differ by less than ``tol``
    (spectral norm).  On ``max_iter`` the last iterate is returned with
    ``converged=False``.
    """
    point = _as_point(beta)
    b = point.beta
    prob = gamma1 if isinstance(gamma1, _Problem) else _problem(gamma1, mu_c, gamma2, mu_d)
    w1 = b + 1j * np.eye(prob.n) if omega1_init is None else np.array(omega1_init, dtype=complex)
    try:
        w1, w2, k, ok = _fixed_point(prob, b, w1, tol, max_iter)
    except np.linalg.LinAlgError as exc:
        raise SubordinationError(f"singular Cauchy transform: {exc}", point.eta) from exc
    res = _residual(prob, b, w1, w2)
    if not ok:
        log.warning("fixed point did not converge in %d iterations (residual %.3g)", max_iter, res)
    return SubordinationPair(w1, w2, point, res, k, "fixed-point", ok)


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------

def _kantorovich(prob, b, w1, w2, J, F):
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] == 0 or not np.isfinite(sv[-1]):
        raise SubordinationError("singular derivative (condition B fails)")
    step = np.linalg.solve(J, -F)
    C0 = 1.0 / sv[-1]
    delta0 = float(np.linalg.norm(step))
    S = _norm(np.linalg.inv(w1 + w2 - b))
    cubic = max(prob.c.cubic_mass(w1), prob.d.cubic_mass(w2))
    A = np.sqrt(2.0) * (4.0 * S ** 3 + 2.0 * cubic)
    return step, C0, delta0, A, C0 * delta0 * A, sv[-1]


def newton_refine(pair: SubordinationPair, gamma1, mu_c=None, gamma2=None, mu_d=None,
                  tol=NEWTON_TOL, max_steps=60, strict=False):
    """Newton iteration on the stacked ``2n^2`` system.

    A Newton step is taken when the Kantorovich number ``h0 = C0 delta0 A``
    at the iterate is at most 1/2; otherwise a fixed-point step damped by 1/2
    is taken, or with ``strict=True`` the refinement stops unconverged.
    Three consecutive residual increases abort the refinement.

    Returns ``(pair, diagnostics)``.
    """
    prob = gamma1 if isinstance(gamma1, _Problem) else _problem(gamma1, mu_c, gamma2, mu_d)
    n = prob.n
    b = pair.beta.beta
    w1 = np.array(pair.omega1, dtype=complex)
    w2 = np.array(pair.omega2, dtype=complex)
    diag = NewtonDiagnostics()
    res = _residual(prob, b, w1, w2)
    diag.residuals.append(res)
    rises = 0
    steps = 0
    ok = res < tol
    while not ok and steps < max_steps:
        F1, F2 = residual_map(prob, b, w1, w2)
        F = np.concatenate([_vec(F1), _vec(F2)])
        try:
            J = jacobian(prob, b, w1, w2)
            step, C0, delta0, A, h0, smin = _kantorovich(prob, b, w1, w2, J, F)
        except np.linalg.LinAlgError as exc:
            raise SubordinationError(f"singular derivative (condition B fails): {exc}",
                                     pair.beta.eta) from exc
        if np.isnan(diag.h0):
            diag.C0, diag.delta0, diag.A, diag.h0 = C0, delta0, A, h0
        if h0 > 0.5 and strict:
            break
        if h0 <= 0.5:
            w1 = w1 + _unvec(step[: n * n], n)
            w2 = w2 + _unvec(step[n * n:], n)
            kind = "newton"
        else:
            w1, w2, _, _ = _fixed_point(prob, b, w1, 0.0, 1, damping=0.5)
            kind = "damped-fixed-point"
        steps += 1
        new = _residual(prob, b, w1, w2)
        diag.steps.append({"kind": kind, "h0": h0, "C0": C0, "delta0": delta0, "A": A,
                           "residual": new})
        diag.residuals.append(new)
        rises = rises + 1 if new > res else 0
        res = new
        if not np.isfinite(res):
            raise SubordinationError("Newton iteration produced non-finite values", pair.beta.eta)
        if rises >= 3:
            log.warning("Newton refinement diverging at eta=%.3g", pair.beta.eta)
            break
        ok = res < tol
    out = SubordinationPair(w1, w2, pair.beta, res, pair.iterations + steps,
                            "newton-refined", bool(ok), list(pair.trail))
    return out, diag


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------

def eta_schedule(eta_min=1e-6, eta_max=1.0, ratio=0.5) -> list[float]:
    """Geometric schedule from ``eta_max`` down to exactly ``eta_min``."""
    if not 0 < eta_min <= eta_max or not 0 < ratio < 1:
        raise ValueError("need 0 < eta_min <= eta_max and 0 < ratio < 1")
    out = [float(eta_max)]
    while out[-1] * ratio > eta_min * (1 + 1e-12):
        out.append(out[-1] * ratio)
    if out[-1] != eta_min:
        out.append(float(eta_min))
    return out


def _solve_hybrid(prob, point, w1, tol, switch_tol, max_iter, w2=None):
    """Fixed point until Newton is safe, then Newton.

    A warm start (``w2`` given) goes straight to Newton if the Kantorovich
    condition holds there.  Otherwise the fixed-point phase runs to residual
    ``switch_tol``, tightened tenfold while ``h0 > 1/2``.  Once ``max_iter``
    is spent, Newton falls back to damped fixed-point steps.
    """
    b = point.beta
    used = 0
    if w2 is not None:
        pair = SubordinationPair(w1, w2, point, _residual(prob, b, w1, w2), 0, "warm-start")
        out, diag = newton_refine(pair, prob, tol=tol, strict=True)
        if out.converged:
            return out, diag
        w1, used = out.omega1, out.iterations
    target = switch_tol
    while True:
        w1, w2, k, _ = _fixed_point(prob, b, w1, 0.0, max(1, max_iter - used), residual_tol=target)
        used += k
        res = _residual(prob, b, w1, w2)
        pair = SubordinationPair(w1, w2, point, res, used, "fixed-point", res < tol)
        if res < tol:
            return pair, NewtonDiagnostics(residuals=[res])
        strict = used < max_iter
        out, diag = newton_refine(pair, prob, tol=tol, strict=strict)
        if out.converged or not strict:
            return out, diag
        w1, used = out.omega1, out.iterations
        target = min(target, res) / 10


def eta_continuation(gamma1, mu_c, gamma2, mu_d, z, eta_schedule, gamma0=None,
                     tol=NEWTON_TOL, switch_tol=SWITCH_TOL, max_iter=5000, alpha=None):
    """Track the subordination pair at ``beta = z e11 - gamma0 + i eta`` along
    a decreasing ``eta_schedule``, warm-starting each stage.

    The returned pair carries ``trail``: one dict per stage with ``eta``,
    ``residual``, ``iterations`` and ``method``.
    """
    etas = [float(e) for e in eta_schedule]
    if not etas or etas[-1] <= 0 or any(a <= b for a, b in zip(etas, etas[1:])):
        raise ValueError("eta schedule must be strictly decreasing and positive")
    prob = gamma1 if isinstance(gamma1, _Problem) else _problem(gamma1, mu_c, gamma2, mu_d)
    if gamma0 is None:
        gamma0 = np.zeros((prob.n, prob.n))
    trail = []
    w1 = w2 = None
    pair = None
    for eta in etas:
        point = SpectralPoint(z, eta, gamma0, alpha)
        start = point.beta + 1j * np.eye(prob.n) if w1 is None else w1
        try:
            pair, diag = _solve_hybrid(prob, point, start, tol, switch_tol, max_iter, w2)
        except (np.linalg.LinAlgError, SubordinationError) as exc:
            raise SubordinationError(f"solver failed: {exc}", eta) from exc
        trail.append({"eta": eta, "residual": pair.residual, "iterations": pair.iterations,
                      "method": pair.method, "converged": pair.converged})
        w1, w2 = pair.omega1, pair.omega2
    pair.trail = trail
    return pair


def regularity_check(pair: SubordinationPair, gamma1, mu_c=None, gamma2=None, mu_d=None,
                     tau=1e-3) -> RegularityReport:
    """Smallest singular values behind conditions A and B; report only."""
    prob = gamma1 if isinstance(gamma1, _Problem) else _problem(gamma1, mu_c, gamma2, mu_d)
    b = pair.beta.beta
    a_c = prob.c.min_singular(pair.omega1)
    a_d = prob.d.min_singular(pair.omega2)
    try:
        J = jacobian(prob, b, pair.omega1, pair.omega2)
        cond_b = float(np.linalg.svd(J, compute_uv=False).min())
    except np.linalg.LinAlgError:
        cond_b = 0.0
    return RegularityReport(a_c, a_d, cond_b, tau)


# ---------------------------------------------------------------------------
# densities of polynomials
# ---------------------------------------------------------------------------

def _as_pencil(p) -> LinearPencil:
    if isinstance(p, LinearPencil):
        return p
    if isinstance(p, str):
        p = parse(p)
    if isinstance(p, NCPolynomial):
        return linearize_selfadjoint(p)
    raise TypeError(f"cannot linearize {type(p).__name__}")


@dataclass
class PointResult:
    x: float
    G: complex
    rho: float
    residual: float
    condA: float
    condB: float
    regular: bool
    converged: bool
    clamped: bool


def point_density(pencil: LinearPencil, mu_c, mu_d, z, eta_min=1e-6, tol=NEWTON_TOL,
                  tau=1e-3, eta_max=1.0, ratio=0.5, prob=None) -> PointResult:
    """Density of ``P(c, d)`` smoothed at ``z``: ``-Im [G_H(beta)]_{11} / pi``."""
    prob = prob or _problem(pencil.gamma1, mu_c, pencil.gamma2, mu_d)
    pair = eta_continuation(prob, None, None, None, z, eta_schedule(eta_min, eta_max, ratio),
                            gamma0=pencil.gamma0, tol=tol)
    G11 = complex(pair.G[0, 0])
    raw = -G11.imag / np.pi
    rep = regularity_check(pair, prob, tau=tau)
    return PointResult(float(np.real(z)), G11, float(stieltjes_density(G11)), pair.residual,
                       min(rep.min_sv_condA_c, rep.min_sv_condA_d), rep.min_sv_condB,
                       bool(rep.passed and pair.converged), pair.converged, raw < 0)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def polynomial_density(p, mu_c: ScalarMeasure, mu_d: ScalarMeasure, interval, grid_points=241,
                       eta_min=1e-6, alpha=0.5, tol=NEWTON_TOL, tau=1e-3, workers=None,
                       x_grid=None) -> DensityCurve:
    """Density of the self-adjoint polynomial ``p(c, d)`` on a uniform grid.

    Each grid point ``x`` is evaluated at ``z = x + i eta_min**alpha`` with
    ``eta`` continued geometrically from 1 to ``eta_min``.  Points whose
    solve fails get ``rho = 0`` and a false flag.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    pencil = _as_pencil(p)
    if x_grid is None:
        a, b = map(float, interval)
        if not a < b:
            raise ValueError("interval must satisfy a < b")
        x_grid = np.linspace(a, b, int(grid_points))
    x_grid = np.asarray(x_grid, dtype=float)
    height = eta_min ** alpha
    prob = _problem(pencil.gamma1, mu_c, pencil.gamma2, mu_d)

    def one(x):
        try:
            return point_density(pencil, mu_c, mu_d, x + 1j * height, eta_min, tol, tau, prob=prob)
        except SubordinationError as exc:
            log.warning("density solve failed at x=%.6g: %s", x, exc)
            return PointResult(float(x), 0j, 0.0, float("inf"), 0.0, 0.0, False, False, False)

    workers = workers or default_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, x_grid))
    else:
        results = [one(x) for x in x_grid]
    clamped = sum(r.clamped for r in results)
    if clamped:
        log.warning("clamped %d negative density values to 0", clamped)
    failures = sum(not r.converged for r in results)
    return DensityCurve(
        x_grid=x_grid,
        rho=np.array([r.rho for r in results]),
        eta_final=eta_min,
        regularity_flags=np.array([r.regular for r in results], dtype=bool),
        residual=np.array([r.residual for r in results]),
        condA_min_sv=np.array([r.condA for r in results]),
        condB_min_sv=np.array([r.condB for r in results]),
        clamped=clamped,
        failures=failures,
    )
