"""
Finite-N matrix model ``X_N = P(c_N, d_N)`` with ``c_N`` a deterministic
diagonal of quantiles and ``d_N = U D_N U^*`` for Haar ``U``.

Eigenvalue window counts, eigenvector delocalization and Monte-Carlo
estimates of the approximate subordination functions live here.
Every trial draws from its own seed derived from ``(master, key...)``,
so results do not depend on evaluation order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .linearize import LinearPencil, linearize_selfadjoint
from .ncpoly import NCPolynomial, evaluate, parse
from .spectra import ScalarMeasure, SpectralPoint, levy_distance, quantile_diagonal
from .subordination import polynomial_density

__all__ = [
    "ApproxSubordination",
    "DelocReport",
    "EigenData",
    "EnsembleSample",
    "LocalLawReport",
    "approx_subordination",
    "count_window",
    "deloc_experiment",
    "deloc_statistic",
    "deloc_threshold",
    "eigen",
    "eta_star",
    "haar_unitary",
    "levy_pair",
    "local_law_experiment",
    "poisson_smoothed_density",
    "resolvent",
    "sample_pair",
    "trial_seed",
]

log = logging.getLogger(__name__)


def trial_seed(master: int, *key: int) -> int:
    """Stable 64-bit seed for the trial labelled ``key`` under ``master``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(N: int, seed=None) -> np.ndarray:
    """Haar-distributed ``N x N`` unitary.

    QR of a complex Ginibre matrix, with the columns of ``Q`` multiplied by
    the phases of ``diag(R)`` so that the law is exactly Haar.
    """
    if N < 1:
        raise ValueError("N must be positive")
    rng = _rng(seed)
    Z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def _as_poly(p) -> NCPolynomial:
    return parse(p) if isinstance(p, str) else p


@dataclass
class EnsembleSample:
    N: int
    seed: int | None
    c_N: np.ndarray
    D_N: np.ndarray
    U: np.ndarray
    d_N: np.ndarray
    X: np.ndarray | None = None

    @property
    def C(self) -> np.ndarray:
        return np.diag(self.c_N)

    def with_polynomial(self, p) -> "EnsembleSample":
        X = evaluate(_as_poly(p), self.C, self.d_N)
        X = (X + X.conj().T) / 2
        return EnsembleSample(self.N, self.seed, self.c_N, self.D_N, self.U, self.d_N, X)


def sample_pair(mu_c: ScalarMeasure, mu_d: ScalarMeasure, N: int, seed=None, p=None,
                c_N=None, D_N=None) -> EnsembleSample:
    """Draw ``(c_N, d_N)``; evaluates ``X = p(c_N, d_N)`` when ``p`` is given.

    ``c_N`` and ``D_N`` may be passed precomputed to skip the quantile solves.
    """
    if N < 1:
        raise ValueError("N must be positive")
    c_N = quantile_diagonal(mu_c, N) if c_N is None else c_N
    D_N = quantile_diagonal(mu_d, N) if D_N is None else D_N
    U = haar_unitary(N, seed)
    d_N = (U * D_N) @ U.conj().T
    d_N = (d_N + d_N.conj().T) / 2
    s = EnsembleSample(N, seed if isinstance(seed, (int, np.integer)) else None, c_N, D_N, U, d_N)
    return s.with_polynomial(p) if p is not None else s


def levy_pair(sample: EnsembleSample, mu_c, mu_d) -> float:
    """``max`` of the Levy distances of the empirical laws of ``c_N``, ``D_N``
    to ``mu_c``, ``mu_d``."""
    return max(levy_distance(ScalarMeasure.empirical(sample.c_N), mu_c),
               levy_distance(ScalarMeasure.empirical(sample.D_N), mu_d))


@dataclass
class EigenData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None

    def residual(self, X) -> float:
        """Largest ``||X v - lambda v||`` over the pairs."""
        V = self.eigenvectors
        return float(np.linalg.norm(X @ V - V * self.eigenvalues, axis=0).max())


def eigen(X, vectors=True) -> EigenData:
    if vectors:
        w, V = np.linalg.eigh(X)
        return EigenData(w, V)
    return EigenData(np.linalg.eigvalsh(X))


# ---------------------------------------------------------------------------
# resolvents and approximate subordination
# ---------------------------------------------------------------------------

def _partial_trace(A4) -> np.ndarray:
    """``M_n(tr_N)`` of a matrix reshaped to ``(n, N, n, N)``."""
    return np.einsum("iaja->ij", A4) / A4.shape[1]


@dataclass
class ResolventData:
    R: np.ndarray
    G: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    norm: float


def _operator_norm(R, exact_limit=1500, iters=60) -> float:
    if R.shape[0] <= exact_limit:
        return float(np.linalg.norm(R, 2))
    # power iteration: a lower bound, enough to catch violations
    v = np.ones(R.shape[0], dtype=complex) / np.sqrt(R.shape[0])
    s = 0.0
    for _ in range(iters):
        w = R.conj().T @ (R @ v)
        s = np.linalg.norm(w)
        v = w / s
    return float(np.sqrt(s))


def resolvent(pencil: LinearPencil, sample: EnsembleSample, beta) -> ResolventData:
    """``R = (beta (x) I - gamma1 (x) c_N - gamma2 (x) d_N)^{-1}``, its block
    trace ``G`` and ``f1 = tr(R (gamma2 (x) d_N))``, ``f2 = tr(R (gamma1 (x) c_N))``."""
    point = beta if isinstance(beta, SpectralPoint) else SpectralPoint.from_matrix(beta)
    b = point.beta
    n, N = pencil.n, sample.N
    A = np.kron(b, np.eye(N)) - np.kron(pencil.gamma1, sample.C) - np.kron(pencil.gamma2, sample.d_N)
    R = np.linalg.inv(A)
    R4 = R.reshape(n, N, n, N)
    G = _partial_trace(R4)
    # tr(R_ik d) for each block, then contract with gamma
    Td = np.einsum("iakb,ba->ik", R4, sample.d_N) / N
    Tc = np.einsum("iaka,a->ik", R4, sample.c_N) / N
    f1 = Td @ pencil.gamma2
    f2 = Tc @ pencil.gamma1
    bound = 1.0 / np.linalg.eigvalsh((b - b.conj().T) / 2j).min()
    norm = _operator_norm(R)
    if norm > bound + 1e-9:
        raise AssertionError(f"resolvent norm {norm} exceeds 1/eta bound {bound}")
    return ResolventData(R, G, f1, f2, norm)


@dataclass
class ApproxSubordination:
    beta: SpectralPoint
    N: int
    trials: int
    EG: np.ndarray
    Ef1: np.ndarray
    Ef2: np.ndarray
    omega1N: np.ndarray
    omega2N: np.ndarray
    identity_f_defect: float
    identity_f_beta_left_defect: float
    resolvent_norm_eta: float
    omega1_samples: np.ndarray | None = None
    omega2_samples: np.ndarray | None = None
    Delta1: np.ndarray | None = None
    Delta2: np.ndarray | None = None
    delta1: np.ndarray | None = None
    delta2: np.ndarray | None = None

    @property
    def identity_omega_defect(self) -> float:
        """``||omega1N + omega2N - beta - EG^{-1}||``."""
        return float(np.linalg.norm(self.omega1N + self.omega2N - self.beta.beta
                                    - np.linalg.inv(self.EG), 2))

    @property
    def delta1_norm(self) -> float:
        return float("nan") if self.delta1 is None else float(np.linalg.norm(self.delta1, 2))

    @property
    def delta2_norm(self) -> float:
        return float("nan") if self.delta2 is None else float(np.linalg.norm(self.delta2, 2))


def approx_subordination(pencil, mu_c, mu_d, N, beta, trials=30, seed=0, delta=True
                         ) -> ApproxSubordination:
    """Monte-Carlo approximate subordination functions
    ``omega_jN = beta - (E G)^{-1} E f_j``.

    With ``delta=True`` a second pass over the same seeds estimates

        Delta1 = E[(f1 - E f1) R] - E[(G - E G)(beta - gamma1 (x) c_N) R]

    and its mirror ``Delta2`` (``gamma2 (x) d_N``, ``f2``), together with
    ``delta_j = (E G)^{-1} Delta_j``.  Single-sample estimates
    ``beta - G^{-1} f_j`` are kept in ``omega{1,2}_samples``.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    pencil = pencil if isinstance(pencil, LinearPencil) else linearize_selfadjoint(_as_poly(pencil))
    point = beta if isinstance(beta, SpectralPoint) else SpectralPoint.from_matrix(beta)
    b = point.beta
    n = pencil.n
    c_N = quantile_diagonal(mu_c, N)
    D_N = quantile_diagonal(mu_d, N)
    seeds = [trial_seed(seed, N, k) for k in range(trials)]

    def draw(s):
        return resolvent(pencil, sample_pair(mu_c, mu_d, N, s, c_N=c_N, D_N=D_N), point)

    EG = np.zeros((n, n), complex)
    Ef1 = np.zeros((n, n), complex)
    Ef2 = np.zeros((n, n), complex)
    defect = defect_left = 0.0
    norm_eta = 0.0
    eye = np.eye(n)
    w1s, w2s = [], []
    for s in seeds:
        r = draw(s)
        Ginv = np.linalg.inv(r.G)
        w1s.append(b - Ginv @ r.f1)
        w2s.append(b - Ginv @ r.f2)
        EG += r.G
        Ef1 += r.f1
        Ef2 += r.f2
        defect = max(defect, np.linalg.norm(r.f1 + r.f2 + eye - r.G @ b, 2))
        defect_left = max(defect_left, np.linalg.norm(r.f1 + r.f2 + eye - b @ r.G, 2))
        norm_eta = max(norm_eta, r.norm * point.eta)
    EG /= trials
    Ef1 /= trials
    Ef2 /= trials
    if np.linalg.cond(EG) > 1e12:
        raise np.linalg.LinAlgError("E G is numerically singular; increase eta or trials")
    EGinv = np.linalg.inv(EG)
    out = ApproxSubordination(point, N, trials, EG, Ef1, Ef2, b - EGinv @ Ef1, b - EGinv @ Ef2,
                              float(defect), float(defect_left), float(norm_eta),
                              np.array(w1s), np.array(w2s))
    if not delta:
        return out

    I_N = np.eye(N)
    B = np.kron(b, I_N)
    C1 = np.kron(pencil.gamma1, np.diag(c_N))
    D1 = np.zeros((n * N, n * N), complex)
    D2 = np.zeros((n * N, n * N), complex)
    for s in seeds:
        smp = sample_pair(mu_c, mu_d, N, s, c_N=c_N, D_N=D_N)
        r = resolvent(pencil, smp, point)
        dG = np.kron(r.G - EG, I_N)
        D1 += np.kron(r.f1 - Ef1, I_N) @ r.R - dG @ ((B - C1) @ r.R)
        C2 = np.kron(pencil.gamma2, smp.d_N)
        D2 += np.kron(r.f2 - Ef2, I_N) @ r.R - dG @ ((B - C2) @ r.R)
    D1 /= trials
    D2 /= trials
    Einv = np.kron(EGinv, I_N)
    out.Delta1, out.Delta2 = D1, D2
    out.delta1, out.delta2 = Einv @ D1, Einv @ D2
    return out


# ---------------------------------------------------------------------------
# window counts and local law
# ---------------------------------------------------------------------------

def count_window(eigenvalues, x: float, eta: float, half_open=False, N=None):
    """Number ``M`` of eigenvalues in ``[x - eta, x + eta]`` and ``M / (2 N eta)``.

    ``half_open=True`` counts ``[x - eta, x + eta)`` instead, so adjacent
    windows partition the line.
    """
    ev = np.asarray(eigenvalues, dtype=float)
    N = len(ev) if N is None else N
    lo = np.searchsorted(ev, x - eta, side="left")
    hi = np.searchsorted(ev, x + eta, side="left" if half_open else "right")
    M = int(hi - lo)
    return M, (M / (2.0 * N * eta) if N else 0.0)


def eta_star(N: int, c: float = 1.0) -> float:
    """``c N^{-1/12} log N``."""
    return float(c * N ** (-1.0 / 12.0) * np.log(N))


def poisson_smoothed_density(eigenvalues, x, width: float) -> np.ndarray:
    """``-Im tr (x + i width - X)^{-1} / pi`` from the spectrum of ``X``."""
    ev = np.asarray(eigenvalues, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return (width / np.pi / ((x[:, None] - ev[None]) ** 2 + width ** 2)).mean(axis=1)


@dataclass
class LocalLawReport:
    alpha: float
    c: float
    rows: list = field(default_factory=list)

    def median_rel_error(self, N, x=None) -> float:
        errs = [r["median_rel_error"] for r in self.rows if r["N"] == N and (x is None or r["x"] == x)]
        return float(np.median(errs))


def _trial_spectra(p, mu_c, mu_d, N, trials, seed, vectors):
    c_N = quantile_diagonal(mu_c, N)
    D_N = quantile_diagonal(mu_d, N)
    for k in range(trials):
        smp = sample_pair(mu_c, mu_d, N, trial_seed(seed, N, k), p=p, c_N=c_N, D_N=D_N)
        yield eigen(smp.X, vectors=vectors)


def local_law_experiment(p, mu_c, mu_d, x_points, N_list, alpha=0.5, trials=5, seed=0,
                         c=1.0, rho=None, progress=None) -> LocalLawReport:
    """Window ratios ``M / (2 N (eta*)^alpha)`` against the limiting density.

    ``rho`` may supply the reference densities at ``x_points``; otherwise
    they come from :func:`polynomial_density`.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    p = _as_poly(p)
    x_points = np.atleast_1d(np.asarray(x_points, dtype=float))
    if rho is None:
        rho = polynomial_density(p, mu_c, mu_d, None, x_grid=x_points).rho
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    report = LocalLawReport(alpha, c)
    for N in N_list:
        es = eta_star(N, c)
        h = es ** alpha
        ratios = np.empty((trials, len(x_points)))
        for k, eig in enumerate(_trial_spectra(p, mu_c, mu_d, N, trials, seed, False)):
            for j, x in enumerate(x_points):
                ratios[k, j] = count_window(eig.eigenvalues, x, h)[1]
            if progress:
                progress(f"locallaw N={N} trial {k + 1}/{trials}")
        for j, x in enumerate(x_points):
            r = ratios[:, j]
            rel = np.abs(r - rho[j]) / rho[j] if rho[j] > 0 else np.full_like(r, np.nan)
            report.rows.append({
                "N": int(N), "x": float(x), "eta_star": es, "half_width": h,
                "mean_ratio": float(r.mean()), "median_ratio": float(np.median(r)),
                "std_ratio": float(r.std(ddof=1)) if trials > 1 else 0.0,
                "rho": float(rho[j]), "median_rel_error": float(np.median(rel)),
                "trials": int(trials),
            })
    return report


# ---------------------------------------------------------------------------
# delocalization
# ---------------------------------------------------------------------------

def deloc_statistic(eigen_data: EigenData, interval):
    """``max_j max_i |v_j(i)|^2`` over eigenvectors with eigenvalue in ``interval``.

    Returns ``None`` when no eigenvalue falls in the interval.  On exactly
    repeated eigenvalues the value depends on the basis returned by the
    eigensolver.
    """
    a, b = interval
    w = eigen_data.eigenvalues
    sel = (w >= a) & (w <= b)
    if not sel.any():
        return None
    V = eigen_data.eigenvectors[:, sel]
    return float((np.abs(V) ** 2).max())


def deloc_threshold(N: int, alpha: float) -> float:
    """``N^{-alpha/12} log N``."""
    return float(N ** (-alpha / 12.0) * np.log(N))


@dataclass
class DelocReport:
    alpha: float
    interval: tuple
    rows: list = field(default_factory=list)

    def median(self, N) -> float:
        return next(r["median_stat"] for r in self.rows if r["N"] == N)


def deloc_experiment(p, mu_c, mu_d, interval, N_list, alpha=0.5, trials=10, seed=0,
                     progress=None) -> DelocReport:
    p = _as_poly(p)
    report = DelocReport(alpha, tuple(map(float, interval)))
    for N in N_list:
        stats = []
        for k, eig in enumerate(_trial_spectra(p, mu_c, mu_d, N, trials, seed, True)):
            s = deloc_statistic(eig, interval)
            if s is not None:
                stats.append(s)
            if progress:
                progress(f"deloc N={N} trial {k + 1}/{trials}")
        thr = deloc_threshold(N, alpha)
        med = float(np.median(stats)) if stats else float("nan")
        report.rows.append({
            "N": int(N), "trials": int(trials), "present": len(stats),
            "median_stat": med, "max_stat": float(max(stats)) if stats else float("nan"),
            "threshold": float(thr), "below_threshold": bool(stats) and bool(max(stats) < thr),
        })
    return report
