"""
Compactly supported probability measures on the real line and their
scalar and matrix-valued Cauchy transforms.

A :class:`ScalarMeasure` is a finite set of atoms plus an optional continuous
part, either a named family (semicircle, arcsine, uniform) with closed-form
Cauchy transform and CDF, or a density sampled on a uniform grid.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

__all__ = [
    "ScalarMeasure",
    "SpectralPoint",
    "cauchy",
    "levy_distance",
    "matrix_cauchy",
    "quantile_diagonal",
    "stieltjes_density",
]

log = logging.getLogger(__name__)

FAMILIES = ("semicircle", "arcsine", "uniform", "grid")
DEFAULT_NODES = 400


def _sqrt_pair(w, a, b):
    """Branch of sqrt((w-a)(w-b)) analytic off [a, b] and ~ w at infinity."""
    return np.sqrt(w - a) * np.sqrt(w - b)


class ScalarMeasure:
    """Probability measure ``sum_k p_k delta_{t_k} + (1 - sum p_k) * nu``.

    Parameters
    ----------
    atoms : sequence of (location, weight)
        Point masses. Weights must lie in (0, 1].
    family : {'semicircle', 'arcsine', 'uniform', 'grid'} or None
        Continuous part. ``None`` requires the atoms to carry unit mass.
    params : dict
        ``semicircle``: ``center``, ``radius``; ``arcsine`` and ``uniform``:
        ``a``, ``b``; ``grid``: ``x`` (uniform grid) and ``density``.
    nodes : int
        Quadrature size for the continuous part (ignored for ``grid``).
    """

    def __init__(self, atoms=(), family=None, params=None, nodes=DEFAULT_NODES):
        atoms = [(float(t), float(p)) for t, p in atoms]
        merged: dict[float, float] = {}
        for t, p in atoms:
            if not 0.0 < p <= 1.0 + 1e-15:
                raise ValueError(f"atom weight {p} outside (0, 1]")
            merged[t] = merged.get(t, 0.0) + p
        locs = np.array(sorted(merged), dtype=float)
        self.atom_locs = locs
        self.atom_weights = np.array([merged[t] for t in locs], dtype=float)
        atom_mass = float(self.atom_weights.sum())
        self.family = family
        self.params = dict(params or {})
        self.nodes = int(nodes)
        if family is None:
            if abs(atom_mass - 1.0) > 1e-12:
                raise ValueError(f"atomic measure has mass {atom_mass}, expected 1")
            self.cont_mass = 0.0
        else:
            if family not in FAMILIES:
                raise ValueError(f"unknown family {family!r}")
            if atom_mass > 1.0 + 1e-12:
                raise ValueError(f"atom mass {atom_mass} exceeds 1")
            self.cont_mass = max(0.0, 1.0 - atom_mass)
        self._setup_family()
        lo = [self.atom_locs.min()] if self.atom_locs.size else []
        hi = [self.atom_locs.max()] if self.atom_locs.size else []
        if self.cont_mass > 0:
            lo.append(self.cont_lo)
            hi.append(self.cont_hi)
        self.lo = float(min(lo))
        self.hi = float(max(hi))
        self._quad = None

    # -- constructors -------------------------------------------------------
    @classmethod
    def semicircle(cls, center=0.0, radius=2.0, atoms=(), nodes=DEFAULT_NODES):
        return cls(atoms, "semicircle", {"center": center, "radius": radius}, nodes)

    @classmethod
    def arcsine(cls, a=-2.0, b=2.0, atoms=(), nodes=DEFAULT_NODES):
        return cls(atoms, "arcsine", {"a": a, "b": b}, nodes)

    @classmethod
    def uniform(cls, a=0.0, b=1.0, atoms=(), nodes=DEFAULT_NODES):
        return cls(atoms, "uniform", {"a": a, "b": b}, nodes)

    @classmethod
    def grid(cls, x, density, atoms=()):
        return cls(atoms, "grid", {"x": list(map(float, x)), "density": list(map(float, density))})

    @classmethod
    def atomic(cls, locations, weights=None):
        locations = list(map(float, np.atleast_1d(locations)))
        if weights is None:
            weights = [1.0 / len(locations)] * len(locations)
        return cls(list(zip(locations, weights)))

    @classmethod
    def dirac(cls, t=0.0):
        return cls([(t, 1.0)])

    @classmethod
    def empirical(cls, values):
        values = np.asarray(values, dtype=float).ravel()
        locs, counts = np.unique(values, return_counts=True)
        return cls(list(zip(locs, counts / values.size)))

    @classmethod
    def from_dict(cls, d: dict) -> "ScalarMeasure":
        kind = d["type"]
        nodes = d.get("nodes", DEFAULT_NODES)
        extra = d.get("atoms", {})
        extra_atoms = list(zip(extra.get("locations", []), extra.get("weights", [])))
        if kind == "atoms":
            return cls.atomic(d["locations"], d.get("weights"))
        if kind == "semicircle":
            return cls.semicircle(d.get("center", 0.0), d.get("radius", 2.0), extra_atoms, nodes)
        if kind in ("arcsine", "uniform"):
            return cls(extra_atoms, kind, {"a": d["a"], "b": d["b"]}, nodes)
        if kind == "grid":
            return cls.grid(d["x"], d["density"], extra_atoms)
        raise ValueError(f"unknown measure type {kind!r}")

    @classmethod
    def load(cls, path) -> "ScalarMeasure":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        atoms = {"locations": self.atom_locs.tolist(), "weights": self.atom_weights.tolist()}
        if self.family is None:
            return {"type": "atoms", **atoms}
        d = {"type": self.family, **self.params}
        if self.family != "grid":
            d["nodes"] = self.nodes
        if self.atom_locs.size:
            d["atoms"] = atoms
        return d

    def __repr__(self):
        return f"ScalarMeasure({json.dumps(self.to_dict())[:120]})"

    # -- family data ---------------------------------------------------------
    def _setup_family(self):
        f, p = self.family, self.params
        if f is None:
            return
        if f == "semicircle":
            c, r = float(p["center"]), float(p["radius"])
            if r <= 0:
                raise ValueError("semicircle radius must be positive")
            self.cont_lo, self.cont_hi = c - r, c + r
        elif f in ("arcsine", "uniform"):
            a, b = float(p["a"]), float(p["b"])
            if not a < b:
                raise ValueError(f"{f} needs a < b")
            self.cont_lo, self.cont_hi = a, b
        elif f == "grid":
            x = np.asarray(p["x"], dtype=float)
            dens = np.asarray(p["density"], dtype=float)
            if x.size < 2 or x.shape != dens.shape:
                raise ValueError("grid density needs matching x and density arrays")
            h = np.diff(x)
            if np.any(h <= 0) or np.ptp(h) > 1e-9 * abs(h[0]):
                raise ValueError("grid must be uniform and increasing")
            if np.any(dens < 0):
                raise ValueError("grid density must be nonnegative")
            tw = np.full(x.size, h[0])
            tw[0] = tw[-1] = h[0] / 2
            total = float(np.dot(tw, dens))
            if total <= 0:
                raise ValueError("grid density has zero mass")
            self._gx, self._gd = x, dens / total
            self._gh = float(h[0])
            self._gtw = tw * self._gd
            self._gcum = np.concatenate([[0.0], np.cumsum((self._gd[1:] + self._gd[:-1]) * h / 2)])
            self.cont_lo, self.cont_hi = float(x[0]), float(x[-1])

    @property
    def M(self) -> float:
        """Radius of a centered interval containing the support."""
        return max(abs(self.lo), abs(self.hi))

    @property
    def support(self) -> tuple[float, float]:
        return self.lo, self.hi

    # -- quadrature ------------------------------------------------------------
    def _cont_quadrature(self):
        f, p, n = self.family, self.params, self.nodes
        k = np.arange(1, n + 1)
        if f == "semicircle":
            # Gauss-Chebyshev, second kind: exact against sqrt(1-u^2)
            th = k * np.pi / (n + 1)
            u, w = np.cos(th), 2.0 / (n + 1) * np.sin(th) ** 2
            t = p["center"] + p["radius"] * u
        elif f == "arcsine":
            u = np.cos((2 * k - 1) * np.pi / (2 * n))
            w = np.full(n, 1.0 / n)
            t = (p["a"] + p["b"]) / 2 + (p["b"] - p["a"]) / 2 * u
        elif f == "uniform":
            u, w = np.polynomial.legendre.leggauss(n)
            w = w / 2
            t = (p["a"] + p["b"]) / 2 + (p["b"] - p["a"]) / 2 * u
        else:
            t, w = self._gx, self._gtw
        return np.asarray(t, float)[::-1], np.asarray(w, float)[::-1]

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights (atoms included) integrating against the measure."""
        if self._quad is None:
            ts, ws = [self.atom_locs], [self.atom_weights]
            if self.cont_mass > 0:
                t, w = self._cont_quadrature()
                ts.append(t)
                ws.append(self.cont_mass * w)
            t = np.concatenate(ts)
            w = np.concatenate(ws)
            t.setflags(write=False)
            w.setflags(write=False)
            self._quad = (t, w)
        return self._quad

    # -- transforms ------------------------------------------------------------
    def _check_domain(self, z):
        z = np.asarray(z, dtype=complex)
        real = z.imag == 0
        if np.any(real):
            zr = z.real[real]
            bad = (zr >= self.lo) & (zr <= self.hi)
            if self.cont_mass == 0:
                bad = np.isin(zr, self.atom_locs)
            if np.any(bad):
                raise ValueError("Cauchy transform undefined on the support with Im z = 0")
        return z

    def _cont_cauchy(self, z):
        f, p = self.family, self.params
        if f == "semicircle":
            c, r = p["center"], p["radius"]
            w = z - c
            return 2.0 / (w + _sqrt_pair(w, -r, r))
        if f == "arcsine":
            return 1.0 / _sqrt_pair(z, p["a"], p["b"])
        if f == "uniform":
            a, b = p["a"], p["b"]
            return np.log((z - a) / (z - b)) / (b - a)
        t, w = self._cont_quadrature()
        return np.sum(w / (z[..., None] - t), axis=-1)

    def _cont_cauchy_derivative(self, z):
        f, p = self.family, self.params
        if f == "semicircle":
            c, r = p["center"], p["radius"]
            w = z - c
            s = _sqrt_pair(w, -r, r)
            return -2.0 * (1.0 + w / s) / (w + s) ** 2
        if f == "arcsine":
            g = 1.0 / _sqrt_pair(z, p["a"], p["b"])
            return -0.5 * g ** 3 * (2 * z - p["a"] - p["b"])
        if f == "uniform":
            a, b = p["a"], p["b"]
            return (1.0 / (z - a) - 1.0 / (z - b)) / (b - a)
        t, w = self._cont_quadrature()
        return -np.sum(w / (z[..., None] - t) ** 2, axis=-1)

    def cauchy(self, z):
        """``G(z) = int (z - t)^{-1} mu(dt)``; closed form for named families."""
        z = self._check_domain(z)
        out = np.sum(self.atom_weights / (z[..., None] - self.atom_locs), axis=-1)
        if self.cont_mass > 0:
            out = out + self.cont_mass * self._cont_cauchy(z)
        return out

    def cauchy_derivative(self, z):
        z = self._check_domain(z)
        out = -np.sum(self.atom_weights / (z[..., None] - self.atom_locs) ** 2, axis=-1)
        if self.cont_mass > 0:
            out = out + self.cont_mass * self._cont_cauchy_derivative(z)
        return out

    # -- distribution function -------------------------------------------------
    def _cont_cdf(self, x):
        f, p = self.family, self.params
        if f == "semicircle":
            u = np.clip((x - p["center"]) / p["radius"], -1.0, 1.0)
            return 0.5 + (u * np.sqrt(1 - u * u) + np.arcsin(u)) / np.pi
        if f == "arcsine":
            u = np.clip((x - p["a"]) / (p["b"] - p["a"]), 0.0, 1.0)
            return 2.0 / np.pi * np.arcsin(np.sqrt(u))
        if f == "uniform":
            return np.clip((x - p["a"]) / (p["b"] - p["a"]), 0.0, 1.0)
        gx, gd, h = self._gx, self._gd, self._gh
        k = np.clip(np.floor((x - gx[0]) / h).astype(int), 0, gx.size - 2)
        s = np.clip(x - gx[k], 0.0, h)
        out = self._gcum[k] + gd[k] * s + (gd[k + 1] - gd[k]) * s * s / (2 * h)
        out = np.where(x < gx[0], 0.0, out)
        return np.where(x >= gx[-1], 1.0, np.minimum(out, 1.0))

    def cdf(self, x):
        """Right-continuous distribution function."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.atom_locs, x, side="right")
        cum = np.concatenate([[0.0], np.cumsum(self.atom_weights)])
        out = cum[idx]
        if self.cont_mass > 0:
            out = out + self.cont_mass * self._cont_cdf(x)
        return np.minimum(out, 1.0)

    def cdf_left(self, x):
        """Left limit ``F(x-)``."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.atom_locs, x, side="left")
        cum = np.concatenate([[0.0], np.cumsum(self.atom_weights)])
        out = cum[idx]
        if self.cont_mass > 0:
            out = out + self.cont_mass * self._cont_cdf(x)
        return np.minimum(out, 1.0)

    def density(self, x):
        """Density of the continuous part (atoms excluded)."""
        x = np.asarray(x, dtype=float)
        if self.cont_mass == 0:
            return np.zeros_like(x)
        f, p = self.family, self.params
        if f == "semicircle":
            c, r = p["center"], p["radius"]
            d = 2.0 / (np.pi * r * r) * np.sqrt(np.clip(r * r - (x - c) ** 2, 0.0, None))
        elif f == "arcsine":
            a, b = p["a"], p["b"]
            q = np.clip((x - a) * (b - x), 0.0, None)
            d = np.divide(1.0, np.pi * np.sqrt(q), out=np.zeros_like(q), where=q > 0)
        elif f == "uniform":
            d = np.where((x >= p["a"]) & (x <= p["b"]), 1.0 / (p["b"] - p["a"]), 0.0)
        else:
            d = np.interp(x, self._gx, self._gd, left=0.0, right=0.0)
        return self.cont_mass * d

    def quantile(self, u):
        """Generalized inverse ``inf{x : F(x) >= u}`` by bisection."""
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        if self.cont_mass == 0:
            cum = np.cumsum(self.atom_weights)
            idx = np.searchsorted(cum, u - 1e-15, side="left")
            return self.atom_locs[np.minimum(idx, self.atom_locs.size - 1)]
        span = max(self.hi - self.lo, 1.0)
        lo = np.full(u.shape, self.lo - span)
        hi = np.full(u.shape, self.hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.all((mid == lo) | (mid == hi)):
                break
            ok = self.cdf(mid) >= u
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        if self.atom_locs.size:
            j = np.clip(np.searchsorted(self.atom_locs, hi), 0, self.atom_locs.size - 1)
            near = np.abs(self.atom_locs[j] - hi) <= 4 * np.finfo(float).eps * span
            hi = np.where(near, self.atom_locs[j], hi)
        return hi


def cauchy(mu: ScalarMeasure, z):
    """Scalar Cauchy transform ``G_mu(z)``."""
    return mu.cauchy(z)


def stieltjes_density(G):
    """``max(-Im G / pi, 0)``: the smoothed density at the query point."""
    val = -np.imag(G) / np.pi
    return np.maximum(val, 0.0)


def _check_upper(b: np.ndarray, what="b"):
    im = (b - b.conj().T) / 2j
    lam = np.linalg.eigvalsh(im).min()
    if not lam > 0:
        raise ValueError(f"{what} must have positive definite imaginary part (min eig {lam:.3g})")


def matrix_cauchy(gamma, mu: ScalarMeasure, b, check=True) -> np.ndarray:
    """``int (b - t gamma)^{-1} mu(dt)`` for ``Im b > 0``.

    Scalar inputs use the closed-form transform; otherwise the integral is a
    sum over the measure's quadrature nodes and atoms.
    """
    gamma = np.asarray(gamma, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if check:
        _check_upper(b)
    if b.shape == (1, 1):
        g = gamma[0, 0]
        if g == 0:
            return 1.0 / b
        return np.array([[mu.cauchy(b[0, 0] / g) / g]])
    t, w = mu.quadrature()
    R = np.linalg.inv(b[None] - t[:, None, None] * gamma[None])
    return np.einsum("k,kij->ij", w, R)


def quantile_diagonal(mu: ScalarMeasure, N: int) -> np.ndarray:
    """Sorted vector of ``mu`` quantiles at levels ``(i - 1/2) / N``."""
    if N < 1:
        raise ValueError("N must be positive")
    return np.sort(mu.quantile((np.arange(N) + 0.5) / N))


def levy_distance(mu: ScalarMeasure, nu: ScalarMeasure, grid_points=10_000, iters=60) -> float:
    """Levy distance by bisection on the CDF sandwich.

    The check runs on a uniform grid over both supports plus every atom
    location, shifted atom locations and their left limits; accuracy is
    about the grid spacing for continuous parts.
    """
    lo = min(mu.lo, nu.lo) - 1.0
    hi = max(mu.hi, nu.hi) + 1.0
    base = np.concatenate([np.linspace(lo, hi, grid_points), mu.atom_locs, nu.atom_locs])
    eps = 1e-12 * max(1.0, mu.M, nu.M)

    def violated(s):
        shifted = []
        for a in mu.atom_locs, nu.atom_locs:
            shifted += [a + s, a - s, a - eps, a + s - eps, a - s - eps]
        x = np.concatenate([base, *shifted])
        Fmu, Fmu_l = mu.cdf(x), mu.cdf_left(x)
        left = nu.cdf(x - s) - s - Fmu_l
        right = Fmu - nu.cdf_left(x + s) - s
        return max(left.max(), right.max()) > 1e-13

    if not violated(0.0):
        return 0.0
    a, b = 0.0, 1.0
    for _ in range(iters):
        m = 0.5 * (a + b)
        if violated(m):
            a = m
        else:
            b = m
    return b


class SpectralPoint:
    """Query point ``beta = z e11 - gamma0 + i eta I`` for a pencil."""

    def __init__(self, z, eta, gamma0, alpha=None):
        self.z = complex(z)
        self.eta = float(eta)
        self.alpha = alpha
        gamma0 = np.asarray(gamma0, dtype=complex)
        n = gamma0.shape[0]
        beta = -gamma0 + 1j * self.eta * np.eye(n)
        beta[0, 0] += self.z
        beta.setflags(write=False)
        self.beta = beta

    @classmethod
    def from_matrix(cls, beta):
        obj = cls.__new__(cls)
        obj.z = complex(beta[0, 0])
        b = np.array(beta, dtype=complex)
        obj.eta = float(np.linalg.eigvalsh((b - b.conj().T) / 2j).min())
        obj.alpha = None
        b.setflags(write=False)
        obj.beta = b
        return obj

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    def __repr__(self):
        return f"SpectralPoint(z={self.z}, eta={self.eta}, n={self.n})"
