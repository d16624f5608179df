"""
Linear matrix pencils for noncommutative polynomials.

A pencil ``L = gamma0 (x) 1 + gamma1 (x) X1 + gamma2 (x) X2`` is stored by its
three dense ``n x n`` coefficient matrices.  Every pencil built here has the
block shape ``[[a, u], [v, Q]]`` (index 0 is the scalar corner) with
``P = a - u Q^{-1} v``, so that the ``(1,1)`` block of
``(z e11 - L)^{-1}`` equals ``(z - P)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ncpoly import NCPolynomial, evaluate, is_selfadjoint

__all__ = [
    "LinearPencil",
    "linearize",
    "linearize_monomial",
    "linearize_selfadjoint",
    "linearize_sum",
    "pencil_from_dict",
    "pencil_to_dict",
    "schur_check",
]


@dataclass(frozen=True)
class LinearPencil:
    gamma0: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray

    def __post_init__(self):
        gs = [np.array(g, dtype=complex) for g in (self.gamma0, self.gamma1, self.gamma2)]
        n = gs[0].shape[0]
        for g in gs:
            if g.shape != (n, n):
                raise ValueError("pencil coefficients must be square and of equal size")
            g.setflags(write=False)
        object.__setattr__(self, "gamma0", gs[0])
        object.__setattr__(self, "gamma1", gs[1])
        object.__setattr__(self, "gamma2", gs[2])

    @property
    def n(self) -> int:
        return self.gamma0.shape[0]

    @property
    def gammas(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.gamma0, self.gamma1, self.gamma2

    def hermiticity_defect(self) -> float:
        """max_i ||gamma_i - gamma_i^*|| (spectral norm)."""
        return max(np.linalg.norm(g - g.conj().T, 2) for g in self.gammas)

    def evaluate(self, S1, S2) -> np.ndarray:
        """``gamma0 (x) I + gamma1 (x) S1 + gamma2 (x) S2`` as an ``nN x nN`` matrix."""
        S1 = np.asarray(S1)
        S2 = np.asarray(S2)
        N = S1.shape[0]
        return (np.kron(self.gamma0, np.eye(N)) + np.kron(self.gamma1, S1)
                + np.kron(self.gamma2, S2))

    @classmethod
    def zero(cls) -> "LinearPencil":
        z = np.zeros((1, 1))
        return cls(z, z, z)


def linearize_monomial(coeff, word) -> LinearPencil:
    """Pencil of ``coeff * X_{i_1} ... X_{i_l}``.

    Degree 0 or 1 gives the 1x1 pencil ``L = P``.  For ``l >= 2`` the
    ``(l+1) x (l+1)`` pencil has ``coeff`` at the end of the first row, the
    letters on the sub-antidiagonal and ``-1`` on the antidiagonal next to it.
    """
    word = tuple(word)
    c = complex(coeff)
    l = len(word)
    if l <= 1:
        g = [np.zeros((1, 1), dtype=complex) for _ in range(3)]
        g[word[0] if word else 0][0, 0] = c
        return LinearPencil(*g)
    g = [np.zeros((l + 1, l + 1), dtype=complex) for _ in range(3)]
    g[0][0, l] = c
    for k, letter in enumerate(word, start=1):
        g[letter][k, l - k] = 1.0
        g[0][k, l - k + 1] = -1.0
    return LinearPencil(*g)


def _sum_blocks(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n1, n2 = A.shape[0], B.shape[0]
    out = np.zeros((n1 + n2 - 1, n1 + n2 - 1), dtype=complex)
    out[0, 0] = A[0, 0] + B[0, 0]
    out[0, 1:n1] = A[0, 1:]
    out[0, n1:] = B[0, 1:]
    out[1:n1, 0] = A[1:, 0]
    out[n1:, 0] = B[1:, 0]
    out[1:n1, 1:n1] = A[1:, 1:]
    out[n1:, n1:] = B[1:, 1:]
    return out


def linearize_sum(L1: LinearPencil, L2: LinearPencil) -> LinearPencil:
    """Pencil of ``P1 + P2``: corners add, ``u = (u1 u2)``, ``Q = diag(Q1, Q2)``."""
    return LinearPencil(*(_sum_blocks(a, b) for a, b in zip(L1.gammas, L2.gammas)))


def linearize(p: NCPolynomial) -> LinearPencil:
    """Linearization of an arbitrary polynomial, term by term in canonical order."""
    out = LinearPencil.zero()
    for word, c in p.items():
        out = linearize_sum(out, linearize_monomial(c, word))
    return out


def selfadjoint_half(p: NCPolynomial) -> NCPolynomial:
    """Deterministic ``P0`` with ``P0 + P0^* = P`` for self-adjoint ``P``.

    Palindromic words are halved; of a pair ``(w, reverse(w))`` the
    lexicographically smaller word carries the full coefficient.
    """
    half = []
    for word, c in p.items():
        rev = word[::-1]
        if word == rev:
            half.append((word, c / 2))
        elif word < rev:
            half.append((word, c))
    return NCPolynomial(half)


def _selfadjoint_blocks(A: np.ndarray) -> np.ndarray:
    m = A.shape[0] - 1
    a, u0, v0, Q0 = A[0, 0], A[0, 1:], A[1:, 0], A[1:, 1:]
    out = np.zeros((1 + 2 * m, 1 + 2 * m), dtype=complex)
    out[0, 0] = a + np.conj(a)
    out[0, 1:1 + m] = u0
    out[0, 1 + m:] = v0.conj()
    out[1:1 + m, 0] = u0.conj()
    out[1:1 + m, 1 + m:] = Q0.conj().T
    out[1 + m:, 0] = v0
    out[1 + m:, 1:1 + m] = Q0
    return out


def linearize_selfadjoint(p: NCPolynomial) -> LinearPencil:
    """Hermitian pencil ``[[a + a*, u0, v0*], [u0*, 0, Q0*], [v0, Q0, 0]]``."""
    if not is_selfadjoint(p):
        raise ValueError(f"polynomial {p} is not self-adjoint")
    L0 = linearize(selfadjoint_half(p))
    return LinearPencil(*(_selfadjoint_blocks(g) for g in L0.gammas))


def schur_check(p: NCPolynomial, L: LinearPencil, S1, S2, z: complex) -> float:
    """Operator-norm gap between the corner block of ``(z e11 - L(S))^{-1}``
    and ``(z - P(S))^{-1}``."""
    S1 = np.asarray(S1)
    S2 = np.asarray(S2)
    N = S1.shape[0]
    n = L.n
    E11 = np.zeros((n, n))
    E11[0, 0] = 1.0
    M = z * np.kron(E11, np.eye(N)) - L.evaluate(S1, S2)
    rhs = np.zeros((n * N, N), dtype=complex)
    rhs[:N, :N] = np.eye(N)
    if np.linalg.cond(M) > 1e14:
        raise np.linalg.LinAlgError(f"pencil evaluation is singular at z={z}")
    corner = np.linalg.solve(M, rhs)[:N]
    direct = np.linalg.inv(z * np.eye(N) - evaluate(p, S1, S2))
    return float(np.linalg.norm(corner - direct, 2))


def _encode(m: np.ndarray) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def _decode(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def pencil_to_dict(L: LinearPencil) -> dict:
    """JSON-ready dict: row-major ``[re, im]`` pairs."""
    return {"n": L.n, "gamma0": _encode(L.gamma0), "gamma1": _encode(L.gamma1),
            "gamma2": _encode(L.gamma2)}


def pencil_from_dict(d: dict) -> LinearPencil:
    L = LinearPencil(_decode(d["gamma0"]), _decode(d["gamma1"]), _decode(d["gamma2"]))
    if L.n != d["n"]:
        raise ValueError("pencil dimension does not match its coefficients")
    return L
