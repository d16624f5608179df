"""
Complex polynomials in two noncommuting indeterminates.

Monomials are tuples of letters in ``{1, 2}`` (``x`` -> 1, ``y`` -> 2); the
empty tuple is the unit.  Polynomials are immutable maps from words to
complex coefficients with zero coefficients pruned.

Text grammar (whitespace ignored)::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := ('+' | '-') factor | NUMBER | NUMBER 'i' | 'i' | 'x' | 'y'
            | '(' expr ')'
"""

from __future__ import annotations

import re
from functools import reduce
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "NCPolynomial",
    "PolynomialSyntaxError",
    "Word",
    "adjoint",
    "evaluate",
    "is_selfadjoint",
    "parse",
]

Word = tuple
LETTERS = {"x": 1, "y": 2}
NAMES = {1: "x", 2: "y"}


def _check_word(word) -> tuple:
    word = tuple(int(a) for a in word)
    for a in word:
        if a not in (1, 2):
            raise ValueError(f"letter {a} is not an indeterminate index (1 or 2)")
    return word


def word_key(word: tuple) -> tuple:
    """Graded lexicographic sort key."""
    return (len(word), word)


class NCPolynomial:
    """Immutable polynomial in X1, X2 with complex coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping | Iterable = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[tuple, complex] = {}
        for word, coeff in items:
            word = _check_word(word)
            acc[word] = acc.get(word, 0j) + complex(coeff)
        self._terms = {w: acc[w] for w in sorted(acc, key=word_key) if acc[w] != 0}
        self._hash = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, c) -> "NCPolynomial":
        return cls({(): c})

    @classmethod
    def variable(cls, index: int) -> "NCPolynomial":
        return cls({(index,): 1.0})

    @classmethod
    def monomial(cls, coeff, word) -> "NCPolynomial":
        return cls({tuple(word): coeff})

    # -- container protocol -------------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __iter__(self):
        return iter(self._terms)

    def __len__(self):
        return len(self._terms)

    def __getitem__(self, word) -> complex:
        return self._terms.get(tuple(word), 0j)

    @property
    def degree(self) -> int:
        return max((len(w) for w in self._terms), default=-1)

    def is_zero(self) -> bool:
        return not self._terms

    def __eq__(self, other):
        if isinstance(other, (int, float, complex)):
            other = NCPolynomial.constant(other)
        if not isinstance(other, NCPolynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    # -- algebra --------------------------------------------------------------
    @staticmethod
    def _coerce(other):
        if isinstance(other, NCPolynomial):
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return NCPolynomial.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return NCPolynomial(list(self._terms.items()) + list(other._terms.items()))

    __radd__ = __add__

    def __neg__(self):
        return NCPolynomial({w: -c for w, c in self._terms.items()})

    def __pos__(self):
        return self

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = []
        for w1, c1 in self._terms.items():
            for w2, c2 in other._terms.items():
                out.append((w1 + w2, c1 * c2))
        return NCPolynomial(out)

    def __rmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        return reduce(lambda a, b: a * b, [self] * k, NCPolynomial.constant(1.0))

    def adjoint(self) -> "NCPolynomial":
        return adjoint(self)

    def is_selfadjoint(self) -> bool:
        return is_selfadjoint(self)

    def __call__(self, S1, S2):
        return evaluate(self, S1, S2)

    def __str__(self):
        return to_string(self)

    def __repr__(self):
        return f"NCPolynomial({to_string(self)!r})"


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

def _fmt_real(v: float) -> str:
    return repr(float(v))


def _fmt_coeff(c: complex) -> tuple[str, str]:
    """Return (sign, magnitude text) so that sign + text parses back to c."""
    re_, im = c.real, c.imag
    if im == 0:
        sign = "-" if re_ < 0 else "+"
        return sign, _fmt_real(abs(re_))
    if re_ == 0:
        sign = "-" if im < 0 else "+"
        return sign, _fmt_real(abs(im)) + "i"
    op = "-" if im < 0 else "+"
    return "+", f"({_fmt_real(re_)}{op}{_fmt_real(abs(im))}i)"


def to_string(p: NCPolynomial) -> str:
    """Canonical text form, accepted by :func:`parse`."""
    if p.is_zero():
        return "0"
    parts = []
    for k, (word, c) in enumerate(p.items()):
        sign, mag = _fmt_coeff(c)
        letters = "*".join(NAMES[a] for a in word)
        if not letters:
            body = mag
        elif mag == "1.0":
            body = letters
        else:
            body = f"{mag}*{letters}"
        if k == 0:
            parts.append(("-" if sign == "-" else "") + body)
        else:
            parts.append(f" {sign} {body}")
    return "".join(parts)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

class PolynomialSyntaxError(ValueError):
    """Raised on malformed polynomial text; ``pos`` is the 0-based offset."""

    def __init__(self, message: str, pos: int, text: str = ""):
        self.pos = pos
        self.text = text
        super().__init__(f"{message} at position {pos}")


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z_0-9]))?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*()])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise PolynomialSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        start = m.start("num") if m.group("num") else (
            m.start("name") if m.group("name") else m.start("op"))
        if m.group("num") is not None:
            val = float(m.group("num"))
            tokens.append(("num", complex(0.0, val) if m.group("imag") else complex(val, 0.0), start))
        elif m.group("name") is not None:
            name = m.group("name")
            if name == "i":
                tokens.append(("num", 1j, start))
            elif name in LETTERS:
                tokens.append(("var", LETTERS[name], start))
            else:
                raise PolynomialSyntaxError(f"unknown identifier {name!r}", start, text)
        else:
            tokens.append((m.group("op"), None, start))
        pos = m.end()
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg):
        raise PolynomialSyntaxError(msg, self.peek()[2], self.text)

    def expr(self) -> NCPolynomial:
        acc = self.term()
        while self.peek()[0] in "+-":
            op = self.take()[0]
            rhs = self.term()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def term(self) -> NCPolynomial:
        acc = self.factor()
        while self.peek()[0] == "*":
            self.take()
            acc = acc * self.factor()
        return acc

    def factor(self) -> NCPolynomial:
        kind, val, _ = self.peek()
        if kind == "-":
            self.take()
            return -self.factor()
        if kind == "+":
            self.take()
            return self.factor()
        if kind == "num":
            self.take()
            return NCPolynomial.constant(val)
        if kind == "var":
            self.take()
            return NCPolynomial.variable(val)
        if kind == "(":
            self.take()
            inner = self.expr()
            if self.peek()[0] != ")":
                self.error("expected ')'")
            self.take()
            return inner
        if kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected token {kind!r}")


def parse(text: str) -> NCPolynomial:
    """Parse polynomial text such as ``"x*y + y*x"`` or ``"2*x*x - i*y"``."""
    parser = _Parser(text)
    out = parser.expr()
    if parser.peek()[0] != "end":
        parser.error(f"unexpected token {parser.peek()[0]!r}")
    return out


# ---------------------------------------------------------------------------
# adjoint and evaluation
# ---------------------------------------------------------------------------

def adjoint(p: NCPolynomial) -> NCPolynomial:
    """Conjugate coefficients and reverse words (X1, X2 self-adjoint)."""
    return NCPolynomial({w[::-1]: np.conj(c) for w, c in p.items()})


def is_selfadjoint(p: NCPolynomial) -> bool:
    return adjoint(p) == p


def evaluate(p: NCPolynomial, S1, S2) -> np.ndarray:
    """Substitute square matrices for X1, X2."""
    S1 = np.asarray(S1)
    S2 = np.asarray(S2)
    if S1.ndim != 2 or S1.shape[0] != S1.shape[1] or S1.shape != S2.shape:
        raise ValueError(f"need two square matrices of equal size, got {S1.shape} and {S2.shape}")
    N = S1.shape[0]
    mats = {1: S1, 2: S2}
    out = np.zeros((N, N), dtype=np.result_type(S1, S2, complex))
    # prefix cache: words sorted by length share left factors
    cache: dict[tuple, np.ndarray] = {}
    for word, c in p.items():
        if not word:
            out += c * np.eye(N)
            continue
        prefix = word[:-1]
        if not prefix:
            prod = mats[word[0]]
        else:
            head = cache.get(prefix)
            if head is None:
                head = reduce(np.matmul, (mats[a] for a in prefix))
                cache[prefix] = head
            prod = head @ mats[word[-1]]
        cache[word] = prod
        out += c * prod
    return out
