"""Exact complex-rational coefficients carrying formal symbol monomials.

A Scalar is a finite sum  q * s1^e1 * s2^e2 * ...  where q is a Gaussian
rational (Fraction real and imaginary parts) and the s_i are drawn from a
fixed tuple of commuting indeterminates.  Everything here is exact; no
float ever enters the symbolic layers built on top of this module.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, Union

# Canonical symbol order.  lam is the spectral parameter, mu/kappa the
# structure parameters of the abstract relation list, eps the nonlinearity
# weight, m/m1/m2 coupling-matrix entries, eta*/mu* the ansatz integration
# constants.  ca/cb/cc are reserved unknowns for linear solves and vel/amp2
# are reserved for the travelling-envelope verification.
SYMBOLS = (
    "lam", "mu", "kappa", "eps", "m", "m1", "m2",
    "eta1", "eta2", "mu1", "mu2",
    "ca", "cb", "cc", "vel", "amp2",
)
_SYM_INDEX = {name: k for k, name in enumerate(SYMBOLS)}
_NSYM = len(SYMBOLS)
_UNIT_MONO = (0,) * _NSYM

RatLike = Union[int, Fraction]


class QQi:
    """Gaussian rational p + q*i."""

    __slots__ = ("re", "im")

    def __init__(self, re: RatLike = 0, im: RatLike = 0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    def __add__(self, other: "QQi") -> "QQi":
        return QQi(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "QQi") -> "QQi":
        return QQi(self.re - other.re, self.im - other.im)

    def __mul__(self, other: "QQi") -> "QQi":
        return QQi(self.re * other.re - self.im * other.im,
                   self.re * other.im + self.im * other.re)

    def __truediv__(self, other: "QQi") -> "QQi":
        d = other.re * other.re + other.im * other.im
        if d == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return QQi((self.re * other.re + self.im * other.im) / d,
                   (self.im * other.re - self.re * other.im) / d)

    def __neg__(self) -> "QQi":
        return QQi(-self.re, -self.im)

    def __eq__(self, other) -> bool:
        return isinstance(other, QQi) and self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self) -> bool:
        return self.re != 0 or self.im != 0

    def conjugate(self) -> "QQi":
        return QQi(self.re, -self.im)

    def to_complex(self) -> complex:
        return float(self.re) + 1j * float(self.im)

    def __repr__(self) -> str:
        return f"QQi({self.re!r}, {self.im!r})"

    def __str__(self) -> str:
        return render_qqi(self)


QQI_ZERO = QQi(0)
QQI_ONE = QQi(1)
QQI_I = QQi(0, 1)


def _frac_str(q: Fraction) -> str:
    return str(q)


def render_qqi(z: QQi) -> str:
    """Canonical rendering: '3', '-1/2', 'i', '-2i', '(1+i)', '(1/2-3i)'."""
    if z.im == 0:
        return _frac_str(z.re)
    if z.re == 0:
        if z.im == 1:
            return "i"
        if z.im == -1:
            return "-i"
        return _frac_str(z.im) + "i"
    sign = "+" if z.im > 0 else "-"
    mag = abs(z.im)
    imag = "i" if mag == 1 else _frac_str(mag) + "i"
    return f"({_frac_str(z.re)}{sign}{imag})"


class Scalar:
    """Exact sum of Gaussian-rational multiples of symbol monomials.

    Internally a map from exponent tuples (over SYMBOLS) to QQi; zero
    coefficients are never stored, so equality is plain dict equality.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple, QQi] | None = None):
        self.terms = {m: c for m, c in (terms or {}).items() if c}

    # -- constructors -------------------------------------------------
    @staticmethod
    def number(re: RatLike = 0, im: RatLike = 0) -> "Scalar":
        return Scalar({_UNIT_MONO: QQi(re, im)})

    @staticmethod
    def from_qqi(z: QQi) -> "Scalar":
        return Scalar({_UNIT_MONO: z})

    @staticmethod
    def symbol(name: str, power: int = 1) -> "Scalar":
        mono = [0] * _NSYM
        mono[_SYM_INDEX[name]] = power
        return Scalar({tuple(mono): QQI_ONE})

    # -- ring operations ----------------------------------------------
    def __add__(self, other: "Scalar") -> "Scalar":
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m, QQI_ZERO) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return Scalar(out)

    def __sub__(self, other: "Scalar") -> "Scalar":
        return self + (-other)

    def __neg__(self) -> "Scalar":
        return Scalar({m: -c for m, c in self.terms.items()})

    def __mul__(self, other: "Scalar") -> "Scalar":
        out: dict[tuple, QQi] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                s = out.get(m, QQI_ZERO) + c1 * c2
                if s:
                    out[m] = s
                else:
                    out.pop(m, None)
        return Scalar(out)

    def scaled(self, z: QQi) -> "Scalar":
        if not z:
            return Scalar()
        return Scalar({m: c * z for m, c in self.terms.items()})

    def __truediv__(self, z) -> "Scalar":
        if isinstance(z, QQi):
            return self.scaled(QQI_ONE / z)
        return self.scaled(QQI_ONE / QQi(z))

    def __pow__(self, k: int) -> "Scalar":
        if k < 0:
            raise ValueError("negative Scalar powers are not defined")
        out = S_ONE
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, Scalar) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    # -- structure ----------------------------------------------------
    def is_number(self) -> bool:
        return not self.terms or set(self.terms) == {_UNIT_MONO}

    def number_value(self) -> QQi:
        if not self.terms:
            return QQI_ZERO
        if not self.is_number():
            raise ValueError(f"not a pure number: {self}")
        return self.terms[_UNIT_MONO]

    def symbols_used(self) -> set:
        used = set()
        for m in self.terms:
            for k, e in enumerate(m):
                if e:
                    used.add(SYMBOLS[k])
        return used

    def poly_in(self, names: Iterable[str]) -> dict[tuple, "Scalar"]:
        """Decompose by the exponents of `names`; values are free of them."""
        idxs = [_SYM_INDEX[n] for n in names]
        out: dict[tuple, dict] = {}
        for m, c in self.terms.items():
            key = tuple(m[i] for i in idxs)
            rest = list(m)
            for i in idxs:
                rest[i] = 0
            out.setdefault(key, {})[tuple(rest)] = c
        return {k: Scalar(v) for k, v in out.items()}

    def substitute(self, mapping: Mapping[str, "Scalar"]) -> "Scalar":
        """Replace symbols by Scalars (simultaneous substitution)."""
        idx_map = {_SYM_INDEX[n]: v for n, v in mapping.items()}
        out = Scalar()
        for m, c in self.terms.items():
            term = Scalar.from_qqi(c)
            rest = list(m)
            for i, v in idx_map.items():
                e = m[i]
                if e:
                    rest[i] = 0
                    term = term * (v ** e)
            term = term * Scalar({tuple(rest): QQI_ONE})
            out = out + term
        return out

    def evaluate(self, values: Mapping[str, complex] | None = None) -> complex:
        """Numeric value; every symbol actually present must be supplied."""
        values = values or {}
        total = 0j
        for m, c in self.terms.items():
            v = c.to_complex()
            for k, e in enumerate(m):
                if e:
                    name = SYMBOLS[k]
                    if name not in values:
                        raise KeyError(f"no value supplied for symbol '{name}'")
                    v *= values[name] ** e
            total += v
        return total

    # -- rendering ------------------------------------------------------
    def __repr__(self) -> str:
        return f"Scalar({self.render()})"

    def __str__(self) -> str:
        return self.render()

    def render(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m in sorted(self.terms):
            c = self.terms[m]
            syms = []
            for k, e in enumerate(m):
                if e == 1:
                    syms.append(SYMBOLS[k])
                elif e:
                    syms.append(f"{SYMBOLS[k]}^{e}")
            cs = render_qqi(c)
            if syms and cs == "1":
                parts.append("*".join(syms))
            elif syms and cs == "-1":
                parts.append("-" + "*".join(syms))
            elif syms:
                parts.append("*".join([cs] + syms))
            else:
                parts.append(cs)
        text = parts[0]
        for p in parts[1:]:
            text += " - " + p[1:] if p.startswith("-") else " + " + p
        return text


S_ZERO = Scalar()
S_ONE = Scalar.number(1)
S_I = Scalar.number(0, 1)


def _parse_rational(tok: str) -> Fraction:
    return Fraction(tok)


def parse_scalar(text: str) -> Scalar:
    """Parse products like '1', '-1/2', 'i', '2i', 'i*kappa', '-1/2*mu',
    '3*lam^2'.  Sums are not supported; data files keep one product per
    coefficient."""
    text = text.strip()
    if not text:
        raise ValueError("empty scalar literal")
    neg = False
    if text[0] in "+-":
        neg = text[0] == "-"
        text = text[1:].strip()
    coeff = QQI_ONE
    mono = [0] * _NSYM
    for tok in text.split("*"):
        tok = tok.strip()
        if not tok:
            raise ValueError(f"malformed scalar literal: {text!r}")
        if tok == "i":
            coeff = coeff * QQI_I
        elif tok.endswith("i") and tok[:-1] and tok[:-1][-1].isdigit():
            coeff = coeff * QQi(0, _parse_rational(tok[:-1]))
        elif tok[0].isdigit() or tok[0] in "+-":
            coeff = coeff * QQi(_parse_rational(tok))
        else:
            if "^" in tok:
                name, _, p = tok.partition("^")
                power = int(p)
            else:
                name, power = tok, 1
            if name not in _SYM_INDEX:
                raise ValueError(f"unknown symbol {name!r} in scalar literal")
            mono[_SYM_INDEX[name]] += power
    if neg:
        coeff = -coeff
    return Scalar({tuple(mono): coeff})
