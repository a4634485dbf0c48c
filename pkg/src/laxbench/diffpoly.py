"""Exact differential-polynomial algebra in field jets with an integer
spectral-parameter grading.

Jets are formal indeterminates (field, #t-derivatives, #x-derivatives).
The two complex fields and their formal conjugates are 'b1','b2','b1c','b2c';
additional field names (undetermined coefficient functions, test envelopes)
are allowed and simply have no substitution rule attached.  x-derivatives
are transient: at most first order, eliminated by rewriting with an
evolution system before results are compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

from .scalars import QQI_I, QQI_ONE, QQi, S_I, S_ONE, S_ZERO, Scalar

T_ORDER_CAP = 4
LAM_POWER_CAP = 64

BETA_FIELDS = ("b1", "b2", "b1c", "b2c")


class DtOrderError(ValueError):
    """A total t-derivative would exceed the supported jet order."""


class XJetError(ValueError):
    """An x-derivative hit a term that already carries an x-jet."""


class LamOverflowError(ValueError):
    """The spectral-parameter grading left the supported Laurent window."""


class JetVar(NamedTuple):
    field: str
    t: int
    x: int

    @property
    def field_index(self) -> int:
        if self.field not in BETA_FIELDS:
            raise ValueError(f"{self.field} is not a field-pair jet")
        return 1 if self.field in ("b1", "b1c") else 2

    @property
    def conjugated(self) -> bool:
        return self.field.endswith("c")

    def render(self) -> str:
        if self.t == 0 and self.x == 0:
            return self.field
        return self.field + "_" + "t" * self.t + "x" * self.x


def jet(field: str, t: int = 0, x: int = 0) -> JetVar:
    if t < 0 or x < 0 or x > 1:
        raise ValueError("jet orders must satisfy t >= 0 and x in {0,1}")
    if t > T_ORDER_CAP:
        raise DtOrderError(f"jet t-order {t} exceeds cap {T_ORDER_CAP}")
    return JetVar(field, t, x)


def beta(k: int, conj: bool = False, t: int = 0, x: int = 0) -> JetVar:
    if k not in (1, 2):
        raise ValueError("field index must be 1 or 2")
    return jet(f"b{k}{'c' if conj else ''}", t, x)


class DiffPoly:
    """Canonical sum of monomials (jet multiset, lambda power) -> Scalar."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple, Scalar] | None = None):
        self.terms = {k: v for k, v in (terms or {}).items() if not v.is_zero()}

    # -- constructors ---------------------------------------------------
    @staticmethod
    def zero() -> "DiffPoly":
        return DiffPoly()

    @staticmethod
    def of_scalar(c: Scalar) -> "DiffPoly":
        return DiffPoly({((), 0): c})

    @staticmethod
    def number(re=0, im=0) -> "DiffPoly":
        return DiffPoly.of_scalar(Scalar.number(re, im))

    @staticmethod
    def of_jet(jv: JetVar, coeff: Scalar = S_ONE) -> "DiffPoly":
        return DiffPoly({((jv,), 0): coeff})

    @staticmethod
    def lam(power: int = 1) -> "DiffPoly":
        return DiffPoly({((), power): S_ONE})

    # -- ring operations -------------------------------------------------
    def __add__(self, other: "DiffPoly") -> "DiffPoly":
        out = dict(self.terms)
        for k, v in other.terms.items():
            s = out.get(k, S_ZERO) + v
            if s.is_zero():
                out.pop(k, None)
            else:
                out[k] = s
        return DiffPoly(out)

    def __sub__(self, other: "DiffPoly") -> "DiffPoly":
        return self + (-other)

    def __neg__(self) -> "DiffPoly":
        return DiffPoly({k: -v for k, v in self.terms.items()})

    def __mul__(self, other: "DiffPoly") -> "DiffPoly":
        out: dict[tuple, Scalar] = {}
        for (j1, p1), v1 in self.terms.items():
            for (j2, p2), v2 in other.terms.items():
                p = p1 + p2
                if abs(p) > LAM_POWER_CAP:
                    raise LamOverflowError(f"lambda power {p} out of range")
                key = (tuple(sorted(j1 + j2)), p)
                s = out.get(key, S_ZERO) + v1 * v2
                if s.is_zero():
                    out.pop(key, None)
                else:
                    out[key] = s
        return DiffPoly(out)

    def scaled(self, c: Scalar) -> "DiffPoly":
        if c.is_zero():
            return DiffPoly()
        return DiffPoly({k: v * c for k, v in self.terms.items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, DiffPoly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def term_count(self) -> int:
        return len(self.terms)

    def jets_used(self) -> set:
        out = set()
        for jets, _ in self.terms:
            out |= set(jets)
        return out

    def has_x_jets(self) -> bool:
        return any(j.x for j in self.jets_used())

    def coefficient(self, jets: Sequence[JetVar], lam_power: int = 0) -> Scalar:
        return self.terms.get((tuple(sorted(jets)), lam_power), S_ZERO)

    # -- rendering & numerics ---------------------------------------------
    def render(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for key in sorted(self.terms, key=lambda k: (k[1], k[0])):
            jets, p = key
            factors = []
            cs = self.terms[key].render()
            wrapped = f"({cs})" if (" + " in cs or " - " in cs) else cs
            if p:
                factors.append("lam" if p == 1 else f"lam^{p}")
            factors.extend(j.render() for j in jets)
            if not factors:
                parts.append(wrapped)
            elif wrapped == "1":
                parts.append("*".join(factors))
            elif wrapped == "-1":
                parts.append("-" + "*".join(factors))
            else:
                parts.append("*".join([wrapped] + factors))
        text = parts[0]
        for p in parts[1:]:
            text += " - " + p[1:] if p.startswith("-") else " + " + p
        return text

    def __repr__(self):
        return f"DiffPoly({self.render()})"

    def evaluate(self, jets: Mapping[JetVar, complex], lam: complex,
                 symbols: Mapping[str, complex] | None = None) -> complex:
        total = 0j
        for (jvs, p), c in self.terms.items():
            v = c.evaluate(symbols)
            v *= lam ** p
            for jv in jvs:
                v *= jets[jv]
            total += v
        return total


DP_ZERO = DiffPoly()
DP_ONE = DiffPoly.number(1)
DP_I = DiffPoly.number(0, 1)


def total_dt(p: DiffPoly) -> DiffPoly:
    """Total t-derivative: Leibniz over the jet multiset."""
    out = DiffPoly()
    for (jets, lp), c in p.terms.items():
        for i, jv in enumerate(jets):
            if jv.t + 1 > T_ORDER_CAP:
                raise DtOrderError(
                    f"t-order cap {T_ORDER_CAP} exceeded on {jv.render()}")
            bumped = jets[:i] + (JetVar(jv.field, jv.t + 1, jv.x),) + jets[i + 1:]
            out = out + DiffPoly({(tuple(sorted(bumped)), lp): c})
    return out


def total_dx(p: DiffPoly) -> DiffPoly:
    """Total x-derivative; refuses terms that already carry an x-jet so the
    x-order can never exceed one."""
    out = DiffPoly()
    for (jets, lp), c in p.terms.items():
        if any(j.x for j in jets):
            raise XJetError("total_dx applied to a term with an existing x-jet")
        for i, jv in enumerate(jets):
            bumped = jets[:i] + (JetVar(jv.field, jv.t, 1),) + jets[i + 1:]
            out = out + DiffPoly({(tuple(sorted(bumped)), lp): c})
    return out


# ---------------------------------------------------------------------------
# Coupling matrix and evolution system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KMatrix:
    """Real symmetric coupling matrix [[m1, kappa], [kappa, m2]].

    Storing a single off-diagonal Scalar makes transpose == conjugate hold
    structurally; entries are understood to be real."""
    m1: Scalar
    m2: Scalar
    kappa: Scalar

    @staticmethod
    def symbolic() -> "KMatrix":
        return KMatrix(Scalar.symbol("m1"), Scalar.symbol("m2"),
                       Scalar.symbol("kappa"))

    @staticmethod
    def numeric(m1, m2, kappa) -> "KMatrix":
        from fractions import Fraction
        return KMatrix(Scalar.number(Fraction(m1)), Scalar.number(Fraction(m2)),
                       Scalar.number(Fraction(kappa)))

    @staticmethod
    def zero() -> "KMatrix":
        return KMatrix(S_ZERO, S_ZERO, S_ZERO)

    def entry(self, i: int, j: int) -> Scalar:
        if i == j:
            return (self.m1, self.m2)[i]
        return self.kappa

    def is_zero(self) -> bool:
        return self.m1.is_zero() and self.m2.is_zero() and self.kappa.is_zero()

    def substitute(self, mapping: Mapping[str, Scalar]) -> "KMatrix":
        return KMatrix(self.m1.substitute(mapping), self.m2.substitute(mapping),
                       self.kappa.substitute(mapping))

    def to_floats(self) -> tuple:
        return (self.m1.evaluate({}).real, self.m2.evaluate({}).real,
                self.kappa.evaluate({}).real)


@dataclass(frozen=True)
class CNLSSystem:
    """Rewriting system for  i b_x = -(a b_tt + b K b + c eps |b|^2 b)  and
    its formal conjugate; defines the elimination of x-jets."""
    a: Scalar
    b: Scalar
    c: Scalar
    kmatrix: KMatrix
    eps: Scalar

    @staticmethod
    def paper_form(kmatrix: KMatrix | None = None,
                   eps: Scalar | None = None) -> "CNLSSystem":
        return CNLSSystem(S_ONE, S_ONE, S_ONE,
                          kmatrix if kmatrix is not None else KMatrix.symbolic(),
                          eps if eps is not None else Scalar.symbol("eps"))

    def intensity(self) -> DiffPoly:
        out = DiffPoly()
        for k in (1, 2):
            out = out + DiffPoly.of_jet(beta(k)) * DiffPoly.of_jet(beta(k, conj=True))
        return out

    def x_rule(self, field: str) -> DiffPoly:
        """Rewrite image of the first x-derivative of a beta jet."""
        conj = field.endswith("c")
        k = 1 if field in ("b1", "b1c") else 2
        lin = DiffPoly.of_jet(jet(field, t=2), self.a)
        coupling = DiffPoly()
        for j in (1, 2):
            kij = self.kmatrix.entry(k - 1, j - 1) if not conj \
                else self.kmatrix.entry(j - 1, k - 1)
            coupling = coupling + DiffPoly.of_jet(
                jet(f"b{j}{'c' if conj else ''}"), self.b * kij)
        cubic = self.intensity() * DiffPoly.of_jet(jet(field), self.c * self.eps)
        total = lin + coupling + cubic
        phase = S_I if not conj else -S_I
        return total.scaled(phase)

    def residual(self, k: int) -> DiffPoly:
        """i b_kx + a b_ktt + b (K b)_k + c eps |b|^2 b_k as a polynomial."""
        out = DiffPoly.of_jet(beta(k, x=1), S_I)
        out = out + DiffPoly.of_jet(beta(k, t=2), self.a)
        for j in (1, 2):
            out = out + DiffPoly.of_jet(beta(j), self.b * self.kmatrix.entry(k - 1, j - 1))
        out = out + self.intensity() * DiffPoly.of_jet(beta(k), self.c * self.eps)
        return out


def substitute(p: DiffPoly, sys: CNLSSystem) -> DiffPoly:
    """Eliminate all x-jets of the beta fields using the evolution system.
    Mixed jets b_{k,txx...} are handled by t-differentiating the first-order
    rule.  A non-beta x-jet cannot be eliminated and raises XJetError."""
    rules: dict[JetVar, DiffPoly] = {}

    def rule_for(jv: JetVar) -> DiffPoly:
        if jv not in rules:
            if jv.field not in BETA_FIELDS:
                raise XJetError(f"no elimination rule for x-jet {jv.render()}")
            r = sys.x_rule(jv.field)
            for _ in range(jv.t):
                r = total_dt(r)
            rules[jv] = r
        return rules[jv]

    current = p
    while True:
        out = DiffPoly()
        progressed = False
        for (jets, lp), c in current.terms.items():
            idx = next((i for i, j in enumerate(jets) if j.x), None)
            if idx is None:
                out = out + DiffPoly({(jets, lp): c})
                continue
            progressed = True
            rest = jets[:idx] + jets[idx + 1:]
            out = out + DiffPoly({(rest, lp): c}) * rule_for(jets[idx])
        current = out
        if not progressed:
            return current


def substitute_fields(p: DiffPoly, images: Mapping[str, DiffPoly]) -> DiffPoly:
    """Replace whole fields by differential polynomials: a jet (f, t, x)
    maps to d_t^t d_x^x applied to images[f].  Images must be x-jet free."""
    expanded: dict[tuple, DiffPoly] = {}

    def image_jet(jv: JetVar) -> DiffPoly:
        key = (jv.field, jv.t, jv.x)
        if key not in expanded:
            img = images[jv.field]
            for _ in range(jv.t):
                img = total_dt(img)
            for _ in range(jv.x):
                img = total_dx(img)
            expanded[key] = img
        return expanded[key]

    out = DiffPoly()
    for (jets, lp), c in p.terms.items():
        term = DiffPoly({((), lp): c})
        for jv in jets:
            if jv.field in images:
                term = term * image_jet(jv)
            else:
                term = term * DiffPoly.of_jet(jv)
        out = out + term
    return out


def rewrite_jets(p: DiffPoly, rules: Mapping[JetVar, DiffPoly],
                 max_passes: int = 32) -> DiffPoly:
    """Repeatedly replace exact jet occurrences until stable."""
    current = p
    for _ in range(max_passes):
        out = DiffPoly()
        progressed = False
        for (jets, lp), c in current.terms.items():
            idx = next((i for i, j in enumerate(jets) if j in rules), None)
            if idx is None:
                out = out + DiffPoly({(jets, lp): c})
                continue
            progressed = True
            rest = jets[:idx] + jets[idx + 1:]
            out = out + DiffPoly({(rest, lp): c}) * rules[jets[idx]]
        current = out
        if not progressed:
            return current
    raise ValueError("jet rewriting did not terminate")


# ---------------------------------------------------------------------------
# 3x3 matrices of differential polynomials
# ---------------------------------------------------------------------------

class MatrixDP:
    """Fixed-shape 3x3 array of DiffPoly entries."""

    __slots__ = ("rows",)

    def __init__(self, rows: Sequence[Sequence[DiffPoly]]):
        if len(rows) != 3 or any(len(r) != 3 for r in rows):
            raise ValueError("MatrixDP is 3x3")
        self.rows = tuple(tuple(r) for r in rows)

    @staticmethod
    def zero() -> "MatrixDP":
        return MatrixDP([[DiffPoly() for _ in range(3)] for _ in range(3)])

    @staticmethod
    def diagonal(entries: Sequence[DiffPoly]) -> "MatrixDP":
        m = [[DiffPoly() for _ in range(3)] for _ in range(3)]
        for i, e in enumerate(entries):
            m[i][i] = e
        return MatrixDP(m)

    def __getitem__(self, idx):
        return self.rows[idx]

    def __add__(self, other: "MatrixDP") -> "MatrixDP":
        return MatrixDP([[self.rows[i][j] + other.rows[i][j]
                          for j in range(3)] for i in range(3)])

    def __sub__(self, other: "MatrixDP") -> "MatrixDP":
        return MatrixDP([[self.rows[i][j] - other.rows[i][j]
                          for j in range(3)] for i in range(3)])

    def __neg__(self) -> "MatrixDP":
        return MatrixDP([[-self.rows[i][j] for j in range(3)] for i in range(3)])

    def scaled(self, c: Scalar) -> "MatrixDP":
        return MatrixDP([[self.rows[i][j].scaled(c) for j in range(3)]
                         for i in range(3)])

    def __eq__(self, other) -> bool:
        return isinstance(other, MatrixDP) and self.rows == other.rows

    def is_zero(self) -> bool:
        return all(self.rows[i][j].is_zero() for i in range(3) for j in range(3))

    def term_count(self) -> int:
        return sum(self.rows[i][j].term_count() for i in range(3) for j in range(3))


def mat_mul(a: MatrixDP, b: MatrixDP) -> MatrixDP:
    out = [[DiffPoly() for _ in range(3)] for _ in range(3)]
    for i in range(3):
        for j in range(3):
            acc = DiffPoly()
            for k in range(3):
                acc = acc + a.rows[i][k] * b.rows[k][j]
            out[i][j] = acc
    return MatrixDP(out)


def mat_commutator(a: MatrixDP, b: MatrixDP) -> MatrixDP:
    return mat_mul(a, b) - mat_mul(b, a)


def mat_dt(a: MatrixDP) -> MatrixDP:
    return MatrixDP([[total_dt(a.rows[i][j]) for j in range(3)] for i in range(3)])


def mat_dx(a: MatrixDP) -> MatrixDP:
    return MatrixDP([[total_dx(a.rows[i][j]) for j in range(3)] for i in range(3)])


def mat_substitute(a: MatrixDP, sys: CNLSSystem) -> MatrixDP:
    return MatrixDP([[substitute(a.rows[i][j], sys) for j in range(3)]
                     for i in range(3)])
