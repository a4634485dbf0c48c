"""Lax matrices, the zero-curvature residual, and the derivation of the
coupled NLS family, plus the connection-ansatz compatibility analysis.

The compatibility equation of Psi_x = L1 Psi, Psi_t = L2 Psi fixes the
curvature only up to two sign choices and the commutator order; the four
variants come in negation pairs, so the solver certifies exactly one pair
and returns its canonical representative.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .diffpoly import (CNLSSystem, DiffPoly, JetVar, KMatrix, MatrixDP, beta,
                       jet, mat_commutator, mat_dt, mat_dx, mat_mul,
                       mat_substitute, substitute, substitute_fields,
                       total_dt, total_dx)
from .loop_algebra import LoopGenerator, gen, p_bracket
from .scalars import (QQI_I, QQI_ONE, QQI_ZERO, QQi, S_I, S_ONE, S_ZERO,
                      Scalar)

FAMILIES = ("L", "M", "N")


class ModeCollisionError(ValueError):
    """Two distinct ansatz slots landed on the same loop generator."""


@dataclass(frozen=True)
class Convention:
    """Sign pair for (d/dt L1, d/dx L2) plus commutator order.

    order 'LR' means [L1, L2]; 'RL' means [L2, L1].  dx_sign is always the
    opposite of dt_sign."""
    dt_sign: int
    order: str

    def __post_init__(self):
        if self.dt_sign not in (1, -1) or self.order not in ("LR", "RL"):
            raise ValueError("invalid convention")

    @property
    def dx_sign(self) -> int:
        return -self.dt_sign

    def negation(self) -> "Convention":
        return Convention(-self.dt_sign, "RL" if self.order == "LR" else "LR")

    def render(self) -> str:
        s = "+" if self.dt_sign == 1 else "-"
        x = "+" if self.dx_sign == 1 else "-"
        comm = "[L1,L2]" if self.order == "LR" else "[L2,L1]"
        return f"({s}dtL1, {x}dxL2, {comm})"


CANONICAL_CONVENTION = Convention(1, "LR")


def all_conventions() -> list:
    return [Convention(s, o) for s in (1, -1) for o in ("LR", "RL")]


@dataclass(frozen=True)
class LaxPair:
    L1: MatrixDP
    L2: MatrixDP
    family: str
    kmatrix: KMatrix
    eps: Scalar

    def __post_init__(self):
        for i in range(3):
            for j in range(3):
                for (jets, lp) in self.L2.rows[i][j].terms:
                    if lp > 1 or any(jv.t > 0 or jv.x > 0 for jv in jets):
                        raise ValueError("L2 must have lambda degree <= 1 and "
                                         "jet order 0")
                for (jets, lp) in self.L1.rows[i][j].terms:
                    if lp > 2 or any(jv.t > 1 or jv.x > 0 for jv in jets):
                        raise ValueError("L1 must have lambda degree <= 2 and "
                                         "t-order <= 1")


def build_lax(family: str, kmatrix: KMatrix | None = None,
              eps: Scalar | None = None) -> LaxPair:
    """Transcribe the spectral-problem matrices for the requested family.

    Family L carries independent diagonal couplings (m1, m2); family M
    requires m1 = -m2; family N requires both zero.  The off-diagonal
    coupling kappa is present in all three."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    eps = eps if eps is not None else Scalar.symbol("eps")
    if kmatrix is None:
        if family == "L":
            kmatrix = KMatrix.symbolic()
        elif family == "M":
            m = Scalar.symbol("m")
            kmatrix = KMatrix(m, -m, Scalar.symbol("kappa"))
        else:
            kmatrix = KMatrix(S_ZERO, S_ZERO, Scalar.symbol("kappa"))
    if family == "M" and not (kmatrix.m1 + kmatrix.m2).is_zero():
        raise ValueError("family M requires m1 = -m2")
    if family == "N" and not (kmatrix.m1.is_zero() and kmatrix.m2.is_zero()):
        raise ValueError("family N requires m1 = m2 = 0")

    half_eps = eps / QQi(2)
    lam = DiffPoly.lam(1)
    lam2 = DiffPoly.lam(2)
    b1, b2 = DiffPoly.of_jet(beta(1)), DiffPoly.of_jet(beta(2))
    b1c, b2c = DiffPoly.of_jet(beta(1, True)), DiffPoly.of_jet(beta(2, True))
    b1t, b2t = DiffPoly.of_jet(beta(1, t=1)), DiffPoly.of_jet(beta(2, t=1))
    b1ct, b2ct = DiffPoly.of_jet(beta(1, True, t=1)), DiffPoly.of_jet(beta(2, True, t=1))
    i1 = (b1 * b1c).scaled(half_eps)     # eps/2 |b1|^2
    i2 = (b2 * b2c).scaled(half_eps)
    three = Scalar.number(3)
    six = Scalar.number(6)

    l1 = [[None] * 3 for _ in range(3)]
    l1[0][0] = (i1 + i2 + lam2.scaled(six)).scaled(-S_I)
    l1[0][1] = b1ct + (lam * b1c).scaled(three)
    l1[0][2] = b2ct + (lam * b2c).scaled(three)
    l1[1][0] = ((-b1t) + (lam * b1).scaled(three)).scaled(half_eps)
    l1[2][0] = ((-b2t) + (lam * b2).scaled(three)).scaled(half_eps)
    l1[1][1] = (i1 + lam2.scaled(three) + DiffPoly.of_scalar(kmatrix.m1)).scaled(S_I)
    l1[2][2] = (i2 + lam2.scaled(three) + DiffPoly.of_scalar(kmatrix.m2)).scaled(S_I)
    l1[1][2] = ((b2c * b1).scaled(half_eps) + DiffPoly.of_scalar(kmatrix.kappa)).scaled(S_I)
    l1[2][1] = ((b2 * b1c).scaled(half_eps) + DiffPoly.of_scalar(kmatrix.kappa)).scaled(S_I)

    l2 = [[None] * 3 for _ in range(3)]
    l2[0][0] = lam.scaled(Scalar.number(2))
    l2[0][1] = b1c.scaled(S_I)
    l2[0][2] = b2c.scaled(S_I)
    l2[1][0] = b1.scaled(S_I * half_eps)
    l2[2][0] = b2.scaled(S_I * half_eps)
    l2[1][1] = -lam
    l2[2][2] = -lam
    l2[1][2] = DiffPoly.zero()
    l2[2][1] = DiffPoly.zero()

    return LaxPair(MatrixDP(l1), MatrixDP(l2), family, kmatrix, eps)


def curvature(lax: LaxPair, conv: Convention) -> MatrixDP:
    """s1*dt(L1) + s2*dx(L2) + commutator; x-jets left unsubstituted."""
    sign_dt = Scalar.number(conv.dt_sign)
    sign_dx = Scalar.number(conv.dx_sign)
    comm = mat_commutator(lax.L1, lax.L2) if conv.order == "LR" \
        else mat_commutator(lax.L2, lax.L1)
    return mat_dt(lax.L1).scaled(sign_dt) + mat_dx(lax.L2).scaled(sign_dx) + comm


def _solve_linear_qqi(rows: list):
    """Solve small exact linear systems; rows are ([QQi]*n, QQi rhs).
    Returns (status, solution) with status in {'unique','inconsistent',
    'underdetermined'}."""
    if not rows:
        return "underdetermined", None
    n = len(rows[0][0])
    mat = [list(r[0]) + [r[1]] for r in rows]
    pivots = []
    row_at = 0
    for col in range(n):
        piv = next((r for r in range(row_at, len(mat)) if mat[r][col]), None)
        if piv is None:
            continue
        mat[row_at], mat[piv] = mat[piv], mat[row_at]
        pv = mat[row_at][col]
        mat[row_at] = [v / pv for v in mat[row_at]]
        for r in range(len(mat)):
            if r != row_at and mat[r][col]:
                f = mat[r][col]
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[row_at])]
        pivots.append(col)
        row_at += 1
    for r in range(row_at, len(mat)):
        if mat[r][n]:
            return "inconsistent", None
    if len(pivots) < n:
        return "underdetermined", None
    sol = [QQI_ZERO] * n
    for r, col in enumerate(pivots):
        sol[col] = mat[r][n]
    return "unique", sol


_UNKNOWNS = ("ca", "cb", "cc")


def _coefficient_equations(residual: MatrixDP) -> list:
    """Per monomial, the residual is affine in the rewrite unknowns; emit
    exact numeric rows (coeffs for ca,cb,cc, rhs)."""
    rows = []
    for i in range(3):
        for j in range(3):
            for (jets, lp), coeff in residual.rows[i][j].terms.items():
                decomp = coeff.poly_in(_UNKNOWNS)
                monos = set()
                for part in decomp.values():
                    monos |= set(part.terms)
                for mono in monos:
                    a = QQI_ZERO
                    b = [QQI_ZERO] * 3
                    for key, part in decomp.items():
                        q = part.terms.get(mono)
                        if q is None:
                            continue
                        deg = sum(key)
                        if deg == 0:
                            a = a + q
                        elif deg == 1:
                            b[key.index(1)] = b[key.index(1)] + q
                        else:
                            raise ValueError("residual not affine in rewrite "
                                             "coefficients")
                    rows.append((b, -a))
    return rows


@dataclass
class DerivationReport:
    family: str
    per_convention: dict
    canonical: str
    negation_pair: tuple
    coefficients: tuple
    overall_sign: str
    constants_map: dict

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "conventions": {k: dict(v) for k, v in sorted(self.per_convention.items())},
            "canonical_convention": self.canonical,
            "negation_pair": list(self.negation_pair),
            "coefficients": [str(c) for c in self.coefficients],
            "overall_sign": self.overall_sign,
            "constants_map": dict(sorted(self.constants_map.items())),
        }


class DerivationError(RuntimeError):
    def __init__(self, msg: str, minimal_residual_terms: int):
        super().__init__(msg)
        self.minimal_residual_terms = minimal_residual_terms


def derive_pde(lax: LaxPair):
    """Treat the rewrite coefficients (a, b, c) as unknowns and demand the
    substituted curvature vanish identically; returns (system, convention,
    report).  Exactly one negation pair of conventions closes; the canonical
    member has dt_sign=+1 and commutator order [L1, L2] when available."""
    unknown_sys = CNLSSystem(Scalar.symbol("ca"), Scalar.symbol("cb"),
                             Scalar.symbol("cc"), lax.kmatrix, lax.eps)
    per_conv = {}
    solved = {}
    min_terms = None
    for conv in all_conventions():
        residual = mat_substitute(curvature(lax, conv), unknown_sys)
        rows = _coefficient_equations(residual)
        status, sol = _solve_linear_qqi(rows)
        entry = {"solved": status == "unique" and sol is not None}
        if entry["solved"]:
            entry["a"], entry["b"], entry["c"] = (str(v) for v in sol)
            solved[conv] = sol
        else:
            entry["status"] = status
            ref = mat_substitute(curvature(lax, conv),
                                 CNLSSystem(S_ONE, S_ONE, S_ONE,
                                            lax.kmatrix, lax.eps))
            entry["residual_terms_at_unit"] = ref.term_count()
            if min_terms is None or ref.term_count() < min_terms:
                min_terms = ref.term_count()
        per_conv[conv.render()] = entry
    if not solved:
        raise DerivationError("no convention closes the curvature",
                              min_terms or -1)
    # the closing set must be a single negation pair with equal coefficients
    convs = list(solved)
    if len(convs) != 2 or convs[0].negation() != convs[1] \
            or solved[convs[0]] != solved[convs[1]]:
        raise DerivationError("curvature closed outside a negation pair",
                              0)
    canonical = min(convs, key=lambda c: (c.dt_sign != 1, c.order != "LR"))
    a, b, c = solved[canonical]
    system = CNLSSystem(Scalar.from_qqi(a), Scalar.from_qqi(b),
                        Scalar.from_qqi(c), lax.kmatrix, lax.eps)
    check = verify_zero_curvature(lax, system, canonical)
    if check != 0:
        raise DerivationError("solved coefficients left residual terms", check)
    sign = "+1" if (a == QQI_ONE and b == QQI_ONE and c == QQI_ONE) else "-1"
    report = DerivationReport(
        family=lax.family,
        per_convention=per_conv,
        canonical=canonical.render(),
        negation_pair=(canonical.render(), canonical.negation().render()),
        coefficients=(a, b, c),
        overall_sign=sign,
        constants_map={"m1": "-i*(2*eta1+mu2)", "m2": "-i*(eta1+2*mu2)",
                       "kappa": "-i*mu1 (measured; printed relation flips "
                                "one off-diagonal sign)"},
    )
    return system, canonical, report


def verify_zero_curvature(lax: LaxPair, sys: CNLSSystem, conv: Convention) -> int:
    """Number of monomials surviving substitution of the evolution system
    into the curvature; 0 means the pair is compatible."""
    return mat_substitute(curvature(lax, conv), sys).term_count()


# ---------------------------------------------------------------------------
# Connection ansatz and the compatibility constraints
# ---------------------------------------------------------------------------

UNKNOWN_FIELDS = ("A1", "A2", "B1", "B2", "C1", "C2",
                  "D1", "D2", "P1", "P2", "K1", "K2")


def _dp_field(name: str) -> DiffPoly:
    return DiffPoly.of_jet(jet(name))


@dataclass(frozen=True)
class ConnectionAnsatz:
    """The x- and t-components of the connection form, written over loop
    generators with differential-polynomial coefficients.

    F = -i sum_k [A_k T[0,k]^(n) + B_k T[k,0]^(-n) + C_k T[0,k]^(n+l)
                  + D_k T[k,0]^(-n+l) + P_k T[1,k]^(0) + K_k T[2,k]^(0)
                  + 3i T[k,k]^(2l)]
    G = sum_k [b_k T[0,k]^(n) + eps b_k* T[k,0]^(-n) - i T[k,k]^(l)]
    """
    n: int = 1
    l: int = 1
    eps: Scalar = field(default_factory=lambda: Scalar.symbol("eps"))

    def f_terms(self) -> list:
        mi = -S_I
        out = []
        for k in (1, 2):
            out += [
                (gen(0, k, self.n), _dp_field(f"A{k}").scaled(mi)),
                (gen(k, 0, -self.n), _dp_field(f"B{k}").scaled(mi)),
                (gen(0, k, self.n + self.l), _dp_field(f"C{k}").scaled(mi)),
                (gen(k, 0, -self.n + self.l), _dp_field(f"D{k}").scaled(mi)),
                (gen(1, k, 0), _dp_field(f"P{k}").scaled(mi)),
                (gen(2, k, 0), _dp_field(f"K{k}").scaled(mi)),
                (gen(k, k, 2 * self.l), DiffPoly.number(3)),
            ]
        return out

    def g_terms(self) -> list:
        out = []
        for k in (1, 2):
            out += [
                (gen(0, k, self.n), DiffPoly.of_jet(beta(k))),
                (gen(k, 0, -self.n), DiffPoly.of_jet(beta(k, True), self.eps)),
                (gen(k, k, self.l), DiffPoly.number(0, -1)),
            ]
        return out

    def check_collisions(self):
        for name, terms in (("F", self.f_terms()), ("G", self.g_terms())):
            gens = [g for g, _ in terms]
            if len(gens) != len(set(gens)):
                dup = next(g for g in gens if gens.count(g) > 1)
                raise ModeCollisionError(
                    f"{name} slots collide on {dup.render()}; choose different "
                    f"(n, l) than ({self.n}, {self.l})")


def _to_p_basis(terms: list) -> dict:
    """T[l,m]^(h) = -i P[l,m]^(h) + i d(l,m) P[0,0]^(h) with P the
    matrix-unit loop basis of the fiber representation."""
    out: dict[tuple, DiffPoly] = {}

    def acc(key, dp):
        if key in out:
            out[key] = out[key] + dp
        else:
            out[key] = dp

    for g, dp in terms:
        acc((g.l, g.m, g.n), dp.scaled(-S_I))
        if g.l == g.m:
            acc((0, 0, g.n), dp.scaled(S_I))
    return {k: v for k, v in out.items() if not v.is_zero()}


def ansatz_constraints(ansatz: ConnectionAnsatz,
                       conv: Convention = CANONICAL_CONVENTION) -> list:
    """Compatibility of the connection components in the fiber
    representation: collect the coefficient of every independent operator
    P[l,m]^(mode) in  s1 dt(F) + s2 dx(G) + [F, G].

    The trace operator P[0,0] absorbs the diagonal corrections of the
    representation (T[0,0] represents as zero), which is what makes the
    printed closed-form solution consistent."""
    ansatz.check_collisions()
    f_p = _to_p_basis(ansatz.f_terms())
    g_p = _to_p_basis(ansatz.g_terms())
    sdt = Scalar.number(conv.dt_sign)
    sdx = Scalar.number(conv.dx_sign)
    z: dict[tuple, DiffPoly] = {}

    def acc(key, dp):
        if key in z:
            z[key] = z[key] + dp
        else:
            z[key] = dp

    for key, dp in f_p.items():
        acc(key, total_dt(dp).scaled(sdt))
    for key, dp in g_p.items():
        acc(key, total_dx(dp).scaled(sdx))
    left, right = (f_p, g_p) if conv.order == "LR" else (g_p, f_p)
    for key, dp in p_bracket(left, right).items():
        acc(key, dp)
    out = [(key, dp) for key, dp in z.items() if not dp.is_zero()]
    out.sort(key=lambda kv: (kv[0][2], kv[0][0], kv[0][1]))
    return out


@dataclass(frozen=True)
class CoefficientSolution:
    """Closed forms for the undetermined connection coefficients."""
    images: Mapping[str, DiffPoly]

    @staticmethod
    def default(eps: Scalar | None = None) -> "CoefficientSolution":
        eps = eps if eps is not None else Scalar.symbol("eps")
        three = Scalar.number(3)
        ieps = S_I * eps
        images = {}
        for k in (1, 2):
            images[f"A{k}"] = DiffPoly.of_jet(beta(k, t=1)).scaled(-S_ONE)
            images[f"B{k}"] = DiffPoly.of_jet(beta(k, True, t=1), eps)
            images[f"C{k}"] = DiffPoly.of_jet(beta(k)).scaled(-three)
            images[f"D{k}"] = DiffPoly.of_jet(beta(k, True)).scaled(-three * eps)
            images[f"P{k}"] = (DiffPoly.of_jet(beta(1, True))
                               * DiffPoly.of_jet(beta(k))).scaled(ieps) \
                + DiffPoly.of_scalar(Scalar.symbol(f"eta{k}"))
            images[f"K{k}"] = (DiffPoly.of_jet(beta(2, True))
                               * DiffPoly.of_jet(beta(k))).scaled(ieps) \
                + DiffPoly.of_scalar(Scalar.symbol(f"mu{k}"))
        return CoefficientSolution(images)

    def substituted(self, mapping: Mapping[str, Scalar]) -> "CoefficientSolution":
        out = {}
        for name, dp in self.images.items():
            out[name] = DiffPoly({k: v.substitute(mapping)
                                  for k, v in dp.terms.items()})
        return CoefficientSolution(out)


def measured_constants_map() -> dict:
    """Coupling entries of the family reproduced by the closed forms."""
    i = QQI_I
    two = Scalar.number(2)
    return {
        "m1": (Scalar.symbol("eta1") * two + Scalar.symbol("mu2")).scaled(-i),
        "m2": (Scalar.symbol("eta1") + Scalar.symbol("mu2") * two).scaled(-i),
        "k12": Scalar.symbol("mu1").scaled(-i),
        "k21": Scalar.symbol("eta2").scaled(-i),
    }


def _expected_dynamic_residuals(eps: Scalar) -> dict:
    """The four dynamic constraint residuals under the closed forms, in the
    form of coupled NLS polynomials with the measured coupling matrix and a
    doubled nonlinearity weight."""
    cmap = measured_constants_map()
    m = [[cmap["m1"], cmap["k12"]], [cmap["k21"], cmap["m2"]]]
    intensity = DiffPoly.zero()
    for k in (1, 2):
        intensity = intensity + DiffPoly.of_jet(beta(k)) * DiffPoly.of_jet(beta(k, True))
    two_eps = Scalar.number(2) * eps
    out = {}
    for k in (1, 2):
        e = DiffPoly.of_jet(beta(k, x=1), S_I) + DiffPoly.of_jet(beta(k, t=2))
        for j in (1, 2):
            e = e + DiffPoly.of_jet(beta(j), m[k - 1][j - 1])
        e = e + intensity * DiffPoly.of_jet(beta(k), two_eps)
        out[("beta", k)] = e
        ec = DiffPoly.of_jet(beta(k, True, x=1), -S_I) + DiffPoly.of_jet(beta(k, True, t=2))
        for j in (1, 2):
            ec = ec + DiffPoly.of_jet(beta(j, True), m[j - 1][k - 1])
        ec = ec + intensity * DiffPoly.of_jet(beta(k, True), two_eps)
        out[("conj", k)] = (-ec).scaled(eps)
    return out


@dataclass
class PropositionReport:
    static_keys: list
    static_mismatches: list
    dynamic_matches: dict
    mismatch_count: int
    measured_map: dict
    printed_map_discrepancy: dict
    eps_scale: str

    def ok(self) -> bool:
        return self.mismatch_count == 0

    def to_dict(self) -> dict:
        return {
            "static_equations": len(self.static_keys),
            "static_mismatches": [str(k) for k in self.static_mismatches],
            "dynamic_matches": {str(k): v for k, v in sorted(self.dynamic_matches.items())},
            "mismatch_count": self.mismatch_count,
            "measured_map": {k: str(v) for k, v in sorted(self.measured_map.items())},
            "printed_map_discrepancy": self.printed_map_discrepancy,
            "eps_scale": self.eps_scale,
        }


def verify_proposition(sol: CoefficientSolution | None = None,
                       ansatz: ConnectionAnsatz | None = None,
                       conv: Convention = CANONICAL_CONVENTION) -> PropositionReport:
    """Substitute the closed forms into the compatibility constraints.

    All constraints close identically except the four carrying the x-jets,
    which reduce exactly to the coupled NLS polynomials of the measured
    family (nonlinearity weight doubled relative to the spectral matrices,
    coupling matrix from measured_constants_map).  The printed specialization
    eta2 = -mu1 = -i*kappa flips the sign of one off-diagonal entry relative
    to the symmetric coupling matrix; that discrepancy is part of the report,
    not an error."""
    ansatz = ansatz or ConnectionAnsatz()
    sol = sol or CoefficientSolution.default(ansatz.eps)
    constraints = ansatz_constraints(ansatz, conv)
    dynamic_key = {
        (0, 1, ansatz.n): ("beta", 1),
        (0, 2, ansatz.n): ("beta", 2),
        (1, 0, -ansatz.n): ("conj", 1),
        (2, 0, -ansatz.n): ("conj", 2),
    }
    expected = _expected_dynamic_residuals(ansatz.eps)
    static_keys, static_bad = [], []
    dynamic = {}
    mismatches = 0
    for key, dp in constraints:
        reduced = substitute_fields(dp, sol.images)
        if key in dynamic_key:
            label = dynamic_key[key]
            good = reduced == expected[label]
            dynamic[label] = good
            if not good:
                mismatches += 1
        else:
            static_keys.append(key)
            if not reduced.is_zero():
                static_bad.append(key)
                mismatches += 1
    cmap = measured_constants_map()
    printed = {"eta2": Scalar.symbol("kappa").scaled(-QQI_I),
               "mu1": Scalar.symbol("kappa").scaled(QQI_I)}
    k12 = cmap["k12"].substitute(printed)
    k21 = cmap["k21"].substitute(printed)
    discrepancy = {
        "printed_relation": "eta2 = -mu1 = -i*kappa",
        "k12_under_printed": k12.render(),
        "k21_under_printed": k21.render(),
        "symmetric_iff": "eta2 = mu1 (measured), not eta2 = -mu1 (printed)",
        "sign_flipped_entries": ["k21", "conjugate k12"],
    }
    return PropositionReport(
        static_keys=static_keys,
        static_mismatches=static_bad,
        dynamic_matches=dynamic,
        mismatch_count=mismatches,
        measured_map=cmap,
        printed_map_discrepancy=discrepancy,
        eps_scale="2",
    )


# ---------------------------------------------------------------------------
# Measured correspondence between the connection components and the Lax pair
# ---------------------------------------------------------------------------

def _lam_invert_neg(p: DiffPoly) -> DiffPoly:
    """lam -> -1/lam on the grading."""
    out = {}
    for (jets, lp), c in p.terms.items():
        out[(jets, -lp)] = c.scaled(QQi((-1) ** lp))
    return DiffPoly(out)


def _collapse_to_matrix(p_terms: Mapping[tuple, DiffPoly]) -> MatrixDP:
    """Generating-function collapse P[l,m]^(h) -> lam^(-h) E[m][l]."""
    rows = [[DiffPoly.zero() for _ in range(3)] for _ in range(3)]
    for (l, m, h), dp in p_terms.items():
        rows[m][l] = rows[m][l] + dp * DiffPoly.lam(-h)
    return MatrixDP(rows)


def match_fiber_to_lax(ansatz: ConnectionAnsatz | None = None) -> dict:
    """Measure the relationship between the closed-form connection
    components and the printed spectral matrices.

    With the measured identification eta2 = mu1 and the doubled nonlinearity
    (spectral eps = 2 * ansatz eps) the collapse of the connection satisfies

        F(lam) = -D L1(-1/lam) D^-1 + (eta1 + mu2) I
        G(lam) = -D L2(-1/lam) D^-1,      D = diag(eps*lam, 1, 1).

    Returns the entry-wise mismatch lists (empty on success)."""
    ansatz = ansatz or ConnectionAnsatz()
    eps = ansatz.eps
    sol = CoefficientSolution.default(eps)
    ident = {"eta2": Scalar.symbol("mu1")}
    images = {k: DiffPoly({key: v.substitute(ident) for key, v in dp.terms.items()})
              for k, dp in sol.images.items()}
    f_p = {k: substitute_fields(dp, images)
           for k, dp in _to_p_basis(ansatz.f_terms()).items()}
    g_p = _to_p_basis(ansatz.g_terms())
    f_mat = _collapse_to_matrix(f_p)
    g_mat = _collapse_to_matrix(g_p)

    cmap = measured_constants_map()
    km = KMatrix(cmap["m1"].substitute(ident), cmap["m2"].substitute(ident),
                 cmap["k12"].substitute(ident))
    lax = build_lax("L", kmatrix=km, eps=Scalar.number(2) * eps)
    d = [DiffPoly.of_scalar(eps) * DiffPoly.lam(1), DiffPoly.number(1),
         DiffPoly.number(1)]
    shift = DiffPoly.of_scalar(Scalar.symbol("eta1") + Scalar.symbol("mu2"))
    mismatches = {"F": [], "G": []}
    for name, mat, lmat, shifted in (("F", f_mat, lax.L1, True),
                                     ("G", g_mat, lax.L2, False)):
        for i in range(3):
            for j in range(3):
                rhs = -_lam_invert_neg(lmat.rows[i][j])
                if shifted and i == j:
                    rhs = rhs + shift
                # F[i][j] d_j == d_i rhs[i][j]  avoids dividing by entries
                lhs = mat.rows[i][j] * d[j]
                if lhs != d[i] * rhs:
                    mismatches[name].append((i, j, lhs.render(),
                                             (d[i] * rhs).render()))
    return mismatches
