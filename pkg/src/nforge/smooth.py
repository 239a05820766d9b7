"""Smooth-locus machinery: Jacobians, minor ideals, the pre-radical Elkik
ideal, and standard-smoothness certificates.

The locus ideal is kept PRE-RADICAL throughout: the paper-level radical is
only ever queried through radical membership of specific elements, so radical
generators are never computed.  The sum over all candidate systems is
under-approximated by generator subsets plus user-supplied systems; every
report derived from it carries that caveat.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations

from .errors import CertificateError, IdentityFails, SystemNotInIdeal
from .groebner import Ideal, MembershipCertificate, ideal_quotient, contains_unit
from .poly import Context, Poly, format_poly
from .rings import BaseRing, Elem, Presentation, format_elem

Matrix = list[list[Poly]]


def jacobian(fs: list[Poly], names: list[str]) -> Matrix:
    """r x n matrix of formal partials (rows: relations, columns: variables)."""
    return [[f.diff(v) for v in names] for f in fs]


def det_poly(m: Matrix) -> Poly:
    """Determinant by cofactor expansion along the first row (exact)."""
    n = len(m)
    if n == 0:
        raise ValueError("empty matrix")
    if any(len(row) != n for row in m):
        raise ValueError("determinant of a non-square matrix")
    if n == 1:
        return m[0][0]
    ctx = m[0][0].ctx
    total = Poly.zero(ctx)
    for j in range(n):
        entry = m[0][j]
        if entry.is_zero():
            continue
        sub = [[row[k] for k in range(n) if k != j] for row in m[1:]]
        cof = det_poly(sub)
        total = total + (entry * cof if j % 2 == 0 else -(entry * cof))
    return total


def adjugate(m: Matrix) -> Matrix:
    """Adjugate (transposed cofactor matrix): m * adj(m) == det(m) * Id."""
    n = len(m)
    ctx = m[0][0].ctx
    if n == 1:
        return [[Poly.const(ctx, 1)]]
    out = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            sub = [[m[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            cof = det_poly(sub)
            out[j][i] = cof if (i + j) % 2 == 0 else -cof
    return out


def mat_mul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = a[i][0] * b[0][j]
            for k in range(1, inner):
                acc = acc + a[i][k] * b[k][j]
            row.append(acc)
        out.append(row)
    return out


def minors_of(fs: list[Poly], names: list[str], r: int) -> list[tuple[tuple[int, ...], Poly]]:
    """All r x r minors of the Jacobian, tagged by their column index sets."""
    jac = jacobian(fs, names)
    out = []
    for cols in combinations(range(len(names)), r):
        sub = [[jac[i][c] for c in cols] for i in range(r)]
        out.append((cols, det_poly(sub)))
    return out


def delta_ideal(fs: list[Poly], names: list[str], pres: Presentation) -> Ideal:
    """Ideal generated by all r x r minors of the Jacobian of fs (r = len fs)."""
    r = len(fs)
    if r == 0:
        return Ideal(pres.ctx, [Poly.const(pres.ctx, 1)],
                     budget=pres.base.budget, cache=pres.base.cache)
    if r > len(names):
        raise ValueError("system larger than the variable count")
    gens = [m for _, m in minors_of(fs, list(names), r)]
    return Ideal(pres.ctx, gens, budget=pres.base.budget, cache=pres.base.cache)


class Completion:
    """Square completion H of the Jacobian of f: unit rows below, det = M.

    Lower rows have entries from {0, 1} only, per the construction; they are
    either given explicitly or derived from a chosen column set (standard
    basis rows on the complementary columns).
    """

    def __init__(self, fs: list[Poly], names: list[str], rows=None, columns=None):
        r, n = len(fs), len(names)
        ctx = fs[0].ctx
        jac = jacobian(fs, list(names))
        lower = []
        if rows is not None:
            for row in rows:
                if len(row) != n or any(v not in (0, 1) for v in row):
                    raise IdentityFails(f"completion rows must be 0/1 vectors of length {n}")
                lower.append([Poly.const(ctx, v) for v in row])
        else:
            chosen = set(columns)
            for k in range(n):
                if k not in chosen:
                    lower.append([Poly.const(ctx, 1 if c == k else 0) for c in range(n)])
        if len(lower) != n - r:
            raise IdentityFails(f"expected {n - r} completion rows, got {len(lower)}")
        self.names = list(names)
        self.matrix: Matrix = jac + lower
        self.lower_rows = [[int(e.constant_value()) for e in row] for row in lower]
        self.minor = det_poly(self.matrix)

    def describe(self):
        return {"completion_rows": self.lower_rows, "minor": format_poly(self.minor)}


class JacobianSystem:
    """The tuple (f, H_j, M_j, N_j, P, d) of the step hypothesis, certified.

    Verifies on construction: each f_i lies in I, each witness N_j multiplies
    I into (f) (certificates kept), and d == P modulo I.
    """

    def __init__(self, pres: Presentation, fs: list[Poly], completions: list[Completion],
                 witnesses: list[Elem], d: Elem):
        self.pres = pres
        self.fs = [f.lift(pres.ctx) for f in fs]
        self.r = len(self.fs)
        self.n = len(pres.vars)
        if self.r > self.n:
            raise SystemNotInIdeal("system has more polynomials than variables")
        self.completions = completions
        self.witnesses = [Elem.of(w).lift(pres.ctx) if w.ctx != pres.ctx else Elem.of(w)
                          for w in witnesses]
        if len(witnesses) != len(completions):
            raise SystemNotInIdeal("need one witness per minor")
        for w in self.witnesses + [Elem.of(d)]:
            den = w.den
            if not den.is_constant():
                extra = den.variables_used() - set(pres.base.vars)
                if extra:
                    raise SystemNotInIdeal(
                        f"denominator {format_poly(den)} uses non-base variables {extra}")
                if not pres.base.is_unit_poly(den.restrict(pres.base.ctx)):
                    raise SystemNotInIdeal(
                        f"denominator {format_poly(den)} is not a unit of the base")
        self.d = d
        rel_ideal = pres.relations_ideal()
        self.f_certs = []
        for f in self.fs:
            rem, cert = rel_ideal.normal_form(f)
            if not rem.is_zero():
                raise SystemNotInIdeal(f"{format_poly(f)} is not in the relations ideal")
            self.f_certs.append(cert)
        f_ideal = Ideal(pres.ctx, self.fs + [r.lift(pres.ctx) for r in pres.base.relations],
                        budget=pres.base.budget, cache=pres.base.cache)
        self.witness_certs = []
        for nj in self.witnesses:
            row = []
            for q in pres.relations:
                rem, cert = f_ideal.normal_form(nj.num * q)
                if not rem.is_zero():
                    raise SystemNotInIdeal(
                        f"witness {format_elem(nj)} fails membership: "
                        f"N*{format_poly(q)} leaves remainder {format_poly(rem)}")
                row.append(cert)
            self.witness_certs.append(row)
        self.minors = [c.minor for c in completions]
        P = Elem(Poly.zero(pres.ctx))
        for nj, mj in zip(self.witnesses, self.minors):
            P = P + nj * mj
        self.P = P
        # d == P modulo I, on cleared numerators
        diff = Elem.of(d).lift(pres.ctx) - P
        rem, cert = rel_ideal.normal_form(diff.num)
        self.d_congruence_rem = rem
        self.d_congruence_cert = cert
        self.d_congruence_den = diff.den

    def congruence_holds(self) -> bool:
        return self.d_congruence_rem.is_zero()

    def describe(self):
        return {
            "f": [format_poly(f) for f in self.fs],
            "completions": [c.describe() for c in self.completions],
            "witnesses": [format_elem(w) for w in self.witnesses],
            "P": format_elem(self.P),
            "d": format_elem(Elem.of(self.d)),
        }


class SmoothnessCertificate:
    """Witness that 1 = sum(N_j * M_j) + sum(c_i * rel_i) exactly.

    Witnesses and relation cofactors are Elems (their denominator is the
    certified base unit found by the search, 1 elsewhere).  Multiply-back is
    checked on construction and exposed via verify().
    """

    def __init__(self, pres: Presentation, fs: list[Poly],
                 minors: list[tuple[tuple[int, ...], Poly]],
                 witnesses: list[Elem], unit: Poly, rel_cofactors: list[Elem],
                 witness_certs: list[list[MembershipCertificate]]):
        self.pres = pres
        self.fs = fs
        self.minors = minors
        self.witnesses = witnesses
        self.unit = unit
        self.rel_cofactors = rel_cofactors
        self.witness_certs = witness_certs
        self.verify()

    def P(self) -> Elem:
        acc = Elem(Poly.zero(self.pres.ctx))
        for w, (_, m) in zip(self.witnesses, self.minors):
            acc = acc + w * m
        return acc

    def verify(self):
        rels = self.pres.full_relations()
        acc = self.P()
        for c, rel in zip(self.rel_cofactors, rels):
            acc = acc + c * rel
        if not acc == Elem(Poly.const(self.pres.ctx, 1)):
            raise CertificateError("smoothness certificate fails multiply-back")
        for row in self.witness_certs:
            for cert in row:
                cert.verify()
        return True

    def describe(self):
        return {
            "system": [format_poly(f) for f in self.fs],
            "minors": [{"columns": list(cols), "value": format_poly(m)}
                       for cols, m in self.minors],
            "witnesses": [format_elem(w) for w in self.witnesses],
            "unit": format_poly(self.unit),
            "relation_cofactors": [format_elem(c) for c in self.rel_cofactors],
        }


class ElkikResult:
    """Pre-radical locus ideal sum over the systems actually used.

    Always an under-approximation of the paper-level sum over all systems;
    reports must carry `under_approximation: true`.
    """

    def __init__(self, pres: Presentation, ideal: Ideal, systems: list[dict]):
        self.pres = pres
        self.ideal = ideal
        self.systems = systems
        self.under_approximation = True

    def describe(self):
        return {
            "under_approximation": True,
            "systems": self.systems,
            "generators": [format_poly(g) for g in self.ideal.gens],
        }


def _base_unit_args(pres: Presentation):
    if pres.base.kind == "localized":
        return pres.base.vars, pres.base.is_unit_poly
    return None, None


def default_systems(pres: Presentation, max_systems: int = 20) -> list[list[Poly]]:
    """Generator subsets of size r <= n, smallest first, capped and ordered."""
    gens = list(pres.relations)
    n = len(pres.vars)
    out: list[list[Poly]] = [[]]  # the r = 0 convention is always considered
    for r in range(1, min(n, len(gens)) + 1):
        for combo in combinations(range(len(gens)), r):
            out.append([gens[i] for i in combo])
            if len(out) >= max_systems:
                return out
    return out


def elkik_ideal(pres: Presentation, systems: list[list[Poly]] | None = None,
                supplied: list[dict] | None = None, max_systems: int = 20) -> ElkikResult:
    """Pre-radical ideal sum((f):I * Delta_f) + I over the candidate systems.

    `supplied` entries may carry pre-certified colon witnesses:
    {"system": [...], "witnesses": [Elem, ...]} -- each witness is then
    verified by membership (witness * q in (f) for every relation q) instead
    of running the colon computation.
    """
    if systems is None:
        systems = default_systems(pres, max_systems)
    gens: list[Poly] = list(pres.full_relations())
    used: list[dict] = []
    rel_ideal = pres.relations_ideal()
    base_rels = [r.lift(pres.ctx) for r in pres.base.relations]
    for fs in systems:
        fs = [f.lift(pres.ctx) for f in fs]
        for f in fs:
            if not rel_ideal.contains(f):
                raise SystemNotInIdeal(f"candidate {format_poly(f)} not in the relations ideal")
        r = len(fs)
        if r > len(pres.vars):
            continue
        if r == 0:
            colon, _ = ideal_quotient(
                Ideal(pres.ctx, base_rels, budget=pres.base.budget, cache=pres.base.cache),
                Ideal(pres.ctx, pres.relations, budget=pres.base.budget,
                      cache=pres.base.cache) if pres.relations else
                Ideal(pres.ctx, [], budget=pres.base.budget, cache=pres.base.cache),
                certify=False)
            if not pres.relations:
                colon = Ideal(pres.ctx, [Poly.const(pres.ctx, 1)],
                              budget=pres.base.budget, cache=pres.base.cache)
            minor_list = [((), Poly.const(pres.ctx, 1))]
        else:
            colon, _ = ideal_quotient(
                Ideal(pres.ctx, fs + base_rels, budget=pres.base.budget,
                      cache=pres.base.cache),
                Ideal(pres.ctx, pres.relations, budget=pres.base.budget,
                      cache=pres.base.cache),
                certify=False)
            minor_list = minors_of(fs, list(pres.vars), r)
        prods = []
        for c in colon.gens:
            for _, m in minor_list:
                p = c * m
                if not p.is_zero():
                    prods.append(p)
        gens.extend(prods)
        used.append({"system": [format_poly(f) for f in fs],
                     "colon_generators": [format_poly(c) for c in colon.gens],
                     "minors": [format_poly(m) for _, m in minor_list]})
    for entry in supplied or []:
        fs = [f.lift(pres.ctx) for f in entry["system"]]
        f_ideal = Ideal(pres.ctx, fs + base_rels, budget=pres.base.budget,
                        cache=pres.base.cache)
        r = len(fs)
        names = entry.get("variables", list(pres.vars))
        minor_list = minors_of(fs, names, r) if entry.get("all_minors") \
            else [(tuple(), m) for m in entry["minors"]]
        for w in entry["witnesses"]:
            w = Elem.of(w)
            for q in pres.relations:
                rem, _ = f_ideal.normal_form(w.num * q.lift(pres.ctx))
                if not rem.is_zero():
                    raise SystemNotInIdeal(
                        f"supplied witness {format_elem(w)} fails colon membership")
            for _, m in minor_list:
                p = w.num * m
                if not p.is_zero():
                    gens.append(p)
        used.append({"system": [format_poly(f) for f in fs],
                     "witnesses": [format_elem(Elem.of(w)) for w in entry["witnesses"]],
                     "minors": [format_poly(m) for _, m in minor_list],
                     "supplied": True})
    ideal = Ideal(pres.ctx, gens, budget=pres.base.budget, cache=pres.base.cache)
    return ElkikResult(pres, ideal, used)


def certify_standard_smooth(pres: Presentation,
                            extra_systems: list[list[Poly]] | None = None,
                            max_systems: int = 20) -> SmoothnessCertificate | None:
    """Search candidate systems for a cofactor representation of 1.

    Returns None on search exhaustion -- inconclusive, never a proof of
    non-smoothness.
    """
    base_names, unit_test = _base_unit_args(pres)
    systems = default_systems(pres, max_systems)
    for fs in extra_systems or []:
        systems.append([f.lift(pres.ctx) for f in fs])
    rel_ideal = pres.relations_ideal()
    base_rels = [r.lift(pres.ctx) for r in pres.base.relations]
    rels = pres.full_relations()
    for fs in systems:
        fs = [f.lift(pres.ctx) for f in fs]
        if len(fs) > len(pres.vars):
            continue
        if any(not rel_ideal.contains(f) for f in fs):
            raise SystemNotInIdeal("candidate system not inside the relations ideal")
        r = len(fs)
        if r == 0:
            if pres.relations:
                continue  # (0 : I) adds nothing once I is nonzero over a reduced base
            one = Poly.const(pres.ctx, 1)
            zero = Elem(Poly.zero(pres.ctx))
            return SmoothnessCertificate(pres, [], [((), one)], [Elem(one)], one,
                                         [zero for _ in rels], [[]])
        colon, _ = ideal_quotient(
            Ideal(pres.ctx, fs + base_rels, budget=pres.base.budget, cache=pres.base.cache),
            Ideal(pres.ctx, pres.relations, budget=pres.base.budget, cache=pres.base.cache),
            certify=False)
        minor_list = minors_of(fs, list(pres.vars), r)
        prods = []
        tags = []
        for ci, c in enumerate(colon.gens):
            for mi, (cols, m) in enumerate(minor_list):
                prods.append(c * m)
                tags.append((ci, mi))
        K = Ideal(pres.ctx, prods + rels, budget=pres.base.budget, cache=pres.base.cache)
        found = contains_unit(K, base_names, unit_test)
        if found is None:
            continue
        unit, cert = found
        # regroup cofactors: unit = sum_j (N_j * M_j) + sum_i c_i * rel_i
        nper = [Poly.zero(pres.ctx) for _ in minor_list]
        for cof, (ci, mi) in zip(cert.cofactors[:len(prods)], tags):
            if not cof.is_zero():
                nper[mi] = nper[mi] + cof * colon.gens[ci]
        rel_cofs = list(cert.cofactors[len(prods):])
        witnesses = [Elem(npoly, unit) for npoly in nper]
        f_ideal = Ideal(pres.ctx, fs + base_rels, budget=pres.base.budget,
                        cache=pres.base.cache)
        wcerts = []
        for w in witnesses:
            row = []
            for q in pres.relations:
                rem, c2 = f_ideal.normal_form(w.num * q)
                if not rem.is_zero():
                    raise CertificateError("regrouped witness fails colon membership")
                row.append(c2)
            wcerts.append(row)
        rel_cof_elems = [Elem(c, unit) for c in rel_cofs]
        return SmoothnessCertificate(pres, fs, minor_list, witnesses, unit,
                                     rel_cof_elems, wcerts)
    return None
