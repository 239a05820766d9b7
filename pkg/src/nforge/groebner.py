"""Groebner machinery over Q with cofactor certificates.

Buchberger with the coprime and chain pair criteria, extended throughout with
cofactor rows so that every basis element -- and every normal form -- carries
an exact representation in terms of the original generators.  All ideal-level
answers (membership, quotients, radical membership, annihilator chains, unit
inverses) are certified post hoc by multiply-back.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from fractions import Fraction

from .errors import CertificateError, DegreeBudgetExceeded, NotDivisible, NotUnit
from .orders import BlockElimination, DegRevLex, MonomialOrder
from .poly import Context, Poly, format_poly, parse_poly, _exact_divide_poly


class DegreeBudget:
    """Work bounds: generous for desk scale, a guard against runaway runs."""

    def __init__(self, degree=24, pairs=50_000, power=64):
        self.degree = degree
        self.pairs = pairs
        self.power = power

    def descriptor(self):
        return {"degree": self.degree, "pairs": self.pairs, "power": self.power}


DEFAULT_BUDGET = DegreeBudget()


class MembershipCertificate:
    """element = sum(cofactor_i * generator_i) + remainder, exactly."""

    def __init__(self, element: Poly, generators: list[Poly], cofactors: list[Poly],
                 remainder: Poly, check=True):
        self.element = element
        self.generators = generators
        self.cofactors = cofactors
        self.remainder = remainder
        if check:
            self.verify()

    @property
    def is_member(self) -> bool:
        return self.remainder.is_zero()

    def verify(self):
        acc = Poly.zero(self.element.ctx)
        for c, g in zip(self.cofactors, self.generators):
            acc = acc + c * g
        if acc + self.remainder != self.element:
            raise CertificateError("membership certificate fails multiply-back")
        return True


def _monomial_divides(a, b):
    return all(x <= y for x, y in zip(a, b))


def _monomial_lcm(a, b):
    return tuple(max(x, y) for x, y in zip(a, b))


class _Engine:
    """One Buchberger run; basis rows express basis polys over the input gens."""

    def __init__(self, gens: list[Poly], ctx: Context, order: MonomialOrder,
                 budget: DegreeBudget):
        self.ctx = ctx
        self.order = order
        self.budget = budget
        self.gens = gens
        self.polys: list[Poly] = []
        self.rows: list[list[Poly]] = []
        for i, g in enumerate(gens):
            if g.is_zero():
                continue
            row = [Poly.zero(ctx) for _ in gens]
            lc = order.leading_term(g)[1]
            row[i] = Poly.const(ctx, Fraction(1) / lc)
            self.polys.append(g * (Fraction(1) / lc))
            self.rows.append(row)

    def _guard_degree(self, p: Poly):
        if p.total_degree() > self.budget.degree:
            raise DegreeBudgetExceeded(
                f"degree {p.total_degree()} exceeds budget {self.budget.degree}")

    def reduce_full(self, f: Poly, row: list[Poly] | None = None):
        """Full normal form of f against the current basis, updating row.

        Invariant: rem - sum(row * gens) == f - sum(row_in * gens).  With
        row_in the representation of f this makes rem = sum(row_out * gens);
        with row_in = 0 (membership queries) the cofactors of f are -row_out.
        """
        if row is None:
            row = [Poly.zero(self.ctx) for _ in self.gens]
        order = self.order
        rem = Poly.zero(self.ctx)
        work = f
        lts = [order.leading_monomial(p) for p in self.polys]
        while work.terms:
            self._guard_degree(work)
            lm = order.leading_monomial(work)
            hit = -1
            for k, lt in enumerate(lts):
                if _monomial_divides(lt, lm):
                    hit = k
                    break
            if hit < 0:
                c = work.terms[lm]
                rem = rem + Poly(self.ctx, {lm: c}, _canonical=True)
                work = work - Poly(self.ctx, {lm: c}, _canonical=True)
            else:
                coeff = work.terms[lm]
                mono = tuple(a - b for a, b in zip(lm, lts[hit]))
                work = work - self.polys[hit].scale_monomial(coeff, mono)
                grow = self.rows[hit]
                for j in range(len(self.gens)):
                    if grow[j].terms:
                        row[j] = row[j] - grow[j].scale_monomial(coeff, mono)
        return rem, row

    def run(self):
        order = self.order
        pairs = set()
        treated = set()
        for i in range(len(self.polys)):
            for j in range(i):
                pairs.add((j, i))
        count = 0
        while pairs:
            count += 1
            if count > self.budget.pairs:
                raise DegreeBudgetExceeded(f"S-pair count exceeds {self.budget.pairs}")
            lts = [order.leading_monomial(p) for p in self.polys]
            best = min(pairs, key=lambda ij: (order.key(_monomial_lcm(lts[ij[0]], lts[ij[1]])),
                                              ij[0], ij[1]))
            pairs.discard(best)
            treated.add(best)
            i, j = best
            lti, ltj = lts[i], lts[j]
            lcm = _monomial_lcm(lti, ltj)
            # coprime criterion
            if all(a + b == c for a, b, c in zip(lti, ltj, lcm)):
                continue
            # chain criterion
            skip = False
            for k, lt in enumerate(lts):
                if k in (i, j):
                    continue
                if _monomial_divides(lt, lcm):
                    pik = (min(i, k), max(i, k))
                    pjk = (min(j, k), max(j, k))
                    if pik in treated and pjk in treated:
                        skip = True
                        break
            if skip:
                continue
            mi = tuple(a - b for a, b in zip(lcm, lti))
            mj = tuple(a - b for a, b in zip(lcm, ltj))
            s = self.polys[i].scale_monomial(Fraction(1), mi) \
                - self.polys[j].scale_monomial(Fraction(1), mj)
            row = [Poly.zero(self.ctx) for _ in self.gens]
            for col in range(len(self.gens)):
                a = self.rows[i][col].scale_monomial(Fraction(1), mi) if self.rows[i][col].terms else None
                b = self.rows[j][col].scale_monomial(Fraction(1), mj) if self.rows[j][col].terms else None
                if a is not None:
                    row[col] = row[col] + a
                if b is not None:
                    row[col] = row[col] - b
            rem, row = self.reduce_full(s, row)
            if rem.is_zero():
                continue
            self._guard_degree(rem)
            lc = order.leading_term(rem)[1]
            inv = Fraction(1) / lc
            self.polys.append(rem * inv)
            self.rows.append([r * inv for r in row])
            new = len(self.polys) - 1
            for k in range(new):
                pairs.add((k, new))
        self._reduce_basis()
        return self.polys, self.rows

    def _reduce_basis(self):
        order = self.order
        # minimalize: drop elements whose LT is divisible by another kept LT
        idx = sorted(range(len(self.polys)),
                     key=lambda i: order.key(order.leading_monomial(self.polys[i])))
        kept: list[int] = []
        for i in idx:
            lm = order.leading_monomial(self.polys[i])
            if not any(_monomial_divides(order.leading_monomial(self.polys[k]), lm)
                       for k in kept):
                kept.append(i)
        polys = [self.polys[i] for i in kept]
        rows = [self.rows[i] for i in kept]
        # tail-reduce each against the others
        final_polys, final_rows = [], []
        for i in range(len(polys)):
            others = _Engine.__new__(_Engine)
            others.ctx, others.order, others.budget, others.gens = \
                self.ctx, self.order, self.budget, self.gens
            others.polys = [p for k, p in enumerate(polys) if k != i]
            others.rows = [r for k, r in enumerate(rows) if k != i]
            rem, row = others.reduce_full(polys[i], [r for r in rows[i]])
            if rem.is_zero():
                continue
            lc = order.leading_term(rem)[1]
            inv = Fraction(1) / lc
            final_polys.append(rem * inv)
            final_rows.append([r * inv for r in row])
        pairs = sorted(zip(final_polys, final_rows),
                       key=lambda pr: order.key(order.leading_monomial(pr[0])))
        self.polys = [p for p, _ in pairs]
        self.rows = [r for _, r in pairs]


class GroebnerCache:
    """Advisory on-disk cache keyed by a content hash of (generators, order)."""

    def __init__(self, directory: str | None):
        self.directory = directory

    def _key(self, gens, ctx, order):
        payload = json.dumps({
            "context": list(ctx.names),
            "generators": [format_poly(g) for g in gens],
            "order": order.descriptor(),
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def get(self, gens, ctx, order):
        if not self.directory:
            return None
        path = os.path.join(self.directory, self._key(gens, ctx, order) + ".json")
        if not os.path.exists(path):
            return None
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            basis = [parse_poly(s, ctx) for s in data["basis"]]
            rows = [[parse_poly(s, ctx) for s in row] for row in data["rows"]]
        except Exception:
            return None
        # never trust the disk blindly: rows must reproduce the basis
        for b, row in zip(basis, rows):
            acc = Poly.zero(ctx)
            for c, g in zip(row, gens):
                acc = acc + c * g
            if acc != b:
                return None
        return basis, rows

    def put(self, gens, ctx, order, basis, rows):
        if not self.directory:
            return
        os.makedirs(self.directory, exist_ok=True)
        path = os.path.join(self.directory, self._key(gens, ctx, order) + ".json")
        data = {
            "context": list(ctx.names),
            "generators": [format_poly(g) for g in gens],
            "order": order.descriptor(),
            "basis": [format_poly(b) for b in basis],
            "rows": [[format_poly(c) for c in row] for row in rows],
        }
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(data, fh, sort_keys=True)
            os.replace(tmp, path)
        except Exception:
            if os.path.exists(tmp):
                os.unlink(tmp)


NO_CACHE = GroebnerCache(None)


class Ideal:
    """A list of generators with a lazily computed reduced Groebner basis."""

    def __init__(self, ctx: Context, gens: list[Poly], order: MonomialOrder | None = None,
                 budget: DegreeBudget | None = None, cache: GroebnerCache | None = None):
        self.ctx = ctx
        self.gens = [g for g in gens]
        self.order = order or DegRevLex(ctx)
        self.budget = budget or DEFAULT_BUDGET
        self.cache = cache or NO_CACHE
        self._basis = None
        self._rows = None

    def basis(self) -> list[Poly]:
        self._compute()
        return self._basis

    def rows(self) -> list[list[Poly]]:
        self._compute()
        return self._rows

    def _compute(self):
        if self._basis is not None:
            return
        hit = self.cache.get(self.gens, self.ctx, self.order)
        if hit is not None:
            self._basis, self._rows = hit
            return
        engine = _Engine(self.gens, self.ctx, self.order, self.budget)
        self._basis, self._rows = engine.run()
        self.cache.put(self.gens, self.ctx, self.order, self._basis, self._rows)

    def is_zero_ideal(self) -> bool:
        return not self.basis()

    def contains_one(self) -> bool:
        b = self.basis()
        return len(b) == 1 and b[0].is_constant()

    def normal_form(self, f: Poly) -> tuple[Poly, MembershipCertificate]:
        """Unique remainder mod the reduced basis plus an exact certificate."""
        self._compute()
        engine = _Engine.__new__(_Engine)
        engine.ctx, engine.order, engine.budget = self.ctx, self.order, self.budget
        engine.gens = self.gens
        engine.polys = self._basis
        engine.rows = self._rows
        rem, row = engine.reduce_full(f)
        cert = MembershipCertificate(f, self.gens, [-c for c in row], rem)
        return rem, cert

    def contains(self, f: Poly) -> bool:
        rem, _ = self.normal_form(f)
        return rem.is_zero()

    def with_generators(self, extra: list[Poly]) -> "Ideal":
        return Ideal(self.ctx, self.gens + list(extra), self.order, self.budget, self.cache)


def intersect(I: Ideal, J: Ideal) -> list[Poly]:
    """Generators of I cap J via the one-variable elimination construction."""
    ctx = I.ctx
    (wname,) = ctx.fresh_names("w_elim", 1)
    ext = ctx.extend([wname])
    w = Poly.var(ext, wname)
    one = Poly.const(ext, 1)
    gens = [w * f.lift(ext) for f in I.gens if not f.is_zero()]
    gens += [(one - w) * g.lift(ext) for g in J.gens if not g.is_zero()]
    order = BlockElimination(ext, (wname,))
    K = Ideal(ext, gens, order, I.budget, I.cache)
    out = []
    for b in K.basis():
        if b.degree_in([wname]) <= 0:
            out.append(b.restrict(ctx))
    return out


def quotient_by_element(I: Ideal, g: Poly) -> list[Poly]:
    """(I : g) = (1/g) * (I cap (g)); each generator divided exactly by g."""
    if g.is_zero():
        return [Poly.const(I.ctx, 1)]
    inter = intersect(I, Ideal(I.ctx, [g], I.order, I.budget, I.cache))
    out = []
    for h in inter:
        out.append(_exact_divide_poly(h, g))
    return out


def ideal_quotient(I: Ideal, J: Ideal, certify=True):
    """(I : J) with post-hoc membership certificates for every generator.

    Multi-generator J is handled as the intersection of single-generator
    quotients.  Returns (ideal, certificates) where certificates[i][j]
    witnesses generator_i * J_j in I.
    """
    nz = [g for g in J.gens if not g.is_zero()]
    if not nz:
        return Ideal(I.ctx, [Poly.const(I.ctx, 1)], I.order, I.budget, I.cache), []
    gens = None
    for g in nz:
        q = quotient_by_element(I, g)
        if gens is None:
            gens = q
        else:
            gens = intersect(Ideal(I.ctx, gens, I.order, I.budget, I.cache),
                             Ideal(I.ctx, q, I.order, I.budget, I.cache))
    result = Ideal(I.ctx, gens, I.order, I.budget, I.cache)
    certs = []
    if certify:
        for q in gens:
            row = []
            for g in nz:
                rem, cert = I.normal_form(q * g)
                if not rem.is_zero():
                    raise CertificateError("quotient generator fails soundness check")
                row.append(cert)
            certs.append(row)
    return result, certs


def ideals_equal(I: Ideal, J: Ideal) -> bool:
    return I.basis() == J.basis()


def radical_membership(f: Poly, I: Ideal, artinian_bound: int | None = None):
    """Decide f in sqrt(I); returns (bool, k, cert) with f^k in I when true.

    Default route is the extra-variable trick (1 in I + (1 - z*f)); inside an
    Artinian truncated quotient pass artinian_bound=N to use bounded power
    search instead, since the trick degenerates there.
    """
    if f.is_zero():
        one = Poly.const(I.ctx, 1)
        return True, 1, MembershipCertificate(Poly.zero(I.ctx), I.gens,
                                              [Poly.zero(I.ctx)] * len(I.gens),
                                              Poly.zero(I.ctx))
    if artinian_bound is None:
        ctx = I.ctx
        (zname,) = ctx.fresh_names("z_rad", 1)
        ext = ctx.extend([zname])
        z = Poly.var(ext, zname)
        gens = [g.lift(ext) for g in I.gens] + [Poly.const(ext, 1) - z * f.lift(ext)]
        K = Ideal(ext, gens, DegRevLex(ext), I.budget, I.cache)
        if not K.contains_one():
            return False, None, None
        kmax = I.budget.power
    else:
        kmax = artinian_bound
    # incremental powers: f^k = nf_k + sum(acc_j * g_j) maintained exactly,
    # so the certificate never re-reduces the expanded power
    power = Poly.const(I.ctx, 1)
    acc = [Poly.zero(I.ctx) for _ in I.gens]
    for k in range(1, kmax + 1):
        power, step = I.normal_form(power * f)
        acc = [a * f + c for a, c in zip(acc, step.cofactors)]
        if power.is_zero():
            cert = MembershipCertificate(f ** k, I.gens, acc, Poly.zero(I.ctx))
            return True, k, cert
    if artinian_bound is not None:
        return False, None, None
    raise DegreeBudgetExceeded(f"f in sqrt(I) but no exponent <= {kmax} found")


def annihilator_exponent(modulus: Ideal, d: Poly, e_floor: int = 0):
    """Least e >= e_floor with (0 : d^e) = (0 : d^{e+1}) in ctx-ring / modulus.

    Annihilators are computed as quotient ideals (J : d^e).  Returns
    (e, chain) where chain[i] is the reduced basis of (0 : d^{e_floor + i}).
    """
    budget = modulus.budget

    def ann(k):
        q, _ = ideal_quotient(modulus, Ideal(modulus.ctx, [d ** k], modulus.order,
                                             budget, modulus.cache), certify=False)
        return q.basis()

    e = e_floor
    prev = ann(e)
    chain = [prev]
    while True:
        if e - e_floor > budget.power:
            raise DegreeBudgetExceeded("annihilator chain failed to stabilize in budget")
        nxt = ann(e + 1)
        chain.append(nxt)
        if prev == nxt:
            return e, chain
        prev = nxt
        e += 1


def contains_unit(I: Ideal, base_names: tuple[str, ...] | None = None,
                  unit_test=None):
    """Find u in I that is a unit of the coefficient ring, with cofactors.

    Plain rings: u = 1 via contains_one.  Localized bases: eliminate the
    non-base variables and search the basis for an element of the base
    subring passing unit_test.  Returns (u, cert) or None.
    """
    if base_names is None or unit_test is None:
        if I.contains_one():
            rem, cert = I.normal_form(Poly.const(I.ctx, 1))
            if not rem.is_zero():
                raise CertificateError("basis contains 1 but normal form of 1 nonzero")
            return Poly.const(I.ctx, 1), cert
        return None
    block = tuple(n for n in I.ctx.names if n not in set(base_names))
    elim = Ideal(I.ctx, I.gens, BlockElimination(I.ctx, block), I.budget, I.cache)
    for b in elim.basis():
        if b.degree_in(block) <= 0 and unit_test(b):
            rem, cert = elim.normal_form(b)
            if not rem.is_zero():
                raise CertificateError("eliminated basis element fails re-reduction")
            return b, cert
    return None


def unit_inverse_in_quotient(f: Poly, I: Ideal, base_names=None, unit_test=None):
    """g with f*g == 1 mod I (up to a tracked base unit), else NotUnit.

    Returns (inv_num, inv_den, cert): f * inv_num == inv_den mod I where
    inv_den is 1 or a certified base unit (localized bases).
    """
    K = I.with_generators([f])
    found = contains_unit(K, base_names, unit_test)
    if found is None:
        raise NotUnit(f"{format_poly(f)} is not a unit modulo the ideal")
    u, cert = found
    inv = cert.cofactors[-1]  # cofactor of f in u = sum(c_i g_i) + c_f f
    rem, _ = I.normal_form(f * inv - u)
    if not rem.is_zero():
        raise CertificateError("unit inverse fails multiply-back modulo the ideal")
    return inv, u, cert
