"""Ring presentations and validated morphisms.

The tower mirrors the objects the pipeline moves between: a base ring A
(field Q, quotient Q[t]/J, or Q[t] localized at a prime p with tracked unit
denominators), finitely presented algebras A[Y]/I, a truncated power-series
target ring, and A-algebra morphisms whose well-definedness is certified on
construction.

All target-ring identities are congruences at the ring's working precision N;
presentations store cleared polynomial relations only, and fractions appear
solely as Elem values (numerator + certified unit denominator).
"""

from __future__ import annotations

from fractions import Fraction

from .errors import (ContextMismatch, NotDivisible, NotUnit, NotWellDefined,
                     CertificateError)
from .groebner import (DEFAULT_BUDGET, DegreeBudget, GroebnerCache, Ideal,
                       MembershipCertificate, NO_CACHE, contains_unit)
from .orders import DegRevLex
from .poly import (Context, Poly, exact_divide, format_poly, parse_fraction,
                   series_inverse, _exact_divide_poly)


class BaseRing:
    """Coefficient ring A: field Q, quotient Q[t]/J, or localized Q[t]_p."""

    def __init__(self, kind: str, variables=(), relations=(), prime=(),
                 budget: DegreeBudget | None = None, cache: GroebnerCache | None = None):
        if kind not in ("field", "quotient", "localized"):
            raise ValueError(f"unknown base ring kind {kind!r}")
        self.kind = kind
        self.vars = tuple(variables)
        self.ctx = Context(self.vars)
        self.budget = budget or DEFAULT_BUDGET
        self.cache = cache or NO_CACHE
        self.relations = list(relations)
        self.prime = list(prime)
        if kind == "field" and (self.vars or self.relations or self.prime):
            raise ValueError("field base takes no variables, relations or prime")
        if kind == "quotient" and self.prime:
            raise ValueError("quotient base takes no prime ideal")
        if kind == "localized" and self.relations:
            raise ValueError("localized base takes no relations")

    def describe(self) -> dict:
        out = {"kind": self.kind, "variables": list(self.vars)}
        if self.relations:
            out["relations"] = [format_poly(r) for r in self.relations]
        if self.prime:
            out["prime"] = [format_poly(p) for p in self.prime]
        return out

    def relation_ideal(self) -> Ideal:
        return Ideal(self.ctx, self.relations, DegRevLex(self.ctx), self.budget, self.cache)

    def prime_ideal(self) -> Ideal:
        return Ideal(self.ctx, self.prime, DegRevLex(self.ctx), self.budget, self.cache)

    def is_unit_poly(self, p: Poly) -> bool:
        """Is a base polynomial a unit of A?  (certified outside p / mod J)."""
        q = p if p.ctx == self.ctx else p.restrict(self.ctx)
        if q.is_zero():
            return False
        if self.kind == "field":
            return q.is_constant()
        if self.kind == "localized":
            rem, _ = self.prime_ideal().normal_form(q)
            return not rem.is_zero()
        # quotient: a unit iff 1 lies in J + (q)
        return self.relation_ideal().with_generators([q]).contains_one()

    def is_domain(self) -> bool:
        return self.kind in ("field", "localized")


class Elem:
    """Ring element with a tracked unit denominator over the base variables."""

    __slots__ = ("num", "den")

    def __init__(self, num: Poly, den: Poly | None = None):
        self.num = num
        self.den = den if den is not None else Poly.const(num.ctx, 1)
        if self.den.is_zero():
            raise ZeroDivisionError("zero denominator")

    @classmethod
    def of(cls, p) -> "Elem":
        return p if isinstance(p, Elem) else cls(p)

    @property
    def ctx(self):
        return self.num.ctx

    def is_zero(self):
        return self.num.is_zero()

    def is_polynomial(self):
        return self.den.is_constant()

    def as_poly(self) -> Poly:
        if not self.den.is_constant():
            raise NotDivisible(f"element has nonconstant denominator {format_poly(self.den)}")
        return self.num * (Fraction(1) / self.den.constant_value())

    def reduced(self) -> "Elem":
        if self.den.is_constant():
            return Elem(self.as_poly())
        try:
            q = _exact_divide_poly(self.num, self.den)
            return Elem(q)
        except NotDivisible:
            return self

    def lift(self, ctx: Context) -> "Elem":
        return Elem(self.num.lift(ctx), self.den.lift(ctx))

    def __add__(self, other):
        other = Elem.of(other if isinstance(other, (Elem, Poly)) else Poly.const(self.ctx, other))
        if self.den == other.den:
            return Elem(self.num + other.num, self.den)
        return Elem(self.num * other.den + other.num * self.den, self.den * other.den)

    def __sub__(self, other):
        other = Elem.of(other if isinstance(other, (Elem, Poly)) else Poly.const(self.ctx, other))
        return self + Elem(-other.num, other.den)

    def __neg__(self):
        return Elem(-self.num, self.den)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return Elem(self.num * other, self.den)
        other = Elem.of(other)
        return Elem(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        return Elem(self.num ** n, self.den ** n)

    def __eq__(self, other):
        if isinstance(other, Poly):
            other = Elem(other)
        if not isinstance(other, Elem):
            return NotImplemented
        return self.num * other.den == other.num * self.den

    def __hash__(self):
        return hash((self.num, self.den))

    def __repr__(self):
        return f"Elem({format_elem(self)})"


def format_elem(e: Elem) -> str:
    if e.den.is_constant():
        return format_poly(e.as_poly())
    return f"({format_poly(e.num)}) / ({format_poly(e.den)})"


def parse_elem(text: str, ctx: Context) -> Elem:
    num, den = parse_fraction(text, ctx)
    return Elem(num, den).reduced()


def divide_elem(x: Elem, d: Elem, base: BaseRing, modulus: Ideal | None = None) -> Elem:
    """Exact quotient x / d where d is (a power of) a base element.

    Tracked units of the base are absorbed into the denominator before
    dividing; with `modulus` given, the numerator is first reduced to its
    normal form (division inside a quotient presentation).  NotDivisible when
    no exact quotient exists.
    """
    num = x.num * d.den
    den = x.den
    divisor = d.num
    if divisor.is_zero():
        raise NotDivisible("division by zero")
    if modulus is not None:
        num, _ = modulus.normal_form(num)
    if divisor.is_constant():
        return Elem(num * (Fraction(1) / divisor.constant_value()), den).reduced()
    mono = divisor.monomial_content()
    rest = divisor.shift_down(mono)
    if not rest.is_constant():
        if not base.is_unit_poly(rest):
            # no monomial*unit split available: fall back to exact division
            try:
                return Elem(_exact_divide_poly(num, divisor), den).reduced()
            except NotDivisible:
                raise NotDivisible(
                    f"cannot divide by {format_poly(divisor)}: non-unit cofactor")
        den = den * rest
        num = num.shift_down(mono) if any(mono) else num
        return Elem(num, den).reduced()
    coeff = rest.constant_value()
    try:
        shifted = num.shift_down(mono)
    except NotDivisible:
        if modulus is None:
            raise
        raise NotDivisible(
            f"{format_poly(num)} not divisible by {format_poly(divisor)} in the quotient")
    return Elem(shifted * (Fraction(1) / coeff), den).reduced()


def divide_mod_relations(val: Elem, d: Elem, pres: "Presentation"):
    """Solve val = d * quo + sum(delta_i * rel_i) in the presented ring.

    Exact certified division in base[vars]/(relations): the quotient and the
    relation cofactors come from an extended normal form against (d) + rels.
    Base units inside d are absorbed into the quotient denominator first
    (localized bases).  Raises NotDivisible when no representation exists.
    """
    if d.num.is_zero():
        raise NotDivisible("division by zero")
    d_num = d.num.lift(pres.ctx)
    den_extra = Poly.const(pres.ctx, 1)
    if pres.base.kind == "localized" and not d_num.is_constant():
        mono = d_num.monomial_content()
        rest = d_num.shift_down(mono)
        if not rest.is_constant() and pres.base.is_unit_poly(rest.restrict(pres.base.ctx)):
            den_extra = rest
            d_num = Poly(pres.ctx, {mono: Fraction(1)})
    rels = pres.full_relations()
    K = Ideal(pres.ctx, [d_num] + rels, budget=pres.base.budget, cache=pres.base.cache)
    v_num = val.num.lift(pres.ctx)
    rem, cert = K.normal_form(v_num)
    if not rem.is_zero():
        raise NotDivisible(
            f"{format_poly(v_num)} not in ({format_poly(d_num)}) + relations",
            remainder=rem)
    quo = Elem(cert.cofactors[0] * d.den.lift(pres.ctx), val.den * den_extra).reduced()
    deltas = [Elem(c, val.den) for c in cert.cofactors[1:]]
    return quo, deltas


class Presentation:
    """Finitely presented algebra base[vars]/(relations), relations cleared."""

    def __init__(self, base: BaseRing, variables=(), relations=(), name: str | None = None):
        self.base = base
        self.vars = tuple(variables)
        self.ctx = base.ctx.extend(self.vars)
        self.name = name
        self.relations = []
        for r in relations:
            r = Elem.of(r)
            p = r.num.lift(self.ctx)  # unit denominators never change the ideal
            if not p.is_zero():
                self.relations.append(p)
        self._ideals = {}

    def describe(self) -> dict:
        return {"base": self.base.describe(), "variables": list(self.vars),
                "relations": [format_poly(r) for r in self.relations]}

    def full_relations(self) -> list[Poly]:
        lifted = [r.lift(self.ctx) for r in self.base.relations]
        return lifted + list(self.relations)

    def relations_ideal(self, order=None) -> Ideal:
        order = order or DegRevLex(self.ctx)
        key = repr(sorted(order.descriptor().items(), key=repr))
        if key not in self._ideals:
            self._ideals[key] = Ideal(self.ctx, self.full_relations(), order,
                                      self.base.budget, self.base.cache)
        return self._ideals[key]

    def nf(self, p: Poly) -> Poly:
        rem, _ = self.relations_ideal().normal_form(p.lift(self.ctx))
        return rem

    def is_unit(self, e: Elem) -> bool:
        """Unit test for elements of the presented ring (sound, search-based)."""
        found = contains_unit(self.relations_ideal().with_generators([e.num.lift(self.ctx)]),
                              self.base.vars if self.base.kind == "localized" else None,
                              self.base.is_unit_poly if self.base.kind == "localized" else None)
        return found is not None

    def localize(self, s: Elem, stem: str = "S") -> tuple["Presentation", str]:
        """base[vars, S]/(relations, s*S - den(s)): one fresh inverse variable."""
        (var,) = self.ctx.fresh_names(stem, 1)
        pres = Presentation(self.base, self.vars + (var,), [])
        pres.relations = [r.lift(pres.ctx) for r in self.relations]
        rel = s.num.lift(pres.ctx) * Poly.var(pres.ctx, var) - s.den.lift(pres.ctx)
        pres.relations.append(rel)
        return pres, var

    def reduce_mod_power(self, d: Elem, k: int) -> "Presentation":
        """Enlarge the relations by d^k (canonical surjection onto B/d^k B)."""
        extra = (d ** k).num.lift(self.ctx)
        pres = Presentation(self.base, self.vars, [])
        pres.relations = list(self.relations) + [extra]
        return pres


class TargetRing:
    """Truncated power-series model of the complete local target A'.

    Elements are canonical representatives: polynomials in the series
    variables of total degree < N.  Unit iff nonzero constant term.
    """

    def __init__(self, base: BaseRing, series_vars, order_n: int,
                 base_images: dict[str, str] | None = None):
        if order_n < 1:
            raise ValueError("truncation order must be >= 1")
        self.base = base
        self.svars = tuple(series_vars)
        self.ctx = Context(self.svars)
        self.N = order_n
        # structure map u: A -> A' on base variables (name-matched by default)
        images = {}
        for v in base.vars:
            spec = (base_images or {}).get(v, v)
            if isinstance(spec, Poly):
                img = spec.lift(self.ctx)
            else:
                num, den = parse_fraction(spec, self.ctx)
                if den.is_constant():
                    img = num * (Fraction(1) / den.constant_value())
                else:
                    img = (num * series_inverse(den, self.N))
            images[v] = self.trunc(img)
        self.base_images = images

    def describe(self) -> dict:
        return {"kind": "truncated_series", "variables": list(self.svars),
                "order": self.N, "base": self.base.describe()}

    def trunc(self, p: Poly) -> Poly:
        return p.lift(self.ctx).truncate(self.N)

    def zero(self) -> Poly:
        return Poly.zero(self.ctx)

    def one(self) -> Poly:
        return Poly.const(self.ctx, 1)

    def mul(self, a: Poly, b: Poly) -> Poly:
        return (a * b).truncate(self.N)

    def is_unit(self, a: Poly) -> bool:
        return bool(a.constant_value())

    def inverse(self, a: Poly) -> Poly:
        if not self.is_unit(a):
            raise NotUnit(f"{format_poly(a)} has zero constant term at order {self.N}")
        return series_inverse(a, self.N)

    def order_of(self, a: Poly) -> int | None:
        return a.order_in(self.svars)

    def divide(self, f: Poly, d: Poly) -> Poly:
        return exact_divide(f, d, self.N)

    def from_base(self, e: Elem) -> Poly:
        """Image of a base element under the structure map u."""
        num = e.num.restrict(self.base.ctx).subs(self.base_images, self.ctx)
        den = e.den.restrict(self.base.ctx).subs(self.base_images, self.ctx)
        return self.trunc(num * self.inverse(den) if not den.is_constant()
                          else num * (Fraction(1) / den.constant_value()))

    # -- Artinian ideal arithmetic (exact linear algebra) ------------------

    def _monomials(self):
        def rec(prefix, remaining, budget):
            if not remaining:
                yield tuple(prefix)
                return
            for e in range(budget + 1):
                yield from rec(prefix + [e], remaining[1:], budget - e)
        return sorted(rec([], list(self.svars), self.N - 1))

    def ideal_membership(self, f: Poly, gens: list[Poly]):
        """Certificate f = sum(c_i * g_i) at precision N, or None.

        Solved exactly over Q on the coefficient lattice of degree < N.
        """
        f = self.trunc(f)
        gens = [self.trunc(g) for g in gens]
        cols = {m: i for i, m in enumerate(self._monomials())}
        rows = []
        tags = []
        for gi, g in enumerate(gens):
            if g.is_zero():
                continue
            for m in cols:
                shifted = g.scale_monomial(Fraction(1), m).truncate(self.N)
                if shifted.is_zero():
                    continue
                rows.append(shifted)
                tags.append((gi, m))
        # Gaussian elimination with certificate back-substitution
        vec = [dict((cols[m], c) for m, c in r.terms.items()) for r in rows]
        target = dict((cols[m], c) for m, c in f.terms.items())
        pivots = {}
        combo = [dict() for _ in rows]  # row_i as combination of original rows
        for i in range(len(vec)):
            combo[i][i] = Fraction(1)
        for i in range(len(vec)):
            row = vec[i]
            for col in sorted(pivots):
                if col in row:
                    factor = row[col]
                    prow, pcombo = pivots[col]
                    for c2, v2 in prow.items():
                        nv = row.get(c2, Fraction(0)) - factor * v2
                        if nv:
                            row[c2] = nv
                        elif c2 in row:
                            del row[c2]
                    for k2, v2 in pcombo.items():
                        nv = combo[i].get(k2, Fraction(0)) - factor * v2
                        if nv:
                            combo[i][k2] = nv
                        elif k2 in combo[i]:
                            del combo[i][k2]
            if row:
                lead = min(row)
                inv = Fraction(1) / row[lead]
                vec[i] = {c: v * inv for c, v in row.items()}
                combo[i] = {k: v * inv for k, v in combo[i].items()}
                pivots[lead] = (vec[i], combo[i])
        used = {}
        for col in sorted(pivots):
            if col in target:
                factor = target[col]
                prow, pcombo = pivots[col]
                for c2, v2 in prow.items():
                    nv = target.get(c2, Fraction(0)) - factor * v2
                    if nv:
                        target[c2] = nv
                    elif c2 in target:
                        del target[c2]
                for k2, v2 in pcombo.items():
                    used[k2] = used.get(k2, Fraction(0)) + factor * v2
        if target:
            return None
        cofactors = [Poly.zero(self.ctx) for _ in gens]
        for rowidx, coeff in used.items():
            if not coeff:
                continue
            gi, m = tags[rowidx]
            cofactors[gi] = cofactors[gi] + Poly(self.ctx, {m: coeff})
        acc = Poly.zero(self.ctx)
        for c, g in zip(cofactors, gens):
            acc = self.trunc(acc + c * g)
        if acc != self.trunc(f):
            raise CertificateError("target-ring membership certificate fails multiply-back")
        return cofactors

    def radical_membership(self, f: Poly, gens: list[Poly]):
        """Bounded power search f^k in (gens) + (x)^N, k <= N (Artinian target)."""
        power = self.one()
        f = self.trunc(f)
        for k in range(1, self.N + 1):
            power = self.mul(power, f)
            cof = self.ideal_membership(power, gens)
            if cof is not None:
                return True, k, cof
        return False, None, None

    def unit_in_ideal(self, gens: list[Poly]):
        """A generator that is a unit, with its inverse (local ring: ideal = (1))."""
        for i, g in enumerate(gens):
            if self.is_unit(g):
                return i, self.inverse(g)
        return None


class Morphism:
    """Algebra morphism with validated relation images.

    `precision` caps the congruence check for truncated targets; None means
    the target's full working precision N.
    """

    def __init__(self, source: Presentation, target, images: dict[str, Poly],
                 base_images: dict[str, Poly] | None = None,
                 precision: int | None = None, name: str | None = None,
                 validate: bool = True):
        self.source = source
        self.target = target
        self.name = name
        self.images = dict(images)
        self.is_target_ring = isinstance(target, TargetRing)
        if self.is_target_ring:
            self.precision = precision if precision is not None else target.N
        else:
            self.precision = None
        if base_images is None:
            if self.is_target_ring:
                base_images = dict(target.base_images)
            else:
                base_images = {v: Poly.var(target.ctx, v) for v in source.base.vars}
        self.base_images = base_images
        missing = [v for v in source.vars if v not in self.images]
        if missing:
            raise NotWellDefined(f"missing images for {missing}", None)
        if validate:
            self.validate()

    def target_ctx(self) -> Context:
        return self.target.ctx

    def apply_poly(self, p: Poly) -> Poly:
        mapping = dict(self.base_images)
        mapping.update(self.images)
        img = p.lift(self.source.ctx).subs(mapping, self.target_ctx())
        if self.is_target_ring:
            return self.target.trunc(img)
        return img

    def apply_elem(self, e: Elem) -> Poly:
        if not self.is_target_ring:
            raise ContextMismatch("element application needs a truncated target")
        num = self.apply_poly(e.num)
        den = self.apply_poly(e.den)
        return self.target.mul(num, self.target.inverse(den))

    def validate(self):
        """Certify every source relation maps to 0 (at precision for targets)."""
        checks = []
        for rel in self.source.full_relations():
            img = self.apply_poly(rel)
            if self.is_target_ring:
                residual = img.truncate(self.precision)
                if not residual.is_zero():
                    raise NotWellDefined(format_poly(rel), format_poly(residual))
                checks.append((rel, residual))
            else:
                target_rels = self.target.full_relations()
                if img.is_zero() or any(img == r for r in target_rels):
                    checks.append((rel, Poly.zero(self.target.ctx)))
                    continue
                residual = self.target.nf(img)
                if not residual.is_zero():
                    raise NotWellDefined(format_poly(rel), format_poly(residual))
                checks.append((rel, residual))
        self.validated = True
        return checks

    def compose(self, g: "Morphism") -> "Morphism":
        """self : B -> C followed by g : C -> A'' (source/target must chain)."""
        if g.source.ctx != self.target_ctx():
            raise ContextMismatch("composition sources do not chain")
        images = {v: g.apply_poly(p) for v, p in self.images.items()}
        base_images = {v: g.apply_poly(p) for v, p in self.base_images.items()}
        return Morphism(self.source, g.target, images, base_images,
                        precision=g.precision, name=None)

    def equals(self, other: "Morphism") -> bool:
        if self.source.vars != other.source.vars:
            return False
        trunc = (lambda p: self.target.trunc(p)) if self.is_target_ring else (lambda p: p)
        for v in self.source.vars:
            if trunc(self.images[v]) != trunc(other.images[v]):
                return False
        for v in self.source.base.vars:
            if trunc(self.base_images[v]) != trunc(other.base_images[v]):
                return False
        return True

    def describe(self) -> dict:
        out = {
            "source_variables": list(self.source.vars),
            "images": {v: format_poly(p) for v, p in sorted(self.images.items())},
            "base_images": {v: format_poly(p) for v, p in sorted(self.base_images.items())},
        }
        if self.is_target_ring:
            out["precision"] = self.precision
        return out


def eval_poly(p: Poly, images: dict[str, Elem], target: Context) -> Elem:
    """Evaluate p with Elem images for some variables (others pass through).

    Works over one common denominator (the product of image denominators at
    their maximal exponents), so the numerator is accumulated with plain
    polynomial arithmetic and denominators never stack per term.
    """
    used = p.variables_used()
    passthrough: dict[str, Elem] = {}
    for name in p.ctx.names:
        if name not in images and name in used:
            passthrough[name] = Elem(Poly.var(target, name))
    emax: dict[str, int] = {}
    for mono in p.terms:
        for i, e in enumerate(mono):
            if e:
                name = p.ctx.names[i]
                emax[name] = max(emax.get(name, 0), e)
    num_pows: dict[str, list[Poly]] = {}
    den_pows: dict[str, list[Poly]] = {}
    one = Poly.const(target, 1)
    den_total = one
    for name in emax:
        img = images[name] if name in images else passthrough[name]
        num_pows[name] = [one, img.num]
        den_pows[name] = [one, img.den]
        for _ in range(emax[name] - 1):
            num_pows[name].append(num_pows[name][-1] * img.num)
            den_pows[name].append(den_pows[name][-1] * img.den)
        den_total = den_total * den_pows[name][emax[name]]
    num_acc = Poly.zero(target)
    for mono, coeff in p.terms.items():
        term = Poly.const(target, coeff)
        for name, em in emax.items():
            e = mono[p.ctx.index[name]]
            if e:
                term = term * num_pows[name][e]
            if em - e:
                term = term * den_pows[name][em - e]
        num_acc = num_acc + term
    return Elem(num_acc, den_total).reduced()


def identity_morphism(pres: Presentation) -> Morphism:
    images = {v: Poly.var(pres.ctx, v) for v in pres.vars}
    return Morphism(pres, pres, images)


def surjection_mod_power(pres: Presentation, reduced: Presentation) -> Morphism:
    images = {v: Poly.var(reduced.ctx, v) for v in pres.vars}
    return Morphism(pres, reduced, images)
