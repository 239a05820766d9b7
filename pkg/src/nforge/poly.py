"""Exact sparse multivariate polynomial arithmetic over Q.

A polynomial is a map from exponent vectors to nonzero Fractions, tied to a
Context (ordered variable names).  Construction canonicalizes, so structural
equality is semantic equality.  Instances are immutable values: no operation
mutates its operands, and every operation stays inside the ambient context.

Truncation (order-N series semantics) is an operation on polynomials, not a
separate type: the same representation serves exact rings and truncated
power-series targets.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping

from .errors import ContextMismatch, ExprSyntaxError, NotDivisible, UndeclaredVariable

Exponents = tuple[int, ...]


class Context:
    """Ordered list of variable names shared by a family of polynomials."""

    __slots__ = ("names", "index")

    def __init__(self, names: Iterable[str]):
        self.names = tuple(names)
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate variable names: {self.names}")
        self.index = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.index

    def __eq__(self, other):
        return isinstance(other, Context) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"Context({', '.join(self.names)})"

    def extend(self, names: Iterable[str]) -> "Context":
        extra = [n for n in names if n not in self.index]
        return Context(self.names + tuple(extra))

    def fresh_names(self, stem: str, count: int) -> list[str]:
        """`count` names of the form stem, stem2, stem3, ... avoiding collisions."""
        out, k = [], 0
        candidate = stem
        while len(out) < count:
            if candidate not in self.index and candidate not in out:
                out.append(candidate)
            k += 1
            candidate = f"{stem}{k + 1}"
        return out


class Poly:
    """Sparse polynomial: {exponent vector: nonzero Fraction} over a Context."""

    __slots__ = ("ctx", "terms", "_key_cache")

    def __init__(self, ctx: Context, terms: Mapping[Exponents, Fraction] | None = None,
                 _canonical: bool = False):
        self.ctx = ctx
        if terms is None:
            self.terms = {}
        elif _canonical:
            self.terms = dict(terms)
        else:
            self.terms = {}
            for mono, c in terms.items():
                c = Fraction(c)
                if c:
                    self.terms[tuple(mono)] = c
        self._key_cache = {}

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, ctx: Context) -> "Poly":
        return cls(ctx, {}, _canonical=True)

    @classmethod
    def const(cls, ctx: Context, value) -> "Poly":
        c = Fraction(value)
        if not c:
            return cls.zero(ctx)
        return cls(ctx, {(0,) * len(ctx): c}, _canonical=True)

    @classmethod
    def var(cls, ctx: Context, name: str) -> "Poly":
        if name not in ctx:
            raise UndeclaredVariable(name, ctx)
        e = [0] * len(ctx)
        e[ctx.index[name]] = 1
        return cls(ctx, {tuple(e): Fraction(1)}, _canonical=True)

    # -- basic queries ------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not any(m) for m in self.terms)

    def constant_value(self) -> Fraction:
        """Coefficient of the constant monomial (0 if absent)."""
        return self.terms.get((0,) * len(self.ctx), Fraction(0))

    def total_degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(sum(m) for m in self.terms)

    def degree_in(self, names: Iterable[str]) -> int:
        """Max combined exponent over the named variables; -1 if zero."""
        idx = [self.ctx.index[n] for n in names]
        if not self.terms:
            return -1
        return max(sum(m[i] for i in idx) for m in self.terms)

    def order_in(self, names: Iterable[str]) -> int | None:
        """Min combined exponent over the named variables; None if zero."""
        idx = [self.ctx.index[n] for n in names]
        if not self.terms:
            return None
        return min(sum(m[i] for i in idx) for m in self.terms)

    def variables_used(self) -> set[str]:
        used = set()
        for m in self.terms:
            for i, e in enumerate(m):
                if e:
                    used.add(self.ctx.names[i])
        return used

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.ctx == other.ctx and self.terms == other.terms

    def __hash__(self):
        return hash((self.ctx, frozenset(self.terms.items())))

    # -- arithmetic ---------------------------------------------------

    def _check(self, other: "Poly"):
        if self.ctx != other.ctx:
            raise ContextMismatch(f"{self.ctx} vs {other.ctx}")

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Poly.const(self.ctx, other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m, Fraction(0)) + c
            if s:
                out[m] = s
            elif m in out:
                del out[m]
        return Poly(self.ctx, out, _canonical=True)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.ctx, {m: -c for m, c in self.terms.items()}, _canonical=True)

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Poly.const(self.ctx, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            if not c:
                return Poly.zero(self.ctx)
            return Poly(self.ctx, {m: v * c for m, v in self.terms.items()}, _canonical=True)
        self._check(other)
        if not self.terms or not other.terms:
            return Poly.zero(self.ctx)
        out: dict[Exponents, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                s = out.get(m, Fraction(0)) + c1 * c2
                if s:
                    out[m] = s
                elif m in out:
                    del out[m]
        return Poly(self.ctx, out, _canonical=True)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative exponent")
        result = Poly.const(self.ctx, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    def scale_monomial(self, coeff: Fraction, mono: Exponents) -> "Poly":
        """self * coeff * X^mono (single-term multiplication)."""
        if not coeff:
            return Poly.zero(self.ctx)
        return Poly(self.ctx,
                    {tuple(a + b for a, b in zip(m, mono)): c * coeff
                     for m, c in self.terms.items()},
                    _canonical=True)

    # -- calculus and substitution -------------------------------------

    def diff(self, name: str) -> "Poly":
        """Formal partial derivative."""
        if name not in self.ctx:
            raise UndeclaredVariable(name, self.ctx)
        i = self.ctx.index[name]
        out = {}
        for m, c in self.terms.items():
            e = m[i]
            if e:
                m2 = m[:i] + (e - 1,) + m[i + 1:]
                out[m2] = out.get(m2, Fraction(0)) + c * e
        return Poly(self.ctx, out)

    def subs(self, images: Mapping[str, "Poly"], target: Context | None = None) -> "Poly":
        """Simultaneous substitution; unmapped variables pass through by name.

        All images must share one context, which becomes the result context
        (or `target` if given).  Exact and fully expanded.
        """
        for name in images:
            if name not in self.ctx:
                raise UndeclaredVariable(name, self.ctx)
        if target is None:
            target = next(iter(images.values())).ctx if images else self.ctx
        for name, img in images.items():
            if img.ctx != target:
                raise ContextMismatch(f"image of {name} not in target context")
        passthrough = {}
        for name in self.ctx.names:
            if name not in images:
                if name in self.variables_used() and name not in target:
                    raise UndeclaredVariable(name, target)
                if name in target:
                    passthrough[name] = Poly.var(target, name)
        result = Poly.zero(target)
        # cache powers of each image to keep repeated exponents cheap
        powers: dict[int, list[Poly]] = {}
        for m, c in self.terms.items():
            term = Poly.const(target, c)
            for i, e in enumerate(m):
                if not e:
                    continue
                name = self.ctx.names[i]
                img = images[name] if name in images else passthrough[name]
                cache = powers.setdefault(i, [Poly.const(target, 1), img])
                while len(cache) <= e:
                    cache.append(cache[-1] * img)
                term = term * cache[e]
            result = result + term
        return result

    def lift(self, target: Context) -> "Poly":
        """Re-express in a larger (or reordered) context by variable name."""
        if target == self.ctx:
            return self
        mapping = []
        for name in self.ctx.names:
            if name not in target:
                if name in self.variables_used():
                    raise UndeclaredVariable(name, target)
                mapping.append(None)
            else:
                mapping.append(target.index[name])
        out = {}
        for m, c in self.terms.items():
            e = [0] * len(target)
            for i, exp in enumerate(m):
                if exp:
                    e[mapping[i]] = exp
            out[tuple(e)] = c
        return Poly(target, out, _canonical=True)

    def restrict(self, target: Context) -> "Poly":
        """Like lift, for a smaller context; fails if a live variable is dropped."""
        return self.lift(target)

    # -- truncated power-series support ---------------------------------

    def truncate(self, n: int, series_vars: Iterable[str] | None = None) -> "Poly":
        """Drop terms of combined series-variable degree >= n.

        With series_vars None, all context variables count.  Idempotent.
        """
        if series_vars is None:
            idx = range(len(self.ctx))
        else:
            idx = [self.ctx.index[v] for v in series_vars]
        out = {m: c for m, c in self.terms.items() if sum(m[i] for i in idx) < n}
        return Poly(self.ctx, out, _canonical=True)

    def monomial_content(self) -> Exponents:
        """Componentwise min of exponent vectors (the largest common monomial)."""
        if not self.terms:
            return (0,) * len(self.ctx)
        mins = None
        for m in self.terms:
            mins = m if mins is None else tuple(map(min, mins, m))
        return mins

    def shift_down(self, mono: Exponents) -> "Poly":
        """Divide by the monomial X^mono; every term must be divisible."""
        out = {}
        for m, c in self.terms.items():
            if any(a < b for a, b in zip(m, mono)):
                raise NotDivisible(f"monomial order obstruction dividing by X^{mono}")
            out[tuple(a - b for a, b in zip(m, mono))] = c
        return Poly(self.ctx, out, _canonical=True)


def series_inverse(u: Poly, n: int, series_vars: Iterable[str] | None = None) -> Poly:
    """Inverse of a unit (nonzero constant term) modulo series-degree n.

    The part of u with series-degree 0 must be a nonzero constant; the rest
    (positive series order) is summed away by the geometric recurrence.
    """
    svars = tuple(series_vars) if series_vars is not None else u.ctx.names
    c0 = u.constant_value()
    if not c0:
        raise NotDivisible("not a unit at this order: zero constant term")
    w = (Poly.const(u.ctx, c0) - u) * (Fraction(1) / c0)
    if w.order_in(svars) == 0:
        raise NotDivisible("not a unit at this order: series-free non-constant part")
    inv = Poly.const(u.ctx, Fraction(1) / c0)
    power = Poly.const(u.ctx, Fraction(1) / c0)
    for _ in range(n):
        power = (power * w).truncate(n, svars)
        if power.is_zero():
            break
        inv = inv + power
    return inv.truncate(n, svars)


def exact_divide(f: Poly, d: Poly, n: int | None = None,
                 series_vars: Iterable[str] | None = None) -> Poly:
    """Exact quotient q with q*d == f (mod series-degree n when n given).

    Without n: plain multivariate exact division (leading-term cancellation
    in degrevlex), NotDivisible on any remainder.  With n: d must factor as
    monomial * unit at order n; quotient is canonical of series degree < n.
    """
    if d.is_zero():
        raise NotDivisible("division by zero")
    if f.is_zero():
        return Poly.zero(f.ctx)
    f._check(d)
    if n is None:
        return _exact_divide_poly(f, d)
    svars = tuple(series_vars) if series_vars is not None else f.ctx.names
    mono = d.monomial_content()
    unit = d.shift_down(mono)
    if not unit.constant_value():
        raise NotDivisible("divisor has no monomial*unit factorization at this order")
    try:
        shifted = f.shift_down(mono)
    except NotDivisible:
        raise NotDivisible(
            f"order obstruction: dividend not divisible by the monomial part of the divisor")
    inv = series_inverse(unit, n, svars)
    q = (shifted * inv).truncate(n, svars)
    check = (q * d - f).truncate(n, svars)
    if not check.is_zero():
        raise NotDivisible("multiply-back differs at working precision", remainder=check)
    return q


def _drl_key(m: Exponents):
    return (sum(m), tuple(-e for e in reversed(m)))


def _exact_divide_poly(f: Poly, d: Poly) -> Poly:
    lt_d = max(d.terms, key=_drl_key)
    lc_d = d.terms[lt_d]
    q: dict[Exponents, Fraction] = {}
    rem = f
    while rem.terms:
        lt = max(rem.terms, key=_drl_key)
        if any(a < b for a, b in zip(lt, lt_d)):
            raise NotDivisible("nonzero remainder in exact division", remainder=rem)
        mono = tuple(a - b for a, b in zip(lt, lt_d))
        coeff = rem.terms[lt] / lc_d
        q[mono] = coeff
        rem = rem - d.scale_monomial(coeff, mono)
    return Poly(f.ctx, q)


# -- parsing ------------------------------------------------------------

_TOKEN_CHARS = set("+-*/^()")


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in _TOKEN_CHARS:
            tokens.append(ch)
            i += 1
        elif ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(int(text[i:j]))
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j]))
            i = j
        else:
            raise ExprSyntaxError(f"unexpected character {ch!r} at position {i}")
    return tokens


class _Parser:
    """Recursive descent over +, -, *, /, ^, parentheses.

    Values are (num, den) pairs of Poly so that '/' is supported uniformly;
    parse_poly rejects nonconstant denominators afterwards.
    """

    def __init__(self, tokens, ctx: Context):
        self.toks = tokens
        self.pos = 0
        self.ctx = ctx

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def parse(self):
        value = self.expr()
        if self.peek() is not None:
            raise ExprSyntaxError(f"trailing input at token {self.peek()!r}")
        return value

    def expr(self):
        sign = 1
        while self.peek() in ("+", "-"):
            if self.next() == "-":
                sign = -sign
        num, den = self.term()
        if sign < 0:
            num = -num
        while self.peek() in ("+", "-"):
            op = self.next()
            n2, d2 = self.term()
            if op == "-":
                n2 = -n2
            num, den = num * d2 + n2 * den, den * d2
        return num, den

    def term(self):
        num, den = self.factor()
        while True:
            tok = self.peek()
            if tok == "*":
                self.next()
                n2, d2 = self.factor()
                num, den = num * n2, den * d2
            elif tok == "/":
                self.next()
                n2, d2 = self.factor()
                if n2.is_zero():
                    raise ExprSyntaxError("division by zero")
                num, den = num * d2, den * n2
            else:
                return num, den

    def factor(self):
        if self.peek() == "-":
            self.next()
            num, den = self.factor()
            return -num, den
        num, den = self.atom()
        if self.peek() == "^":
            self.next()
            e = self.next()
            if not isinstance(e, int):
                raise ExprSyntaxError("exponent must be a nonnegative integer literal")
            return num ** e, den ** e
        return num, den

    def atom(self):
        tok = self.next()
        one = Poly.const(self.ctx, 1)
        if tok is None:
            raise ExprSyntaxError("unexpected end of expression")
        if isinstance(tok, int):
            return Poly.const(self.ctx, tok), one
        if isinstance(tok, tuple) and tok[0] == "name":
            return Poly.var(self.ctx, tok[1]), one
        if tok == "(":
            value = self.expr()
            if self.next() != ")":
                raise ExprSyntaxError("missing closing parenthesis")
            return value
        raise ExprSyntaxError(f"unexpected token {tok!r}")


def parse_fraction(text: str, ctx: Context) -> tuple[Poly, Poly]:
    """Parse an expression allowing polynomial denominators; returns (num, den)."""
    num, den = _Parser(_tokenize(text), ctx).parse()
    return num, den


def parse_poly(text: str, ctx: Context) -> Poly:
    """Parse an expression whose value is a polynomial (constant denominators only)."""
    num, den = parse_fraction(text, ctx)
    if not den.is_constant():
        raise ExprSyntaxError(f"nonconstant denominator in polynomial expression: {text!r}")
    return num * (Fraction(1) / den.constant_value())


# -- canonical printing ---------------------------------------------------

def format_poly(p: Poly) -> str:
    """Canonical form: descending degrevlex term order, explicit * and ^."""
    if not p.terms:
        return "0"
    parts = []
    for m in sorted(p.terms, key=_drl_key, reverse=True):
        c = p.terms[m]
        factors = []
        for i, e in enumerate(m):
            if e == 1:
                factors.append(p.ctx.names[i])
            elif e > 1:
                factors.append(f"{p.ctx.names[i]}^{e}")
        mag = abs(c)
        if not factors:
            body = str(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = "*".join([str(mag)] + factors)
        parts.append(("- " if c < 0 else "+ ") + body)
    head = parts[0]
    text = head[2:] if head.startswith("+ ") else "-" + head[2:]
    return " ".join([text] + parts[1:])
