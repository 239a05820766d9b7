"""Monomial orders: lex, degrevlex, and an internal elimination block order.

Each order maps an exponent vector to a sortable key; larger key = larger
monomial.  Orders carry a variable priority permutation over a Context.
"""

from __future__ import annotations

from .poly import Context, Exponents, Poly


class MonomialOrder:
    """Total, multiplicative, well-founded order on monomials of a context."""

    kind = "abstract"

    def __init__(self, ctx: Context, priority: tuple[str, ...] | None = None):
        self.ctx = ctx
        names = tuple(priority) if priority is not None else ctx.names
        if sorted(names) != sorted(ctx.names):
            raise ValueError("priority list must be a permutation of the context")
        self.priority = names
        self._perm = tuple(ctx.index[n] for n in names)

    def key(self, m: Exponents):
        raise NotImplementedError

    def leading_monomial(self, p: Poly) -> Exponents:
        return max(p.terms, key=self.key)

    def leading_term(self, p: Poly):
        m = self.leading_monomial(p)
        return m, p.terms[m]

    def sorted_monomials(self, p: Poly, reverse=True):
        return sorted(p.terms, key=self.key, reverse=reverse)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "priority": list(self.priority)}

    def __repr__(self):
        return f"{self.kind}({', '.join(self.priority)})"


class Lex(MonomialOrder):
    kind = "lex"

    def key(self, m: Exponents):
        return tuple(m[i] for i in self._perm)


class DegRevLex(MonomialOrder):
    kind = "degrevlex"

    def key(self, m: Exponents):
        return (sum(m), tuple(-m[i] for i in reversed(self._perm)))


class BlockElimination(MonomialOrder):
    """Eliminates the first block: compares block variables degrevlex-first.

    Internal tool for intersections / quotients / Rabinowitsch; not exposed
    on the CLI surface.
    """

    kind = "block-elimination"

    def __init__(self, ctx: Context, block: tuple[str, ...]):
        super().__init__(ctx, None)
        self.block = tuple(block)
        bi = [ctx.index[n] for n in self.block]
        rest = [i for i in range(len(ctx)) if i not in set(bi)]
        self._block_idx = tuple(bi)
        self._rest_idx = tuple(rest)

    def key(self, m: Exponents):
        b = tuple(m[i] for i in self._block_idx)
        r = tuple(m[i] for i in self._rest_idx)
        return ((sum(b), tuple(-e for e in reversed(b))),
                (sum(r), tuple(-e for e in reversed(r))))

    def descriptor(self) -> dict:
        return {"kind": self.kind, "block": list(self.block)}


def make_order(kind: str, ctx: Context, priority=None) -> MonomialOrder:
    if kind == "lex":
        return Lex(ctx, priority)
    if kind == "degrevlex":
        return DegRevLex(ctx, priority)
    raise ValueError(f"unknown monomial order kind {kind!r}")
