"""Exception hierarchy shared across the library."""


class NforgeError(Exception):
    """Base class for all library errors."""


class UndeclaredVariable(NforgeError):
    def __init__(self, name, ctx):
        super().__init__(f"variable {name!r} is not declared in context {list(ctx.names)}")
        self.name = name


class ExprSyntaxError(NforgeError):
    """Malformed polynomial expression."""


class ContextMismatch(NforgeError):
    """Operands live in different variable contexts."""


class NotDivisible(NforgeError):
    """Exact division failed (order obstruction or nonzero remainder)."""

    def __init__(self, msg, remainder=None):
        super().__init__(msg)
        self.remainder = remainder


class DegreeBudgetExceeded(NforgeError):
    """Configured Groebner work bound hit."""


class NotUnit(NforgeError):
    """Element is not invertible in the given quotient."""


class NotWellDefined(NforgeError):
    """A morphism sends some relation to a nonzero element."""

    def __init__(self, relation, residual):
        super().__init__(f"relation {relation} maps to nonzero residual {residual}")
        self.relation = relation
        self.residual = residual


class CertificateError(NforgeError):
    """A certificate failed its own multiply-back check."""


class CongruenceFails(NforgeError):
    """d is not congruent to P modulo I."""

    def __init__(self, residual):
        super().__init__(f"d - P has nonzero normal form {residual}")
        self.residual = residual


class IdentityFails(NforgeError):
    """An exact matrix identity failed; indicates bad completion data."""


class SystemNotInIdeal(NforgeError):
    """A candidate Jacobian system contains a polynomial outside I."""


class StepCheckFailed(NforgeError):
    """A hypothesis or invariant of the desingularization step failed."""

    def __init__(self, check, msg):
        super().__init__(f"[{check}] {msg}")
        self.check = check


class CannotClear(NforgeError):
    """No scaling element clears the homogenized residual at working precision."""


class NilpotencyUncertified(NforgeError):
    """The claimed nilpotency witness fails at working precision."""


class ChainNotIncreasing(NforgeError):
    """A resolution step failed to enlarge the smooth-locus ideal."""


class SchemaError(NforgeError):
    """Problem file violates the expected schema."""

    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}")
        self.path = path
