"""Exception types raised across the package."""


class SwivelError(Exception):
    """Base class for every error raised by this package."""


class NonHermitian(SwivelError):
    pass


class NegativeSpectrum(SwivelError):
    pass


class EigensolverFailure(SwivelError):
    pass


class SvdFailure(SwivelError):
    pass


class InvalidExponent(SwivelError):
    pass


class ShapeMismatch(SwivelError):
    pass


class NonUnitaryBlock(SwivelError):
    pass


class StructureMismatch(SwivelError):
    pass


class NonScalarCommutant(SwivelError):
    pass


class GridTooLarge(SwivelError):
    pass


class CommutationViolation(SwivelError):
    pass


class DomainError(SwivelError):
    pass


class IntegrandUnderflow(SwivelError):
    pass


class RankDeficient(SwivelError):
    pass


class InvalidSpec(SwivelError):
    pass


class ParseError(SwivelError):
    """Malformed or invariant-violating instance/report document."""

    def __init__(self, message: str, *, field: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class SchemaVersionMismatch(ParseError):
    pass
