"""Exception hierarchy shared across the library and the command line tool.

Every error raised on a user-facing path derives from SheafError so callers
can catch one type.  The CLI maps exception classes to process exit codes;
anything that escapes the mapping is a genuine bug and exits with the
interpreter default.
"""

from __future__ import annotations


class SheafError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SheafError):
    """Malformed input file or value: bad JSON shape, bad TSV row,
    unknown vertex name, dimension mismatch against a declared map."""


class StructuralError(SheafError):
    """Well-formed input describing an inconsistent object: an edge whose
    endpoints coincide, a map block whose shape contradicts the dimension
    vector, a checkpoint whose pieces disagree."""


class ConditioningError(SheafError):
    """A numeric decision sits too close to a tolerance to certify; the
    computation is refused rather than silently rounded."""


class NumericError(SheafError):
    """Numerical failure: non-finite values where finiteness was required,
    a solver that cannot proceed."""


class PreconditionError(SheafError):
    """A documented precondition of an operation was violated by the caller."""


class BorderlineRankWarning(UserWarning):
    """A singular value sits within 10x of the nullspace cutoff, so the
    computed kernel dimension is not numerically safe to certify."""


# CLI exit codes.  Success is 0; unmapped exceptions propagate.
EXIT_PARSE = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4


def exit_code_for(exc: BaseException) -> int | None:
    """Exit code for an exception on the CLI path, or None if unmapped."""
    if isinstance(exc, (ParseError, StructuralError, PreconditionError)):
        return EXIT_PARSE
    if isinstance(exc, (NumericError, ConditioningError)):
        return EXIT_NUMERIC
    return None
