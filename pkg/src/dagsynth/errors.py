"""Exception hierarchy shared across the package.

Two families matter for exit-code mapping in the CLI: ``InputError`` covers
bad user input (schemas, files, preconditions) and maps to exit code 2;
every other ``DagSynthError`` is a runtime failure and maps to exit code 1.
"""

from __future__ import annotations


class DagSynthError(Exception):
    """Base class for all package errors."""


class InputError(DagSynthError):
    """Invalid user input: bad schema, malformed file, violated precondition."""


# -- schema / ingestion ----------------------------------------------------

class MissingColumn(InputError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} declared in schema is missing from the data")
        self.name = name


class TypeMismatch(InputError):
    def __init__(self, row: int, column: str, detail: str, extra: list[str] | None = None):
        msg = f"row {row}, column {column!r}: {detail}"
        if extra:
            msg += "; also: " + "; ".join(extra)
        super().__init__(msg)
        self.row = row
        self.column = column


class EmptyTable(InputError):
    pass


class UnknownCategory(InputError):
    def __init__(self, value: str, column: str, row: int | None = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"value {value!r} in column {column!r}{where} is not a known category")
        self.value = value
        self.column = column
        self.row = row


class SchemaMismatch(InputError):
    pass


class UnknownVariable(InputError):
    def __init__(self, name: str):
        super().__init__(f"variable {name!r} is not in the schema")
        self.name = name


class DegenerateColumnWarning(UserWarning):
    """A continuous column is constant; a single fallback mode is used."""


# -- graph -----------------------------------------------------------------

class DagValidationError(InputError):
    """One or more validation diagnostics; carries the full list."""

    def __init__(self, diagnostics):
        super().__init__("; ".join(d.message for d in diagnostics))
        self.diagnostics = list(diagnostics)


class CycleDetected(InputError):
    def __init__(self, witness: tuple[str, ...]):
        super().__init__(f"cycle detected: {' -> '.join(witness)}")
        self.witness = tuple(witness)


class ReversalCycle(InputError):
    def __init__(self, witness: tuple[str, ...]):
        super().__init__(
            "forcing the conditional inputs to be source nodes created a cycle: "
            + " -> ".join(witness)
            + "; edit the graph by hand"
        )
        self.witness = tuple(witness)


# -- model / training ------------------------------------------------------

class ShapeMismatch(DagSynthError):
    pass


class NonFiniteLoss(DagSynthError):
    def __init__(self, step: int, detail: str):
        super().__init__(f"non-finite loss at generator step {step}: {detail}")
        self.step = step


class CorruptCheckpoint(DagSynthError):
    pass


class VersionMismatch(DagSynthError):
    def __init__(self, found: str, supported: str):
        super().__init__(
            f"checkpoint format version {found!r} is not supported (this build reads {supported!r})"
        )
        self.found = found
        self.supported = supported


# -- sampling / metrics / experiments ---------------------------------------

class ColumnCollision(InputError):
    def __init__(self, names):
        super().__init__(
            "generated variables collide with existing columns: " + ", ".join(sorted(names))
        )
        self.names = tuple(names)


class EmptyStratum(InputError):
    def __init__(self, stratum: str):
        super().__init__(f"stratum {stratum!r} has no rows to resample from")
        self.stratum = stratum


class BinMismatch(InputError):
    pass


class SupportViolation(DagSynthError):
    pass


class SingleClassTarget(InputError):
    def __init__(self, target: str):
        super().__init__(f"target column {target!r} has a single class in the training data")
        self.target = target


class ZeroHouseholdSize(InputError):
    def __init__(self, row: int):
        super().__init__(f"row {row}: household size must be positive")
        self.row = row
