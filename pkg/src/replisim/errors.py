"""Exception types shared across the replication model, engine and simulator."""

from __future__ import annotations


class ReplicationError(Exception):
    """Base class for every error this package raises on purpose."""


class SchemaMismatch(ReplicationError):
    """Row or table does not agree with the schema it is used against."""


class UnknownColumn(ReplicationError):
    """A statement referenced a column the schema does not define."""


class UnknownTable(ReplicationError):
    """A statement referenced a table the site does not have."""


class DuplicateKey(ReplicationError):
    """An insert collided with an existing primary key."""


class RowMissing(ReplicationError):
    """An update or delete addressed a primary key that is not present."""


class TypeMismatch(ReplicationError):
    """A value or comparison crossed the Integer/Text boundary."""


class PrimaryKeyAssignment(ReplicationError):
    """An update tried to assign the primary key column."""


class ParseError(ReplicationError):
    """Statement text failed to parse.

    Carries the byte offset of the offending token and a short description
    of what the parser expected there.
    """

    def __init__(self, offset: int, expected: str, found: str = "") -> None:
        self.offset = offset
        self.expected = expected
        self.found = found
        detail = f"at byte {offset}: expected {expected}"
        if found:
            detail += f", found {found}"
        super().__init__(detail)


class DmlRejectedQuiesced(ReplicationError):
    """Client DML arrived while the owning master group was quiesced."""


class AlreadyQuiesced(ReplicationError):
    """Suspend was requested for a group that is not fully active."""


class NotQuiesced(ReplicationError):
    """Resume was requested for a group that is not suspended."""


class UnknownGroup(ReplicationError):
    """An operation named a master group the site does not know."""


class OverlayError(ReplicationError):
    """Overlay lifecycle misuse (double begin, finalize while quiesced, ...)."""


class OverlayAlreadyActive(OverlayError):
    """begin_overlay named a group whose shadow tables are still buffering."""


class GroupQuiesced(OverlayError):
    """finalize_overlay ran before the group's replication was resumed."""


class LinkDown(ReplicationError):
    """A transfer was costed against a link that is currently partitioned."""


class UnknownTxn(ReplicationError):
    """An error-queue operation named a transaction id that is not queued."""


class ScenarioError(ReplicationError):
    """A scenario file failed to parse or validate.

    Carries the line number when one is known.
    """

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
