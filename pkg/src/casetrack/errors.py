"""Exception types shared across the pipeline.

Every error the HTTP layer can surface maps to exactly one of these
classes; the API attaches a stable machine-readable tag per class.
"""

from __future__ import annotations


class CaseTrackError(Exception):
    """Base class for all domain errors."""


# -- region registry --------------------------------------------------------

class UnknownRegion(CaseTrackError):
    """Region code does not resolve in the registry."""


class UnknownParent(UnknownRegion):
    """Referenced parent region is not registered."""


class DuplicateCode(CaseTrackError):
    """Region code already registered."""


class LevelMismatch(CaseTrackError):
    """Parent is not exactly one level above the child."""


class LeafParent(CaseTrackError):
    """Subdivision-level regions cannot have children."""


# -- series store ------------------------------------------------------------

class MonotonicityViolation(CaseTrackError):
    """A commit would break the non-decreasing order of a stored series."""


class NonMonotonicPayload(CaseTrackError):
    """A full-history replacement payload is not non-decreasing."""


class NotADecrease(CaseTrackError):
    """Repair or decrease classification called with a non-decreasing value."""


class EmptyDateRange(CaseTrackError):
    """Requested date range contains no days."""


class ZeroPopulation(CaseTrackError):
    """Per-million rate requested for a region without positive population."""


# -- ingest ------------------------------------------------------------------

class MalformedPayload(CaseTrackError):
    """Payload bytes cannot be parsed under the source descriptor."""


class EmptyPayload(MalformedPayload):
    """Payload parsed but contains no rows."""


class AlreadyBackfilled(CaseTrackError):
    """Archive backfill already ran for this source."""


class OutOfOrderArchive(CaseTrackError):
    """Backfill archives not supplied oldest-first."""


# -- quality gate ------------------------------------------------------------

class UnknownTicket(CaseTrackError):
    """Hold ticket id does not exist."""


class AlreadyResolved(CaseTrackError):
    """Hold ticket already left the HELD state."""


# -- issue desk --------------------------------------------------------------

class UnknownIssue(CaseTrackError):
    """Issue id does not exist."""


class InvalidTransition(CaseTrackError):
    """Issue state machine does not permit the requested transition."""


class MissingLink(CaseTrackError):
    """Case-category issue submitted without a supporting link."""


class MissingRegion(CaseTrackError):
    """Case-category issue submitted without a region."""
