"""Shared exception classes.

Every error class carries a stable CLI exit code so scripted callers can
branch on failure kind without parsing messages.
"""
from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine failures."""

    exit_code = 10


# --- workspace ---------------------------------------------------------------

class PathNotWritable(EngineError):
    exit_code = 11


class SourceExists(EngineError):
    exit_code = 11


class NoPages(EngineError):
    exit_code = 11


class UnknownSource(EngineError):
    exit_code = 11


class UnknownPage(EngineError):
    exit_code = 11


class WorkspaceLocked(EngineError):
    exit_code = 11


# --- skills ------------------------------------------------------------------

class MalformedFrontMatter(EngineError):
    exit_code = 12


class DuplicateKey(MalformedFrontMatter):
    exit_code = 12


class SkillHalted(EngineError):
    """A skill's prerequisite check failed; carries the halt report."""

    exit_code = 12

    def __init__(self, report):
        super().__init__(report.message)
        self.report = report


class CycleDetected(EngineError):
    exit_code = 12


class UnsatisfiableRequirement(EngineError):
    exit_code = 12


class UnknownSkill(EngineError):
    exit_code = 12


class ProducesMissing(EngineError):
    exit_code = 12


# --- sessions ----------------------------------------------------------------

class UnknownParent(EngineError):
    exit_code = 13


class CorruptLine(EngineError):
    exit_code = 13

    def __init__(self, line_number: int, reason: str = ""):
        super().__init__(f"corrupt session line {line_number}: {reason}")
        self.line_number = line_number


class DanglingParent(EngineError):
    exit_code = 13

    def __init__(self, entry_id: str):
        super().__init__(f"entry parent {entry_id!r} does not precede it")
        self.entry_id = entry_id


class NothingToCompact(EngineError):
    exit_code = 13


# --- agent core --------------------------------------------------------------

class DuplicateTool(EngineError):
    exit_code = 14


class UnknownTool(EngineError):
    exit_code = 14


class SchemaViolation(EngineError):
    exit_code = 14


class DeniedWrite(EngineError):
    exit_code = 14


class ProviderError(EngineError):
    exit_code = 14

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class UnknownConversation(EngineError):
    exit_code = 14


class NoRoute(EngineError):
    exit_code = 14


class ToolLoopLimit(EngineError):
    exit_code = 14


# --- range finding -----------------------------------------------------------

class OracleUnparseable(EngineError):
    exit_code = 15


class RangeNotFound(EngineError):
    exit_code = 15


class NonMonotoneOracle(EngineError):
    exit_code = 15


class UnnumberedPage(EngineError):
    exit_code = 15


# --- prompt building ---------------------------------------------------------

class EmptyColumns(EngineError):
    exit_code = 16


class InvalidColumnName(EngineError):
    exit_code = 16


class UnparseableOutput(EngineError):
    exit_code = 16


# --- batch extraction --------------------------------------------------------

class NoTestRun(EngineError):
    exit_code = 17


class EmptyRange(EngineError):
    exit_code = 17


class NoEstimate(EngineError):
    exit_code = 17


class NotApproved(EngineError):
    exit_code = 17


class UnknownApproval(EngineError):
    exit_code = 17


class AlreadyDecided(EngineError):
    exit_code = 17


class ApprovalDenied(EngineError):
    exit_code = 17


# --- merging -----------------------------------------------------------------

class HeaderMismatch(EngineError):
    exit_code = 18

    def __init__(self, page_id: int, expected, found):
        super().__init__(
            f"page {page_id}: header {found!r} does not match expected {expected!r}"
        )
        self.page_id = page_id


class NoInputFiles(EngineError):
    exit_code = 18


# --- viewer ------------------------------------------------------------------

class PortInUse(EngineError):
    exit_code = 19
