"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI lives in ``cli.py``: precondition violations
exit 2, training divergence exits 3.
"""


class GanGuardsError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(GanGuardsError):
    """An operation was called with arguments violating its contract."""


class TrainingDivergedError(GanGuardsError):
    """GAN training produced a non-finite loss.

    Carries the last good checkpoint (may be None if divergence happened
    before the first snapshot) so callers can diagnose or resume.
    """

    def __init__(self, message, last_checkpoint=None, stage=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint
        self.stage = stage


class CorruptArtifactError(GanGuardsError):
    """A persisted artifact failed its content-hash or structural check."""
