"""Shared exception types."""


class NonFiniteLossError(RuntimeError):
    """A training loss evaluated to NaN or infinity."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, malformed, or fails a pairing/freeze check."""
