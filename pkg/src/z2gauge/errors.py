"""Shared exception types."""


class SizeRefusal(RuntimeError):
    """Raised when an exact enumeration would exceed its configured cap.

    Refusal is deliberate: oracles never silently approximate.
    """
