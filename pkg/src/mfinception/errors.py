"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Raised when shapes, indices, or configuration fields are inconsistent.

    Covers everything from mismatched tensor shapes to malformed checkpoints;
    the message names the offending field.
    """
