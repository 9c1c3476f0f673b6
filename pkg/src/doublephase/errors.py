"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Mesh geometry violates a precondition (empty mask, asymmetry, non-nesting)."""


class NumericalError(RuntimeError):
    """A numerical routine failed to bracket, converge or stay in range."""


class DegenerateExponentError(ValueError):
    """An operation that needs p < q strictly was called with p == q."""


class FallbackRequired(Exception):
    """The closed-form norm does not apply; the caller must use the plain L^p path.

    Raised instead of silently returning the L^p norm so callers can record
    which route produced the value.
    """
