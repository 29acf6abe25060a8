"""Exception types shared across the package."""


class NetotError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NetotError):
    """Invalid input data (network topology, measures, shapes, schemas)."""


class DisconnectedNetworkError(ValidationError):
    """The underlying multigraph is not connected."""


class SelfLoopError(ValidationError):
    """An edge starts and ends at the same vertex."""


class DanglingVertexError(ValidationError):
    """An edge references a vertex id that does not exist."""


class NonpositiveLengthError(ValidationError):
    """An edge has zero or negative length."""


class MassMismatchError(ValidationError):
    """Endpoint measures do not carry the required total mass."""


class ShapeMismatchError(ValidationError):
    """An array does not match the staggered-grid layout."""


class ZeroDensityFluxError(NetotError):
    """Nonzero flux through a face where the interpolated density vanishes."""


class CFLError(NetotError):
    """Time step exceeds the stability bound of the semi-implicit scheme."""


class SchemaError(ValidationError):
    """A problem file does not match the documented JSON schema."""
