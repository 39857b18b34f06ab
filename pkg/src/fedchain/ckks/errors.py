class CkksError(Exception):
    """Base class for CKKS failures."""


class ParameterError(CkksError, ValueError):
    pass


class CapacityError(CkksError, ValueError):
    """More values than slots, or a decode count beyond the slot count."""


class RangeError(CkksError, ValueError):
    """Scaled magnitude does not fit the active modulus."""


class AlignmentError(CkksError, ValueError):
    """Operands disagree on level, scale or parameters."""


class DepthError(CkksError):
    """No modulus left to drop."""


class SerializationError(CkksError, ValueError):
    pass
