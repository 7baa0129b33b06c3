"""Exception hierarchy shared by every SDAVS module."""


class SDAVSError(Exception):
    """Base class for all errors raised by the package"""

    exit_code = 1


class ConfigError(SDAVSError):
    """Invalid run configuration or environment setting"""

    exit_code = 2


class ShapeError(SDAVSError, ValueError):
    """Operand shapes that cannot be combined"""


class GraphError(SDAVSError):
    """Misuse of the autodiff graph (e.g. backward on a non-scalar)"""


class NonFiniteError(SDAVSError, FloatingPointError):
    """A forward op or gradient produced NaN/Inf"""

    exit_code = 3

    def __init__(self, op: str, tensor_name: str = None, count: int = 0):
        self.op = op
        self.tensor_name = tensor_name
        self.count = count
        where = f"tensor '{tensor_name}'" if tensor_name else f"output of op '{op}'"
        super().__init__(f"non-finite values ({count}) in {where}")


class CheckpointError(SDAVSError):
    """Malformed, truncated or mismatching checkpoint container"""


class AudioError(SDAVSError, ValueError):
    """Waveform that violates the audio frontend contract"""


class TargetError(SDAVSError, ValueError):
    """Ground-truth mask that is not binary"""
