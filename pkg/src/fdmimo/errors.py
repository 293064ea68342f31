class FdmimoError(Exception):
    pass


class ShapeMismatch(FdmimoError, ValueError):
    pass


class NotPositiveDefinite(FdmimoError, ValueError):
    pass


class InvalidGeometry(FdmimoError, ValueError):
    pass


class DegenerateRange(FdmimoError, ValueError):
    pass


class NonFiniteLoss(FdmimoError, RuntimeError):
    pass


class ZeroReference(FdmimoError, ValueError):
    pass


class FormatError(FdmimoError, ValueError):
    pass


class IoError(FdmimoError, OSError):
    pass
