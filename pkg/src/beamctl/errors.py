"""Structured error codes shared by every layer.

Every failure crossing a module boundary is a BeamlineError carrying one of
the wire-level codes below; the device server converts them into error
responses instead of letting them propagate.
"""


class BeamlineError(Exception):
    code = "E_INTERNAL"

    def __init__(self, message: str = "", code: str | None = None):
        super().__init__(message or self.__class__.code)
        if code is not None:
            self.code = code

    @property
    def message(self) -> str:
        return str(self)


class RangeError(BeamlineError):
    code = "E_RANGE"


class UnsolvableError(BeamlineError):
    code = "E_UNSOLVABLE"


class NoUnitError(BeamlineError):
    code = "E_NO_UNIT"


class LimitError(BeamlineError):
    code = "E_LIMIT"


class BusyError(BeamlineError):
    code = "E_BUSY"


class FaultError(BeamlineError):
    code = "E_FAULT"


class StaleFitError(BeamlineError):
    code = "E_STALE_FIT"


class NoScanError(BeamlineError):
    code = "E_NO_SCAN"


class ParseError(BeamlineError):
    code = "E_PARSE"


class ProtocolError(BeamlineError):
    code = "E_PROTO"


class ConnectionLost(BeamlineError):
    code = "E_CONN"


class IoError(BeamlineError):
    code = "E_IO"


class ConfigInvalid(BeamlineError):
    code = "E_CONFIG"
