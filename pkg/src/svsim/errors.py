"""Exception types shared across the simulator."""


class LayoutError(ValueError):
    """A gate or state operation does not fit the current rank layout."""


class FusionContractError(ValueError):
    """A fused gate references a qubit at or above the block exponent."""


class TransportError(RuntimeError):
    """A message-passing operation failed or timed out."""


class CircuitParseError(ValueError):
    """A circuit file could not be parsed; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ResourceError(RuntimeError):
    """A run was refused because it would exceed a memory or size guard."""
