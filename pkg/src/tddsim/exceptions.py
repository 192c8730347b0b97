"""Exception types raised by the simulator."""


class ParameterError(ValueError):
    """A numeric parameter is out of its valid domain."""


class TopologyError(RuntimeError):
    """The sampled layout cannot support a realization (e.g. no SAPs)."""


class DegenerateGeometryError(RuntimeError):
    """Two nodes that must be distinct share a position."""


class ConfigError(ValueError):
    """A config file could not be parsed or failed validation."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
