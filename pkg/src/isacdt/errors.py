"""Exception types shared across the simulator."""


class IsacDtError(Exception):
    """Base class for all simulator errors."""


class InvalidArgumentError(IsacDtError):
    """An argument violates a documented precondition."""


class DegenerateGeometryError(IsacDtError):
    """Geometry query on coincident or otherwise degenerate inputs."""


class StaleEventError(IsacDtError):
    """Repository event older than the last accepted event from the same source."""


class NotFoundError(IsacDtError):
    """Lookup of a track or node id that does not exist."""


class InvalidPartitionError(IsacDtError):
    """Local twin regions overlap or fail to tile the world bounds."""


class InsufficientEvidenceError(IsacDtError):
    """Claimed trajectory and sensed track share no time span."""


class InsufficientPilotsError(IsacDtError):
    """Fewer pilot observations than candidate angles: system underdetermined."""


class UndefinedMetricError(IsacDtError):
    """Metric requested over an empty support (no observed cells, no edges, ...)."""


class ConfigError(IsacDtError):
    """Scenario configuration invalid. Carries the offending field path."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")
