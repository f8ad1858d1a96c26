"""Engine error taxonomy.

Every failure the engine can signal is a subclass of :class:`EngineError`,
so CLI and service layers can map exceptions to exit codes / HTTP statuses
by name without string matching.
"""


class EngineError(Exception):
    """Base class for all engine failures."""

    @property
    def name(self) -> str:
        return type(self).__name__


class PreconditionError(EngineError):
    """An operation was called with arguments violating its contract."""


# --- mesh core ---------------------------------------------------------


class ParseError(EngineError):
    """Malformed mesh or interchange file."""


class NonManifold(EngineError):
    """An edge bounds more than two triangles."""

    def __init__(self, edge, count):
        self.edge = tuple(int(v) for v in edge)
        self.count = int(count)
        super().__init__(f"edge {self.edge} bounds {self.count} triangles")


class Unreachable(EngineError):
    """No edge path exists between the requested vertices."""


class NoClosedLoop(EngineError):
    """Slice descriptor computation requires at least one closed loop."""


class DegenerateLoop(EngineError):
    """Slice boundary loop is self-intersecting or collapsed."""


# --- annotations --------------------------------------------------------


class InvalidIndex(EngineError):
    """Selector references vertices that are invalid for the mesh."""


class OpenLoop(EngineError):
    """A region boundary loop is not closed."""


class EmptyRegion(EngineError):
    """Region boundary loops do not bound any triangles."""


class SchemaError(EngineError):
    """Interchange file violates the documented schema."""


class IndexOutOfRange(EngineError):
    """File references mesh elements that do not exist."""


class LoopCollapse(EngineError):
    """A transferred boundary loop degenerated below 3 distinct vertices."""


# --- relationship graph -------------------------------------------------


class UnknownAnnotation(EngineError):
    """Relationship references an annotation id that is not present."""


class InvalidParams(EngineError):
    """Constraint parameters fail per-type validation."""


class DanglingAnnotationRef(EngineError):
    """Graph file references annotation ids absent from the annotation set."""


# --- cage binding -------------------------------------------------------


class TopologyChange(EngineError):
    """Generated cage has different genus than the template."""

    def __init__(self, template_genus, cage_genus):
        self.template_genus = int(template_genus)
        self.cage_genus = int(cage_genus)
        super().__init__(
            f"cage genus {self.cage_genus} != template genus {self.template_genus}"
        )


class TargetTooCoarse(EngineError):
    """Decimation target unreachable (below 4 faces or deadlocked)."""


class NumericalBreakdown(EngineError):
    """Coordinate row vanished before normalization."""


class ExteriorVertex(EngineError):
    """Green coordinates requested for vertices outside the cage."""


class ConnectivityMismatch(EngineError):
    """Deformed cage does not share the binding cage's connectivity."""


class CountMismatch(EngineError):
    """Coordinate file row lengths disagree with the declared counts."""


class RotateSingleVertex(EngineError):
    """Rotation about the selection barycenter needs >= 2 vertices."""


# --- solver -------------------------------------------------------------


class GreenCoordsUnsupported(EngineError):
    """Constrained deformation requires a mean-value binding."""


class UnresolvableMeasure(EngineError):
    """Constraint references a measure index absent from the annotation."""


class SingularSystem(EngineError):
    """Global solver matrix is not positive definite."""


class NeverSolved(EngineError):
    """Residual report requested before the first solve."""


# --- fitting ------------------------------------------------------------


class InsufficientLandmarks(EngineError):
    """Fewer than three shared landmarks between template and fragment."""

    def __init__(self, count):
        self.count = int(count)
        super().__init__(f"only {self.count} shared landmarks, need at least 3")


class DuplicateTag(EngineError):
    """A landmark tag occurs more than once on one mesh."""


class DegenerateConfiguration(EngineError):
    """Point set is collinear or coincident; similarity is ill-posed."""


class NoCompatibleAnnotation(EngineError):
    """Fragment shares no annotation tag with the template."""
