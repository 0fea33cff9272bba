"""Exception types shared across the package."""


class HierarchyError(ValueError):
    """Invalid part-hierarchy structure."""


class CycleError(HierarchyError):
    """Decomposition edges contain a cycle."""


class CrossLevelDependencyError(HierarchyError):
    """Dependency edge connects nodes of different levels."""


class MultiParentError(HierarchyError):
    """A node has more than one decomposition parent."""


class LabelSchemaError(HierarchyError):
    """Label table maps an index to a non-leaf, unknown, or duplicated node."""


class UnknownNodeError(HierarchyError):
    """Node id not present in the hierarchy."""


class UnknownLabelError(ValueError):
    """Label map contains values outside the hierarchy's label schema."""


class ShapeError(ValueError):
    """Tensor shape violates an interface contract."""


class RangeError(ValueError):
    """Scalar argument outside its documented range."""


class EmptyChildrenError(ValueError):
    """Attention requested for a node without children."""


class EmptySiblingsError(ValueError):
    """Attention requested for a node without dependency siblings."""


class EmptyMaskError(ValueError):
    """Loss mask selects zero pixels."""


class MissingEdgeError(ValueError):
    """Message aggregation received no embedding for an in-edge."""


class DuplicateEdgeError(ValueError):
    """Message aggregation received two embeddings for one in-edge."""


class NonFiniteGradientError(RuntimeError):
    """Gradient contained NaN or Inf; the optimizer step was aborted."""


class VersionMismatchError(RuntimeError):
    """Stored artifact uses an unsupported schema version."""


class CorruptManifestError(RuntimeError):
    """Dataset or checkpoint manifest is missing or unreadable."""
