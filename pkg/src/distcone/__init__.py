"""Computations in the cone of finite distance matrices."""
from .cone import (
    FLOAT,
    RATIONAL,
    DistanceMatrix,
    DomainError,
    MetricViolation,
    StructureError,
    ValidationReport,
    nw_corner,
    nw_shift,
    permute,
    validate,
)
from .polytope import (
    AdmissiblePolytope,
    AdmissibleVector,
    ExtensionInterval,
    attach,
    build,
    contains,
    extend_prefix,
    extension_interval,
    extremal_points,
    minkowski_decompose,
)
from .universality import (
    DefectReport,
    epsilon_extend_isometry,
    universality_defect,
    weak_universality_defect,
)
from .sampler import (
    BaseMeasure,
    GrowthConfig,
    UniversalSchedule,
    grow_random,
    grow_universal,
    random_graph_metric,
)
from .distribution import (
    EmpiricalDistribution,
    Fingerprint,
    MetricTriple,
    ball_measure_estimate,
    compare,
    coverage_condition,
    empirical_distribution,
    fingerprint,
    invariance_check,
    sample_matrix,
)

__version__ = "0.1.0"
