"""Ripley's K function for areal data (RKAD) and point-process comparators."""

from .comparators import (
    PointPattern,
    ann_test,
    centroid_pattern,
    k_envelope_test,
    k_hat,
    scan_null,
    scan_test,
)
from .errors import (
    BudgetError,
    IncompatibleNullError,
    InfeasibleSampleError,
    RkadError,
    UndefinedStatisticError,
    ValidationError,
)
from .geometry import (
    Point,
    PolygonSet,
    arc_fraction_inside,
    disc_polygon_intersection_area,
    polygon_area,
    polygon_centroid,
)
from .io import load_null, load_study, save_null
from .sampling import RngStream, cluster_sample, single_zone_weights, swor
from .simstudy import SCENARIOS, RejectionTable, make_grid_study, run_scenario, run_study
from .statistic import (
    NullDistribution,
    RkadResult,
    estimate_null,
    exact_m_null,
    m_avg,
    m_local,
    rkad_test,
    t_statistic,
)
from .study import ArealUnit, StudyArea, build_adjacency, observed_coverage

__version__ = "0.1.0"
