"""2D ferromagnetic Ising model with non-uniform external magnetic fields.

Exact finite-volume Gibbs computations (brute force and transfer matrix),
the dual-lattice contour representation with signed weights, closed-form
series bounds, a reproducible Metropolis sampler, and an experiment CLI.
"""

__version__ = "0.1.0"

from .bounds import (
    SeriesValue,
    c_beta,
    c_beta_truncated,
    count_surrounding_contours,
    entropy_ratio,
    peierls_bound,
    peierls_bound_truncated,
    plus_bc_lower_bound,
)
from .contour import (
    Contour,
    ContourFamily,
    NestingForest,
    SandwichResult,
    contour_weight_log,
    dual_edges_of_plus_set,
    extract_contours,
    involves,
    iter_families,
    lemma2_sandwich_check,
    lemma2_sandwich_exhaustive,
    log_partition_contour,
    minus_bc_plus_probability_bound,
    nesting_forest,
    reconstruct_configuration,
    trace_loops,
    weight_identity_residual,
)
from .errors import (
    CapacityError,
    InvalidFamilyError,
    InvalidRegionError,
    IsingError,
    RegimeError,
    VerificationError,
)
from .field_lattice import (
    FieldNorms,
    FieldSpec,
    ModelParams,
    Region,
    Site,
    field_norms,
    graph_distance,
    make_box,
    neighbors,
    parse_field_spec,
)
from .gibbs_exact import (
    BRUTE_SITE_CAP,
    TRANSFER_SIDE_CAP,
    BoundaryCondition,
    GibbsSummary,
    SpinConfiguration,
    energy,
    energy_normalized_minus,
    event_log_probability,
    free_sites,
    gibbs_summary,
    iter_minus_configurations,
    log_partition,
    log_partition_brute,
    log_partition_normalized_minus,
    log_partition_transfer,
    magnetization,
    magnetization_gap,
    minus_normalized_energy_table,
    pinned_ratio_check,
    truncated_correlation,
)
from .sampler import RNG_NAME, ChainConfig, SampleResult, sample_gap, sample_magnetization
