"""levelflow: numerical laboratory for the level set flow of mean curvature."""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    Band,
    Grid,
    ScalarField,
    interface_cells,
    interior_inradius,
    load_snapshot,
    save_snapshot,
    value_band,
)
from .reinit import band_gradient_magnitude, distance_quality, reinitialize  # noqa: F401
from .operators import (  # noqa: F401
    StencilConfig,
    curvature_term,
    flow_residual,
    gradient,
    normal_velocity,
    second_fundamental_form_norm,
)
from .shapes import ShapeSpec, complement, level_family, signed_distance  # noqa: F401
from .evolution import (  # noqa: F401
    DiagnosticsReport,
    EvolveConfig,
    SpacetimeTrack,
    arrival_time,
    boundary_slice,
    discrepancy_time,
    evolve,
    fattening_time,
    flow_pair,
    left_limit_check,
    region_slice,
    step,
)
from .singularity import (  # noqa: F401
    BlowupResult,
    SingularEvent,
    convexity_defect,
    curvature_scale_product,
    detect_singularities,
    gaussian_density,
    mean_convex_type_check,
    parabolic_rescale,
    shrinker_fit,
)
from .certificates import (  # noqa: F401
    SmoothTestFlow,
    analytic_radius,
    avoidance_check,
    countable_times_probe,
    level_sweep,
    residual_certificate,
    scaled_levelset_avoidance,
)
