"""Cellular sheaves on graphs as quiver representations: Laplacian
diffusion, global sections, moment-map balance regularizers, and small
trainable diffusion classifiers.
"""

from .errors import (
    SheafError,
    ParseError,
    StructuralError,
    ConditioningError,
    NumericError,
    PreconditionError,
    BorderlineRankWarning,
    exit_code_for,
)
from .graphs import (
    Graph,
    IncidenceQuiver,
    DimensionVector,
    GaugeElement,
    build_incidence_quiver,
    uniform_dims,
    load_graph,
    save_graph,
)
from .sheaves import (
    CellularSheaf,
    Subrepresentation,
    TrivialLineBasis,
    build_sheaf,
    identity_sheaf,
    coboundary_matrix,
    sheaf_laplacian,
    dirichlet_energy,
    direct_sum,
    apply_gauge,
    verify_subrepresentation,
    find_trivial_lines,
    load_sheaf,
    save_sheaf,
)
from .harmonic import (
    HarmonicBasis,
    kernel_basis,
    harmonic_projection,
    principal_angles,
    max_principal_angle,
    restricted_sheaf,
    verify_kernel_decomposition,
    verify_harmonic_injection,
)
from .stability import (
    MomentMapValue,
    ThetaVector,
    moment_map,
    cent_mm,
    theta_mm,
    project_theta,
    theta_weight,
    check_king_semistable,
    stability_wall_diagnostic,
)
from .diffusion import (
    DiffusionConfig,
    DiffusionReport,
    spectral_gap,
    default_alpha,
    spectral_diffuse,
    euler_diffuse,
    oversmoothing_probe,
)
from .sampling import (
    random_connected_graph,
    cycle_graph,
    path_graph,
    random_dims,
    random_sheaf,
    random_orthogonal_gauge,
    random_gauge,
    planted_line_sheaf,
    signed_cycle_sheaf,
    summand_subrepresentation,
)
from .model import LossBreakdown, SheafModel, count_parameters
from .datasets import (
    Split,
    DatasetBundle,
    edge_homophily,
    summarize,
    random_split,
    generate_two_block,
    planted_signed_sheaf,
    load_dataset,
    write_dataset,
    write_fixture_dataset,
)
from .training import (
    TrainConfig,
    TrainResult,
    EpochRecord,
    train,
    evaluate,
    save_checkpoint,
    load_checkpoint,
    write_history_csv,
)
from .experiments import (
    ExperimentSpec,
    ResultRecord,
    AggregateRecord,
    run_grid,
    run_depth_ablation,
    matched_square_control,
    frozen_identity_baseline,
    emit_results,
    parse_results,
    format_mean_std,
)
from .verification import SuiteReport, ALL_SUITES, run_suite, run_all_suites

__version__ = "0.1.0"
