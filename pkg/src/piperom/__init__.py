"""Reduced-order emulation of transient gas pressure on pipeline inner walls.

Pipeline: generate snapshot data with a 1-D compressible pipe-flow surrogate,
compress with POD, fit polynomial latent dynamics by operator inference, and
benchmark blocked autoregressive rollouts against classical baselines.
"""

from .baselines import LinearARModel, ar_rollout, fit_linear_ar, mean_forecast, persistence_forecast
from .bench import (
    ExperimentConfig,
    RankPolicy,
    Report,
    error_curve,
    import_external_predictions,
    rmse,
    run_experiment,
    write_report,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    DimensionError,
    DivergenceError,
    DomainError,
    FitFailureError,
    FormatError,
    PipeRomError,
    StabilityError,
)
from .fields import (
    FieldLayout,
    FieldSpec,
    FluidProperties,
    PipeGeometry,
    SnapshotMatrix,
    assemble_snapshots,
    disassemble,
    rescale,
    reynolds,
    select_fields,
    split_sequences,
    to_raw,
)
from .opinf import (
    RegularizationConfig,
    ReducedOperators,
    build_data_matrix,
    estimate_derivatives,
    expand_kron,
    fit_opinf,
    forecast_full,
    kron_compressed,
    kron_compressed_cubic,
    rollout,
    solve_tikhonov,
)
from .pod import PodBasis, fit_basis, project, reconstruct, select_rank, subspace_shift, truncate
from .solver import (
    DEFAULT_PIPE,
    HYDROGEN,
    InletProfile,
    SolverConfig,
    SolverState,
    generate_dataset,
    inlet_velocity,
    stable_dt,
    step,
    turbulence_proxies,
    uniform_state,
)

__version__ = "0.1.0"
