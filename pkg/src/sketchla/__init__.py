"""sketchla: sketched linear algebra for regression, kernels, and streaming SVD.

Three layers:

- sketch operators (Gaussian, fast Hadamard, count sketch, OSNAP, leverage
  and uniform sampling, compositions) with size-suggestion helpers,
- solvers built on them: fast generalized matrix regression, query-frugal
  SPSD kernel approximation, and single-pass streaming SVD with
  checkpointing,
- a benchmark CLI (``sketchla``) that sweeps budgets, writes CSV results,
  and renders figures.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateTail,
    DimensionMismatch,
    IncompleteStream,
    IndexOutOfRange,
    InvalidSpec,
    IterationFailure,
    NotSquare,
    NotSymmetric,
    OutOfOrderBlock,
    ParseError,
    RankCollapse,
    SketchlaError,
    UnsupportedField,
)
from .matrix import (
    MatrixHandle,
    SvdFactors,
    as_handle,
    best_rank_k,
    fro_norm,
    matrix_rank,
    pseudo_inverse_apply,
    symmetric_eig,
    tail_norm,
    thin_qr,
    thin_svd,
)
from .rng import derive_seed, philox_key, substream
from .sketch import (
    FAMILIES,
    LeverageScores,
    SketchOperator,
    SketchSpec,
    apply_cost,
    apply_left,
    apply_right,
    describe,
    identity_validation_spec,
    leverage_scores,
    property2_deviation,
    realize,
    suggested_embedding_rows,
    suggested_product_rows,
)
from .gmr import (
    GmrProblem,
    GmrSolution,
    RhoDiagnostic,
    project_psd,
    project_symmetric,
    residual_fro,
    rho,
    solve_exact,
    solve_fast,
    solve_fast_symmetric,
    suggested_sketch_rows,
)
from .spsd import (
    KernelOracle,
    MatrixKernelOracle,
    SpsdApproximation,
    approximate,
    error_ratio,
    fast_spsd_baseline,
    materialize,
    nystrom,
    optimal_core,
    query_budget,
    rbf_entry,
    rbf_kernel_dense,
    spectral_ratio_eta,
    suggested_intersection_rows,
    tune_rbf_sigma,
)
from .svd_stream import (
    LowRankFactors,
    PracticalSpSvdState,
    StreamSvdConfig,
    StreamSvdState,
    default_stream_config,
    fast_sp_svd,
    load_checkpoint,
    practical_sp_svd,
    save_checkpoint,
    sf_deviation,
)
from .bench_io import (
    DatasetRecord,
    ResultRow,
    aggregate_plotdata,
    dataset_record,
    default_estimator_rows,
    emit_plotdata,
    estimate_fro_residual,
    load_dataset,
    read_libsvm,
    read_matrix_market,
    read_results,
    synth_lowrank_noise,
    write_matrix_market,
    write_results,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
