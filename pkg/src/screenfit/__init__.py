"""Staged feature screening, logistic scorecard fitting, and decile evaluation."""

__version__ = "0.1.0"

from .errors import CellParseError, ComputationError, ScreenfitError, ValidationError
from .table import (
    ColumnKind,
    ColumnSpec,
    DataTable,
    SplitResult,
    TableSchema,
    impute_median,
    load_schema,
    load_table,
    save_schema,
    save_table,
    split_train_validation,
    stratified_sample,
)
from .screening import (
    ChiSquareResult,
    IvResult,
    LevelMapping,
    ProportionPoint,
    ScreeningReport,
    StagePlan,
    TTestResult,
    apply_level_mapping,
    chi_square_binary,
    merge_levels,
    occupancy_filter,
    proportion_curve,
    run_screening,
    t_test_multivalued,
    woe_iv,
)
from .varclus import (
    ClusterSelection,
    CorrelationMatrix,
    VariableCluster,
    cluster_variables,
    correlation_matrix,
    select_representatives,
)
from .logit import (
    DesignMatrix,
    LogisticModel,
    StepwiseTrace,
    Term,
    encode_design,
    fit_irls,
    global_null_lr,
    log_likelihood,
    prune_collinear,
    sbc,
    stepwise_select,
    wald_and_derived,
)
from .evaluation import (
    ConfusionMatrix,
    DecileRow,
    Metrics,
    ScoreSet,
    assign_deciles,
    confusion_matrix,
    decile_table,
    export_chart_data,
    metrics,
    score,
)
from .synthgen import GroundTruth, SyntheticSpec, generate, oracle_metrics
from .config import PipelineConfig, SplitConfig, StepwiseConfig, load_config
from .pipeline import PipelineResult, run_pipeline

__all__ = [name for name in dir() if not name.startswith("_")]
