"""Quantile forecasting via a nearest-neighbors quantile filter.

The filter replaces each training target by empirical quantiles of its
nearest neighbors' targets, so ordinary regression fits (least squares,
backpropagation) yield quantile models without touching a pinball loss.
Baselines (kNN quantile regression, pinball-minimizing polynomials) and
a rolling-task evaluation harness round out the toolkit.
"""

from .baselines import (
    BenchmarkTable,
    KnnqrModel,
    fit_knnqr,
    fit_tqr,
    knnqr_predict,
    load_benchmark_table,
)
from .dataprep import (
    ColumnSchema,
    DesignMatrix,
    EmbeddingSpec,
    FeatureSelection,
    TimeSeriesTable,
    build_design_matrix,
    build_feature_matrix,
    difference_channel,
    forward_select,
    ingest_csv,
    night_mask,
    normalize,
    take_features,
)
from .evaluation import (
    EvaluationReport,
    OpCounter,
    TaskResult,
    average_pinball,
    computational_effort,
    pinball_loss,
    reliability,
    skill_score,
)
from .models import (
    InputSchema,
    QuantileModelSet,
    clamp_quantile_path,
    deserialize_models,
    load_models,
    predict_clamped,
    save_models,
    serialize_models,
)
from .nnqf import (
    DEFAULT_LEVELS,
    ModifiedTargets,
    NeighborSet,
    NnqfConfig,
    apply_filter,
    empirical_quantile,
    find_neighbors,
    inverse_variance_weights,
    neighbors_of,
    weighted_distance,
)
from .regressors import (
    NetworkSpec,
    PolynomialSpec,
    fit_network,
    fit_polynomial_constrained,
    network_forward,
    network_loss_grad,
)
from .synth import SyntheticSpec, generate, read_canonical, write_canonical
from .tasks import (
    AccessLog,
    GuardedTable,
    PipelineConfig,
    TaskWindow,
    gefcom14_windows,
    run_task,
    scaling_study,
    train_instances,
)

__version__ = "0.1.0"
