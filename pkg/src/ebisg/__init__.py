"""Probabilistic race prediction from names and geography.

Computes BISG/BIFSG posteriors from Census-style tables and replaces the
uninformative prior for unlisted names with trained embedding-based
predictions. Ships a synthetic-population generator with exact analytic
oracles and the evaluation suite needed to compare method variants.
"""

__version__ = "0.1.0"

from .races import RACES, N_RACES
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    PriorError,
    ToolkitError,
    TrainingError,
)
from .tables import (
    GeoTable,
    IncomeTable,
    NameEntry,
    NameTable,
    TableSet,
    VoterRecord,
    coverage_report,
    fullname_string,
    load_geo_table,
    load_income_table,
    load_name_table,
    load_voters,
    lookup_name,
    normalize_name,
)
from .embedding import (
    EmbeddingStore,
    NgramProvider,
    StoreProvider,
    build_store,
    embed_char_ngram,
    get_embedding,
    load_embedding_store,
    write_embedding_store,
)
from .posterior import (
    Method,
    MethodKind,
    ModelSet,
    Prediction,
    PredictionSet,
    PriorBundle,
    Scope,
    batch_predict,
    bifsg_posterior,
    bisg_posterior,
    ebisg_posterior,
    fullname_posterior,
    write_predictions,
)
from .prior_model import (
    MlpArchitecture,
    MlpWeights,
    PriorModel,
    SearchSpace,
    TrainingConfig,
    TrainReport,
    dataset_from_name_table,
    dataset_from_voters,
    forward,
    hyperparameter_search,
    load_weights,
    loss,
    predict_prior,
    save_weights,
    train,
)
from .synth import (
    GeneratorConfig,
    SyntheticPopulation,
    Truth,
    analytic_posterior,
    build_truth,
    generate_population,
    load_truth_labels,
    write_population,
)
from .evaluation import (
    BrierByDecile,
    CalibrationTable,
    ComparisonReport,
    MaeReport,
    PrCurve,
    brier_by_income_decile,
    brier_score,
    calibration_table,
    mean_brier,
    method_comparison,
    precision_recall_curve,
    tract_mae,
    write_report_bundle,
)
