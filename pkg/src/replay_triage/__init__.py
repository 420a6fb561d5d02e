"""Root-cause triage for database replay failures.

Classifies failed replay SQL events into root-cause categories with a
mixed-distance KNN over one-hot categorical attributes and vectorized text,
optionally enriched with summarized session context, and closes the loop
with operator reclassification, label harvesting and gated retraining.
"""

from .classifier import (
    ModelSnapshot,
    Prediction,
    TriageKnnClassifier,
    detect_problem_group,
    distance,
    explain,
    fit,
    load_snapshot,
    predict,
    predict_batch,
    save_snapshot,
)
from .context import ContextCollector, ContextSet, collect, context_stats
from .events import (
    CategoricalSchema,
    EventStatus,
    Hyperparameters,
    LabeledEvent,
    LabelSource,
    ReplayEvent,
    RootCauseLabel,
    hash_statement,
    normalize_statement,
    validate_event,
)
from .evaluation import (
    CvReport,
    accuracy,
    certainty_metric,
    compare_grid,
    cross_validate,
    export_embeddings,
    f1_comb,
    f1_macro,
    hyperparameter_search,
    regression_gate,
    stratified_folds,
)
from .features import (
    CategoricalOneHotEncoder,
    FeatureMatrix,
    FeatureVector,
    chi2_importance,
    encode,
    tfidf_term_filter,
)
from .pipeline import classify_replay, fit_model, summarize_failures
from .replay_log import ReplayLog, export, ingest
from .store import OperatorAction, TrainingDataset, TrainingStore, dedup, harvest, weekly_rating_report
from .summarizer import (
    CompletionEndpoint,
    FailureSummary,
    OfflineSummarizer,
    SummaryCache,
    anonymize,
    build_prompt,
    estimate_tokens,
    summarize,
    summary_to_text,
    validate_summary,
)
from .synth import SynthScenario, generate, overlap_scenario
from .text import FeatureMode, compose_text, preprocess
from .vectorizers import SubwordHashingVectorizer, TfidfTextVectorizer

__version__ = "0.1.0"
