"""LLM relevance labelling measured against gold human judgments.

The package labels search results with a scoring endpoint under a family of
prompt templates, then measures those labels: document-level agreement
(MAE, Cohen's kappa, pairwise preference AUC), retrieval effectiveness
(P@k, RBP, AP), ranking consistency between label sources (min-normalised
conjoint RBO and Kendall tau at the query, run, and group level), and the
supporting statistics (document bootstraps, best-prompt tests, marginal
feature effects, repeated-split regret checks).
"""

__version__ = "0.1.0"

from .agreement import (
    ConfusionMatrix2x2,
    PreferencePair,
    cohens_kappa,
    confusion,
    mae,
    pairwise_auc,
    parse_preference_pairs,
    preference_accuracy,
)
from .consistency import (
    ConsistencyReport,
    group_best,
    kendall_tau,
    order_queries,
    order_runs,
    rbo_conjoint,
    rbo_min,
    rbo_min_bruteforce,
    rbo_normalized,
)
from .effectiveness import (
    MetricSpec,
    QueryScoreVector,
    average_precision,
    precision_at_k,
    rbp,
    relevance_of,
    score_run,
)
from .judge import (
    DecodingParams,
    HttpEndpoint,
    JudgeRecord,
    LabelOutcome,
    MockEndpoint,
    ResponseCache,
    aggregate,
    binarize,
    judge,
    mock_judge,
    parse_response,
    score_response,
)
from .manifest import ExperimentManifest, load_manifest
from .prompts import (
    ParaphraseVariant,
    PromptSpec,
    PromptText,
    enumerate_specs,
    load_paraphrase_bank,
    render_prompt,
)
from .stats import (
    BootstrapConfig,
    bootstrap_ci,
    compare_best,
    feature_effects,
    length_bias,
    split_selection,
)
from .trec import (
    DocumentStore,
    LabelSet,
    Run,
    Topic,
    coverage_report,
    get_document,
    parse_qrels,
    parse_run,
    parse_topics,
    stratified_sample,
)
