"""piostack: PIO corpus construction and stacked multi-label classification.

The pipeline: fetch structured abstracts from PubMed (ingest), map section
headings to P/I/O multi-labels (labeling), clean the sequences (cleaning),
compute TF-IDF/QIEF features (features), train or import base-learner
probabilities (base_learner), and boost them with a cross-validated
gradient-boosted-tree stacker (stacker), evaluated by ROC_AUC/F1 (metrics).
"""

__version__ = "0.1.0"

from .base_learner import (
    BaseProbabilities,
    LinearHead,
    TrainConfig,
    bce_with_logits,
    forward_logits,
    gradient,
    predict,
    predict_proba,
    read_probability_file,
    sigmoid,
    train,
    write_probability_file,
)
from .cleaning import CleanConfig, clean_dataset, is_english, normalize_text, passes_length
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    FetchError,
    PiostackError,
    ProtocolError,
    SchemaError,
    UndefinedMetricError,
    UnstructuredAbstractError,
    ValidationError,
    XmlError,
)
from .features import (
    FeatureVector,
    QiefFeatures,
    TfIdfStats,
    avg_tfidf,
    featurize_dataset,
    fit_tfidf,
    qief_features,
    tokenize,
)
from .gbdt import BoostedTrees, GbdtConfig, fit_gbdt
from .ingest import (
    RawAbstract,
    RawSection,
    SearchSpec,
    fetch_corpus,
    parse_pubmed_xml,
    plan_fetch,
)
from .labeling import (
    HeadingMap,
    LabeledSequence,
    LabelSet,
    category_histogram,
    default_heading_map,
    label_abstract,
    label_corpus,
    map_heading,
    normalize_heading,
)
from .metrics import EvalReport, build_report, confusion, f1_at_threshold, macro_roc_auc, roc_auc
from .stacker import (
    SplitAssignment,
    SplitProtocol,
    StackedModel,
    StackInstance,
    build_stack_instances,
    fit_stacked,
    make_folds,
    predict_stacked,
    split_base_stack,
)
