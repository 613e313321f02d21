"""Cross-modal retrieval between paintings and artistic texts."""

from .cca import CcaModel, cca_project, fit_cca
from .corpus import (
    ArtworkTriplet,
    AttributeSet,
    Corpus,
    attribute_labels,
    build_label_maps,
    parse_metadata,
    split_corpus,
    write_metadata,
)
from .embedding import (
    AmdModel,
    CmlModel,
    ProjectionHead,
    TrainConfig,
    amd_loss,
    cml_loss,
    project,
    train_amd,
    train_cml,
)
from .evaluation import (
    EvalReport,
    PoolTask,
    evaluate_scores,
    median_rank,
    pool_eval,
    random_baseline,
    rank_queries,
    recall_at_k,
    score_all,
)
from .features import (
    ConvFeatureMap,
    FeatureStore,
    load_conv_maps,
    load_feature_file,
    rmac_pool,
    rmac_regions,
    save_conv_maps,
    save_feature_file,
)
from .synthetic import make_synthetic_corpus
from .text import (
    SparseTextVector,
    TextEncoder,
    Vocabulary,
    build_comment_vocab,
    build_title_vocab,
    concat_text,
    tfidf_encode,
    tokenize,
)

__version__ = "0.1.0"
