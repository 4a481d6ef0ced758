"""Hybrid sample selection for learning with noisy labels.

Confidence-split selection (eigenvector filtering on the high-confidence
subset, adaptive KNN on the low-confidence subset) plus relabeling, a
synthetic noisy-label benchmark generator, a desk-scale trainer, and
detection-quality metrics.
"""

from .aknn import (
    AknnConfig,
    NeighborDiagnostics,
    SimilarityAccessor,
    adaptive_neighborhood,
    aknn_select,
    cosine_similarity,
    knn_vote,
)
from .confidence import ConfidencePartition, otsu_threshold, split_confidence
from .dataset import (
    Dataset,
    Predictions,
    load_dataset,
    normalize_features,
    save_dataset,
)
from .fine import alignment_score, class_dominant_eigenvector, fine_select
from .metrics import (
    SelectionMetrics,
    evaluate_accuracy,
    per_subset_metrics,
    selection_metrics,
)
from .noisegen import (
    ClusterSpec,
    NoiseSpec,
    generate_clusters,
    generate_openset_pool,
    inject,
    inject_asymmetric,
    inject_instance_dependent,
    inject_openset,
    inject_symmetric,
)
from .pipeline import (
    PipelineConfig,
    SelectionResult,
    ablation_select,
    aknn_only_select,
    anne_select,
    fine_only_select,
    fixed_knn_select,
    relabel,
    select,
    small_loss_gmm_select,
)
from .trainer import (
    SoftmaxModel,
    TrainConfig,
    loss_and_grad,
    mixup_batch,
    oversample,
    predict_probs,
    train_loop,
)

__version__ = "0.1.0"
