"""robustmap: layerwise adversarial-robustness analysis for small classifiers.

Attack a model with auto-scheduled PGD, capture per-layer representations of
clean and perturbed inputs, embed them jointly with Barnes-Hut t-SNE, and
score each layer by how many clean/perturbed pairs still overlap on the map.
"""

from .attacks import (AdversarialBatch, AttackConfig, apgd_attack, apgd_targeted,
                      attack_dataset, project_ball, robust_accuracy)
from .data import LabeledDataset, load_dataset, save_dataset, stratified_split, synthetic_dataset
from .embedmap import EmbeddingMap, joint_embedding
from .layers import LayerSpec
from .losses import ce_loss, dlr_loss, targeted_dlr_loss
from .metric import (LayerRobustnessReport, OverlapInputs, overlap_flags, overlapping,
                     per_layer_metrics, robustness_metric)
from .network import Network, build_network
from .pca import pca_initialize
from .affinities import calibrate_affinities
from .pipeline import (AnalysisConfig, RunManifest, calibrate_epsilon, export_report,
                       run_analysis, toy_cnn)
from .render import RenderOptions, render_map
from .training import TrainConfig, TrainingReport, evaluate_accuracy, train
from .tsne import TsneConfig, bh_gradient, exact_gradient, tsne_embed

__version__ = "0.1.0"
