"""Two-stage fusion of multi-scale lesion segmentations."""
from .activation import ActivationKind, activate, activate_deriv, sigmoid, sinact, sinact_deriv, step
from .components import ComponentLabeling, label_components, split_mask, split_pred, split_train
from .dice import dsc, soft_dice, soft_dice_grad
from .ensemble import (
    EnsembleModel,
    OpinionSet,
    TrainConfig,
    fuse,
    grad_weights,
    initial_model,
    majority_vote,
    merge_groups,
    train_ensemble,
)
from .errors import LesionEnsembleError
from .metrics import MetricsReport, avd, evaluate, hd95, lesion_detection, lesion_f1
from .patching import DEFAULT_SPECS, SamplingSpec, balance_patches, extract_patches, stitch, window_origins
from .phantom import OracleSpec, PhantomSpec, generate_phantom, mc_split, simulate_opinion
from .volume import Volume3, io_roundtrip, normalize_intensity, read_v3d, threshold, write_v3d

__version__ = "0.1.0"
