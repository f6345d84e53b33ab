"""Natively implemented gradient-boosted tree learners."""
from .binning import BinMapper, BundledBins, BundleMap, efb_bundle
from .goss import GossSample, goss_sample
from .losses import leaf_weight, log_loss, softmax, softmax_gradients, split_gain
from .model import (
    EXACT,
    HISTOGRAM,
    LEARNER_KINDS,
    GbdtModel,
    Hyperparams,
    deserialize,
    model_size_bytes,
    predict_proba,
    serialize,
    train,
)
from .tree import Split, Tree, best_split_exact, best_split_histogram, grow_tree

__all__ = [
    "BinMapper", "BundleMap", "BundledBins", "EXACT", "GbdtModel", "GossSample", "HISTOGRAM",
    "Hyperparams", "LEARNER_KINDS", "Split", "Tree", "best_split_exact", "best_split_histogram",
    "deserialize", "efb_bundle", "goss_sample", "grow_tree", "leaf_weight", "log_loss",
    "model_size_bytes", "predict_proba", "serialize", "softmax", "softmax_gradients", "split_gain",
    "train",
]
