"""Models and training.

Everything trainable here is optimized the same way: mini-batch gradients,
hand-derived backward passes, AdaMax updates, optional global-norm clipping,
early stopping on validation loss.  No autograd framework is involved; the
backward passes are checked against finite differences in the test suite.
"""

from sqlsight.learn.transforms import (
    LabelTransform,
    fit_label_transform,
    huber_loss,
    cross_entropy,
    softmax,
    clip_gradient_norm,
)
from sqlsight.learn.optim import AdaMax
from sqlsight.learn.baselines import (
    MfreqModel,
    MedianModel,
    OptCostModel,
    baseline_mfreq,
    baseline_median,
    fit_opt_baseline,
)
from sqlsight.learn.linear import LinearModel
from sqlsight.learn.cnn import CnnModel
from sqlsight.learn.lstm import LstmModel
from sqlsight.learn.training import TrainConfig, train, fit_linear, MODEL_KINDS
from sqlsight.learn.bundle import ModelBundle, save_bundle, load_bundle, predict

__all__ = [
    "LabelTransform",
    "fit_label_transform",
    "huber_loss",
    "cross_entropy",
    "softmax",
    "clip_gradient_norm",
    "AdaMax",
    "MfreqModel",
    "MedianModel",
    "OptCostModel",
    "baseline_mfreq",
    "baseline_median",
    "fit_opt_baseline",
    "LinearModel",
    "fit_linear",
    "CnnModel",
    "LstmModel",
    "TrainConfig",
    "train",
    "MODEL_KINDS",
    "ModelBundle",
    "save_bundle",
    "load_bundle",
    "predict",
]
