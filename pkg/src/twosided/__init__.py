"""Two-sided neural networks for multi-task, multi-domain and zero-shot learning.

A linear predictor for a domain or task is generated from its semantic
descriptor ``z``: ``y = (x P) . act(z Q)``. Setting ``z`` to a one-hot index
recovers classic multi-task models, a distributed descriptor lets the model
synthesise weights for unseen domains.
"""
from .core import LossKind, loss, loss_grad, norm_fro, norm_l1, norm_l21
from .data import Dataset, EncodedData
from .descriptor import (
    DISTRIBUTED,
    ONE_HOT_ATOMIC,
    ConcatSchema,
    Descriptor,
    DescriptorSchema,
    concat_mdmt,
    encode,
)
from .kernels import BACKEND
from .model import (
    Structure,
    TwoSidedModel,
    backward,
    effective_weights,
    forward,
    hidden_width,
    init_model,
    load_model,
    save_model,
)
from .optim import RegSpec, TrainConfig, fit, objective, train
from .baselines import (
    BASELINES,
    ModelTensor,
    fit_baseline,
    make_baseline,
    stl_fit,
    tensor_complete,
    tensor_store,
)
from .protocols import (
    ExperimentReport,
    make_split,
    run_baseline,
    run_mdl,
    run_mdmt,
    run_mtl_multiclass,
    run_zsda,
    run_zsl,
)
from .synth import SyntheticSpec, synth_generate

__version__ = "0.1.0"
