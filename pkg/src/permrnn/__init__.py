"""Small RNNs, DeepSets and invariance regularizers on a numpy autodiff core."""

from .auditor import (AuditReport, audit_pair_swap, audit_perm_invariance, audit_subset_invariance,
                      swap_chain)
from .constructions import (build_parity_rnn, min_deepsets_units, parity_model, reduce_binary_deepsets,
                            trace_piecewise_linear)
from .errors import ConfigError, ContractError, DimensionError, TrainingDiverged, UnsupportedError
from .kernels import BACKEND
from .models import (DeepSetsModel, Encoding, SequenceModel, deepsets_forward, load_model, run_sequence,
                     save_model)
from .regularizers import SamplerConfig, StateBank, collect_states, sire_penalty, sub_penalty, swap_residual
from .tasks import SequenceDataset, gen_arithmetic, gen_parity, load_dataset, local_perturb, save_dataset
from .tensor import Tensor, backward, grad_check, no_grad
from .training import TrainingConfig, evaluate_accuracy, evaluate_rmse, fit, holdout_select

__version__ = "0.1.0"
