"""Evidential classification with a variational Dirichlet objective."""

from .data import Dataset, gaussian_blobs, load_csv, ood_blob, save_csv
from .dirichlet import DirichletParams, PriorParams, effective_kl, kl_divergence, mean, uncertainty
from .estimator import EvidentialClassifier
from .evaluation import EvalReport, auroc, evaluate, fpr_at_95_tpr, predict
from .head import EvidenceHead
from .loss import LossConfig, edl_baseline_loss, expected_mse, vi_loss
from .nn import Mlp
from .theory import certify_gradient_bound, evidence_capacity, lipschitz_constant
from .train import TrainConfig, fit, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
