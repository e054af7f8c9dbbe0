"""Context-aware dynamic graph convolution for hyperspectral image classification."""

from .autodiff import Tensor, backward, no_grad
from .data import HsiCube, LabelRaster, Split, load_cube, normalize_bands, read_cube, sample_split
from .errors import ContractError, FormatError, ShapeError, TrainingDiverged
from .metrics import Metrics, compute_metrics
from .model import ModelParams, RegionGraph, TrainedModel, forward, loss
from .trainer import RunRecord, TrainConfig, predict, run_ablation, train

__version__ = "0.1.0"
