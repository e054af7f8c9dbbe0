"""Seeded full-batch training, validation snapshots, prediction and ablations."""

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import apply_band_ranges, normalize_bands, sample_split
from .errors import ContractError, TrainingDiverged
from .metrics import compute_metrics
from .model import (
    LabelMatrix,
    PixelGraph,
    RegionGraph,
    TrainedModel,
    forward,
    forward_pixel_graph,
    init_params,
    loss,
    predict_classes,
)
from .optim import Adam
from .segmentation import init_anchors, pca_reduce, slic_segment

log = logging.getLogger(__name__)

VARIANTS = ("full", "v1", "v2", "v3")
VARIANT_ALIASES = {"no-metric": "v1", "no-edge-filter": "v2", "no-projection": "v3"}


@dataclass
class TrainConfig:
    iterations: int = 1500
    learning_rate: float = 0.001
    hidden_width: int = 60
    beta: float = 0.01
    gamma: float = 0.2
    region_count: int = 200
    slic_compactness: float = 0.1
    slic_iters: int = 10
    pca_components: int = 3
    layer_count: int = 2
    seed: int = 0
    per_class: int = 30
    small_class_budget: int = 15
    val_fraction: float = 0.1
    val_every: int = 50  # 0 disables validation snapshots
    normalization: str = "minmax"  # or "none"
    renormalize_filtered: bool = True
    metric_rank: int | None = None  # None: square factors
    metric_noise: float = 0.01
    loss_reduction: str = "sum"  # or "mean"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be > 0")
        if self.beta < 0:
            raise ContractError("beta must be >= 0")
        if not self.gamma > 0:
            raise ContractError("gamma must be > 0")
        if self.layer_count < 1 or self.hidden_width < 1 or self.region_count < 1:
            raise ContractError("layer_count, hidden_width and region_count must be >= 1")
        if self.val_every < 0:
            raise ContractError("val_every must be >= 0")
        if self.normalization not in ("minmax", "none"):
            raise ContractError(f"unknown normalization {self.normalization!r}")
        if self.loss_reduction not in ("sum", "mean"):
            raise ContractError(f"unknown loss_reduction {self.loss_reduction!r}")

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ContractError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)

    def to_dict(self):
        return dataclasses.asdict(self)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        values = json.load(fh)
    if not isinstance(values, dict):
        raise ContractError("config file must hold a JSON object")
    return TrainConfig.from_dict(values), values


@dataclass
class RunRecord:
    config: dict
    variant: str = "full"
    losses: list = field(default_factory=list)
    val_history: list = field(default_factory=list)  # {"iteration", "oa", "loss"}
    best_iteration: int | None = None
    metrics: dict | None = None  # test metrics of the returned (snapshot) model
    final_metrics: dict | None = None  # test metrics of the last iterate
    wall_clock_seconds: float = 0.0
    region_count: int | None = None
    n_classes: int | None = None
    train_idx: list = field(default_factory=list)
    val_idx: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    diverged_at: int | None = None

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


@dataclass
class Prepared:
    Z: np.ndarray  # (n, d) normalized pixel spectra
    band_ranges: np.ndarray | None
    split: object
    flat_labels: np.ndarray
    n_classes: int
    shape: tuple


def prepare(cube, labels, config):
    if labels.labels.shape != (cube.height, cube.width):
        raise ContractError(
            f"labels {labels.labels.shape} do not match cube {(cube.height, cube.width)}"
        )
    present = np.unique(labels.flat()[labels.flat() > 0])
    if len(present) < 2:
        raise ContractError("need at least two labeled classes")
    if config.normalization == "minmax":
        cube = normalize_bands(cube)
    split = sample_split(
        labels, config.per_class, config.small_class_budget, config.val_fraction, config.seed
    )
    return Prepared(
        cube.pixels().copy(),
        cube.band_ranges,
        split,
        labels.flat().copy(),
        labels.n_classes,
        (cube.height, cube.width),
    )


def segment(prep, config):
    h, w = prep.shape
    feats = pca_reduce(prep.Z.reshape(h, w, -1), min(config.pca_components, prep.Z.shape[1]))
    return slic_segment(feats, config.region_count, config.slic_compactness, config.slic_iters)


def _widths(d, config, n_classes):
    return [d] + [config.hidden_width] * (config.layer_count - 1) + [n_classes]


def _fit(prep, config, params, run_forward, record):
    """Adam loop shared by every variant. Returns the best-validation snapshot."""
    train_Y = LabelMatrix.from_labels(prep.flat_labels, prep.split.train_idx, prep.n_classes)
    val_idx = prep.split.val_idx
    val_Y = LabelMatrix.from_labels(prep.flat_labels, val_idx, prep.n_classes)
    trainables = params.trainables()
    opt = Adam(trainables, lr=config.learning_rate)
    scale = 1.0 / len(train_Y.labeled_idx) if config.loss_reduction == "mean" else 1.0
    best_key, best = None, None

    for it in range(1, config.iterations + 1):
        ad.zero_grad(trainables)
        O = run_forward(params)
        L = loss(O, train_Y) * scale
        value = float(L.data)
        if not math.isfinite(value):
            record.diverged_at = it
            raise TrainingDiverged(it, record)
        record.losses.append(value)
        ad.backward(L, trainables)
        opt.step()

        if config.val_every and len(val_idx) and (it % config.val_every == 0 or it == config.iterations):
            with ad.no_grad():
                O_val = run_forward(params)
                val_loss = float(loss(O_val, val_Y).data)
            pred = predict_classes(O_val.data)
            oa = float(np.mean(pred[val_idx] == prep.flat_labels[val_idx]))
            record.val_history.append({"iteration": it, "oa": oa, "loss": val_loss})
            key = (oa, -val_loss)
            if best_key is None or key > best_key:
                best_key, best = key, params.copy()
                record.best_iteration = it
    if best is None:
        best = params.copy()
        record.best_iteration = config.iterations
    return best


def _test_metrics(prep, O):
    if len(prep.split.test_idx) == 0:
        return None
    pred = predict_classes(O)
    return compute_metrics(pred, prep.flat_labels, prep.split.test_idx, prep.n_classes).to_dict()


def _new_record(config, variant, prep):
    return RunRecord(
        config=config.to_dict(),
        variant=variant,
        n_classes=prep.n_classes,
        train_idx=prep.split.train_idx.tolist(),
        val_idx=prep.split.val_idx.tolist(),
        warnings=list(prep.split.warnings),
    )


def _param_rng(seed):
    return np.random.default_rng([seed, 1])


def train(cube, labels, config, variant="full"):
    """Train on a cube and label raster. Returns ``(TrainedModel, RunRecord)``.

    ``variant`` is ``full``, ``v1`` (metric factors fixed at identity) or
    ``v2`` (edge filter off). The pixel-graph variant is only available
    through :func:`run_ablation`.
    """
    variant = VARIANT_ALIASES.get(variant, variant)
    if variant not in ("full", "v1", "v2"):
        raise ContractError(f"train supports variants full, v1, v2; got {variant!r}")
    start = time.perf_counter()
    prep = prepare(cube, labels, config)
    seg = segment(prep, config)
    graph = RegionGraph.from_segmentation(seg)
    V0 = init_anchors(prep.Z.reshape(*prep.shape, -1), seg)
    params = init_params(
        V0,
        _widths(prep.Z.shape[1], config, prep.n_classes),
        _param_rng(config.seed),
        metric_rank=config.metric_rank,
        metric_noise=config.metric_noise,
        train_metric=variant != "v1",
    )
    beta = 0.0 if variant == "v2" else config.beta
    record = _new_record(config, variant, prep)
    record.region_count = seg.region_count
    Z = ad.Tensor(prep.Z)

    def run_forward(p):
        return forward(Z, graph, p, config.gamma, beta, config.renormalize_filtered).O

    try:
        best = _fit(prep, config, params, run_forward, record)
    finally:
        record.wall_clock_seconds = time.perf_counter() - start
    with ad.no_grad():
        record.final_metrics = _test_metrics(prep, run_forward(params).data)
        record.metrics = _test_metrics(prep, run_forward(best).data)
    record.wall_clock_seconds = time.perf_counter() - start
    model = TrainedModel(
        best, seg.region_of, config.gamma, beta, config.renormalize_filtered, prep.band_ranges
    )
    return model, record


def _train_pixel_graph(cube, labels, config):
    start = time.perf_counter()
    prep = prepare(cube, labels, config)
    graph = PixelGraph.eight_neighbors(*prep.shape)
    params = init_params(
        None,
        _widths(prep.Z.shape[1], config, prep.n_classes),
        _param_rng(config.seed),
        metric_rank=config.metric_rank,
        metric_noise=config.metric_noise,
    )
    record = _new_record(config, "v3", prep)
    Z = ad.Tensor(prep.Z)

    def run_forward(p):
        return forward_pixel_graph(Z, graph, p, config.gamma, config.beta)

    try:
        best = _fit(prep, config, params, run_forward, record)
    finally:
        record.wall_clock_seconds = time.perf_counter() - start
    with ad.no_grad():
        record.final_metrics = _test_metrics(prep, run_forward(params).data)
        record.metrics = _test_metrics(prep, run_forward(best).data)
    record.wall_clock_seconds = time.perf_counter() - start
    return record


def run_ablation(cube, labels, config, variant):
    """Train one model variant under the given config and return its RunRecord."""
    variant = VARIANT_ALIASES.get(variant, variant)
    if variant not in VARIANTS:
        raise ContractError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "v3":
        return _train_pixel_graph(cube, labels, config)
    return train(cube, labels, config, variant)[1]


def predict_proba(model, cube):
    """Per-pixel class probabilities (n, C) of a trained model."""
    if (cube.height, cube.width) != model.region_of.shape:
        raise ContractError(
            f"cube is {cube.height}x{cube.width}, model expects {model.region_of.shape}"
        )
    if cube.bands != model.params.V.shape[0]:
        raise ContractError(f"cube has {cube.bands} bands, model expects {model.params.V.shape[0]}")
    if model.band_ranges is not None:
        cube = apply_band_ranges(cube, model.band_ranges)
    with ad.no_grad():
        out = forward(
            cube.pixels(),
            model.graph(),
            model.params,
            model.gamma,
            model.beta,
            model.renormalize_filtered,
        )
    return out.O.data


def predict(model, cube):
    """Class id per pixel as an (H, W) array; ties resolve to the lowest id."""
    return predict_classes(predict_proba(model, cube)).reshape(cube.height, cube.width)
