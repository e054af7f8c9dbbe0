"""
The context-aware dynamic GCN: parameters, forward pass, loss, checkpoints.

Forward chain: soft assignment P from pixels and anchors, region features X
as P-weighted means, then per layer a learned-metric adjacency that is edge
filtered, re-normalized and used for one softplus graph convolution, and
finally P @ H re-projected to pixels with a row softmax.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, FormatError, ShapeError
from .graph import build_adjacency, edge_filter, init_metric_factor, renormalize
from .projection import assign_pixels, project, reproject
from .segmentation import SegmentationMap, pixel_neighborhood, region_adjacency

MAGIC = b"CADG"
FORMAT_VERSION = 1


@dataclass
class RegionGraph:
    """Frozen structures derived from the initial segmentation."""

    region_of: np.ndarray  # (height, width)
    mask: np.ndarray  # (c, c) region adjacency incl. diagonal
    rows: np.ndarray  # candidate pattern: pixel ids
    cols: np.ndarray  # candidate pattern: region ids

    @classmethod
    def from_segmentation(cls, seg):
        rows, cols = pixel_neighborhood(seg)
        return cls(seg.region_of, seg.region_adjacency, rows, cols)

    @classmethod
    def from_region_map(cls, region_of):
        region_of = np.asarray(region_of, dtype=np.int64)
        count = int(region_of.max()) + 1
        seg = SegmentationMap(region_of, count, region_adjacency(region_of, count))
        return cls.from_segmentation(seg)

    @property
    def n_regions(self):
        return self.mask.shape[0]

    @property
    def n_pixels(self):
        return self.region_of.size


@dataclass
class ModelParams:
    V: Tensor  # anchors (d, c)
    weights: list  # W^(l), (f_in, f_out)
    metrics: list  # W_d^(l), (f_in, rank)
    train_metric: bool = True

    @property
    def widths(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def layer_count(self):
        return len(self.weights)

    def tensors(self):
        """All parameter tensors in declaration order: V, then (W, W_d) per layer."""
        out = [self.V] if self.V is not None else []
        for W, Wd in zip(self.weights, self.metrics):
            out.extend([W, Wd])
        return out

    def trainables(self):
        out = [self.V] if self.V is not None else []
        for W, Wd in zip(self.weights, self.metrics):
            out.append(W)
            if self.train_metric:
                out.append(Wd)
        return out

    def copy(self):
        def dup(t):
            return None if t is None else Tensor(t.data, requires_grad=t.requires_grad)

        return ModelParams(
            dup(self.V),
            [dup(W) for W in self.weights],
            [dup(W) for W in self.metrics],
            self.train_metric,
        )


def glorot_uniform(fan_in, fan_out, rng):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(V0, widths, rng, metric_rank=None, metric_noise=0.01, train_metric=True):
    """Parameters for layer widths ``[d, hidden..., C]`` with anchors ``V0``.

    With ``train_metric=False`` every metric factor is the exact identity.
    """
    weights, metrics = [], []
    for f_in, f_out in zip(widths[:-1], widths[1:]):
        weights.append(Tensor(glorot_uniform(f_in, f_out, rng), requires_grad=True))
        noise = metric_noise if train_metric else 0.0
        rank = f_in if metric_rank is None else min(metric_rank, f_in)
        Wd = init_metric_factor(f_in, rank, noise, rng)
        metrics.append(Tensor(Wd, requires_grad=train_metric))
    V = None if V0 is None else Tensor(V0, requires_grad=True)
    return ModelParams(V, weights, metrics, train_metric)


def gcn_layer(H_prev, A_hat, W):
    """``softplus(A_hat @ H_prev @ W)``."""
    H_prev, A_hat, W = ad.as_tensor(H_prev), ad.as_tensor(A_hat), ad.as_tensor(W)
    if A_hat.shape[1] != H_prev.shape[0] or H_prev.shape[1] != W.shape[0]:
        raise ShapeError(f"gcn_layer: A {A_hat.shape}, H {H_prev.shape}, W {W.shape}")
    return ad.softplus(ad.matmul(ad.matmul(A_hat, H_prev), W))


@dataclass
class ForwardResult:
    P: object
    X: Tensor
    adjacency: list = field(default_factory=list)  # filtered LayerAdjacency per layer
    A_hat: list = field(default_factory=list)
    H: list = field(default_factory=list)  # H^(1) .. H^(L)
    logits: Tensor | None = None
    O: Tensor | None = None


def forward(Z, graph, params, gamma=0.2, beta=0.01, renormalize_filtered=True):
    """Class probabilities ``O`` (pixels x classes) plus every intermediate."""
    Z = ad.as_tensor(Z)
    if params.V.shape != (Z.shape[1], graph.n_regions):
        raise ContractError(
            f"anchors {params.V.shape} do not fit {Z.shape[1]} bands x {graph.n_regions} regions"
        )
    if Z.shape[0] != graph.n_pixels:
        raise ContractError(f"{Z.shape[0]} pixels but the graph has {graph.n_pixels}")
    P = assign_pixels(Z, params.V, (graph.rows, graph.cols), gamma)
    X = project(P, Z)
    res = ForwardResult(P, X)
    H = X
    for W, Wd in zip(params.weights, params.metrics):
        adj = edge_filter(build_adjacency(H, Wd, graph.mask, gamma), beta)
        A_hat = renormalize(adj) if renormalize_filtered else adj.A
        H = gcn_layer(H, A_hat, W)
        res.adjacency.append(adj)
        res.A_hat.append(A_hat)
        res.H.append(H)
    res.logits = reproject(P, H)
    res.O = ad.softmax_rows(res.logits)
    return res


@dataclass
class LabelMatrix:
    Y: np.ndarray  # (n, C) one-hot rows on labeled pixels
    labeled_idx: np.ndarray

    @classmethod
    def from_labels(cls, flat_labels, idx, n_classes):
        flat_labels = np.asarray(flat_labels).ravel()
        idx = np.asarray(idx, dtype=np.int64)
        Y = np.zeros((flat_labels.size, n_classes))
        Y[idx, flat_labels[idx] - 1] = 1.0
        return cls(Y, idx)


def loss(O, labels):
    """Summed cross-entropy over labeled pixels."""
    if len(labels.labeled_idx) == 0:
        raise ContractError("no labeled pixels")
    O = ad.as_tensor(O)
    if O.shape != labels.Y.shape:
        raise ShapeError(f"outputs {O.shape} vs labels {labels.Y.shape}")
    rows = ad.gather_rows(O, labels.labeled_idx)
    Y = labels.Y[labels.labeled_idx]
    return -ad.sum_(ad.mul(ad.log(rows), Y))


def predict_classes(O):
    """Arg-max class id (1-based); ties go to the lowest id."""
    O = O.data if isinstance(O, Tensor) else np.asarray(O)
    return np.argmax(O, axis=1) + 1


# Pixel-level variant without graph projection: nodes are pixels, edges link
# 8-connected spatial neighbors, and the same learned-metric adjacency and
# edge filter drive each layer.


@dataclass
class PixelGraph:
    src: np.ndarray
    dst: np.ndarray
    n_pixels: int

    @classmethod
    def eight_neighbors(cls, height, width):
        ids = np.arange(height * width).reshape(height, width)
        src, dst = [], []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                a = ids[max(0, -dy) : height - max(0, dy), max(0, -dx) : width - max(0, dx)]
                b = ids[max(0, dy) : height - max(0, -dy), max(0, dx) : width - max(0, -dx)]
                src.append(a.ravel())
                dst.append(b.ravel())
        return cls(np.concatenate(src), np.concatenate(dst), height * width)


def pixel_graph_layer(H, W, Wd, graph, gamma, beta):
    n = graph.n_pixels
    Q = ad.matmul(H, Wd)
    diff = ad.gather_rows(Q, graph.src) - ad.gather_rows(Q, graph.dst)
    d2 = ad.sum_(diff * diff, axis=1)
    A = ad.exp(d2 * -gamma)
    A = A * (A.data > beta).astype(np.float64)
    deg = ad.segment_sum(A, graph.src, n) + 1.0
    d_inv_sqrt = deg**-0.5
    w = A * ad.gather_rows(d_inv_sqrt, graph.src) * ad.gather_rows(d_inv_sqrt, graph.dst)
    HW = ad.matmul(H, W)
    msg = ad.gather_rows(HW, graph.dst) * ad.reshape(w, (-1, 1))
    agg = ad.segment_sum(msg, graph.src, n) + HW * ad.reshape(d_inv_sqrt * d_inv_sqrt, (n, 1))
    return ad.softplus(agg)


def forward_pixel_graph(Z, graph, params, gamma=0.2, beta=0.01):
    H = ad.as_tensor(Z)
    for W, Wd in zip(params.weights, params.metrics):
        H = pixel_graph_layer(H, W, Wd, graph, gamma, beta)
    return ad.softmax_rows(H)


@dataclass
class TrainedModel:
    """Everything ``predict`` needs: parameters plus the frozen segmentation."""

    params: ModelParams
    region_of: np.ndarray
    gamma: float
    beta: float
    renormalize_filtered: bool = True
    band_ranges: np.ndarray | None = None

    @property
    def n_classes(self):
        return self.params.widths[-1]

    def graph(self):
        return RegionGraph.from_region_map(self.region_of)


def encode_checkpoint(model):
    """Binary checkpoint: magic, version, dims, parameters (<f8), region map (<u4)."""
    p = model.params
    h, w = model.region_of.shape
    widths = p.widths
    ranks = [Wd.shape[1] for Wd in p.metrics]
    d, c = p.V.shape
    L = p.layer_count
    flags = (1 if model.renormalize_filtered else 0) | (2 if model.band_ranges is not None else 0)
    flags |= 4 if p.train_metric else 0
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    out.append(struct.pack("<7I", h, w, d, c, widths[-1], L, flags))
    out.append(struct.pack(f"<{L + 1}I", *widths))
    out.append(struct.pack(f"<{L}I", *ranks))
    out.append(struct.pack("<2d", model.gamma, model.beta))
    for t in p.tensors():
        out.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    out.append(np.ascontiguousarray(model.region_of, dtype="<u4").tobytes())
    if model.band_ranges is not None:
        out.append(np.ascontiguousarray(model.band_ranges, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint is truncated")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, shape):
        count = int(np.prod(shape))
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(count * dt.itemsize), dtype=dt).reshape(shape)


def decode_checkpoint(buf):
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    h, w, d, c, n_classes, L, flags = r.unpack("<7I")
    widths = list(r.unpack(f"<{L + 1}I"))
    ranks = list(r.unpack(f"<{L}I"))
    if widths[0] != d or widths[-1] != n_classes:
        raise FormatError("checkpoint widths disagree with its dimensions")
    gamma, beta = r.unpack("<2d")
    V = r.array("<f8", (d, c)).astype(np.float64)
    weights, metrics = [], []
    train_metric = bool(flags & 4)
    for f_in, f_out, rank in zip(widths[:-1], widths[1:], ranks):
        weights.append(Tensor(r.array("<f8", (f_in, f_out)), requires_grad=True))
        metrics.append(Tensor(r.array("<f8", (f_in, rank)), requires_grad=train_metric))
    region_of = r.array("<u4", (h, w)).astype(np.int64)
    band_ranges = r.array("<f8", (d, 2)).astype(np.float64) if flags & 2 else None
    if r.pos != len(buf):
        raise FormatError("trailing bytes after checkpoint")
    params = ModelParams(Tensor(V, requires_grad=True), weights, metrics, train_metric)
    return TrainedModel(params, region_of, gamma, beta, bool(flags & 1), band_ranges)


def save_checkpoint(path, model):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(model))


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            return decode_checkpoint(fh.read())
    except FileNotFoundError:
        raise FormatError(f"missing checkpoint {path}") from None
