"""Spectral cube and label raster I/O, band normalization, and split sampling.

On disk a cube is a pair ``<name>.json`` (keys width, height, bands, dtype,
layout) and ``<name>.raw`` holding little-endian float32 values in
band-interleaved-by-pixel order. Label rasters are ``<name>.labels.raw``,
little-endian uint16, row-major, 0 meaning unlabeled.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError

log = logging.getLogger(__name__)

HEADER_KEYS = ("width", "height", "bands", "dtype", "layout")


@dataclass
class HsiCube:
    values: np.ndarray  # (height, width, bands) float64
    band_ranges: np.ndarray | None = None  # (bands, 2) min/max seen by normalize_bands

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def bands(self):
        return self.values.shape[2]

    @property
    def n_pixels(self):
        return self.height * self.width

    def pixels(self):
        """Flattened (n, bands) view in row-major pixel order."""
        return self.values.reshape(-1, self.bands)


@dataclass
class LabelRaster:
    labels: np.ndarray  # (height, width) int, 0 = unlabeled

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def n_classes(self):
        return int(self.labels.max()) if self.labels.size else 0

    def flat(self):
        return self.labels.reshape(-1)


@dataclass
class Split:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    warnings: list = field(default_factory=list)


def _parse_header(header_text):
    try:
        header = json.loads(header_text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"cube header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("cube header must be a JSON object")
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise FormatError(f"cube header lacks keys {missing}")
    if header["dtype"] != "f32":
        raise FormatError(f"unsupported dtype {header['dtype']!r}, expected 'f32'")
    if header["layout"] != "bip":
        raise FormatError(f"unsupported layout {header['layout']!r}, expected 'bip'")
    dims = []
    for key in ("height", "width", "bands"):
        v = header[key]
        if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
            raise FormatError(f"header {key} must be a positive integer, got {v!r}")
        dims.append(v)
    return tuple(dims)


def load_cube(header_text, raw_bytes):
    height, width, bands = _parse_header(header_text)
    expected = height * width * bands * 4
    if len(raw_bytes) != expected:
        raise FormatError(
            f"raw length {len(raw_bytes)} bytes, header implies {expected} "
            f"({height}x{width}x{bands} float32)"
        )
    values = np.frombuffer(raw_bytes, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError("cube contains non-finite values")
    return HsiCube(values.reshape(height, width, bands))


def cube_paths(path):
    """Resolve ``name``, ``name.json`` or ``name.raw`` to the header/raw pair."""
    p = Path(path)
    if p.suffix in (".json", ".raw"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".raw")


def read_cube(path):
    header_path, raw_path = cube_paths(path)
    try:
        header_text = header_path.read_text(encoding="utf-8")
        raw = raw_path.read_bytes()
    except FileNotFoundError as exc:
        raise FormatError(f"missing cube file {exc.filename}") from None
    return load_cube(header_text, raw)


def write_cube(path, cube):
    header_path, raw_path = cube_paths(path)
    header = {
        "width": cube.width,
        "height": cube.height,
        "bands": cube.bands,
        "dtype": "f32",
        "layout": "bip",
    }
    header_path.write_text(json.dumps(header), encoding="utf-8")
    raw_path.write_bytes(np.ascontiguousarray(cube.values, dtype="<f4").tobytes())


def raster_header_path(path):
    p = Path(path)
    return p.with_suffix(".json") if p.suffix == ".raw" else p.with_name(p.name + ".json")


def read_labels(path, height=None, width=None):
    """Read a uint16 raster. Dimensions come from the caller or a sidecar header."""
    path = Path(path)
    if height is None or width is None:
        hdr = raster_header_path(path)
        if not hdr.exists():
            raise FormatError(f"{path}: dimensions unknown and no header {hdr.name}")
        try:
            meta = json.loads(hdr.read_text(encoding="utf-8"))
            height, width = int(meta["height"]), int(meta["width"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise FormatError(f"{hdr}: malformed raster header") from None
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"missing label file {path}") from None
    if len(raw) != height * width * 2:
        raise FormatError(
            f"{path}: {len(raw)} bytes, expected {height * width * 2} for {height}x{width} uint16"
        )
    labels = np.frombuffer(raw, dtype="<u2").astype(np.int64).reshape(height, width)
    return LabelRaster(labels)


def write_labels(path, labels, header=True):
    """Write a uint16 raster; ``header`` adds a small JSON sidecar with its dimensions."""
    arr = labels.labels if isinstance(labels, LabelRaster) else np.asarray(labels)
    if arr.ndim != 2:
        raise ContractError(f"raster must be 2-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
        raise ContractError("raster values must fit in uint16")
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(arr, dtype="<u2").tobytes())
    if header:
        meta = {"height": int(arr.shape[0]), "width": int(arr.shape[1]), "dtype": "u16"}
        raster_header_path(path).write_text(json.dumps(meta), encoding="utf-8")


def normalize_bands(cube):
    """Per-band min-max scaling to [0, 1]; constant bands become 0."""
    flat = cube.pixels()
    lo = flat.min(axis=0)
    hi = flat.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (flat - lo) / safe, 0.0)
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return HsiCube(scaled.reshape(cube.values.shape), np.stack([lo, hi], axis=1))


def apply_band_ranges(cube, band_ranges):
    """Scale a cube with previously recorded per-band (min, max) pairs."""
    band_ranges = np.asarray(band_ranges, dtype=np.float64)
    if band_ranges.shape != (cube.bands, 2):
        raise ContractError(
            f"band_ranges shape {band_ranges.shape} does not fit {cube.bands} bands"
        )
    lo, hi = band_ranges[:, 0], band_ranges[:, 1]
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (cube.pixels() - lo) / safe, 0.0)
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return HsiCube(scaled.reshape(cube.values.shape), band_ranges.copy())


def sample_split(labels, per_class=30, small_class_budget=15, val_fraction=0.1, seed=0):
    """Stratified labeled/validation/test split.

    Each class contributes ``per_class`` pixels, or ``small_class_budget`` when
    it has fewer than ``per_class``; a class smaller than that contributes all
    of its pixels and is noted in ``Split.warnings``. ``floor(val_fraction * k)``
    of the k drawn pixels (at least one when k >= 2) go to validation. Every
    other labeled pixel is test.
    """
    if not per_class >= small_class_budget >= 1:
        raise ContractError("need per_class >= small_class_budget >= 1")
    if not 0.0 < val_fraction < 1.0:
        raise ContractError("val_fraction must lie in (0, 1)")
    flat = labels.flat() if isinstance(labels, LabelRaster) else np.asarray(labels).ravel()
    rng = np.random.default_rng(seed)
    train, val, notes = [], [], []
    for cls in range(1, int(flat.max(initial=0)) + 1):
        members = np.flatnonzero(flat == cls)
        size = len(members)
        if size == 0:
            continue
        budget = per_class if size >= per_class else small_class_budget
        if size < budget:
            notes.append(f"class {cls} has {size} pixels, below budget {budget}; using all")
            log.warning(notes[-1])
            budget = size
        drawn = rng.choice(members, size=budget, replace=False)
        n_val = math.floor(val_fraction * budget + 1e-9)
        if budget >= 2:
            n_val = max(n_val, 1)
        val.append(drawn[:n_val])
        train.append(drawn[n_val:])
    train_idx = np.sort(np.concatenate(train)) if train else np.zeros(0, np.int64)
    val_idx = np.sort(np.concatenate(val)) if val else np.zeros(0, np.int64)
    chosen = np.zeros(flat.size, dtype=bool)
    chosen[train_idx] = True
    chosen[val_idx] = True
    test_idx = np.flatnonzero((flat > 0) & ~chosen)
    return Split(train_idx.astype(np.int64), val_idx.astype(np.int64), test_idx, seed, notes)
