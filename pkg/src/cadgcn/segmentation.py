"""
Initial region partition of the image.

SLIC runs on a few principal components of the spectra. The resulting
regions give the starting anchors (mean spectrum per region), the
region-to-region adjacency, and each pixel's candidate regions (its own region
plus the regions touching it). All three are computed once and then frozen.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ContractError


@dataclass
class SegmentationMap:
    region_of: np.ndarray  # (height, width) region id in [0, region_count)
    region_count: int
    region_adjacency: np.ndarray  # (c, c) bool, symmetric, true diagonal

    @property
    def shape(self):
        return self.region_of.shape


def principal_components(X, k):
    """Top-``k`` principal axes of the rows of ``X``.

    Returns ``(components, explained_ratio, mean)`` with components shaped
    (bands, k). Each axis is signed so its largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    bands = X.shape[1]
    if not 1 <= k <= bands:
        raise ContractError(f"k must lie in [1, {bands}], got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(len(X) - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order]
    pivot = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[pivot, np.arange(k)])
    comps = comps * np.where(signs == 0, 1.0, signs)
    total = np.clip(np.linalg.eigvalsh(cov), 0.0, None).sum()
    ratio = evals / total if total > 0 else np.zeros(k)
    return comps, ratio, mean


def pca_reduce(cube, k=3):
    """Project every pixel onto the top-``k`` principal components."""
    values = cube.values if hasattr(cube, "values") else np.asarray(cube)
    h, w, b = values.shape
    flat = values.reshape(-1, b)
    comps, _, mean = principal_components(flat, k)
    return ((flat - mean) @ comps).reshape(h, w, k)


def _grid_shape(height, width, c):
    rows = int(round(np.sqrt(c * height / width)))
    rows = min(max(rows, 1), height)
    cols = min(max(int(round(c / rows)), 1), width)
    return rows, cols


def _gradient_magnitude(features):
    padded = np.pad(features, ((1, 1), (1, 1), (0, 0)), mode="edge")
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    return (dy**2).sum(axis=2) + (dx**2).sum(axis=2)


def _initial_centers(features, c):
    h, w, _ = features.shape
    rows, cols = _grid_shape(h, w, c)
    ys = (np.arange(rows) + 0.5) * h / rows - 0.5
    xs = (np.arange(cols) + 0.5) * w / cols - 0.5
    grad = _gradient_magnitude(features)
    centers = []
    for y in ys:
        for x in xs:
            iy, ix = int(round(y)), int(round(x))
            iy, ix = min(max(iy, 0), h - 1), min(max(ix, 0), w - 1)
            best, by, bx = grad[iy, ix], y, x
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = iy + dy, ix + dx
                    if 0 <= ny < h and 0 <= nx < w and grad[ny, nx] < best:
                        best, by, bx = grad[ny, nx], float(ny), float(nx)
            centers.append((by, bx))
    pos = np.array(centers, dtype=np.float64)
    iy = np.clip(np.round(pos[:, 0]).astype(int), 0, h - 1)
    ix = np.clip(np.round(pos[:, 1]).astype(int), 0, w - 1)
    feat = features[iy, ix].copy()
    # a seed sitting between pixels takes the mean feature of its footprint
    for j, (y, x) in enumerate(pos):
        y0, y1 = int(np.floor(y)), int(np.ceil(y))
        x0, x1 = int(np.floor(x)), int(np.ceil(x))
        feat[j] = features[max(y0, 0) : min(y1, h - 1) + 1, max(x0, 0) : min(x1, w - 1) + 1].mean(
            axis=(0, 1)
        )
    return pos, feat


def _assign(features, pos, feat, step, spatial_weight):
    h, w, _ = features.shape
    best = np.full((h, w), np.inf)
    label = np.full((h, w), -1, dtype=np.int64)
    for j in range(len(pos)):
        cy, cx = pos[j]
        y0, y1 = max(int(np.floor(cy - step)), 0), min(int(np.ceil(cy + step)), h - 1)
        x0, x1 = max(int(np.floor(cx - step)), 0), min(int(np.ceil(cx + step)), w - 1)
        if y0 > y1 or x0 > x1:
            continue
        window = features[y0 : y1 + 1, x0 : x1 + 1]
        yy = np.arange(y0, y1 + 1)[:, None]
        xx = np.arange(x0, x1 + 1)[None, :]
        d_feat = ((window - feat[j]) ** 2).sum(axis=2)
        d_xy = (yy - cy) ** 2 + (xx - cx) ** 2
        dist = d_feat + spatial_weight * d_xy
        sub_best = best[y0 : y1 + 1, x0 : x1 + 1]
        better = dist < sub_best
        sub_best[better] = dist[better]
        label[y0 : y1 + 1, x0 : x1 + 1][better] = j
    missing = np.argwhere(label < 0)
    if len(missing):
        for y, x in missing:
            d = ((feat - features[y, x]) ** 2).sum(axis=1) + spatial_weight * (
                (pos[:, 0] - y) ** 2 + (pos[:, 1] - x) ** 2
            )
            label[y, x] = int(np.argmin(d))
    return label


def _update_centers(features, label, pos, feat):
    h, w, k = features.shape
    flat = label.ravel()
    counts = np.bincount(flat, minlength=len(pos)).astype(np.float64)
    keep = counts > 0
    yy, xx = np.indices((h, w))
    new_pos = pos.copy()
    new_feat = feat.copy()
    new_pos[keep, 0] = np.bincount(flat, yy.ravel(), len(pos))[keep] / counts[keep]
    new_pos[keep, 1] = np.bincount(flat, xx.ravel(), len(pos))[keep] / counts[keep]
    fflat = features.reshape(-1, k)
    for b in range(k):
        new_feat[keep, b] = np.bincount(flat, fflat[:, b], len(pos))[keep] / counts[keep]
    return new_pos, new_feat


def _enforce_connectivity(label):
    """Split labels into 4-connected pieces; fold stray pieces into neighbors.

    The largest piece of every label keeps it. Each other piece, smallest
    first, is merged into the largest region it touches.
    """
    h, w = label.shape
    comp = np.zeros((h, w), dtype=np.int64)
    comp_label = []
    next_id = 0
    four = ndimage.generate_binary_structure(2, 1)
    for lab in np.unique(label):
        pieces, n = ndimage.label(label == lab, structure=four)
        mask = pieces > 0
        comp[mask] = pieces[mask] - 1 + next_id
        comp_label.extend([lab] * n)
        next_id += n
    sizes = np.bincount(comp.ravel(), minlength=next_id)
    comp_label = np.array(comp_label)

    primary = np.zeros(next_id, dtype=bool)
    for lab in np.unique(comp_label):
        ids = np.flatnonzero(comp_label == lab)
        primary[ids[np.argmax(sizes[ids])]] = True
    if primary.all():
        return comp

    neighbors = [set() for _ in range(next_id)]
    for a, b in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        diff = a != b
        for u, v in set(zip(a[diff].tolist(), b[diff].tolist())):
            neighbors[u].add(v)
            neighbors[v].add(u)

    parent = np.arange(next_id)

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    size = sizes.copy()
    orphans = sorted(np.flatnonzero(~primary), key=lambda i: (sizes[i], i))
    for o in orphans:
        ro = root(o)
        cand = {root(n) for n in neighbors[ro]}
        cand.discard(ro)
        if not cand:
            continue
        target = min(cand, key=lambda r: (-size[r], r))
        parent[ro] = target
        size[target] += size[ro]
        neighbors[target] |= neighbors[ro]
    roots = np.array([root(i) for i in range(next_id)])
    return roots[comp]


def _relabel_in_scan_order(label):
    flat = label.ravel()
    _, first = np.unique(flat, return_index=True)
    order = flat[np.sort(first)]
    mapping = np.empty(flat.max() + 1, dtype=np.int64)
    mapping[order] = np.arange(len(order))
    return mapping[label], len(order)


def slic_segment(features, c, compactness=0.1, iters=10):
    """SLIC superpixels on an (H, W, k) feature raster.

    Distance is ``sqrt(d_feat^2 + (compactness / S)^2 * d_xy^2)`` with grid
    step ``S = sqrt(H*W / c)``; each center searches a 2S x 2S window. The
    region count after connectivity enforcement can differ from ``c``.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 2:
        features = features[:, :, None]
    h, w, _ = features.shape
    if c < 1 or c > h * w:
        raise ContractError(f"region count {c} must lie in [1, {h * w}]")
    if iters < 1:
        raise ContractError("iters must be >= 1")
    step = np.sqrt(h * w / c)
    spatial_weight = (compactness / step) ** 2
    pos, feat = _initial_centers(features, c)
    label = None
    for _ in range(iters):
        label = _assign(features, pos, feat, step, spatial_weight)
        pos, feat = _update_centers(features, label, pos, feat)
    label = _enforce_connectivity(label)
    region_of, count = _relabel_in_scan_order(label)
    return SegmentationMap(region_of, count, region_adjacency(region_of, count))


def region_adjacency(region_of, count=None):
    """Regions are adjacent when some of their pixels are 4-neighbors."""
    region_of = np.asarray(region_of)
    if count is None:
        count = int(region_of.max()) + 1
    adj = np.eye(count, dtype=bool)
    for a, b in (
        (region_of[:, :-1], region_of[:, 1:]),
        (region_of[:-1, :], region_of[1:, :]),
    ):
        diff = a != b
        adj[a[diff], b[diff]] = True
        adj[b[diff], a[diff]] = True
    return adj


def pixel_neighborhood(seg):
    """Candidate regions per pixel as a flat pattern ``(rows, cols)``.

    Pixel i (row-major) pairs with its own region first, then with every region
    adjacent to it in ascending id order.
    """
    region_of = seg.region_of.ravel()
    adj = seg.region_adjacency
    per_region = []
    for r in range(seg.region_count):
        others = np.flatnonzero(adj[r])
        per_region.append(np.concatenate([[r], others[others != r]]))
    lengths = np.array([len(x) for x in per_region])
    counts = lengths[region_of]
    rows = np.repeat(np.arange(len(region_of)), counts)
    cols = np.concatenate([per_region[r] for r in region_of])
    return rows.astype(np.int64), cols.astype(np.int64)


def init_anchors(cube, seg):
    """Anchor matrix (bands, regions): mean full-band spectrum of each region."""
    values = cube.values if hasattr(cube, "values") else np.asarray(cube)
    if values.shape[:2] != seg.region_of.shape:
        raise ContractError(
            f"segmentation {seg.region_of.shape} does not match cube {values.shape[:2]}"
        )
    flat = values.reshape(-1, values.shape[2])
    ids = seg.region_of.ravel()
    counts = np.bincount(ids, minlength=seg.region_count).astype(np.float64)
    V = np.zeros((flat.shape[1], seg.region_count))
    for b in range(flat.shape[1]):
        V[b] = np.bincount(ids, flat[:, b], seg.region_count)
    return V / counts
