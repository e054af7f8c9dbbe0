"""Classification maps as binary PPM images."""

import colorsys

import numpy as np

from .errors import ContractError


def default_palette(n_classes):
    """Class id -> RGB bytes. Class 0 is black; classes 1..C get evenly spaced hues."""
    palette = {0: (0, 0, 0)}
    for k in range(1, n_classes + 1):
        r, g, b = colorsys.hsv_to_rgb((k - 1) / n_classes, 1.0, 1.0)
        palette[k] = (round(r * 255), round(g * 255), round(b * 255))
    return palette


def render_map(labels, palette=None):
    """P6 PPM bytes for an (H, W) array of class ids."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ContractError(f"class map must be 2-D, got shape {labels.shape}")
    if palette is None:
        palette = default_palette(int(labels.max(initial=0)))
    ids = np.unique(labels)
    missing = [int(i) for i in ids if int(i) not in palette]
    if missing:
        raise ContractError(f"no palette entry for class ids {missing}")
    lut = np.zeros((int(ids.max()) + 1, 3), dtype=np.uint8)
    for k, rgb in palette.items():
        if k <= ids.max():
            lut[k] = rgb
    h, w = labels.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + lut[labels].tobytes()
