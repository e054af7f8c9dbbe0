"""Synthetic cubes with spatially coherent, spectrally separated classes."""

import numpy as np

from .data import HsiCube, LabelRaster


def make_synthetic(
    height=32, width=32, bands=10, n_classes=3, separation=20.0, noise=0.05, seed=0, sites_per_class=1
):
    """Blob-shaped class map with Gaussian spectra.

    Class means are ``separation * noise`` apart in every band that separates
    them, so each pair of means differs by at least that much. The class map
    is a Voronoi partition with ``sites_per_class`` cells per class. Every
    pixel is labeled.
    """
    rng = np.random.default_rng(seed)
    # Voronoi cells around random sites give compact, connected class areas
    sites = rng.uniform(0, [height, width], size=(n_classes * sites_per_class, 2))
    yy, xx = np.indices((height, width))
    d = (yy[..., None] - sites[:, 0]) ** 2 + (xx[..., None] - sites[:, 1]) ** 2
    cls = np.argmin(d, axis=2) % n_classes
    means = np.zeros((n_classes, bands))
    for k in range(n_classes):
        means[k, k::n_classes] = separation * noise
    means += 0.5
    values = means[cls] + noise * rng.standard_normal((height, width, bands))
    return HsiCube(values), LabelRaster(cls.astype(np.int64) + 1)
