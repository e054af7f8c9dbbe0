import numpy as np
import pytest

from cadgcn import autodiff as ad
from cadgcn.model import RegionGraph, init_params
from cadgcn.segmentation import init_anchors

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def central_differences(f, arrays, step=1e-5):
    """d f / d array for each array, by central differences (arrays perturbed in place)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + step
            hi = f()
            a[idx] = orig - step
            lo = f()
            a[idx] = orig
            g[idx] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-5):
    """Elementwise |a - n| / max(|a|, |n|, floor).

    Central differences at step 1e-5 carry roundoff near |f| * eps / step, about
    3e-10 for a loss of order 30, so the floor keeps near-zero entries from
    turning that noise into a large ratio.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def toy_problem(height=4, width=5, bands=3, hidden=4, n_classes=3, seed=0):
    """A small cube split into 2x2 blocks of regions, with random parameters."""
    rng = np.random.default_rng(seed)
    Z = rng.uniform(0, 1, size=(height * width, bands))
    region_of = (np.arange(height)[:, None] // ((height + 1) // 2)) * 2 + (
        np.arange(width)[None, :] // ((width + 1) // 2)
    )
    graph = RegionGraph.from_region_map(region_of)
    V0 = init_anchors(Z.reshape(height, width, bands), _Seg(region_of))
    V0 = V0 + 0.1 * rng.standard_normal(V0.shape)
    params = init_params(V0, [bands, hidden, n_classes], rng, metric_noise=0.3)
    for t in params.tensors():
        t.data = t.data + 0.2 * rng.standard_normal(t.shape)
    labels = rng.integers(1, n_classes + 1, size=height * width)
    return Z, graph, params, labels


class _Seg:
    def __init__(self, region_of):
        self.region_of = region_of
        self.region_count = int(region_of.max()) + 1


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def scalar(t):
    return float(np.asarray(t.data))


__all__ = ["central_differences", "max_relative_error", "toy_problem", "ad", "scalar"]
