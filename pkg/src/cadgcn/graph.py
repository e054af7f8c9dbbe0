"""Learned region adjacency: Mahalanobis kernel, edge filter, re-normalization."""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, exp, make_node, matmul, mul, reshape, sum_
from .errors import ContractError, ShapeError


@dataclass
class LayerAdjacency:
    A: Tensor  # (c, c) nonnegative, symmetric, zero diagonal
    mask: np.ndarray  # frozen region adjacency
    beta: float | None = None  # threshold applied, None before filtering


def pairwise_sq_dist(Q):
    """``D[i, j] = ||q_i - q_j||^2`` for the rows of Q; exact zero diagonal."""
    Q = as_tensor(Q)
    if Q.ndim != 2:
        raise ShapeError(f"expected a matrix, got {Q.shape}")
    q = Q.data
    s = (q * q).sum(axis=1)
    D = s[:, None] + s[None, :] - 2.0 * (q @ q.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    D = 0.5 * (D + D.T)

    def bw(g):
        gs = g + g.T
        return (2.0 * (gs.sum(axis=1)[:, None] * q - gs @ q),)

    return make_node(D, (Q,), bw, "pairwise_sq_dist")


def mahalanobis_sq(H, W_d):
    """Squared distances ``(h_i - h_j)^T W_d W_d^T (h_i - h_j)`` without forming W_d W_d^T."""
    H, W_d = as_tensor(H), as_tensor(W_d)
    if H.ndim != 2 or W_d.ndim != 2 or H.shape[1] != W_d.shape[0]:
        raise ShapeError(f"features {H.shape} vs metric factor {W_d.shape}")
    return pairwise_sq_dist(matmul(H, W_d))


def build_adjacency(H, W_d, mask, gamma=0.2):
    """Kernel ``exp(-gamma * D^2)`` on neighboring region pairs, zero elsewhere.

    Self-pairs are left at zero here; the self-loop is added by
    :func:`renormalize`.
    """
    if gamma <= 0:
        raise ContractError("gamma must be positive")
    mask = np.asarray(mask, dtype=bool)
    c = mask.shape[0]
    if mask.shape != (c, c) or as_tensor(H).shape[0] != c:
        raise ShapeError(f"mask {mask.shape} vs features {as_tensor(H).shape}")
    offdiag = mask & ~np.eye(c, dtype=bool)
    D2 = mahalanobis_sq(H, W_d)
    A = mul(exp(mul(D2, -gamma)), offdiag.astype(np.float64))
    return LayerAdjacency(A, mask, None)


def edge_filter(adj, beta):
    """Keep entries strictly above ``beta``; zero the rest.

    The keep-mask is treated as a constant, so gradients reach kept entries
    unchanged and dropped entries get none.
    """
    if beta < 0:
        raise ContractError("beta must be >= 0")
    A = adj.A if isinstance(adj, LayerAdjacency) else as_tensor(adj)
    keep = (A.data > beta).astype(np.float64)
    out = mul(A, keep)
    mask = adj.mask if isinstance(adj, LayerAdjacency) else A.data > 0
    return LayerAdjacency(out, mask, beta)


def renormalize(adj):
    """``D^-1/2 (A + I) D^-1/2`` with D the row sums of ``A + I``."""
    A = adj.A if isinstance(adj, LayerAdjacency) else as_tensor(adj)
    c = A.shape[0]
    if A.ndim != 2 or A.shape != (c, c):
        raise ShapeError(f"adjacency must be square, got {A.shape}")
    if np.any(A.data < 0):
        raise ContractError("adjacency must be nonnegative")
    A_tilde = A + np.eye(c)
    d_inv_sqrt = sum_(A_tilde, axis=1) ** -0.5
    return reshape(d_inv_sqrt, (c, 1)) * A_tilde * reshape(d_inv_sqrt, (1, c))


def init_metric_factor(width, rank=None, noise=0.01, rng=None):
    """Identity (truncated to ``rank`` columns) plus Gaussian noise."""
    rank = width if rank is None else rank
    rng = np.random.default_rng() if rng is None else rng
    W = np.eye(width, rank)
    if noise > 0:
        W = W + noise * rng.standard_normal((width, rank))
    return W
