"""
Pixel-to-region soft assignment, region encoding, and re-projection.

The assignment matrix P (pixels x regions) is kept as a fixed sparsity
pattern ``(rows, cols)`` plus a weight tensor with one entry per pattern
slot, so memory scales with the number of candidate pairs rather than
pixels * regions.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autodiff import Tensor, as_tensor, exp, make_node, mul
from .errors import ContractError, ShapeError


@dataclass
class SoftAssignment:
    rows: np.ndarray  # pixel index per slot
    cols: np.ndarray  # region index per slot
    weights: Tensor  # (nnz,)
    n_pixels: int
    n_regions: int

    def to_dense(self):
        P = np.zeros((self.n_pixels, self.n_regions))
        P[self.rows, self.cols] = self.weights.data
        return P

    def column_mass(self):
        return np.bincount(self.cols, self.weights.data, self.n_regions)


def _pattern_matrix(values, rows, cols, shape):
    return sp.csr_matrix((values, (rows, cols)), shape=shape)


def gathered_sq_dist(Z, V, rows, cols):
    """``||Z[rows[e]] - V[:, cols[e]]||^2`` for every pattern slot e."""
    Z, V = as_tensor(Z), as_tensor(V)
    if Z.ndim != 2 or V.ndim != 2 or Z.shape[1] != V.shape[0]:
        raise ShapeError(f"pixel features {Z.shape} vs anchors {V.shape}")
    n, c = Z.shape[0], V.shape[1]
    zz = (Z.data**2).sum(axis=1)
    vv = (V.data**2).sum(axis=0)
    cross = (Z.data @ V.data)[rows, cols]
    out = np.maximum(zz[rows] + vv[cols] - 2.0 * cross, 0.0)

    def bw(g):
        G = _pattern_matrix(g, rows, cols, (n, c))
        gz = gv = None
        if Z.requires_grad:
            row_mass = np.bincount(rows, g, n)
            gz = 2.0 * (Z.data * row_mass[:, None] - np.asarray(G @ V.data.T))
        if V.requires_grad:
            col_mass = np.bincount(cols, g, c)
            gv = 2.0 * (V.data * col_mass[None, :] - np.asarray(G.T @ Z.data).T)
        return gz, gv

    return make_node(out, (Z, V), bw, "gathered_sq_dist")


def pattern_matmul(weights, rows, cols, shape, B, transpose=False):
    """``P @ B`` (or ``P.T @ B``) for P given by a sparsity pattern and weights."""
    weights, B = as_tensor(weights), as_tensor(B)
    n, c = shape
    inner = n if transpose else c
    if B.ndim != 2 or B.shape[0] != inner:
        raise ShapeError(f"pattern matrix {shape} (transpose={transpose}) vs operand {B.shape}")
    P = _pattern_matrix(weights.data, rows, cols, shape)
    out = np.asarray((P.T if transpose else P) @ B.data)

    def bw(g):
        gw = gb = None
        if weights.requires_grad:
            if transpose:
                # out[j] = sum_i P_ij B_i  ->  dP_ij = B_i . g_j
                gw = (B.data @ g.T)[rows, cols] if B.shape[1] > 32 else np.einsum(
                    "ek,ek->e", B.data[rows], g[cols]
                )
            else:
                gw = (g @ B.data.T)[rows, cols] if B.shape[1] > 32 else np.einsum(
                    "ek,ek->e", g[rows], B.data[cols]
                )
        if B.requires_grad:
            gb = np.asarray((P if transpose else P.T) @ g)
        return gw, gb

    return make_node(out, (weights, B), bw, "pattern_matmul")


def assign_pixels(Z, V, nbhd, gamma=0.2):
    """Soft assignment ``P_ij = exp(-gamma * ||z_i - v_j||^2)`` on the candidate pattern."""
    if gamma <= 0:
        raise ContractError("gamma must be positive")
    rows, cols = nbhd
    Z, V = as_tensor(Z), as_tensor(V)
    n = Z.shape[0]
    if len(rows) and (rows.min() < 0 or rows.max() >= n):
        raise ContractError("neighborhood pattern refers to pixels outside Z")
    if np.bincount(rows, minlength=n).min(initial=1) == 0:
        raise ContractError("every pixel needs at least one candidate region")
    d2 = gathered_sq_dist(Z, V, rows, cols)
    weights = exp(mul(d2, -gamma))
    return SoftAssignment(rows, cols, weights, n, V.shape[1])


def project(P, Z):
    """Region features: per-region weighted mean of pixel features, (regions, d)."""
    Z = as_tensor(Z)
    shape = (P.n_pixels, P.n_regions)
    if P.column_mass().min(initial=1.0) <= 0.0:
        raise ContractError("a region has zero assignment mass")
    num = pattern_matmul(P.weights, P.rows, P.cols, shape, Z, transpose=True)
    den = pattern_matmul(P.weights, P.rows, P.cols, shape, np.ones((P.n_pixels, 1)), transpose=True)
    return num / den


def reproject(P, H):
    """Pixel outputs ``P @ H`` from region outputs H (regions, C)."""
    H = as_tensor(H)
    if H.ndim != 2 or H.shape[0] != P.n_regions:
        raise ShapeError(f"region outputs {H.shape} vs {P.n_regions} regions")
    return pattern_matmul(P.weights, P.rows, P.cols, (P.n_pixels, P.n_regions), H)
