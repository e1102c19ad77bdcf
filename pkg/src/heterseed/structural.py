"""Weighted homo/hetero branch aggregation and the gated structural fusion.

Branch sums reuse the softmax weights from the union neighborhood without
per-branch renormalization. The gate is computed from the two transformed
branch outputs through a shared linear map, so unseen nodes gate the same
way as training nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .metapaths import Partition


@dataclass
class BranchMlpParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class StructuralChannelParams:
    homo: BranchMlpParams
    hetero: BranchMlpParams
    gate_w: Tensor  # (2d, d)
    gate_b: Tensor  # (d,)


def weighted_neighbor_sum(x, u_idx, v_idx, w, n_out):
    """sum_{edges (u, v)} w * x[u] scattered to row v of an (n_out, d) output."""
    if len(u_idx) == 0:
        return ad.as_tensor(np.zeros((n_out, x.shape[1]), dtype=x.dtype))
    rows = ad.row_gather(x, u_idx)
    weighted = ad.mul(rows, np.asarray(w, dtype=x.dtype).reshape(-1, 1))
    return ad.row_scatter_add(weighted, v_idx, n_out)


def branch_aggregate(x, partition: Partition, *, use_homo=True, use_hetero=True):
    """Weighted sums of neighbor rows per branch; empty branches give zeros.

    x holds one row per target node (the label-injected representation).
    The use_* switches zero a branch entirely (ablation hooks).
    """
    n = partition.weights.num_targets
    if x.shape[0] != n:
        raise ad.ShapeMismatchError(
            f"feature rows {x.shape[0]} != target count {n}"
        )
    (hu, hv, hw), (tu, tv, tw) = partition.branch_edge_arrays()
    zeros = ad.as_tensor(np.zeros((n, x.shape[1]), dtype=x.dtype))
    h_homo = weighted_neighbor_sum(x, hu, hv, hw, n) if use_homo else zeros
    h_het = weighted_neighbor_sum(x, tu, tv, tw, n) if use_hetero else zeros
    return h_homo, h_het


def _mlp(x, p: BranchMlpParams, dropout, rng, training):
    h = ad.relu(ad.add(ad.matmul(x, p.w1), p.b1))
    if training and dropout > 0:
        h = ad.dropout(h, dropout, rng)
    return ad.add(ad.matmul(h, p.w2), p.b2)


def structural_fuse(
    h_homo,
    h_hetero,
    params: StructuralChannelParams,
    *,
    dropout=0.0,
    rng=None,
    training=False,
):
    """sigmoid(gate) * T_homo(h_homo) + (1 - sigmoid(gate)) * T_hetero(h_hetero).

    The dimension-wise gate pre-activation is a linear map of the
    concatenated transformed branches.
    """
    t_homo = _mlp(h_homo, params.homo, dropout, rng, training)
    t_het = _mlp(h_hetero, params.hetero, dropout, rng, training)
    z = ad.add(ad.matmul(ad.concat([t_homo, t_het], axis=1), params.gate_w), params.gate_b)
    s = ad.sigmoid(z)
    return ad.add(ad.mul(s, t_homo), ad.mul(ad.sub(1.0, s), t_het))
