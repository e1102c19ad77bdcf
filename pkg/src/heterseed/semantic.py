"""Relation-aware one-hop message passing (the semantic channel).

Layer rule: h_v <- relu(W_self h_v + sum_r mean_{u in N_r(v)} W_r h_u),
with empty relation neighborhoods contributing a zero vector. A per-type
input projection unifies feature dims first; featureless types broadcast a
learnable embedding row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import HetGraph


class MissingProjectionError(KeyError):
    pass


@dataclass
class SemanticLayerParams:
    w_self: Tensor
    rel_weights: dict  # relation name -> Tensor


@dataclass
class RelationArrays:
    """Constant gather/scatter indices for one relation, canonically ordered.

    Edges are sorted by (dst, src) so per-node accumulation order is a pure
    function of the edge multiset, independent of input file ordering.
    """

    src_idx: np.ndarray
    dst_idx: np.ndarray
    inv_deg: np.ndarray  # (n_dst, 1), 0 rows for nodes without r-neighbors

    @classmethod
    def from_edges(cls, edges, n_dst, dtype=np.float32):
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((e[:, 0], e[:, 1]))
        e = e[order]
        deg = np.zeros(n_dst, dtype=np.int64)
        np.add.at(deg, e[:, 1], 1)
        inv = np.zeros((n_dst, 1), dtype=dtype)
        nz = deg > 0
        inv[nz, 0] = 1.0 / deg[nz]
        return cls(src_idx=e[:, 0], dst_idx=e[:, 1], inv_deg=inv)


def build_relation_arrays(g: HetGraph, dtype=np.float32):
    return {
        r.name: RelationArrays.from_edges(
            g.edges[r.name], g.node_counts[r.dst_type], dtype=dtype
        )
        for r in g.relations
    }


def project_inputs(g: HetGraph, features, proj):
    """Map raw per-type features (or ABSENT) to a shared hidden width.

    ``proj`` holds per-type entries: featured types map through
    (weight, bias); featureless types carry a single embedding row that is
    broadcast to every node of the type.
    """
    out = {}
    for t in g.node_types:
        n = g.node_counts[t]
        raw = features.get(t)
        if raw is None:
            if t not in proj or proj[t].get("embedding") is None:
                raise MissingProjectionError(f"no embedding for featureless type {t!r}")
            emb = proj[t]["embedding"]
            out[t] = ad.row_gather(emb, np.zeros(n, dtype=np.int64))
        else:
            if t not in proj or proj[t].get("weight") is None:
                raise MissingProjectionError(f"no projection for type {t!r}")
            x = raw if isinstance(raw, Tensor) else ad.as_tensor(
                np.asarray(raw, dtype=proj[t]["weight"].dtype)
            )
            out[t] = ad.add(ad.matmul(x, proj[t]["weight"]), proj[t]["bias"])
    return out


def semantic_forward(
    g: HetGraph,
    inputs,
    layers,
    *,
    arrays=None,
    dropout=0.0,
    rng=None,
    training=False,
):
    """Run the stacked layers; returns per-type matrices of the last layer.

    ``inputs`` are per-type Tensors of equal width (already projected and,
    for the target type, label-injected). Dropout hits the inputs and each
    hidden layer boundary when training.
    """
    if not layers:
        raise ValueError("need at least one layer")
    if arrays is None:
        dtype = next(iter(inputs.values())).dtype
        arrays = build_relation_arrays(g, dtype=dtype)
    h = dict(inputs)
    if training and dropout > 0:
        h = {t: ad.dropout(x, dropout, rng) for t, x in h.items()}
    for li, layer in enumerate(layers):
        nxt = {}
        for t in g.node_types:
            acc = ad.matmul(h[t], layer.w_self)
            for r in g.relations:
                if r.dst_type != t:
                    continue
                arr = arrays[r.name]
                if len(arr.src_idx) == 0:
                    continue  # empty relation contributes nothing anywhere
                msgs = ad.row_gather(h[r.src_type], arr.src_idx)
                summed = ad.row_scatter_add(msgs, arr.dst_idx, g.node_counts[t])
                mean = ad.mul(summed, arr.inv_deg)
                acc = ad.add(acc, ad.matmul(mean, layer.rel_weights[r.name]))
            nxt[t] = ad.relu(acc)
        h = nxt
        if training and dropout > 0 and li < len(layers) - 1:
            h = {t: ad.dropout(x, dropout, rng) for t, x in h.items()}
    return h
