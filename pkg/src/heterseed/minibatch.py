"""Uniform neighbor sampling and the batched forward pass.

A batch plan carries, per layer, the sampled (src, dst) index arrays in
local coordinates plus the node id lists each layer consumes; structural
connections are materialized sparsely for the batch's receptive field only.
Node id lists are kept sorted so local edge ordering is canonical and
matches the full-batch accumulation order node-for-node.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .fusion import classify, fuse
from .graph import HetGraph
from .masking import TRAIN, mask_and_inject
from .semantic import RelationArrays
from .structural import structural_fuse, weighted_neighbor_sum


@dataclass
class RelationCsr:
    """In-neighbor lists per dst node for one relation."""

    indptr: np.ndarray
    src: np.ndarray

    @classmethod
    def from_arrays(cls, arr: RelationArrays, n_dst):
        counts = np.bincount(arr.dst_idx, minlength=n_dst)
        indptr = np.concatenate(([0], np.cumsum(counts)))
        return cls(indptr=indptr, src=arr.src_idx)

    def neighbors(self, v):
        return self.src[self.indptr[v] : self.indptr[v + 1]]


@dataclass
class LayerBlock:
    out_nodes: dict  # type -> sorted global ids produced by this layer
    self_map: dict  # type -> positions of out_nodes in the previous layer's list
    rel_edges: dict  # relation -> (src_local, dst_local, inv_deg column)


@dataclass
class BatchPlan:
    batch_ids: np.ndarray  # sorted target ids this batch predicts
    input_nodes: dict  # type -> sorted global ids needed at layer 0
    blocks: list
    pool_ids: np.ndarray  # target ids whose x_tilde the structural channel reads
    batch_in_pool: np.ndarray
    homo_edges: tuple  # (u_pool_local, v_batch_local, w)
    hetero_edges: tuple


def build_relation_csrs(g: HetGraph, arrays):
    return {
        r.name: RelationCsr.from_arrays(arrays[r.name], g.node_counts[r.dst_type])
        for r in g.relations
    }


def sample_batch_plan(g, csrs, partition, batch_ids, fanout, rng, dtype=np.float32):
    batch_ids = np.sort(np.asarray(batch_ids, dtype=np.int64))
    num_layers = len(fanout)
    nodes = {g.target_type: batch_ids}
    layer_nodes = [None] * (num_layers + 1)
    layer_nodes[num_layers] = nodes
    sampled_edges = [None] * num_layers  # rel -> (src_global, dst_global)

    for l in range(num_layers, 0, -1):
        cur = layer_nodes[l]
        need = {t: set(ids.tolist()) for t, ids in cur.items()}
        edges = {}
        f = int(fanout[l - 1])
        for r in g.relations:
            if r.dst_type not in cur:
                continue
            srcs, dsts = [], []
            csr = csrs[r.name]
            for v in cur[r.dst_type]:
                neigh = csr.neighbors(int(v))
                if len(neigh) == 0:
                    continue
                if len(neigh) > f:
                    picked = np.sort(rng.choice(neigh, size=f, replace=False))
                else:
                    picked = neigh
                srcs.append(picked)
                dsts.append(np.full(len(picked), v, dtype=np.int64))
            if srcs:
                u = np.concatenate(srcs)
                v = np.concatenate(dsts)
                edges[r.name] = (u, v)
                need.setdefault(r.src_type, set()).update(u.tolist())
        sampled_edges[l - 1] = edges
        layer_nodes[l - 1] = {
            t: np.array(sorted(ids), dtype=np.int64) for t, ids in need.items()
        }

    blocks = []
    for l in range(num_layers):
        prev, cur = layer_nodes[l], layer_nodes[l + 1]
        self_map = {t: np.searchsorted(prev[t], cur[t]) for t in cur}
        rel_edges = {}
        for rname, (u, v) in sampled_edges[l].items():
            r = g.relation(rname)
            src_local = np.searchsorted(prev[r.src_type], u)
            dst_local = np.searchsorted(cur[r.dst_type], v)
            order = np.lexsort((src_local, dst_local))
            src_local, dst_local = src_local[order], dst_local[order]
            n_dst = len(cur[r.dst_type])
            deg = np.bincount(dst_local, minlength=n_dst)
            inv = np.zeros((n_dst, 1), dtype=dtype)
            nz = deg > 0
            inv[nz, 0] = 1.0 / deg[nz]
            rel_edges[rname] = (src_local, dst_local, inv)
        blocks.append(LayerBlock(out_nodes=cur, self_map=self_map, rel_edges=rel_edges))

    # structural receptive field: all union neighbors of the batch
    w = partition.weights
    u_parts, v_parts, w_parts, homo_parts = [], [], [], []
    for bpos, v in enumerate(batch_ids):
        s, e = w.indptr[v], w.indptr[v + 1]
        u_parts.append(w.neighbors[s:e])
        v_parts.append(np.full(e - s, bpos, dtype=np.int64))
        w_parts.append(w.normalized[s:e])
        homo_parts.append(partition.is_homo[s:e])
    if u_parts:
        u_all = np.concatenate(u_parts)
        v_all = np.concatenate(v_parts)
        w_all = np.concatenate(w_parts)
        homo_all = np.concatenate(homo_parts)
    else:
        u_all = np.empty(0, dtype=np.int64)
        v_all = np.empty(0, dtype=np.int64)
        w_all = np.empty(0)
        homo_all = np.empty(0, dtype=bool)
    pool_ids = np.union1d(batch_ids, u_all)
    u_local = np.searchsorted(pool_ids, u_all)
    return BatchPlan(
        batch_ids=batch_ids,
        input_nodes=layer_nodes[0],
        blocks=blocks,
        pool_ids=pool_ids,
        batch_in_pool=np.searchsorted(pool_ids, batch_ids),
        homo_edges=(u_local[homo_all], v_all[homo_all], w_all[homo_all]),
        hetero_edges=(u_local[~homo_all], v_all[~homo_all], w_all[~homo_all]),
    )


def _project_rows(model, node_type, ids):
    g = model.graph
    proj = model.proj[node_type]
    raw = g.features.get(node_type)
    if raw is None:
        return ad.row_gather(proj["embedding"], np.zeros(len(ids), dtype=np.int64))
    x = ad.as_tensor(np.ascontiguousarray(raw[ids], dtype=model.dtype))
    return ad.add(ad.matmul(x, proj["weight"]), proj["bias"])


def _inject(model, x, ids, cfg, mode, draws):
    g = model.graph
    if cfg.no_mask:
        return x
    return mask_and_inject(
        x,
        g.labels,
        g.splits["train"],
        model.label,
        beta=cfg.beta,
        mode=mode,
        draws=draws,
        node_ids=ids,
    )


def forward_batch(model, plan: BatchPlan, cfg, *, mode, draws=None, rng=None):
    """Batched forward; returns (h_sem, h_struct, h, logits) for plan.batch_ids."""
    g = model.graph
    training = mode == TRAIN
    h = {}
    for t, ids in plan.input_nodes.items():
        x = _project_rows(model, t, ids)
        if t == g.target_type:
            x = _inject(model, x, ids, cfg, mode, draws)
        h[t] = x
    if training and cfg.dropout > 0:
        h = {t: ad.dropout(x, cfg.dropout, rng) for t, x in h.items()}
    for li, (block, layer) in enumerate(zip(plan.blocks, model.sem_layers)):
        nxt = {}
        for t, out_ids in block.out_nodes.items():
            self_rows = ad.row_gather(h[t], block.self_map[t])
            acc = ad.matmul(self_rows, layer.w_self)
            for r in g.relations:
                if r.dst_type != t or r.name not in block.rel_edges:
                    continue
                src_local, dst_local, inv = block.rel_edges[r.name]
                msgs = ad.row_gather(h[r.src_type], src_local)
                summed = ad.row_scatter_add(msgs, dst_local, len(out_ids))
                acc = ad.add(acc, ad.matmul(ad.mul(summed, inv), layer.rel_weights[r.name]))
            nxt[t] = ad.relu(acc)
        h = nxt
        if training and cfg.dropout > 0 and li < len(plan.blocks) - 1:
            h = {t: ad.dropout(x, cfg.dropout, rng) for t, x in h.items()}
    h_sem = h[g.target_type]

    if cfg.no_shc:
        logits = classify(h_sem, model.fusion)
        return h_sem, None, h_sem, logits

    x_pool = _project_rows(model, g.target_type, plan.pool_ids)
    x_pool = _inject(model, x_pool, plan.pool_ids, cfg, mode, draws)
    n_out = len(plan.batch_ids)
    zeros = ad.as_tensor(np.zeros((n_out, model.hidden_dim), dtype=model.dtype))
    hu, hv, hw = plan.homo_edges
    tu, tv, tw = plan.hetero_edges
    h_homo = (
        weighted_neighbor_sum(x_pool, hu, hv, hw, n_out) if not cfg.no_homo else zeros
    )
    h_het = (
        weighted_neighbor_sum(x_pool, tu, tv, tw, n_out) if not cfg.no_hetero else zeros
    )
    h_struct = structural_fuse(
        h_homo, h_het, model.struct, dropout=cfg.dropout, rng=rng, training=training
    )
    h_fused, _ = fuse(h_sem, h_struct, model.fusion)
    logits = classify(h_fused, model.fusion)
    return h_sem, h_struct, h_fused, logits
