"""Metapath-induced graphs, instance counts, structural weights, homophily.

Counts are taken from sparse per-relation adjacency products (the induced
count matrix of a path r_1..r_l is A_{r_1} @ ... @ A_{r_l}); explicit path
enumeration exists only as a test oracle. Diagonal counts are kept in the
matrix but never contribute edges or neighbors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import HetGraph, SchemaMismatchError


class MetapathError(ValueError):
    pass


class NonComposableMetapathError(MetapathError):
    pass


class NonSymmetricMetapathError(MetapathError):
    pass


class EmptyEdgeSetError(ValueError):
    pass


class EmptyListError(ValueError):
    pass


UNDEFINED = np.nan  # local homophily of isolated nodes

HOMOPHILY_BINS = ((0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 0.8), (0.8, 1.0))


@dataclass(frozen=True)
class Metapath:
    """Ordered relation names whose types compose back to the target type."""

    relations: tuple
    type_sequence: tuple

    @property
    def name(self):
        return "-".join(self.type_sequence)

    def __str__(self):
        return ",".join(self.relations)


def _resolve_type(token, node_types):
    if token in node_types:
        return token
    matches = [t for t in node_types if t.lower().startswith(token.lower())]
    if len(matches) != 1:
        raise NonComposableMetapathError(
            f"type token {token!r} does not resolve uniquely among {node_types}"
        )
    return matches[0]


def parse_metapath(text, g: HetGraph):
    """Parse 'writes,writes_rev' (relation names) or 'A-P-A' (type shorthand)."""
    text = text.strip()
    if "-" in text and "," not in text:
        tokens = [_resolve_type(t, g.node_types) for t in text.split("-")]
        if len(tokens) < 2:
            raise NonComposableMetapathError(f"metapath {text!r} too short")
        rel_names = []
        for a, b in zip(tokens[:-1], tokens[1:]):
            candidates = [r.name for r in g.relations if r.src_type == a and r.dst_type == b]
            if len(candidates) != 1:
                raise NonComposableMetapathError(
                    f"{len(candidates)} relations connect {a!r} -> {b!r}; "
                    f"spell the metapath with relation names instead"
                )
            rel_names.append(candidates[0])
        return metapath_from_relations(rel_names, g)
    return metapath_from_relations([r for r in text.split(",") if r], g)


def metapath_from_relations(rel_names, g: HetGraph):
    if not rel_names:
        raise NonComposableMetapathError("empty metapath")
    try:
        rels = [g.relation(name) for name in rel_names]
    except SchemaMismatchError as e:
        raise NonComposableMetapathError(str(e)) from e
    for a, b in zip(rels[:-1], rels[1:]):
        if a.dst_type != b.src_type:
            raise NonComposableMetapathError(
                f"{a.name!r} ends at {a.dst_type!r} but {b.name!r} starts at {b.src_type!r}"
            )
    types = [rels[0].src_type] + [r.dst_type for r in rels]
    if types[0] != types[-1] or types[0] != g.target_type:
        raise NonSymmetricMetapathError(
            f"metapath must start and end at the target type {g.target_type!r}, "
            f"got {types[0]!r} .. {types[-1]!r}"
        )
    return Metapath(relations=tuple(r.name for r in rels), type_sequence=tuple(types))


@dataclass
class InducedGraph:
    """Sparse instance-count matrix over target nodes for one metapath."""

    metapath: Metapath
    counts: sp.csr_matrix  # (n_target, n_target), int64, diagonal retained

    @property
    def num_targets(self):
        return self.counts.shape[0]

    def edge_arrays(self):
        """(src, dst, count) arrays of the off-diagonal support E_p."""
        coo = self.counts.tocoo()
        keep = coo.row != coo.col
        return coo.row[keep], coo.col[keep], coo.data[keep]

    def neighbor_csr(self):
        """Off-diagonal counts as CSR keyed by the *target* node (column)."""
        off = self.counts.tolil(copy=True)
        off.setdiag(0)
        return off.tocsr().T.tocsr()  # row v holds counts omega_{u,v}


def build_induced_graph(g: HetGraph, p: Metapath):
    """Instance counts via the chain of per-relation adjacency products."""
    mat = g.adjacency(p.relations[0]).astype(np.int64)
    for name in p.relations[1:]:
        mat = mat @ g.adjacency(name).astype(np.int64)
    return InducedGraph(metapath=p, counts=mat.tocsr())


@dataclass
class StructuralWeights:
    """Per-node metapath neighbors with raw count sums and softmax weights.

    CSR layout over target nodes: ``indptr``/``neighbors`` list each node's
    union neighborhood, ``raw`` the summed instance counts, ``normalized``
    the per-node stable softmax of ``raw``. Softmax underflows to exact zero
    only for raw-count gaps beyond ~700, far outside desk-scale graphs.
    """

    indptr: np.ndarray
    neighbors: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray

    @property
    def num_targets(self):
        return len(self.indptr) - 1

    def neighbor_slice(self, v):
        s, e = self.indptr[v], self.indptr[v + 1]
        return self.neighbors[s:e], self.raw[s:e], self.normalized[s:e]

    def edge_arrays(self):
        """(u, v, w_normalized) with one entry per (neighbor u, target v)."""
        v_idx = np.repeat(
            np.arange(self.num_targets), np.diff(self.indptr)
        )
        return self.neighbors, v_idx, self.normalized


def structural_weights(graphs):
    """Sum counts across metapaths and softmax-normalize per target node."""
    if not graphs:
        raise EmptyListError("need at least one induced graph")
    n = graphs[0].num_targets
    for ig in graphs:
        if ig.num_targets != n:
            raise SchemaMismatchError("induced graphs disagree on the target set")
    total = graphs[0].counts.copy()
    for ig in graphs[1:]:
        total = total + ig.counts
    total = total.tolil(copy=False)
    total.setdiag(0)
    # per target v, neighbors are the nonzero entries of column v
    by_target = total.tocsr().T.tocsr()
    by_target.eliminate_zeros()
    by_target.sort_indices()

    indptr = by_target.indptr.copy()
    neighbors = by_target.indices.astype(np.int64)
    raw = by_target.data.astype(np.int64)
    normalized = np.zeros(len(raw), dtype=np.float64)
    for v in range(n):
        s, e = indptr[v], indptr[v + 1]
        if s == e:
            continue
        w = raw[s:e].astype(np.float64)
        w = np.exp(w - w.max())
        normalized[s:e] = w / w.sum()
    return StructuralWeights(
        indptr=indptr, neighbors=neighbors, raw=raw, normalized=normalized
    )


@dataclass
class Partition:
    """Homophilic/heterophilic split of every structural neighborhood.

    Shares the CSR layout of the weights it was built from; ``is_homo`` marks
    entries whose pseudo-label agrees with the target node's. Normalized
    weights are carried through unchanged (no per-branch renormalization).
    """

    weights: StructuralWeights
    is_homo: np.ndarray  # bool per CSR entry

    def homo_neighbors(self, v):
        s, e = self.weights.indptr[v], self.weights.indptr[v + 1]
        return self.weights.neighbors[s:e][self.is_homo[s:e]]

    def hetero_neighbors(self, v):
        s, e = self.weights.indptr[v], self.weights.indptr[v + 1]
        return self.weights.neighbors[s:e][~self.is_homo[s:e]]

    def branch_edge_arrays(self):
        """((u, v, w) for the homo branch, same for the hetero branch)."""
        u, v, w = self.weights.edge_arrays()
        h = self.is_homo
        return (u[h], v[h], w[h]), (u[~h], v[~h], w[~h])


def _same_label(labels, u_idx, v_idx):
    labels = np.asarray(labels)
    if labels.ndim == 1:
        return labels[u_idx] == labels[v_idx]
    # multi-label: sets count as equal iff they intersect
    return (labels[u_idx].astype(np.int64) * labels[v_idx].astype(np.int64)).sum(axis=1) > 0


def partition_neighbors(weights: StructuralWeights, pseudo):
    u_idx, v_idx, _ = weights.edge_arrays()
    return Partition(weights=weights, is_homo=_same_label(pseudo, u_idx, v_idx))


def _labeled_edge_mask(labels, u_idx, v_idx):
    labels = np.asarray(labels)
    if labels.ndim == 1:
        return (labels[u_idx] >= 0) & (labels[v_idx] >= 0)
    present = labels.sum(axis=1) > 0
    return present[u_idx] & present[v_idx]


def global_homophily(ig: InducedGraph, labels):
    """Fraction of induced edges whose endpoints share a label."""
    u, v, _ = ig.edge_arrays()
    keep = _labeled_edge_mask(labels, u, v)
    u, v = u[keep], v[keep]
    if len(u) == 0:
        raise EmptyEdgeSetError(f"no labeled edges in {ig.metapath.name}")
    return float(_same_label(labels, u, v).mean())


def average_homophily(per_metapath):
    if not len(per_metapath):
        raise EmptyListError("no homophily values to average")
    return float(np.mean(per_metapath))


def local_homophily(ig: InducedGraph, labels):
    """Per node: fraction of induced-graph neighbors sharing its label.

    Isolated nodes (and nodes whose neighborhoods have no labeled pairs)
    come back as NaN (UNDEFINED).
    """
    n = ig.num_targets
    u, v, _ = ig.edge_arrays()
    keep = _labeled_edge_mask(labels, u, v)
    u, v = u[keep], v[keep]
    same = _same_label(labels, u, v).astype(np.float64)
    num = np.zeros(n)
    den = np.zeros(n)
    np.add.at(num, v, same)
    np.add.at(den, v, 1.0)
    out = np.full(n, UNDEFINED)
    has = den > 0
    out[has] = num[has] / den[has]
    return out


def bin_by_local_homophily(values):
    """Split defined nodes into the five intervals (0,.2],(.2,.4],..,(.8,1].

    A value of exactly 0 lands in the lowest bin; NaN values are excluded.
    """
    values = np.asarray(values, dtype=np.float64)
    bins = []
    for i, (lo, hi) in enumerate(HOMOPHILY_BINS):
        if i == 0:
            mask = (values >= 0.0) & (values <= hi)
        else:
            mask = (values > lo) & (values <= hi)
        bins.append(np.nonzero(mask & ~np.isnan(values))[0])
    return bins


def _row_cosines(feats, u, v):
    fu, fv = feats[u], feats[v]
    nu = np.linalg.norm(fu, axis=1)
    nv = np.linalg.norm(fv, axis=1)
    denom = nu * nv
    dots = (fu * fv).sum(axis=1)
    out = np.zeros(len(u))
    ok = denom > 0  # zero vectors contribute cosine 0 by convention
    out[ok] = dots[ok] / denom[ok]
    return out


def similarity_vs_homophily(g: HetGraph, metapaths):
    """Per metapath (mean feature cosine over E_p, homophily) plus an OLS fit.

    Returns (rows, fit) where rows are (metapath, mean_cosine, homophily)
    and fit is a dict with slope/intercept/r2 of homophily ~ cosine.
    """
    feats = g.features.get(g.target_type)
    if feats is None:
        raise SchemaMismatchError("target features are required for similarity analysis")
    rows = []
    for p in metapaths:
        ig = build_induced_graph(g, p)
        u, v, _ = ig.edge_arrays()
        if len(u) == 0:
            raise EmptyEdgeSetError(f"metapath {p.name} induces no edges")
        mean_cos = float(_row_cosines(feats, u, v).mean())
        rows.append((p, mean_cos, global_homophily(ig, g.labels)))
    xs = np.array([r[1] for r in rows])
    ys = np.array([r[2] for r in rows])
    if len(rows) < 2 or np.ptp(xs) == 0:
        fit = {"slope": np.nan, "intercept": np.nan, "r2": np.nan}
    else:
        slope, intercept = np.polyfit(xs, ys, 1)
        resid = ys - (slope * xs + intercept)
        ss_res = float((resid ** 2).sum())
        ss_tot = float(((ys - ys.mean()) ** 2).sum())
        if ss_tot == 0:
            r2 = 1.0 if ss_res < 1e-12 else 0.0
        else:
            r2 = 1.0 - ss_res / ss_tot
        fit = {"slope": float(slope), "intercept": float(intercept), "r2": r2}
    return rows, fit
