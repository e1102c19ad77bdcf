"""Shared oracles: finite differences, brute-force path counts, random graphs."""
from __future__ import annotations

import numpy as np
import pytest

from heterseed.graph import Relation, make_graph


def numeric_grad(f, x, eps=1e-5):
    """Central finite differences of a scalar function, element by element."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x)
        flat[i] = orig - eps
        dn = f(x)
        flat[i] = orig
        gf[i] = (up - dn) / (2 * eps)
    return g


def assert_grad_close(analytic, numeric, rel_tol=1e-4, abs_floor=1e-7):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(numeric), abs_floor)
    rel = np.abs(analytic - numeric) / denom
    worst = float(rel.max()) if rel.size else 0.0
    assert worst < rel_tol, f"gradient mismatch: max rel err {worst}"


def enumerate_path_counts(g, metapath):
    """Brute-force count of typed paths u -> ... -> v following the relations."""
    n = g.num_targets
    counts = np.zeros((n, n), dtype=np.int64)
    adj = {}
    for rname in metapath.relations:
        rel = g.relation(rname)
        lists = {}
        for s, d in g.edges[rname]:
            lists.setdefault(int(s), []).append(int(d))
        adj[rname] = lists

    def walk(node, depth, start):
        if depth == len(metapath.relations):
            counts[start, node] += 1
            return
        for nxt in adj[metapath.relations[depth]].get(node, ()):
            walk(nxt, depth + 1, start)

    for u in range(n):
        walk(u, 0, u)
    return counts


def random_typed_graph(rng, max_nodes=30, max_relations=3, with_reverse=True):
    """Random small heterogeneous graph with a target type and labels."""
    n_types = int(rng.integers(2, 4))
    types = [f"t{i}" for i in range(n_types)]
    remaining = int(rng.integers(n_types * 2, max_nodes + 1))
    counts = {}
    for i, t in enumerate(types):
        left = len(types) - i - 1
        c = int(rng.integers(2, max(3, remaining - 2 * left + 1)))
        counts[t] = c
        remaining = max(remaining - c, 2 * left)
    target = types[0]

    n_rel = int(rng.integers(1, max_relations + 1))
    relations = []
    edges = {}
    for i in range(n_rel):
        src = types[int(rng.integers(n_types))]
        dst = types[int(rng.integers(n_types))]
        name = f"r{i}"
        relations.append(Relation(name, src, dst))
        m = int(rng.integers(1, 3 * max(counts[src], counts[dst])))
        e = np.column_stack(
            [rng.integers(0, counts[src], m), rng.integers(0, counts[dst], m)]
        )
        edges[name] = e
        if with_reverse:
            relations.append(Relation(name + "_rev", dst, src))
            edges[name + "_rev"] = e[:, ::-1]

    n = counts[target]
    num_classes = int(rng.integers(2, 5))
    labels = rng.integers(0, num_classes, n)
    perm = rng.permutation(n)
    third = max(1, n // 3)
    splits = {
        "train": perm[:third],
        "val": perm[third : 2 * third],
        "test": perm[2 * third :],
    }
    features = {target: rng.standard_normal((n, 4)).astype(np.float32)}
    return make_graph(
        node_types=types,
        relations=relations,
        node_counts=counts,
        edges=edges,
        target_type=target,
        num_classes=num_classes,
        labels=labels,
        splits=splits,
        features=features,
    )


def random_symmetric_metapath(rng, g, max_len=3):
    """Random relation sequence composing target -> ... -> target, or None."""
    from heterseed.metapaths import metapath_from_relations

    by_src = {}
    for r in g.relations:
        by_src.setdefault(r.src_type, []).append(r)
    for _ in range(50):
        length = int(rng.integers(1, max_len + 1))
        seq = []
        cur = g.target_type
        ok = True
        for _ in range(length):
            options = by_src.get(cur, [])
            if not options:
                ok = False
                break
            r = options[int(rng.integers(len(options)))]
            seq.append(r.name)
            cur = r.dst_type
        if ok and cur == g.target_type:
            return metapath_from_relations(seq, g)
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
