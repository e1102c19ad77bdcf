import numpy as np
import pytest

import heterseed.autodiff as ad
from heterseed.autodiff import Tensor
from heterseed.metapaths import Partition, StructuralWeights, partition_neighbors
from heterseed.structural import (
    BranchMlpParams,
    StructuralChannelParams,
    branch_aggregate,
    structural_fuse,
)


def weights_from_dense(dense):
    """Build StructuralWeights from a dense count matrix (columns = targets)."""
    n = dense.shape[0]
    indptr = [0]
    neighbors = []
    raw = []
    norm = []
    for v in range(n):
        col = dense[:, v].copy()
        col[v] = 0
        idx = np.nonzero(col)[0]
        neighbors.extend(idx.tolist())
        raw.extend(col[idx].tolist())
        if len(idx):
            w = np.exp(col[idx] - col[idx].max())
            norm.extend((w / w.sum()).tolist())
        indptr.append(len(neighbors))
    return StructuralWeights(
        indptr=np.array(indptr),
        neighbors=np.array(neighbors, dtype=np.int64),
        raw=np.array(raw, dtype=np.int64),
        normalized=np.array(norm),
    )


def make_params(d, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)

    def t(shape):
        return Tensor(rng.standard_normal(shape).astype(dtype), requires_grad=True)

    def z(shape):
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    return StructuralChannelParams(
        homo=BranchMlpParams(t((d, d)), z((d,)), t((d, d)), z((d,))),
        hetero=BranchMlpParams(t((d, d)), z((d,)), t((d, d)), z((d,))),
        gate_w=t((2 * d, d)),
        gate_b=z((d,)),
    )


def test_single_homophilic_neighbor():
    dense = np.zeros((2, 2), dtype=np.int64)
    dense[1, 0] = 5  # node 0 has the single neighbor 1
    w = weights_from_dense(dense)
    part = partition_neighbors(w, np.array([0, 0]))
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    h_homo, h_het = branch_aggregate(x, part)
    assert np.allclose(h_homo.data[0], [3.0, 4.0])  # weight 1.0 on the lone neighbor
    assert np.allclose(h_het.data[0], 0.0)


def test_all_heterophilic_node():
    dense = np.zeros((3, 3), dtype=np.int64)
    dense[1, 0] = 1
    dense[2, 0] = 1
    w = weights_from_dense(dense)
    part = partition_neighbors(w, np.array([0, 1, 1]))
    x = Tensor(np.arange(6, dtype=np.float64).reshape(3, 2))
    h_homo, h_het = branch_aggregate(x, part)
    assert np.allclose(h_homo.data[0], 0.0)
    assert np.allclose(h_het.data[0], 0.5 * x.data[1] + 0.5 * x.data[2])


def test_branch_aggregate_matches_dense_oracle(rng):
    n, d = 10, 6
    dense = rng.integers(0, 3, (n, n))
    dense = dense + dense.T  # symmetric counts
    w = weights_from_dense(dense)
    pseudo = rng.integers(0, 3, n)
    part = partition_neighbors(w, pseudo)
    x0 = rng.standard_normal((n, d))
    h_homo, h_het = branch_aggregate(Tensor(x0), part)

    expect_h = np.zeros((n, d))
    expect_t = np.zeros((n, d))
    for v in range(n):
        neigh, _, norm = w.neighbor_slice(v)
        for u, wt in zip(neigh, norm):
            if pseudo[u] == pseudo[v]:
                expect_h[v] += wt * x0[u]
            else:
                expect_t[v] += wt * x0[u]
    assert np.allclose(h_homo.data, expect_h, atol=1e-6)
    assert np.allclose(h_het.data, expect_t, atol=1e-6)


def test_fuse_saturated_gate_selects_homo_branch(rng):
    d = 4
    params = make_params(d)
    params.gate_b.data = np.full(d, 50.0)  # sigmoid ~ 1
    a = Tensor(rng.standard_normal((3, d)))
    b = Tensor(rng.standard_normal((3, d)))
    out = structural_fuse(a, b, params)

    def mlp(x, p):
        return np.maximum(x @ p.w1.data + p.b1.data, 0) @ p.w2.data + p.b2.data

    assert np.allclose(out.data, mlp(a.data, params.homo), atol=1e-8)


def test_fuse_zero_gate_averages_branches(rng):
    d = 4
    params = make_params(d)
    params.gate_w.data = np.zeros((2 * d, d))
    params.gate_b.data = np.zeros(d)
    a = Tensor(rng.standard_normal((3, d)))
    b = Tensor(rng.standard_normal((3, d)))
    out = structural_fuse(a, b, params)

    def mlp(x, p):
        return np.maximum(x @ p.w1.data + p.b1.data, 0) @ p.w2.data + p.b2.data

    expect = 0.5 * mlp(a.data, params.homo) + 0.5 * mlp(b.data, params.hetero)
    assert np.allclose(out.data, expect, atol=1e-8)


def test_fuse_matches_straight_line_oracle(rng):
    d = 5
    params = make_params(d, seed=7)
    a0 = rng.standard_normal((4, d))
    b0 = rng.standard_normal((4, d))
    out = structural_fuse(Tensor(a0), Tensor(b0), params)

    def mlp(x, p):
        return np.maximum(x @ p.w1.data + p.b1.data, 0) @ p.w2.data + p.b2.data

    th = mlp(a0, params.homo)
    tt = mlp(b0, params.hetero)
    z = np.concatenate([th, tt], axis=1) @ params.gate_w.data + params.gate_b.data
    s = 1.0 / (1.0 + np.exp(-z))
    expect = s * th + (1 - s) * tt
    assert np.allclose(out.data, expect, atol=1e-10)


def test_gate_strictly_inside_unit_interval(rng):
    d = 4
    params = make_params(d, seed=1)
    a = Tensor(rng.standard_normal((6, d)))
    b = Tensor(rng.standard_normal((6, d)))

    def mlp(x, p):
        return np.maximum(x @ p.w1.data + p.b1.data, 0) @ p.w2.data + p.b2.data

    th, tt = mlp(a.data, params.homo), mlp(b.data, params.hetero)
    z = np.concatenate([th, tt], axis=1) @ params.gate_w.data + params.gate_b.data
    s = 1.0 / (1.0 + np.exp(-z))
    assert np.all(s > 0) and np.all(s < 1)


def test_branch_swap_with_negated_gate_is_identity(rng):
    d = 4
    params = make_params(d, seed=2)
    a = Tensor(rng.standard_normal((5, d)))
    b = Tensor(rng.standard_normal((5, d)))
    out = structural_fuse(a, b, params)

    # swap branch inputs and transforms, negate the gate pre-activation
    swapped = StructuralChannelParams(
        homo=params.hetero,
        hetero=params.homo,
        gate_w=Tensor(
            -np.concatenate(
                [params.gate_w.data[d:], params.gate_w.data[:d]], axis=0
            )
        ),
        gate_b=Tensor(-params.gate_b.data),
    )
    out_swapped = structural_fuse(b, a, swapped)
    assert np.allclose(out.data, out_swapped.data, atol=1e-10)


def test_zero_hetero_weights_make_output_independent_of_hetero_features(rng):
    n, d = 6, 4
    dense = rng.integers(1, 3, (n, n))
    dense = dense + dense.T
    w = weights_from_dense(dense)
    pseudo = np.array([0, 0, 0, 1, 1, 1])
    part = partition_neighbors(w, pseudo)
    # zero out the heterophilic weight entries
    w.normalized[~part.is_homo] = 0.0
    params = make_params(d, seed=3)
    x0 = rng.standard_normal((n, d))
    h_homo, h_het = branch_aggregate(Tensor(x0), part)
    base = structural_fuse(h_homo, h_het, params).data

    x1 = x0.copy()
    x1[3:] += rng.standard_normal((3, d))  # perturb only cross-class rows
    h_homo2, h_het2 = branch_aggregate(Tensor(x1), part)
    # rows 0..2 aggregate only same-class neighbors, so they cannot move
    out2 = structural_fuse(h_homo2, h_het2, params).data
    assert np.allclose(base[:3], out2[:3], atol=1e-8)


def test_branch_disable_flags():
    dense = np.zeros((2, 2), dtype=np.int64)
    dense[1, 0] = 1
    w = weights_from_dense(dense)
    part = partition_neighbors(w, np.array([0, 0]))
    x = Tensor(np.ones((2, 3)))
    h_homo, _ = branch_aggregate(x, part, use_homo=False)
    assert np.all(h_homo.data == 0)
