"""Label-guided masking: add (possibly masked) label embeddings to features.

Only labeled train nodes are touched. During training each such node draws
Bernoulli(beta) to decide between its own label row and the shared MASK row;
at inference the label row is used deterministically. Draws are keyed by
(seed, epoch, node index) so every view of a node in one epoch agrees.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

TRAIN = "train"
INFER = "infer"


@dataclass
class LabelEmbeddingParams:
    """(C+1) x d table whose last row is the MASK token, plus the projection g."""

    table: Tensor
    proj_w: Tensor
    proj_b: Tensor

    @property
    def mask_row(self):
        return self.table.shape[0] - 1

    @property
    def num_classes(self):
        return self.table.shape[0] - 1


def mask_draws(seed, epoch, num_targets, beta):
    """Boolean mask-per-node for one epoch (True = replace by MASK)."""
    rng = np.random.default_rng([int(seed), 2, int(epoch)])
    return rng.random(num_targets) < beta


def mask_and_inject(
    x,
    labels,
    train_idx,
    params: LabelEmbeddingParams,
    *,
    beta=0.0,
    mode=INFER,
    draws=None,
    node_ids=None,
):
    """Return x with g(label-or-MASK rows) added on labeled train rows.

    ``labels`` are ground-truth labels over the full target set (never
    pseudo-labels); rows outside the labeled train set pass through
    bitwise unchanged. ``node_ids`` maps the rows of x to global target
    indices when x covers a subset (mini-batching); default is identity.
    ``draws`` is the epoch's Bernoulli vector for TRAIN mode.
    """
    labels = np.asarray(labels)
    ids = np.arange(x.shape[0], dtype=np.int64) if node_ids is None else np.asarray(node_ids)
    multi = labels.ndim == 2
    labeled = (labels.sum(axis=1) > 0) if multi else (labels >= 0)
    in_train = np.zeros(len(labeled), dtype=bool)
    in_train[np.asarray(train_idx, dtype=np.int64)] = True
    inject_global = np.nonzero(labeled & in_train)[0]
    local_pos = {int(gid): i for i, gid in enumerate(ids)}
    pairs = [(local_pos[int(gid)], int(gid)) for gid in inject_global if int(gid) in local_pos]
    if not pairs:
        return x
    rows_local = np.array([p[0] for p in pairs], dtype=np.int64)
    rows_global = np.array([p[1] for p in pairs], dtype=np.int64)

    mask_row = params.mask_row
    if mode == TRAIN and beta > 0:
        if draws is None:
            raise ValueError("TRAIN mode needs the epoch's mask draws")
        masked = draws[rows_global]
    else:
        masked = np.zeros(len(rows_global), dtype=bool)

    if beta >= 1.0 and mode == TRAIN:
        # fully masked: ground-truth rows are never read at all
        chosen = np.full(len(rows_global), mask_row, dtype=np.int64)
        z = ad.row_gather(params.table, chosen)
    elif multi:
        c = params.num_classes
        sel = np.zeros((len(rows_global), c + 1), dtype=params.table.dtype)
        for i, (gid, m) in enumerate(zip(rows_global, masked)):
            if m:
                sel[i, mask_row] = 1.0
            else:
                active = np.nonzero(labels[gid])[0]
                sel[i, active] = 1.0 / len(active)
        z = ad.matmul(ad.as_tensor(sel), params.table)
    else:
        chosen = np.where(masked, mask_row, labels[rows_global]).astype(np.int64)
        z = ad.row_gather(params.table, chosen)

    proj = ad.add(ad.matmul(z, params.proj_w), params.proj_b)
    delta = ad.row_scatter_add(proj, rows_local, x.shape[0])
    return ad.add(x, delta)
