"""Training orchestration: masking, both channels, losses, pseudo-label refresh.

Structural counts/weights are built once per run and cached; only the
homo/hetero partition is rebuilt when pseudo-labels refresh. All stochastic
draws derive from the config seed through fixed stream keys, so a run is a
pure function of (graph, metapaths, config).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward
from .fusion import COSINE, classification_loss, decouple_loss, total_loss
from .graph import MULTI, SINGLE, HetGraph
from .masking import INFER, TRAIN, mask_draws
from .metapaths import (
    Partition,
    build_induced_graph,
    parse_metapath,
    partition_neighbors,
    structural_weights,
)
from .metrics import average_precision, macro_f1, micro_f1
from .minibatch import build_relation_csrs, forward_batch, sample_batch_plan
from .model import HeterSeedModel
from .optim import Adam
from .semantic import build_relation_arrays

GROUND_TRUTH = 0
PREDICTED = 1


class ConfigValidationError(ValueError):
    pass


class EmptySplitError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    hidden_dim: int = 128
    dropout: float = 0.7
    epochs: int = 50
    layers: int = 2
    alpha: float = 0.2
    beta: float = 0.7
    batch_size: int = 0  # 0 = full batch
    neighbor_fanout: tuple = (15, 15)
    seed: int = 0
    dec_variant: str = COSINE
    refresh_period: int = 1
    no_shc: bool = False
    no_dec: bool = False
    no_homo: bool = False
    no_hetero: bool = False
    no_mask: bool = False
    dtype: object = np.float32

    def validate(self):
        if self.layers < 1:
            raise ConfigValidationError("layers must be >= 1")
        if self.alpha < 0:
            raise ConfigValidationError("alpha must be >= 0")
        if not (0.0 <= self.beta <= 1.0):
            raise ConfigValidationError("beta must be in [0, 1]")
        if any(f < 1 for f in self.neighbor_fanout):
            raise ConfigValidationError("fanout entries must be >= 1")
        if self.batch_size < 0:
            raise ConfigValidationError("batch_size must be >= 0")
        if self.refresh_period < 1:
            raise ConfigValidationError("refresh_period must be >= 1")


@dataclass
class PseudoLabels:
    labels: np.ndarray  # (n,) ints or (n, C) binary
    provenance: np.ndarray  # per node, GROUND_TRUTH or PREDICTED


@dataclass
class TrainResult:
    model: HeterSeedModel
    log_rows: list
    best_state: dict
    best_epoch: int
    test_metrics: tuple
    weights: object
    pseudo: PseudoLabels
    partition: Partition
    final_cos: float = float("nan")


def resolve_metapaths(g, metapaths):
    return [parse_metapath(p, g) if isinstance(p, str) else p for p in metapaths]


def build_weights(g, metapaths):
    graphs = [build_induced_graph(g, p) for p in resolve_metapaths(g, metapaths)]
    return structural_weights(graphs)


def _bootstrap_pseudo(g: HetGraph):
    """Before the first forward: ground truth on train, a sentinel elsewhere."""
    train = np.asarray(g.splits["train"], dtype=np.int64)
    prov = np.full(g.num_targets, PREDICTED, dtype=np.uint8)
    prov[train] = GROUND_TRUTH
    if g.label_mode == SINGLE:
        labels = np.full(g.num_targets, -1, dtype=np.int64)
        labels[train] = g.labels[train]
    else:
        labels = np.zeros_like(g.labels)
        labels[train] = g.labels[train]
    return PseudoLabels(labels=labels, provenance=prov)


def predictions_from_logits(logits, label_mode):
    if label_mode == SINGLE:
        return np.argmax(logits, axis=1)
    probs = 1.0 / (1.0 + np.exp(-logits))
    pred = (probs >= 0.5).astype(np.uint8)
    empty = pred.sum(axis=1) == 0
    if empty.any():
        best = np.argmax(logits[empty], axis=1)
        pred[np.nonzero(empty)[0], best] = 1
    return pred


def refresh_pseudo_labels(model, partition, cfg, *, arrays=None):
    """Ground truth on train nodes, INFER-mode model predictions elsewhere."""
    g = model.graph
    out = model.forward(
        partition,
        arrays=arrays,
        mode=INFER,
        beta=cfg.beta,
        dropout=0.0,
        no_shc=cfg.no_shc,
        no_mask=cfg.no_mask,
        no_homo=cfg.no_homo,
        no_hetero=cfg.no_hetero,
    )
    pred = predictions_from_logits(out.logits.data, g.label_mode)
    train = np.asarray(g.splits["train"], dtype=np.int64)
    prov = np.full(g.num_targets, PREDICTED, dtype=np.uint8)
    prov[train] = GROUND_TRUTH
    if g.label_mode == SINGLE:
        labels = pred.astype(np.int64)
        labels[train] = g.labels[train]
    else:
        labels = pred.astype(np.uint8)
        labels[train] = g.labels[train]
    return PseudoLabels(labels=labels, provenance=prov)


def evaluate(model, partition, split, cfg, *, arrays=None):
    """(macro_f1, micro_f1, average_precision) on one split, INFER mode."""
    g = model.graph
    idx = np.asarray(g.splits[split], dtype=np.int64)
    if len(idx) == 0:
        raise EmptySplitError(f"split {split!r} is empty")
    out = model.forward(
        partition,
        arrays=arrays,
        mode=INFER,
        beta=cfg.beta,
        dropout=0.0,
        no_shc=cfg.no_shc,
        no_mask=cfg.no_mask,
        no_homo=cfg.no_homo,
        no_hetero=cfg.no_hetero,
    )
    logits = out.logits.data[idx]
    truth = g.labels[idx]
    pred = predictions_from_logits(logits, g.label_mode)
    if g.label_mode == SINGLE:
        z = logits - logits.max(axis=1, keepdims=True)
        scores = np.exp(z)
        scores /= scores.sum(axis=1, keepdims=True)
    else:
        scores = 1.0 / (1.0 + np.exp(-logits))
    return (
        macro_f1(truth, pred, g.num_classes),
        micro_f1(truth, pred, g.num_classes),
        average_precision(truth, scores, g.num_classes),
    )


def mean_abs_channel_cosine(model, partition, cfg, *, arrays=None):
    """Mean |cos| between channel embeddings at INFER (decoupling probe)."""
    out = model.forward(
        partition,
        arrays=arrays,
        mode=INFER,
        beta=cfg.beta,
        dropout=0.0,
        no_shc=cfg.no_shc,
        no_mask=cfg.no_mask,
        no_homo=cfg.no_homo,
        no_hetero=cfg.no_hetero,
    )
    if out.h_struct is None:
        return float("nan")
    a, b = out.h_sem.data, out.h_struct.data
    dots = (a * b).sum(axis=1)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na * nb
    cos = np.zeros(len(dots))
    ok = denom > 0
    cos[ok] = dots[ok] / denom[ok]
    return float(np.abs(cos).mean())


def format_log(rows, test_metrics):
    lines = ["epoch\tl_cls\tl_dec\tl_total\tval_macro\tval_micro"]
    for r in rows:
        lines.append(
            f"{r[0]}\t{r[1]:.8f}\t{r[2]:.8f}\t{r[3]:.8f}\t{r[4]:.6f}\t{r[5]:.6f}"
        )
    lines.append(
        "test\tmacro={:.6f}\tmicro={:.6f}\tap={:.6f}".format(*test_metrics)
    )
    return "\n".join(lines) + "\n"


def _loss_terms(out, g, cfg):
    train = np.asarray(g.splits["train"], dtype=np.int64)
    train = train[g.labeled_mask()[train]]
    mode = SINGLE if g.label_mode == SINGLE else MULTI
    l_cls = classification_loss(out.logits, g.labels, train, mode=mode)
    if cfg.no_dec or cfg.alpha == 0 or out.h_struct is None:
        return l_cls, None, l_cls
    l_dec = decouple_loss(out.h_sem, out.h_struct, variant=cfg.dec_variant)
    return l_cls, l_dec, total_loss(l_cls, l_dec, cfg.alpha)


def _snapshot(named):
    return {k: v.data.copy() for k, v in named.items()}


def train_full_batch(g: HetGraph, metapaths, cfg: TrainConfig):
    """Per epoch: mask, both channels, fuse, losses, Adam; refresh + eval."""
    cfg.validate()
    model = HeterSeedModel(
        g, cfg.hidden_dim, layers=cfg.layers, seed=cfg.seed, dtype=cfg.dtype
    )
    arrays = build_relation_arrays(g, dtype=cfg.dtype)
    weights = build_weights(g, metapaths)
    named = model.named_params(no_shc=cfg.no_shc, no_mask=cfg.no_mask)
    opt = Adam(named, lr=cfg.lr)

    pseudo = _bootstrap_pseudo(g)
    partition = partition_neighbors(weights, pseudo.labels)
    pseudo = refresh_pseudo_labels(model, partition, cfg, arrays=arrays)
    partition = partition_neighbors(weights, pseudo.labels)

    rows = []
    best_val = -1.0
    best_epoch = -1
    best_state = _snapshot(named)
    for epoch in range(cfg.epochs):
        if epoch > 0 and epoch % cfg.refresh_period == 0:
            pseudo = refresh_pseudo_labels(model, partition, cfg, arrays=arrays)
            partition = partition_neighbors(weights, pseudo.labels)
        rng = np.random.default_rng([cfg.seed, 1, epoch])
        with Tape() as tape:
            out = model.forward(
                partition,
                arrays=arrays,
                mode=TRAIN,
                beta=cfg.beta,
                dropout=cfg.dropout,
                rng=rng,
                epoch=epoch,
                seed=cfg.seed,
                no_shc=cfg.no_shc,
                no_mask=cfg.no_mask,
                no_homo=cfg.no_homo,
                no_hetero=cfg.no_hetero,
            )
            l_cls, l_dec, l_tot = _loss_terms(out, g, cfg)
        opt.zero_grad()
        backward(l_tot, tape)
        opt.step()
        val_ma, val_mi, _ = evaluate(model, partition, "val", cfg, arrays=arrays)
        rows.append(
            (
                epoch,
                l_cls.item(),
                0.0 if l_dec is None else l_dec.item(),
                l_tot.item(),
                val_ma,
                val_mi,
            )
        )
        if val_mi > best_val:
            best_val = val_mi
            best_epoch = epoch
            best_state = _snapshot(named)

    model.load_state(best_state)
    pseudo = refresh_pseudo_labels(model, partition, cfg, arrays=arrays)
    partition = partition_neighbors(weights, pseudo.labels)
    test_metrics = evaluate(model, partition, "test", cfg, arrays=arrays)
    final_cos = mean_abs_channel_cosine(model, partition, cfg, arrays=arrays)
    return TrainResult(
        model=model,
        log_rows=rows,
        best_state=best_state,
        best_epoch=best_epoch,
        test_metrics=test_metrics,
        weights=weights,
        pseudo=pseudo,
        partition=partition,
        final_cos=final_cos,
    )


def train_mini_batch(g: HetGraph, metapaths, cfg: TrainConfig):
    """Sampled-neighborhood variant; refresh and eval run full sweeps."""
    cfg.validate()
    if cfg.batch_size < 1:
        raise ConfigValidationError("mini-batch training needs batch_size >= 1")
    fanout = tuple(cfg.neighbor_fanout)
    if len(fanout) < cfg.layers:  # repeat the last hop size
        fanout = fanout + (fanout[-1],) * (cfg.layers - len(fanout))
    elif len(fanout) > cfg.layers:
        fanout = fanout[: cfg.layers]
    if fanout != tuple(cfg.neighbor_fanout):
        cfg = replace(cfg, neighbor_fanout=fanout)
    model = HeterSeedModel(
        g, cfg.hidden_dim, layers=cfg.layers, seed=cfg.seed, dtype=cfg.dtype
    )
    arrays = build_relation_arrays(g, dtype=cfg.dtype)
    csrs = build_relation_csrs(g, arrays)
    weights = build_weights(g, metapaths)
    named = model.named_params(no_shc=cfg.no_shc, no_mask=cfg.no_mask)
    opt = Adam(named, lr=cfg.lr)

    pseudo = _bootstrap_pseudo(g)
    partition = partition_neighbors(weights, pseudo.labels)
    pseudo = refresh_pseudo_labels(model, partition, cfg, arrays=arrays)
    partition = partition_neighbors(weights, pseudo.labels)

    labeled = g.labeled_mask()
    train_set = np.zeros(g.num_targets, dtype=bool)
    train_set[g.splits["train"]] = True

    rows = []
    best_val = -1.0
    best_epoch = -1
    best_state = _snapshot(named)
    n = g.num_targets
    for epoch in range(cfg.epochs):
        if epoch > 0 and epoch % cfg.refresh_period == 0:
            pseudo = refresh_pseudo_labels(model, partition, cfg, arrays=arrays)
            partition = partition_neighbors(weights, pseudo.labels)
        perm = np.random.default_rng([cfg.seed, 4, epoch]).permutation(n)
        draws = (
            mask_draws(cfg.seed, epoch, n, cfg.beta)
            if (cfg.beta > 0 and not cfg.no_mask)
            else None
        )
        sampler_rng = np.random.default_rng([cfg.seed, 3, epoch])
        cls_losses, dec_losses, tot_losses = [], [], []
        for bi in range(0, n, cfg.batch_size):
            batch = perm[bi : bi + cfg.batch_size]
            plan = sample_batch_plan(
                g, csrs, partition, batch, cfg.neighbor_fanout, sampler_rng,
                dtype=cfg.dtype,
            )
            local_train = np.nonzero(
                train_set[plan.batch_ids] & labeled[plan.batch_ids]
            )[0]
            if len(local_train) == 0:
                continue
            rng = np.random.default_rng([cfg.seed, 1, epoch, bi])
            with Tape() as tape:
                h_sem, h_struct, _, logits = forward_batch(
                    model, plan, cfg, mode=TRAIN, draws=draws, rng=rng
                )
                mode = SINGLE if g.label_mode == SINGLE else MULTI
                l_cls = classification_loss(
                    logits, g.labels[plan.batch_ids], local_train, mode=mode
                )
                if cfg.no_dec or cfg.alpha == 0 or h_struct is None:
                    l_dec, l_tot = None, l_cls
                else:
                    l_dec = decouple_loss(h_sem, h_struct, variant=cfg.dec_variant)
                    l_tot = total_loss(l_cls, l_dec, cfg.alpha)
            opt.zero_grad()
            backward(l_tot, tape)
            opt.step()
            cls_losses.append(l_cls.item())
            dec_losses.append(0.0 if l_dec is None else l_dec.item())
            tot_losses.append(l_tot.item())
        val_ma, val_mi, _ = evaluate(model, partition, "val", cfg, arrays=arrays)
        rows.append(
            (
                epoch,
                float(np.mean(cls_losses)) if cls_losses else 0.0,
                float(np.mean(dec_losses)) if dec_losses else 0.0,
                float(np.mean(tot_losses)) if tot_losses else 0.0,
                val_ma,
                val_mi,
            )
        )
        if val_mi > best_val:
            best_val = val_mi
            best_epoch = epoch
            best_state = _snapshot(named)

    model.load_state(best_state)
    pseudo = refresh_pseudo_labels(model, partition, cfg, arrays=arrays)
    partition = partition_neighbors(weights, pseudo.labels)
    test_metrics = evaluate(model, partition, "test", cfg, arrays=arrays)
    final_cos = mean_abs_channel_cosine(model, partition, cfg, arrays=arrays)
    return TrainResult(
        model=model,
        log_rows=rows,
        best_state=best_state,
        best_epoch=best_epoch,
        test_metrics=test_metrics,
        weights=weights,
        pseudo=pseudo,
        partition=partition,
        final_cos=final_cos,
    )


def train(g, metapaths, cfg: TrainConfig):
    if cfg.batch_size and cfg.batch_size > 0:
        return train_mini_batch(g, metapaths, cfg)
    return train_full_batch(g, metapaths, cfg)
