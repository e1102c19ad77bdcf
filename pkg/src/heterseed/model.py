"""All trainable parameters and the end-to-end forward pass (full-batch)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .fusion import FusionParams, classify, fuse
from .graph import HetGraph
from .masking import INFER, TRAIN, LabelEmbeddingParams, mask_and_inject, mask_draws
from .metapaths import Partition
from .optim import xavier_uniform_init
from .semantic import (
    SemanticLayerParams,
    build_relation_arrays,
    project_inputs,
    semantic_forward,
)
from .structural import BranchMlpParams, StructuralChannelParams, branch_aggregate, structural_fuse


@dataclass
class ForwardOutput:
    h_sem: Tensor
    h_struct: Tensor  # None when the structural channel is disabled
    h: Tensor
    gamma: Tensor  # None when the structural channel is disabled
    logits: Tensor
    x_tilde: Tensor  # injected target representation fed to both channels


class HeterSeedModel:
    """Parameter bundle; forward() wires the channels per the run flags."""

    def __init__(self, g: HetGraph, hidden_dim, layers=2, seed=0, dtype=np.float32):
        self.hidden_dim = int(hidden_dim)
        self.num_layers = int(layers)
        self.dtype = dtype
        self.graph = g
        d = self.hidden_dim
        c = g.num_classes
        rng = np.random.default_rng([int(seed), 0])

        def xav(shape):
            return xavier_uniform_init(shape, rng, dtype=dtype)

        def zeros(shape):
            return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

        self.proj = {}
        for t in g.node_types:
            dim = g.feature_dim(t)
            if dim is None:
                self.proj[t] = {"embedding": xav((1, d))}
            else:
                self.proj[t] = {"weight": xav((dim, d)), "bias": zeros((d,))}
        self.label = LabelEmbeddingParams(
            table=xav((c + 1, d)), proj_w=xav((d, d)), proj_b=zeros((d,))
        )
        self.sem_layers = [
            SemanticLayerParams(
                w_self=xav((d, d)),
                rel_weights={r.name: xav((d, d)) for r in g.relations},
            )
            for _ in range(self.num_layers)
        ]
        def near_zero(shape):
            # slightly positive so empty-branch zero rows don't start exactly
            # on the hidden ReLU kink
            return Tensor(np.full(shape, 0.01, dtype=dtype), requires_grad=True)

        self.struct = StructuralChannelParams(
            homo=BranchMlpParams(xav((d, d)), near_zero((d,)), xav((d, d)), zeros((d,))),
            hetero=BranchMlpParams(xav((d, d)), near_zero((d,)), xav((d, d)), zeros((d,))),
            gate_w=xav((2 * d, d)),
            gate_b=zeros((d,)),
        )
        self.fusion = FusionParams(
            gate_w=xav((2 * d, 1)),
            gate_b=zeros((1,)),
            cls_w=xav((d, c)),
            cls_b=zeros((c,)),
        )

    def named_params(self, *, no_shc=False, no_mask=False):
        """Ordered name -> Tensor map of the parameters the run actually trains."""
        out = {}
        for t in sorted(self.proj):
            for k, v in self.proj[t].items():
                out[f"proj.{t}.{k}"] = v
        if not no_mask:
            out["label.table"] = self.label.table
            out["label.proj_w"] = self.label.proj_w
            out["label.proj_b"] = self.label.proj_b
        for i, layer in enumerate(self.sem_layers):
            out[f"sem.{i}.w_self"] = layer.w_self
            for rname in sorted(layer.rel_weights):
                out[f"sem.{i}.rel.{rname}"] = layer.rel_weights[rname]
        if not no_shc:
            for side, mlp in (("homo", self.struct.homo), ("hetero", self.struct.hetero)):
                out[f"struct.{side}.w1"] = mlp.w1
                out[f"struct.{side}.b1"] = mlp.b1
                out[f"struct.{side}.w2"] = mlp.w2
                out[f"struct.{side}.b2"] = mlp.b2
            out["struct.gate_w"] = self.struct.gate_w
            out["struct.gate_b"] = self.struct.gate_b
            out["fusion.gate_w"] = self.fusion.gate_w
            out["fusion.gate_b"] = self.fusion.gate_b
        out["fusion.cls_w"] = self.fusion.cls_w
        out["fusion.cls_b"] = self.fusion.cls_b
        return out

    def all_named_params(self):
        return self.named_params()

    def load_state(self, arrays):
        for name, p in self.all_named_params().items():
            if name in arrays:
                p.data = np.asarray(arrays[name], dtype=self.dtype).reshape(p.data.shape)

    def forward(
        self,
        partition: Partition,
        *,
        arrays=None,
        mode=INFER,
        beta=0.0,
        dropout=0.0,
        rng=None,
        epoch=0,
        seed=0,
        no_shc=False,
        no_mask=False,
        no_homo=False,
        no_hetero=False,
    ):
        """Full-batch forward. Needs a partition unless the channel is off."""
        g = self.graph
        if arrays is None:
            arrays = build_relation_arrays(g, dtype=self.dtype)
        h0 = project_inputs(g, g.features, self.proj)
        if no_mask:
            x_tilde = h0[g.target_type]
        else:
            draws = None
            if mode == TRAIN and beta > 0:
                draws = mask_draws(seed, epoch, g.num_targets, beta)
            x_tilde = mask_and_inject(
                h0[g.target_type],
                g.labels,
                g.splits["train"],
                self.label,
                beta=beta,
                mode=mode,
                draws=draws,
            )
        inputs = dict(h0)
        inputs[g.target_type] = x_tilde
        training = mode == TRAIN
        sem = semantic_forward(
            g,
            inputs,
            self.sem_layers,
            arrays=arrays,
            dropout=dropout,
            rng=rng,
            training=training,
        )
        h_sem = sem[g.target_type]
        if no_shc:
            logits = classify(h_sem, self.fusion)
            return ForwardOutput(h_sem, None, h_sem, None, logits, x_tilde)
        h_homo, h_het = branch_aggregate(
            x_tilde, partition, use_homo=not no_homo, use_hetero=not no_hetero
        )
        h_struct = structural_fuse(
            h_homo,
            h_het,
            self.struct,
            dropout=dropout,
            rng=rng,
            training=training,
        )
        h, gamma = fuse(h_sem, h_struct, self.fusion)
        logits = classify(h, self.fusion)
        return ForwardOutput(h_sem, h_struct, h, gamma, logits, x_tilde)
