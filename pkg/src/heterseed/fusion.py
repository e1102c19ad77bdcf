"""Node-level channel fusion, decoupling regularizer, and the objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

COSINE = "cosine"
CROSSCOV = "crosscov"


class EmptyMaskError(ValueError):
    pass


@dataclass
class FusionParams:
    gate_w: Tensor  # (2d, 1)
    gate_b: Tensor  # (1,)
    cls_w: Tensor  # (d, C)
    cls_b: Tensor  # (C,)


def fuse(h_sem, h_struct, params: FusionParams):
    """Scalar-gated convex combination: h = (1-g) h_sem + g h_struct."""
    z = ad.add(
        ad.matmul(ad.concat([h_sem, h_struct], axis=1), params.gate_w), params.gate_b
    )
    gamma = ad.sigmoid(z)
    h = ad.add(ad.mul(ad.sub(1.0, gamma), h_sem), ad.mul(gamma, h_struct))
    return h, gamma


def classify(h, params: FusionParams):
    return ad.add(ad.matmul(h, params.cls_w), params.cls_b)


def decouple_loss(h_sem, h_struct, variant=COSINE):
    """Penalty on statistical dependency between the two embedding spaces.

    cosine: mean over rows of |cos(h_sem_v, h_struct_v)|, zero rows scoring 0.
    crosscov: squared Frobenius norm of the column-centered cross-covariance
    divided by d^2.
    """
    if h_sem.shape != h_struct.shape:
        raise ad.ShapeMismatchError(f"{h_sem.shape} vs {h_struct.shape}")
    n, d = h_sem.shape
    if variant == COSINE:
        eps = 1e-12
        dots = ad.sum_rows(ad.mul(h_sem, h_struct))
        ns = ad.sqrt(ad.add(ad.sum_rows(ad.mul(h_sem, h_sem)), eps))
        nr = ad.sqrt(ad.add(ad.sum_rows(ad.mul(h_struct, h_struct)), eps))
        cos = ad.div(dots, ad.mul(ns, nr))
        return ad.mul(ad.sum_all(ad.absolute(cos)), 1.0 / n)
    if variant == CROSSCOV:
        cs = ad.sub(h_sem, ad.mean_rows(h_sem))
        cr = ad.sub(h_struct, ad.mean_rows(h_struct))
        cov = ad.mul(ad.matmul(ad.transpose(cs), cr), 1.0 / n)
        return ad.mul(ad.sum_all(ad.mul(cov, cov)), 1.0 / (d * d))
    raise ValueError(f"unknown decoupling variant {variant!r}")


def classification_loss(logits, labels, mask_idx, mode="single"):
    """Mean CE (single-label) or mean elementwise sigmoid BCE (multi-label)
    over the masked rows."""
    mask_idx = np.asarray(mask_idx, dtype=np.int64)
    if len(mask_idx) == 0:
        raise EmptyMaskError("classification loss over an empty node set")
    rows = ad.row_gather(logits, mask_idx)
    labels = np.asarray(labels)
    b = len(mask_idx)
    if mode == "single":
        y = labels[mask_idx]
        c = logits.shape[1]
        onehot = np.zeros((b, c), dtype=rows.dtype)
        onehot[np.arange(b), y] = 1.0
        # logsumexp with a constant row-max shift keeps gradients exact
        shift = ad.as_tensor(rows.data.max(axis=1, keepdims=True).copy())
        lse = ad.add(ad.log(ad.sum_rows(ad.exp(ad.sub(rows, shift)))), shift)
        picked = ad.sum_rows(ad.mul(rows, onehot))
        return ad.mul(ad.sum_all(ad.sub(lse, picked)), 1.0 / b)
    y = labels[mask_idx].astype(rows.dtype)
    # stable BCE-with-logits: relu(z) - z*y + log(1 + exp(-|z|))
    z = rows
    soft = ad.log(ad.add(1.0, ad.exp(ad.neg(ad.absolute(z)))))
    elt = ad.add(ad.sub(ad.relu(z), ad.mul(z, y)), soft)
    return ad.mul(ad.sum_all(elt), 1.0 / elt.data.size)


def total_loss(l_cls, l_dec, alpha):
    """L = L_cls + alpha * L_dec."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if l_dec is None or alpha == 0:
        return l_cls
    return ad.add(l_cls, ad.mul(l_dec, float(alpha)))
