"""Weakly supervised multi-label contrastive pretraining of the encoder.

Patches inherit their patient's per-gene labels. For every label a
dedicated linear projection maps encoder features to a 128-dim space where
a supervised contrastive objective pulls together patches sharing that
label's status; the per-label losses are combined with positive weights.
Projection heads are discarded after pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gliomol.autodiff import (
    AdamState,
    Linear,
    Tensor,
    adam_step,
    cosine_lr,
    l2_normalize,
    matmul,
    mul,
    reverse_grad,
    texp,
    tlog,
    transpose,
    tsum,
)
from gliomol.genomics import UNKNOWN
from gliomol.slides.augment import AugmentConfig, augment_patch
from gliomol.slides.encoder import ConvEncoder


def positives_for_label(anchor: int, states: np.ndarray, label: int) -> np.ndarray:
    """Indices sharing the anchor's status for one label; masked never matches.

    ``states`` is the (B, L) batch label matrix. The anchor itself is
    excluded; an empty result is legal and contributes zero loss.
    """
    s = states[anchor, label]
    if s == UNKNOWN:
        return np.array([], dtype=np.int64)
    match = (states[:, label] == s) & (states[:, label] != UNKNOWN)
    match[anchor] = False
    return np.nonzero(match)[0].astype(np.int64)


def _positive_mask(states: np.ndarray, label: int) -> np.ndarray:
    """(B, B) boolean positive-pair mask for a label, diagonal off."""
    col = states[:, label]
    known = col != UNKNOWN
    mask = (col[:, None] == col[None, :]) & known[:, None] & known[None, :]
    np.fill_diagonal(mask, False)
    return mask


def supcon_label_loss(projected: Tensor, states: np.ndarray, label: int, tau: float) -> Tensor:
    """Supervised contrastive loss for one label over projected features.

    Similarity is cosine; the denominator for anchor i runs over every other
    batch item. Anchors with no positives contribute zero. Returns the sum
    over anchors (not the batch mean).
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    b = projected.shape[0]
    if b < 2:
        return Tensor(0.0)
    pmask = _positive_mask(states, label)
    counts = pmask.sum(axis=1)
    if not counts.any():
        return Tensor(0.0)

    z = l2_normalize(projected, axis=-1)
    sim = mul(matmul(z, transpose(z)), 1.0 / tau)  # (B, B)
    # constant per-row shift for a stable log-sum-exp; cancels exactly
    shift = sim.data.max(axis=1, keepdims=True)
    shifted = sim - shift
    expd = texp(shifted)
    offdiag = np.ones((b, b)) - np.eye(b)
    denom = tsum(mul(expd, offdiag), axis=1, keepdims=True)
    log_prob = shifted - tlog(denom)  # (B, B)

    weights = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
    coeff = -(pmask * weights[:, None])
    return tsum(mul(log_prob, coeff))


def multilabel_supcon_loss(projections: list, states: np.ndarray, lambdas: np.ndarray,
                           tau: float) -> Tensor:
    """Weighted sum of per-label contrastive losses (one projection each)."""
    n_labels = states.shape[1]
    if len(projections) != n_labels:
        raise ValueError(f"need {n_labels} projections, got {len(projections)}")
    lambdas = np.asarray(lambdas, dtype=np.float64)
    total = Tensor(0.0)
    for label in range(n_labels):
        if lambdas[label] == 0.0:
            continue
        total = total + mul(supcon_label_loss(projections[label], states, label, tau), lambdas[label])
    return total


@dataclass
class PatchconConfig:
    epochs: int = 20
    batch_size: int = 32
    tau: float = 0.07
    lr: float = 1e-3
    lr_min: float = 0.0
    proj_dim: int = 128
    lambdas: tuple | None = None  # default: 1.0 per label
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    steps_per_epoch: int | None = None  # cap for quicker schedules


class DegenerateBatchError(ValueError):
    """No label can ever form a positive pair in the dataset."""


def _check_trainable(states: np.ndarray) -> None:
    for label in range(states.shape[1]):
        col = states[:, label]
        known = col[col != UNKNOWN]
        if known.size and np.any(np.bincount(known.astype(np.int64)) >= 2):
            return
    raise DegenerateBatchError("no label has two items sharing a status; nothing to contrast")


def train_patchcon(patches: list, encoder: ConvEncoder, config: PatchconConfig,
                   log_fn=None) -> ConvEncoder:
    """Train the encoder in place under the multi-label contrastive loss.

    ``patches`` supply ``image()`` and ``labels``; batches are drawn
    uniformly without per-label balancing. Heads are created, trained, and
    dropped here. Deterministic given config.seed.
    """
    states = np.stack([p.labels.states for p in patches])
    _check_trainable(states)
    n_labels = states.shape[1]
    lambdas = np.asarray(config.lambdas if config.lambdas is not None else np.ones(n_labels))

    rng = np.random.default_rng(config.seed)
    heads = [Linear(encoder.feature_dim, config.proj_dim, rng) for _ in range(n_labels)]
    params = encoder.parameters()
    for head in heads:
        params.extend(head.parameters())
    opt = AdamState.for_params(params, lr=config.lr)

    n = len(patches)
    per_epoch = int(np.ceil(n / config.batch_size))
    if config.steps_per_epoch is not None:
        per_epoch = min(per_epoch, config.steps_per_epoch)
    total_steps = max(config.epochs * per_epoch, 1)

    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(per_epoch):
            sel = order[s * config.batch_size : (s + 1) * config.batch_size]
            if sel.size < 2:
                continue
            imgs = np.stack([augment_patch(patches[i].image(), rng, config.augment) for i in sel])
            feats = encoder.forward(Tensor(imgs))
            projections = [head(feats) for head in heads]
            loss = multilabel_supcon_loss(projections, states[sel], lambdas, config.tau)
            loss = mul(loss, 1.0 / sel.size)
            grads = reverse_grad(loss, params)
            lr = cosine_lr(step, total_steps, config.lr, config.lr_min)
            adam_step(opt, params, grads, lr=lr)
            epoch_loss += float(loss.data)
            step += 1
        if log_fn is not None:
            log_fn({
                "epoch": epoch,
                "loss": epoch_loss / max(per_epoch, 1),
                "lr": cosine_lr(min(step, total_steps), total_steps, config.lr, config.lr_min),
            })
    return encoder
