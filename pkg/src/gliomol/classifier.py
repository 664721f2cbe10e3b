"""Multi-label classification heads over frozen patch features.

Two strategies: independent per-label linear probes with sigmoid outputs,
and a transformer that consumes the image feature token together with one
token per gene (gene embedding plus a learnable positive/negative/masked
state embedding). The transformer's output latents live in the genetic
embedding space and each label is scored by the inner product with its own
embedding row, i.e. the diagonal of H W^T. Training hides a random subset
of labels and supervises only the hidden ones; at inference every label is
masked, so predictions depend on the image feature alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gliomol import arrayio
from gliomol.autodiff import (
    AdamState,
    Linear,
    Tensor,
    TransformerBlock,
    adam_step,
    clip,
    concat,
    cosine_lr,
    matmul,
    mul,
    reshape,
    reverse_grad,
    sigmoid,
    tlog,
    tsum,
)
from gliomol.genomics import MUTANT, UNKNOWN, WILDTYPE

PROB_CLAMP = 1e-12

STATE_POSITIVE = 0
STATE_NEGATIVE = 1
STATE_MASKED = 2


def sample_label_mask(n_labels: int, provided_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean provided-flags; round(fraction * n) labels are unmasked.

    At least one label stays masked so training always has a target; the
    all-masked inference regime is fraction 0.
    """
    if not 0.0 <= provided_fraction < 1.0:
        raise ValueError(f"provided fraction {provided_fraction} outside [0, 1)")
    n_provided = min(int(round(provided_fraction * n_labels)), n_labels - 1)
    provided = np.zeros(n_labels, dtype=bool)
    if n_provided:
        provided[rng.choice(n_labels, size=n_provided, replace=False)] = True
    return provided


class LinearHead:
    """Binary relevance: one sigmoid linear probe per label."""

    def __init__(self, feature_dim: int, n_labels: int, rng: np.random.Generator):
        self.linear = Linear(feature_dim, n_labels, rng)
        self.feature_dim = feature_dim
        self.n_labels = n_labels

    def logits(self, z: Tensor) -> Tensor:
        return self.linear(z)

    def probabilities(self, z: Tensor) -> Tensor:
        return sigmoid(self.logits(z))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.probabilities(Tensor(np.atleast_2d(features))).data

    def parameters(self) -> list:
        return self.linear.parameters()


def binary_relevance_logits(z, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Plain-array per-label probabilities sigmoid(W z + b)."""
    z = np.asarray(z, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[1] != z.shape[-1]:
        raise ValueError(f"weights {weights.shape} incompatible with feature dim {z.shape[-1]}")
    logits = z @ weights.T + bias
    return 1.0 / (1.0 + np.exp(-logits))


def _weights_for(y, lambdas, active) -> np.ndarray:
    lam = np.ones_like(y) if lambdas is None else np.broadcast_to(np.asarray(lambdas, dtype=np.float64), y.shape)
    act = np.ones_like(y) if active is None else np.broadcast_to(np.asarray(active, dtype=bool), y.shape).astype(np.float64)
    return lam * act


def weighted_bce(y, y_hat, lambdas=None, active=None) -> Tensor:
    """Negative weighted Bernoulli log-likelihood over the active label set.

    ``active`` selects which labels count (the masked set during transformer
    training; everything for binary relevance). Probabilities are clamped to
    [1e-12, 1 - 1e-12] before the logs.
    """
    y = np.asarray(y, dtype=np.float64)
    yh = y_hat if isinstance(y_hat, Tensor) else Tensor(np.asarray(y_hat, dtype=np.float64))
    if y.shape != yh.shape:
        raise ValueError(f"labels {y.shape} vs predictions {yh.shape}")
    p = clip(yh, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = mul(Tensor(y), tlog(p)) + mul(Tensor(1.0 - y), tlog(1.0 - p))
    return mul(tsum(mul(ll, _weights_for(y, lambdas, active))), -1.0)


def weighted_bce_from_logits(y, logits: Tensor, lambdas=None, active=None) -> Tensor:
    """The same loss parameterized by logits: sum of softplus(z) - y*z.

    Equal in value to ``weighted_bce(y, sigmoid(z))`` wherever the
    probability clamp is inactive, but the gradient stays bounded however
    far the logits saturate, so training cannot silently freeze a label.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != logits.shape:
        raise ValueError(f"labels {y.shape} vs logits {logits.shape}")
    neg_abs = mul(relu(logits) + relu(mul(logits, -1.0)), -1.0)
    softplus = relu(logits) + tlog(texp(neg_abs) + 1.0)
    per_label = softplus - mul(Tensor(y), logits)
    return tsum(mul(per_label, _weights_for(y, lambdas, active)))


@dataclass
class TransformerHeadConfig:
    feature_dim: int = 128
    n_heads: int = 4
    n_layers: int = 3
    seed: int = 0
    # token width is max(feature_dim, embedding_dim), set at build time


class TransformerHead:
    """Masked-label transformer with outputs tied to the gene embedding."""

    def __init__(self, embedding: np.ndarray, config: TransformerHeadConfig):
        self.config = config
        self.embedding = np.asarray(embedding, dtype=np.float64)  # (L, d_e), frozen
        self.n_labels, self.embed_dim = self.embedding.shape
        self.width = max(config.feature_dim, self.embed_dim)
        rng = np.random.default_rng(config.seed)
        self.state_emb = Tensor(rng.normal(0.0, 0.1, size=(3, self.embed_dim)), requires_grad=True)
        self.img_proj = Linear(config.feature_dim, self.width, rng)
        self.lab_proj = Linear(self.embed_dim, self.width, rng)
        self.blocks = [TransformerBlock(self.width, config.n_heads, rng) for _ in range(config.n_layers)]
        self.out_proj = Linear(self.width, self.embed_dim, rng)

    def parameters(self) -> list:
        params = [self.state_emb] + self.img_proj.parameters() + self.lab_proj.parameters()
        for blk in self.blocks:
            params.extend(blk.parameters())
        params.extend(self.out_proj.parameters())
        return params

    def _state_codes(self, states: np.ndarray, provided: np.ndarray) -> np.ndarray:
        codes = np.full(states.shape, STATE_MASKED, dtype=np.int64)
        visible = provided & (states != UNKNOWN)
        codes[visible & (states == MUTANT)] = STATE_POSITIVE
        codes[visible & (states == WILDTYPE)] = STATE_NEGATIVE
        return codes

    def label_latents(self, z: Tensor, states: np.ndarray, provided: np.ndarray) -> Tensor:
        """Transformer output rows for the label tokens, (B, L, d_e)."""
        bsz = z.shape[0]
        codes = self._state_codes(states, provided)
        onehot = np.eye(3)[codes]  # (B, L, 3)
        state_vec = matmul(Tensor(onehot), self.state_emb)  # (B, L, d_e)
        base = np.broadcast_to(self.embedding, (bsz, self.n_labels, self.embed_dim))
        label_tokens = self.lab_proj(state_vec + Tensor(base.copy()))  # (B, L, w)
        img_token = reshape(self.img_proj(z), (bsz, 1, self.width))
        tokens = concat([img_token, label_tokens], axis=1)  # (B, 1+L, w)
        for blk in self.blocks:
            tokens = blk(tokens)
        return self.out_proj(tokens[:, 1:, :])  # image token row dropped

    def probabilities(self, z: Tensor, states: np.ndarray, provided: np.ndarray) -> Tensor:
        h = self.label_latents(z, states, provided)
        logits = tsum(mul(h, Tensor(self.embedding[None, :, :].copy())), axis=2)
        return sigmoid(logits)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Inference: every label masked, so output depends on features only."""
        features = np.atleast_2d(features)
        bsz = features.shape[0]
        states = np.full((bsz, self.n_labels), UNKNOWN, dtype=np.int64)
        provided = np.zeros((bsz, self.n_labels), dtype=bool)
        return self.probabilities(Tensor(features), states, provided).data

    # -- persistence --------------------------------------------------------
    def state_arrays(self) -> dict:
        arrays = {"embedding": self.embedding, "state_emb": self.state_emb.data}
        named = self._named_params()
        for name, t in named.items():
            arrays[name] = t.data
        return arrays

    def _named_params(self) -> dict:
        named = {
            "img_proj_w": self.img_proj.w, "img_proj_b": self.img_proj.b,
            "lab_proj_w": self.lab_proj.w, "lab_proj_b": self.lab_proj.b,
            "out_proj_w": self.out_proj.w, "out_proj_b": self.out_proj.b,
        }
        for i, blk in enumerate(self.blocks):
            named[f"blk{i}_ln1_g"] = blk.ln1.gamma
            named[f"blk{i}_ln1_b"] = blk.ln1.beta
            named[f"blk{i}_ln2_g"] = blk.ln2.gamma
            named[f"blk{i}_ln2_b"] = blk.ln2.beta
            for proj, tag in ((blk.attn.wq, "wq"), (blk.attn.wk, "wk"), (blk.attn.wv, "wv"), (blk.attn.wo, "wo")):
                named[f"blk{i}_{tag}_w"] = proj.w
                named[f"blk{i}_{tag}_b"] = proj.b
            named[f"blk{i}_fc1_w"] = blk.ffn.fc1.w
            named[f"blk{i}_fc1_b"] = blk.ffn.fc1.b
            named[f"blk{i}_fc2_w"] = blk.ffn.fc2.w
            named[f"blk{i}_fc2_b"] = blk.ffn.fc2.b
        return named

    def save(self, directory, extra_manifest: dict | None = None) -> None:
        manifest = {
            "kind": "transformer_head",
            "feature_dim": self.config.feature_dim,
            "n_heads": self.config.n_heads,
            "n_layers": self.config.n_layers,
            "seed": self.config.seed,
        }
        manifest.update(extra_manifest or {})
        arrayio.save_checkpoint(directory, self.state_arrays(), manifest)

    @classmethod
    def load(cls, directory) -> "TransformerHead":
        arrays, manifest = arrayio.load_checkpoint(directory)
        config = TransformerHeadConfig(
            feature_dim=manifest["feature_dim"],
            n_heads=manifest["n_heads"],
            n_layers=manifest["n_layers"],
            seed=manifest["seed"],
        )
        head = cls(arrays["embedding"], config)
        head.state_emb.data[...] = arrays["state_emb"]
        for name, t in head._named_params().items():
            t.data[...] = arrays[name]
        return head


def transformer_logits(z: np.ndarray, states: np.ndarray, provided: np.ndarray,
                       head: TransformerHead) -> np.ndarray:
    """Per-label probabilities for one feature vector and label context."""
    probs = head.probabilities(
        Tensor(np.atleast_2d(z)),
        np.atleast_2d(states),
        np.atleast_2d(provided),
    )
    return probs.data[0]


@dataclass
class ClassifierConfig:
    strategy: str = "transformer"  # or "linear"
    epochs: int = 12
    batch_size: int = 64
    lr: float = 1e-3
    lr_min: float = 0.0
    provided_fraction: float = 1.0 / 3.0
    lambdas: tuple | None = None
    n_heads: int = 4
    n_layers: int = 3
    seed: int = 0


def train_classifier(features: np.ndarray, states: np.ndarray, config: ClassifierConfig,
                     embedding: np.ndarray | None = None, log_fn=None):
    """Fit a head on frozen features; returns LinearHead or TransformerHead.

    The transformer strategy needs the (frozen) per-gene embedding matrix and
    supervises only masked, known labels; binary relevance trains on every
    known label.
    """
    features = np.asarray(features, dtype=np.float64)
    states = np.asarray(states, dtype=np.int64)
    n, d = features.shape
    n_labels = states.shape[1]
    lambdas = np.asarray(config.lambdas if config.lambdas is not None else np.ones(n_labels))
    rng = np.random.default_rng(config.seed)

    if config.strategy == "linear":
        head = LinearHead(d, n_labels, rng)
    elif config.strategy == "transformer":
        if embedding is None:
            raise ValueError("transformer strategy requires the gene embedding matrix")
        if embedding.shape[0] != n_labels:
            raise ValueError(f"embedding rows {embedding.shape[0]} != labels {n_labels}")
        head = TransformerHead(embedding, TransformerHeadConfig(
            feature_dim=d, n_heads=config.n_heads, n_layers=config.n_layers,
            seed=int(rng.integers(2**31)),
        ))
    else:
        raise ValueError(f"unknown strategy {config.strategy!r}")

    params = head.parameters()
    opt = AdamState.for_params(params, lr=config.lr)
    per_epoch = int(np.ceil(n / config.batch_size))
    total_steps = max(config.epochs * per_epoch, 1)
    known = states != UNKNOWN
    y = (states == MUTANT).astype(np.float64)

    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(per_epoch):
            sel = order[s * config.batch_size : (s + 1) * config.batch_size]
            if sel.size == 0:
                continue
            zb = Tensor(features[sel])
            if config.strategy == "linear":
                probs = head.probabilities(zb)
                active = known[sel]
            else:
                provided = np.stack([
                    sample_label_mask(n_labels, config.provided_fraction, rng) for _ in sel
                ])
                probs = head.probabilities(zb, states[sel], provided)
                active = ~provided & known[sel]
            loss = weighted_bce(y[sel], probs, lambdas=lambdas, active=active)
            loss = mul(loss, 1.0 / sel.size)
            grads = reverse_grad(loss, params)
            adam_step(opt, params, grads, lr=cosine_lr(step, total_steps, config.lr, config.lr_min))
            epoch_loss += float(loss.data)
            step += 1
        if log_fn is not None:
            log_fn({"epoch": epoch, "loss": epoch_loss / max(per_epoch, 1),
                    "lr": cosine_lr(min(step, total_steps), total_steps, config.lr, config.lr_min)})
    return head
