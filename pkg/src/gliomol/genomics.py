"""Gene panel, mutation ingestion, co-occurrence counts, and the trained
global-vector genetic embedding.

Each gene owns two embedding tokens, one per mutational status, so a panel of
n genes produces a 2n x 2n co-occurrence matrix counting how often two
statuses were observed in the same tumor. The embedding is fit so that token
inner products approximate log co-occurrence, weighted to keep very common
pairs from dominating.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gliomol import arrayio
from gliomol.autodiff import AdamState, Tensor, adam_step, mul, power, reverse_grad, take_rows, tsum

MUTANT = 1
WILDTYPE = 0
UNKNOWN = -1

SUBGROUP_GBM = "Glioblastoma, IDH-wildtype"
SUBGROUP_OLIGO = "Oligodendroglioma, IDH-mutant, 1p19q-codeleted"
SUBGROUP_ASTRO = "Astrocytoma, IDH-mutant"

_STATUS_CODES = {"mutant": MUTANT, "wildtype": WILDTYPE}


class PanelError(ValueError):
    """A gene or status outside the configured panel."""


@dataclass(frozen=True)
class GenePanel:
    """Ordered gene names; token 2i is gene i mutant, token 2i+1 wildtype."""

    genes: tuple

    def __post_init__(self):
        if len(set(self.genes)) != len(self.genes):
            raise PanelError(f"duplicate gene names in panel: {self.genes}")

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    @property
    def n_tokens(self) -> int:
        return 2 * len(self.genes)

    def gene_index(self, gene: str) -> int:
        try:
            return self.genes.index(gene)
        except ValueError:
            raise PanelError(f"gene {gene!r} not in panel {self.genes}") from None

    def token(self, gene: str, status: int) -> int:
        i = self.gene_index(gene)
        return 2 * i if status == MUTANT else 2 * i + 1

    def token_names(self) -> list:
        names = []
        for g in self.genes:
            names.extend([f"{g}:mutant", f"{g}:wildtype"])
        return names

    def mutant_tokens(self) -> np.ndarray:
        return np.arange(0, self.n_tokens, 2)


@dataclass
class MutationProfile:
    """Per-patient status calls; genes absent from ``calls`` are unknown."""

    patient_id: str
    calls: dict

    def tokens(self, panel: GenePanel) -> list:
        return [panel.token(g, s) for g, s in sorted(self.calls.items())]


@dataclass
class LabelVector:
    """Per-gene ternary states (MUTANT / WILDTYPE / UNKNOWN) plus weights."""

    states: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        if self.weights is None:
            self.weights = np.ones(self.states.shape[0], dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != self.states.shape:
            raise ValueError("weights shape must match states")
        if np.any(self.weights <= 0):
            raise ValueError("label weights must be positive")

    @classmethod
    def from_calls(cls, panel: GenePanel, calls: dict) -> "LabelVector":
        states = np.full(panel.n_genes, UNKNOWN, dtype=np.int64)
        for gene, status in calls.items():
            states[panel.gene_index(gene)] = status
        return cls(states=states)

    def as_dict(self, panel: GenePanel) -> dict:
        names = {MUTANT: "mutant", WILDTYPE: "wildtype", UNKNOWN: "unknown"}
        return {g: names[int(s)] for g, s in zip(panel.genes, self.states)}


def read_mutation_csv(path, panel: GenePanel) -> list:
    """Load ``patient_id,gene,status`` rows; one profile per patient id."""
    profiles: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            status = row["status"].strip().lower()
            if status not in _STATUS_CODES:
                raise PanelError(f"unknown status {row['status']!r} for patient {row['patient_id']}")
            gene = row["gene"].strip()
            panel.gene_index(gene)  # raises if not in panel
            calls = profiles.setdefault(row["patient_id"], {})
            calls[gene] = _STATUS_CODES[status]
    return [MutationProfile(pid, calls) for pid, calls in profiles.items()]


def build_cooccurrence(profiles: list, panel: GenePanel) -> np.ndarray:
    """Count, per token pair, the patients where both statuses hold."""
    if not profiles:
        raise ValueError("need at least one mutation profile")
    x = np.zeros((panel.n_tokens, panel.n_tokens), dtype=np.int64)
    for prof in profiles:
        toks = prof.tokens(panel)
        for a_pos in range(len(toks)):
            for b_pos in range(a_pos + 1, len(toks)):
                a, b = toks[a_pos], toks[b_pos]
                x[a, b] += 1
                x[b, a] += 1
    return x


def glove_weight(x, x_max: float, alpha: float = 0.75):
    """Saturating count weight: (x / x_max) ** alpha capped at 1; 0 at x = 0."""
    if x_max <= 0:
        raise ValueError("x_max must be positive")
    x = np.asarray(x, dtype=np.float64)
    w = np.minimum((x / x_max) ** alpha, 1.0)
    w = np.where(x > 0, w, 0.0)
    return w if w.ndim else float(w)


def _counted_pairs(x: np.ndarray) -> tuple:
    ii, jj = np.nonzero(x)
    keep = ii != jj
    return ii[keep], jj[keep]


def glove_loss(emb, x: np.ndarray, x_max: float | None = None, alpha: float = 0.75,
               pair_subset: tuple | None = None) -> Tensor:
    """Weighted squared error between token inner products and log counts.

    ``emb`` may be a Tensor (differentiable) or a plain array. Pairs with a
    zero count never enter the sum, so the log is always defined.
    """
    e = emb if isinstance(emb, Tensor) else Tensor(np.asarray(emb, dtype=np.float64))
    x = np.asarray(x)
    if x_max is None:
        x_max = float(x.max())
    ii, jj = _counted_pairs(x) if pair_subset is None else pair_subset
    if ii.size == 0:
        return Tensor(0.0)
    counts = x[ii, jj].astype(np.float64)
    w = glove_weight(counts, x_max, alpha)
    target = np.log(counts)
    ei = take_rows(e, ii)
    ej = take_rows(e, jj)
    dots = tsum(mul(ei, ej), axis=1)
    resid = dots - target
    return tsum(mul(Tensor(w), mul(resid, resid)))


@dataclass
class GeneEmbedding:
    """Learned token vectors, one row per panel token."""

    vectors: np.ndarray
    panel: GenePanel

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.shape[0] != self.panel.n_tokens:
            raise ValueError("embedding rows must match panel tokens")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def label_matrix(self) -> np.ndarray:
        """Per-gene embedding rows (the mutant-status token of each gene)."""
        return self.vectors[self.panel.mutant_tokens()].copy()

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrayio.write_array(directory / "embedding.arr", self.vectors)
        arrayio.write_json(
            directory / "tokens.json",
            {"genes": list(self.panel.genes), "tokens": self.token_index()},
        )

    def token_index(self) -> dict:
        return {name: i for i, name in enumerate(self.panel.token_names())}

    @classmethod
    def load(cls, directory) -> "GeneEmbedding":
        directory = Path(directory)
        vectors = arrayio.read_array(directory / "embedding.arr")
        meta = arrayio.read_json(directory / "tokens.json")
        return cls(vectors=vectors, panel=GenePanel(tuple(meta["genes"])))


@dataclass
class EmbedTrainConfig:
    dim: int = 32
    epochs: int = 400
    batch_pairs: int = 60
    lr: float = 0.05
    alpha: float = 0.75
    x_max: float | None = None  # default: max off-diagonal count
    seed: int = 0


def train_gene_embedding(x: np.ndarray, panel: GenePanel, config: EmbedTrainConfig | None = None,
                         log_fn=None) -> GeneEmbedding:
    """Fit token vectors to the co-occurrence matrix with minibatched Adam.

    Each step draws ``batch_pairs`` counted (ordered) pairs; an epoch is one
    shuffled pass over all counted pairs. Deterministic given the seed.
    """
    cfg = config or EmbedTrainConfig()
    x = np.asarray(x)
    ii, jj = _counted_pairs(x)
    if ii.size == 0:
        raise ValueError("co-occurrence matrix has no counted pairs")
    x_max = cfg.x_max if cfg.x_max is not None else float(x.max())
    rng = np.random.default_rng(cfg.seed)
    e = Tensor(rng.normal(0.0, 0.1, size=(panel.n_tokens, cfg.dim)), requires_grad=True)
    state = AdamState.for_params([e], lr=cfg.lr)
    n_pairs = ii.size
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_pairs)
        for start in range(0, n_pairs, cfg.batch_pairs):
            sel = order[start : start + cfg.batch_pairs]
            loss = glove_loss(e, x, x_max=x_max, alpha=cfg.alpha, pair_subset=(ii[sel], jj[sel]))
            grads = reverse_grad(loss, [e])
            adam_step(state, [e], grads)
        if log_fn is not None:
            full = glove_loss(e, x, x_max=x_max, alpha=cfg.alpha)
            log_fn({"epoch": epoch, "loss": float(full.data)})
    return GeneEmbedding(vectors=e.data.copy(), panel=panel)


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.maximum(norms, 1e-30)
    return unit @ unit.T


def subgroup_cosine_report(emb: GeneEmbedding, groups: dict) -> dict:
    """Mean within-group and group-to-rest cosine for each named token set.

    ``groups`` maps a name to a list of token indices; the sets must be
    disjoint and each needs at least two tokens.
    """
    seen: set = set()
    for name, toks in groups.items():
        if len(toks) < 2:
            raise ValueError(f"group {name!r} needs at least 2 tokens")
        if seen & set(toks):
            raise ValueError("groups must be disjoint")
        seen |= set(toks)
    cos = cosine_matrix(emb.vectors)
    report = {}
    all_tokens = np.arange(emb.panel.n_tokens)
    for name, toks in groups.items():
        toks = np.asarray(sorted(toks))
        inside = cos[np.ix_(toks, toks)]
        iu = np.triu_indices(len(toks), k=1)
        intra = float(inside[iu].mean())
        outside = np.setdiff1d(all_tokens, toks)
        inter = float(cos[np.ix_(toks, outside)].mean()) if outside.size else float("nan")
        report[name] = {"intra": intra, "inter": inter}
    return report


def nearest_neighbor_tokens(vectors: np.ndarray) -> np.ndarray:
    """Cosine nearest neighbor index for every token (self excluded)."""
    cos = cosine_matrix(vectors)
    np.fill_diagonal(cos, -np.inf)
    return cos.argmax(axis=1)
