"""Experiment configuration, the staged pipeline runner, and ablations.

A run directory is the unit of reproducibility: every stage reads its
inputs from the directory and writes artifacts back, each JSON stamped with
the hash of the resolved configuration and the master seed. Stages are the
CLI subcommands; ``run_pipeline`` simply chains them.

Layout of a run directory:

    config.json         resolved config + hash
    slides/             synthetic slides (16-bit PNGs + JSON sidecars)
    profiles.csv        synthetic mutation table for co-occurrence training
    dataset.json        patient roster, subgroups, train/val split
    registration.json   per-slide channel shifts (cached)
    embedding/          gene embedding checkpoint
    encoder/            patch encoder checkpoint
    classifier/         classification head checkpoint
    predictions.json    patient-level predictions (validation split)
    report.json         metric report
    heatmaps/           rendered subgroup heatmap PNGs
    logs/               JSONL training logs
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gliomol import arrayio
from gliomol.autodiff import AdamState, Tensor, adam_step, cosine_lr, mul, reverse_grad
from gliomol.classifier import ClassifierConfig, LinearHead, TransformerHead, train_classifier, weighted_bce
from gliomol.contrastive import PatchconConfig, train_patchcon
from gliomol.genomics import (
    MUTANT,
    EmbedTrainConfig,
    GeneEmbedding,
    GenePanel,
    build_cooccurrence,
    read_mutation_csv,
    train_gene_embedding,
)
from gliomol.heatmap import SUBGROUP_TAGS, dense_grid, pool_overlaps, render_to_file, subgroup_heatmap
from gliomol.inference import (
    GroundTruthSegmenter,
    PatientPrediction,
    aggregate_patient,
    gate_slide,
    predict_subgroup,
)
from gliomol.metrics import multilabel_report
from gliomol.slides import (
    GENES,
    ConvEncoder,
    EncoderConfig,
    SynthConfig,
    WholeSlide,
    extract_patches,
    list_slide_ids,
    load_slide,
    register_translation,
    save_slide,
    synth_dataset,
    synth_profiles,
)
from gliomol.slides.augment import AugmentConfig


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class EmbedSection:
    n_profiles: int = 600
    dim: int = 32
    epochs: int = 300
    batch_pairs: int = 60
    lr: float = 0.05
    alpha: float = 0.75


@dataclass
class PatchconSection:
    # module defaults are 20 epochs at lr 1e-3; the pipeline trims epochs to
    # stay inside its wall-clock budget and compensates with a higher rate
    epochs: int = 14
    batch_size: int = 32
    tau: float = 0.07
    lr: float = 2e-3
    proj_dim: int = 128
    augment: bool = True


@dataclass
class ClassifierSection:
    strategy: str = "transformer"
    epochs: int = 12
    batch_size: int = 64
    lr: float = 1e-3
    provided_fraction: float = 1.0 / 3.0  # one label visible: the masking
    # regime that trains best when inference sees no labels at all
    n_heads: int = 4
    n_layers: int = 3
    pretrained_embedding: bool = True


@dataclass
class InferenceSection:
    tau: float = 0.5
    psi: float = 1.0
    eps: float = 1e-8


@dataclass
class HeatmapSection:
    stride: int = 100
    n_slides: int = 2
    tau: float = 0.5
    phi: float = 0.5
    pi: float = 0.5


@dataclass
class ReportSection:
    min_mauroc: float = 0.95


@dataclass
class AblationSection:
    n_patients: int = 36
    slide_shape: tuple = (600, 1200)
    slides_per_patient: int = 1
    patchcon_epochs: int = 8
    classifier_epochs: int = 12
    seeds: tuple = (0, 1, 2)


@dataclass
class ExperimentConfig:
    seed: int = 0
    genes: tuple = GENES
    val_fraction: float = 0.3
    encoder_widths: tuple = (4, 8, 16, 32, 64, 128)
    synth: SynthConfig = field(default_factory=SynthConfig)
    embed: EmbedSection = field(default_factory=EmbedSection)
    patchcon: PatchconSection = field(default_factory=PatchconSection)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    inference: InferenceSection = field(default_factory=InferenceSection)
    heatmap: HeatmapSection = field(default_factory=HeatmapSection)
    report: ReportSection = field(default_factory=ReportSection)
    ablation: AblationSection = field(default_factory=AblationSection)

    def panel(self) -> GenePanel:
        return GenePanel(tuple(self.genes))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synth"].pop("textures", None)  # texture params are code defaults
        return d


def config_hash(cfg: ExperimentConfig) -> str:
    text = arrayio.canonical_json(_plain(cfg.to_dict()))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _apply_overrides(obj, overrides: dict) -> None:
    import json as _json

    for dotted, raw in overrides.items():
        parts = dotted.split(".")
        target = obj
        for p in parts[:-1]:
            target = target[p] if isinstance(target, dict) else getattr(target, p)
        leaf = parts[-1]
        if isinstance(target, dict):
            current = target.get(leaf)
        elif hasattr(target, leaf):
            current = getattr(target, leaf)
        else:
            raise KeyError(f"unknown config key {dotted!r}")
        try:
            value = _json.loads(raw) if isinstance(raw, str) else raw
        except _json.JSONDecodeError:
            value = raw
        if isinstance(current, tuple) and isinstance(value, list):
            value = tuple(value)
        if isinstance(target, dict):
            target[leaf] = value
        else:
            setattr(target, leaf, value)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from an optional JSON file plus dotted-key overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        data = arrayio.read_json(path)
        flat = _flatten(data)
        _apply_overrides(cfg, flat)
    if overrides:
        _apply_overrides(cfg, overrides)
    cfg.synth.seed = cfg.seed  # master seed drives the generator
    return cfg


def _flatten(data: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, prefix=f"{key}."))
        else:
            out[key] = v
    return out


# ---------------------------------------------------------------------------
# helpers shared by stages
# ---------------------------------------------------------------------------

def _seed_for(cfg: ExperimentConfig, stage: str) -> int:
    digest = hashlib.sha256(f"{cfg.seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def stratified_patient_split(patients: list, val_fraction: float, seed: int) -> tuple:
    """Deterministic train/val patient ids, stratified by subgroup x ATRX."""
    rng = np.random.default_rng(seed)
    strata: dict = {}
    for p in patients:
        key = (p.subgroup, int(p.labels.states[2]) if len(p.labels.states) > 2 else 0)
        strata.setdefault(key, []).append(p.patient_id)
    train, val = [], []
    for key in sorted(strata):
        ids = sorted(strata[key])
        order = rng.permutation(len(ids))
        k = int(round(val_fraction * len(ids)))
        val += [ids[i] for i in order[:k]]
        train += [ids[i] for i in order[k:]]
    return sorted(train), sorted(val)


def _jsonl_logger(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", encoding="utf-8")

    def log(record: dict):
        import json as _json

        fh.write(_json.dumps(_plain(record), sort_keys=True) + "\n")
        fh.flush()

    log.close = fh.close
    return log


def load_aligned_slides(run_dir, use_cache: bool = True) -> list:
    """Read every slide, registering the 2930 channel with a cached shift."""
    run_dir = Path(run_dir)
    slide_dir = run_dir / "slides"
    cache_path = run_dir / "registration.json"
    cache = arrayio.read_json(cache_path) if use_cache and cache_path.exists() else {}
    slides, fresh = [], False
    for sid in list_slide_ids(slide_dir):
        slide = load_slide(slide_dir, sid)
        if sid in cache:
            dy, dx = cache[sid]
        else:
            dy, dx = register_translation(slide.ch2845, slide.ch2930)
            cache[sid] = [int(dy), int(dx)]
            fresh = True
        slide.ch2930 = np.roll(slide.ch2930, (-dy, -dx), axis=(0, 1))
        slides.append(slide)
    if fresh and use_cache:
        arrayio.write_json(cache_path, cache)
    return slides


def tumor_patches_for(slides: list, segmenter=None) -> list:
    """Gated tumor patches over the given slides; excluded slides drop out."""
    segmenter = segmenter or GroundTruthSegmenter()
    out = []
    for slide in slides:
        patches = extract_patches(slide)
        tumor, excluded = gate_slide(patches, segmenter)
        if not excluded:
            out.extend(tumor)
    return out


def _slides_by_patient(slides: list) -> dict:
    grouped: dict = {}
    for s in slides:
        grouped.setdefault(s.patient_id, []).append(s)
    return grouped


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def stage_synth(cfg: ExperimentConfig, run_dir) -> dict:
    """Generate slides, mutation profiles, and the patient roster."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    arrayio.write_json(run_dir / "config.json", {
        "config": _plain(cfg.to_dict()), "config_hash": config_hash(cfg), "seed": cfg.seed,
    })
    patients = synth_dataset(cfg.synth)
    slide_dir = run_dir / "slides"
    for p in patients:
        for s in p.slides:
            save_slide(s, slide_dir)
    profiles = synth_profiles(cfg.synth, cfg.embed.n_profiles, seed=_seed_for(cfg, "profiles"))
    with open(run_dir / "profiles.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "gene", "status"])
        for prof in profiles:
            for gene, status in sorted(prof.calls.items()):
                writer.writerow([prof.patient_id, gene, "mutant" if status == MUTANT else "wildtype"])
    train_ids, val_ids = stratified_patient_split(patients, cfg.val_fraction, _seed_for(cfg, "split"))
    roster = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "genes": list(cfg.genes),
        "patients": {
            p.patient_id: {
                "subgroup": p.subgroup,
                "center": p.center,
                "states": [int(s) for s in p.labels.states],
                "slides": [s.slide_id for s in p.slides],
            }
            for p in patients
        },
        "train_patients": train_ids,
        "val_patients": val_ids,
    }
    arrayio.write_json(run_dir / "dataset.json", roster)
    return roster


def stage_embed(cfg: ExperimentConfig, run_dir) -> GeneEmbedding:
    """Train the gene embedding from the run's mutation table."""
    run_dir = Path(run_dir)
    panel = cfg.panel()
    profiles = read_mutation_csv(run_dir / "profiles.csv", panel)
    x = build_cooccurrence(profiles, panel)
    arrayio.write_array(run_dir / "embedding_cooccurrence.arr", x)
    log = _jsonl_logger(run_dir / "logs" / "embed.jsonl")
    emb = train_gene_embedding(
        x, panel,
        EmbedTrainConfig(dim=cfg.embed.dim, epochs=cfg.embed.epochs,
                         batch_pairs=cfg.embed.batch_pairs, lr=cfg.embed.lr,
                         alpha=cfg.embed.alpha, seed=_seed_for(cfg, "embed")),
        log_fn=lambda rec: log(rec) if rec["epoch"] % 50 == 0 else None,
    )
    log.close()
    emb.save(run_dir / "embedding")
    return emb


def stage_pretrain(cfg: ExperimentConfig, run_dir) -> ConvEncoder:
    """Contrastive pretraining of the patch encoder on train-split slides."""
    run_dir = Path(run_dir)
    roster = arrayio.read_json(run_dir / "dataset.json")
    slides = load_aligned_slides(run_dir)
    train_ids = set(roster["train_patients"])
    train_slides = [s for s in slides if s.patient_id in train_ids]
    patches = tumor_patches_for(train_slides)
    encoder = ConvEncoder(EncoderConfig(widths=tuple(cfg.encoder_widths), seed=_seed_for(cfg, "encoder")))
    log = _jsonl_logger(run_dir / "logs" / "patchcon.jsonl")
    train_patchcon(
        patches, encoder,
        PatchconConfig(epochs=cfg.patchcon.epochs, batch_size=cfg.patchcon.batch_size,
                       tau=cfg.patchcon.tau, lr=cfg.patchcon.lr, proj_dim=cfg.patchcon.proj_dim,
                       seed=_seed_for(cfg, "patchcon"),
                       augment=AugmentConfig(enabled=cfg.patchcon.augment)),
        log_fn=log,
    )
    log.close()
    encoder.save(run_dir / "encoder", {"config_hash": config_hash(cfg), "seed": cfg.seed})
    return encoder


def stage_train(cfg: ExperimentConfig, run_dir):
    """Fit the classification head on frozen train-split patch features."""
    run_dir = Path(run_dir)
    roster = arrayio.read_json(run_dir / "dataset.json")
    slides = load_aligned_slides(run_dir)
    encoder = ConvEncoder.load(run_dir / "encoder")
    train_ids = set(roster["train_patients"])
    patches = tumor_patches_for([s for s in slides if s.patient_id in train_ids])
    features = encoder.encode_batches((p.image() for p in patches), batch=cfg.patchcon.batch_size)
    states = np.stack([p.labels.states for p in patches])
    embedding = None
    if cfg.classifier.strategy == "transformer":
        emb = GeneEmbedding.load(run_dir / "embedding")
        embedding = emb.label_matrix() if cfg.classifier.pretrained_embedding else (
            np.random.default_rng(_seed_for(cfg, "random-embedding")).normal(
                0.0, 1.0 / np.sqrt(emb.dim), size=emb.label_matrix().shape)
        )
    log = _jsonl_logger(run_dir / "logs" / "classifier.jsonl")
    head = train_classifier(
        features, states,
        ClassifierConfig(strategy=cfg.classifier.strategy, epochs=cfg.classifier.epochs,
                         batch_size=cfg.classifier.batch_size, lr=cfg.classifier.lr,
                         provided_fraction=cfg.classifier.provided_fraction,
                         n_heads=cfg.classifier.n_heads, n_layers=cfg.classifier.n_layers,
                         seed=_seed_for(cfg, "classifier")),
        embedding=embedding, log_fn=log,
    )
    log.close()
    manifest = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "strategy": cfg.classifier.strategy,
        "genes": list(cfg.genes),
        "provided_fraction": cfg.classifier.provided_fraction,
        "pretrained_embedding": cfg.classifier.pretrained_embedding,
    }
    if isinstance(head, TransformerHead):
        head.save(run_dir / "classifier", manifest)
    else:
        arrayio.save_checkpoint(
            run_dir / "classifier",
            {"linear_w": head.linear.w.data, "linear_b": head.linear.b.data},
            {**manifest, "kind": "linear_head", "feature_dim": head.feature_dim,
             "n_labels": head.n_labels},
        )
    return head


def load_head(run_dir):
    directory = Path(run_dir) / "classifier"
    manifest = arrayio.read_json(directory / "manifest.json")
    if manifest["kind"] == "transformer_head":
        return TransformerHead.load(directory)
    arrays, _ = arrayio.load_checkpoint(directory)
    head = LinearHead(manifest["feature_dim"], manifest["n_labels"], np.random.default_rng(0))
    head.linear.w.data[...] = arrays["linear_w"]
    head.linear.b.data[...] = arrays["linear_b"]
    return head


def _predict_patients(cfg: ExperimentConfig, slides: list, encoder, head, patient_ids: list) -> list:
    """Gate, encode, classify, and aggregate per patient (validation use)."""
    segmenter = GroundTruthSegmenter()
    by_patient = _slides_by_patient([s for s in slides if s.patient_id in set(patient_ids)])
    predictions = []
    for pid in sorted(by_patient):
        per_slide = []
        for slide in by_patient[pid]:
            patches = extract_patches(slide)
            tumor, excluded = gate_slide(patches, segmenter)
            if excluded or not tumor:
                continue
            feats = encoder.encode_batches((p.image() for p in tumor), batch=cfg.patchcon.batch_size)
            per_slide.append(head.predict(feats))
        pred = aggregate_patient(per_slide, genes=tuple(cfg.genes), patient_id=pid)
        pred = predict_subgroup(pred, tau=cfg.inference.tau, psi=cfg.inference.psi, eps=cfg.inference.eps)
        predictions.append(pred)
    return predictions


def stage_infer(cfg: ExperimentConfig, run_dir) -> list:
    """Patient-level predictions and subgroup decisions for the val split."""
    run_dir = Path(run_dir)
    roster = arrayio.read_json(run_dir / "dataset.json")
    slides = load_aligned_slides(run_dir)
    encoder = ConvEncoder.load(run_dir / "encoder")
    head = load_head(run_dir)
    predictions = _predict_patients(cfg, slides, encoder, head, roster["val_patients"])
    arrayio.write_json(run_dir / "predictions.json", {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "split": "val",
        "predictions": [p.to_json_dict() for p in predictions],
    })
    return predictions


def stage_heatmap(cfg: ExperimentConfig, run_dir) -> list:
    """Render the three subgroup heatmaps for the first val-split slides."""
    run_dir = Path(run_dir)
    roster = arrayio.read_json(run_dir / "dataset.json")
    slides = load_aligned_slides(run_dir)
    encoder = ConvEncoder.load(run_dir / "encoder")
    head = load_head(run_dir)
    val_ids = roster["val_patients"]
    chosen = [s for s in slides if s.patient_id in set(val_ids[: cfg.heatmap.n_slides])]
    chosen = [s for pid in val_ids for s in chosen if s.patient_id == pid][: cfg.heatmap.n_slides]
    written = []
    for slide in chosen:
        paths = render_slide_heatmaps(
            slide, encoder, head, tuple(cfg.genes), run_dir / "heatmaps",
            stride=cfg.heatmap.stride, tau=cfg.heatmap.tau, phi=cfg.heatmap.phi,
            pi=cfg.heatmap.pi, batch=cfg.patchcon.batch_size,
        )
        written.extend(paths)
    return written


def render_slide_heatmaps(slide: WholeSlide, encoder, head, genes: tuple, out_dir,
                          stride: int = 100, tau: float = 0.5, phi: float = 0.5,
                          pi: float = 0.5, batch: int = 32) -> list:
    """Dense predictions on one slide -> three rendered subgroup heatmaps."""
    from gliomol.slides.preprocess import Patch

    origins = dense_grid(slide.shape, stride=stride)
    patches = [Patch(slide=slide, grid=(int(y), int(x)), origin=(int(y), int(x))) for y, x in origins]
    feats = encoder.encode_batches((p.image() for p in patches), batch=batch)
    preds = head.predict(feats)
    segmenter = GroundTruthSegmenter()
    verdicts = segmenter.classify_patches(patches)
    tumor_probs = np.array([v.tumor_prob for v in verdicts])
    field = pool_overlaps(preds, origins, slide.shape, genes, tumor_probs=tumor_probs)
    out_dir = Path(out_dir)
    written = []
    for tag in ("gbm", "oligo", "astro"):
        hm = subgroup_heatmap(field, tag, tau=tau, phi=phi, pi=pi)
        path = out_dir / f"{slide.slide_id}_{tag}.png"
        render_to_file(hm, slide, path)
        written.append(path)
    return written


def stage_report(cfg: ExperimentConfig, run_dir) -> dict:
    """Patient-level metric report for the validation split."""
    run_dir = Path(run_dir)
    roster = arrayio.read_json(run_dir / "dataset.json")
    pred_data = arrayio.read_json(run_dir / "predictions.json")
    genes = list(cfg.genes)
    rows, labels, subs_true, subs_pred = [], [], [], []
    for rec in pred_data["predictions"]:
        pid = rec["patient_id"]
        rows.append([rec["genes"][g] for g in genes])
        labels.append([s == MUTANT for s in roster["patients"][pid]["states"]])
        subs_true.append(roster["patients"][pid]["subgroup"])
        subs_pred.append(rec["subgroup"])
    scores = np.asarray(rows, dtype=np.float64)
    truth = np.asarray(labels, dtype=bool)
    report = multilabel_report(scores, truth, tuple(genes))
    subgroup_acc = float(np.mean([a == b for a, b in zip(subs_true, subs_pred)]))
    payload = {
        "config_hash": pred_data["config_hash"],
        "seed": pred_data["seed"],
        "split": pred_data["split"],
        "n_patients": len(rows),
        "metrics": _plain(report.to_dict()),
        "subgroup_accuracy": subgroup_acc,
    }
    arrayio.write_json(run_dir / "report.json", payload)
    return payload


def run_pipeline(cfg: ExperimentConfig, run_dir) -> dict:
    """synth -> embed -> pretrain -> train -> infer -> heatmap -> report."""
    stages = [
        ("synth", stage_synth),
        ("embed-train", stage_embed),
        ("pretrain", stage_pretrain),
        ("train", stage_train),
        ("infer", stage_infer),
        ("heatmap", stage_heatmap),
        ("report", stage_report),
    ]
    result = None
    for name, fn in stages:
        try:
            result = fn(cfg, run_dir)
        except Exception as exc:
            raise RuntimeError(f"pipeline stage {name!r} failed: {exc}") from exc
    return result


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

def dataset_fingerprint(patients: list) -> str:
    h = hashlib.sha256()
    for p in patients:
        h.update(p.patient_id.encode())
        h.update(bytes(p.labels.states.astype(np.int8)))
        for s in p.slides:
            h.update(np.ascontiguousarray(s.ch2845).tobytes())
    return h.hexdigest()[:16]


def _train_ce_encoder(patches: list, encoder: ConvEncoder, epochs: int, batch_size: int,
                      lr: float, seed: int) -> ConvEncoder:
    """Cross-entropy baseline: encoder + linear probes trained end to end."""
    states = np.stack([p.labels.states for p in patches])
    n_labels = states.shape[1]
    y = (states == MUTANT).astype(np.float64)
    rng = np.random.default_rng(seed)
    head = LinearHead(encoder.feature_dim, n_labels, rng)
    params = encoder.parameters() + head.parameters()
    opt = AdamState.for_params(params, lr=lr)
    n = len(patches)
    per_epoch = int(np.ceil(n / batch_size))
    total = max(epochs * per_epoch, 1)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(per_epoch):
            sel = order[s * batch_size : (s + 1) * batch_size]
            if sel.size == 0:
                continue
            imgs = np.stack([patches[i].image() for i in sel])
            feats = encoder.forward(Tensor(imgs))
            probs = head.probabilities(feats)
            loss = mul(weighted_bce(y[sel], probs), 1.0 / sel.size)
            grads = reverse_grad(loss, params)
            adam_step(opt, params, grads, lr=cosine_lr(step, total, lr))
            step += 1
    return encoder


def _patient_mauroc(patches: list, probs: np.ndarray, genes: tuple) -> float:
    from gliomol.metrics import roc_auc

    by_patient: dict = {}
    for i, p in enumerate(patches):
        by_patient.setdefault(p.patient_id, []).append(i)
    scores, labels = [], []
    for pid in sorted(by_patient):
        rows = by_patient[pid]
        scores.append(probs[rows].mean(axis=0))
        labels.append(patches[rows[0]].labels.states == MUTANT)
    scores = np.asarray(scores)
    labels = np.asarray(labels, dtype=bool)
    aucs = [roc_auc(scores[:, k], labels[:, k]) for k in range(len(genes))]
    return float(np.mean(aucs))


def run_ablations(cfg: ExperimentConfig, run_dir) -> dict:
    """Three paired comparisons, each across the configured seeds.

    1. contrastive vs cross-entropy pretraining (fresh linear probes on both)
    2. linear vs transformer heads on the same frozen contrastive encoder
    3. pretrained vs randomly initialized gene embedding for the transformer
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    ab = cfg.ablation
    synth_cfg = dataclasses.replace(
        cfg.synth, n_patients=ab.n_patients, slide_shape=tuple(ab.slide_shape),
        slides_per_patient=ab.slides_per_patient, seed=_seed_for(cfg, "ablation-data"),
    )
    patients = synth_dataset(synth_cfg)
    fingerprint = dataset_fingerprint(patients)
    panel = cfg.panel()

    profiles = synth_profiles(cfg.synth, cfg.embed.n_profiles, seed=_seed_for(cfg, "profiles"))
    x = build_cooccurrence(profiles, panel)
    emb = train_gene_embedding(x, panel, EmbedTrainConfig(
        dim=cfg.embed.dim, epochs=cfg.embed.epochs, batch_pairs=cfg.embed.batch_pairs,
        lr=cfg.embed.lr, alpha=cfg.embed.alpha, seed=_seed_for(cfg, "embed")))
    pretrained = emb.label_matrix()

    arms: dict = {name: [] for name in (
        "repr_crossentropy", "repr_patchcon", "head_linear", "head_transformer",
        "embed_random", "embed_pretrained",
    )}

    for seed in ab.seeds:
        train_ids, val_ids = stratified_patient_split(patients, cfg.val_fraction,
                                                      _seed_for(cfg, f"ablation-split-{seed}"))
        train_slides = [s for p in patients if p.patient_id in set(train_ids) for s in p.slides]
        val_slides = [s for p in patients if p.patient_id in set(val_ids) for s in p.slides]
        tr = tumor_patches_for(train_slides)
        te = tumor_patches_for(val_slides)
        tr_states = np.stack([p.labels.states for p in tr])

        def eval_head(encoder, head) -> float:
            feats = encoder.encode_batches((p.image() for p in te), batch=cfg.patchcon.batch_size)
            return _patient_mauroc(te, head.predict(feats), tuple(cfg.genes))

        def fit_linear(encoder, tag: str):
            feats = encoder.encode_batches((p.image() for p in tr), batch=cfg.patchcon.batch_size)
            return train_classifier(feats, tr_states, ClassifierConfig(
                strategy="linear", epochs=ab.classifier_epochs,
                seed=_seed_for(cfg, f"{tag}-{seed}")))

        def fit_transformer(encoder, embedding, tag: str, provided=None):
            feats = encoder.encode_batches((p.image() for p in tr), batch=cfg.patchcon.batch_size)
            frac = cfg.classifier.provided_fraction if provided is None else provided
            return train_classifier(feats, tr_states, ClassifierConfig(
                strategy="transformer", epochs=ab.classifier_epochs,
                provided_fraction=frac,
                n_heads=cfg.classifier.n_heads, n_layers=cfg.classifier.n_layers,
                seed=_seed_for(cfg, f"{tag}-{seed}")), embedding=embedding)

        # ablation 1: representation learning strategy
        enc_ce = ConvEncoder(EncoderConfig(widths=tuple(cfg.encoder_widths),
                                           seed=_seed_for(cfg, f"enc-{seed}")))
        _train_ce_encoder(tr, enc_ce, ab.patchcon_epochs, cfg.patchcon.batch_size,
                          cfg.patchcon.lr, _seed_for(cfg, f"ce-{seed}"))
        arms["repr_crossentropy"].append(eval_head(enc_ce, fit_linear(enc_ce, "ce-lin")))

        enc_pc = ConvEncoder(EncoderConfig(widths=tuple(cfg.encoder_widths),
                                           seed=_seed_for(cfg, f"enc-{seed}")))
        train_patchcon(tr, enc_pc, PatchconConfig(
            epochs=ab.patchcon_epochs, batch_size=cfg.patchcon.batch_size, tau=cfg.patchcon.tau,
            lr=cfg.patchcon.lr, seed=_seed_for(cfg, f"pc-{seed}"),
            augment=AugmentConfig(enabled=cfg.patchcon.augment)))
        arms["repr_patchcon"].append(eval_head(enc_pc, fit_linear(enc_pc, "pc-lin")))

        # ablations 2 and 3 share the frozen contrastive encoder
        arms["head_linear"].append(eval_head(enc_pc, fit_linear(enc_pc, "head-lin")))
        arms["head_transformer"].append(eval_head(enc_pc, fit_transformer(enc_pc, pretrained, "head-tr")))

        # the embedding comparison uses the two-of-three-provided regime,
        # where the input tokens (and so their pretrained geometry) matter most
        random_emb = np.random.default_rng(_seed_for(cfg, f"remb-{seed}")).normal(
            0.0, 1.0 / np.sqrt(emb.dim), size=pretrained.shape)
        arms["embed_random"].append(eval_head(
            enc_pc, fit_transformer(enc_pc, random_emb, "emb-rand", provided=2.0 / 3.0)))
        arms["embed_pretrained"].append(eval_head(
            enc_pc, fit_transformer(enc_pc, pretrained, "emb-pre", provided=2.0 / 3.0)))

    table = compose_ablation_table(
        {name: {"dataset_hash": fingerprint, "mauroc": vals} for name, vals in arms.items()},
        config_hash(cfg), cfg.seed,
    )
    arrayio.write_json(Path(run_dir) / "ablations.json", table)
    return table


def compose_ablation_table(arms: dict, cfg_hash: str, seed: int) -> dict:
    """Mean +/- sd per arm; every arm must have run on the same dataset."""
    hashes = {arm["dataset_hash"] for arm in arms.values()}
    if len(hashes) > 1:
        raise ValueError(f"ablation arms ran on different datasets: {sorted(hashes)}")
    table = {"config_hash": cfg_hash, "seed": seed, "dataset_hash": hashes.pop(), "arms": {}}
    for name, arm in sorted(arms.items()):
        vals = np.asarray(arm["mauroc"], dtype=np.float64)
        table["arms"][name] = {
            "mauroc_runs": [float(v) for v in vals],
            "mean": float(vals.mean()),
            "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
        }
    comparisons = {
        "patchcon_vs_crossentropy": table["arms"]["repr_patchcon"]["mean"]
        - table["arms"]["repr_crossentropy"]["mean"],
        "transformer_vs_linear": table["arms"]["head_transformer"]["mean"]
        - table["arms"]["head_linear"]["mean"],
        "pretrained_vs_random_embedding": table["arms"]["embed_pretrained"]["mean"]
        - table["arms"]["embed_random"]["mean"],
    }
    table["mean_differences"] = comparisons
    return table


def grouped_kfold(tags: list) -> list:
    """Leave-one-group-out folds keyed by tag (e.g. the synthetic center)."""
    unique = sorted(set(tags))
    folds = []
    for tag in unique:
        test_idx = [i for i, t in enumerate(tags) if t == tag]
        train_idx = [i for i, t in enumerate(tags) if t != tag]
        folds.append((train_idx, test_idx))
    return folds
