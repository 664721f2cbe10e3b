"""Tumor gating, patient-level probability aggregation, and subgrouping.

Patches pass through a segmenter that calls each one tumor, normal, or
nondiagnostic. A slide is excluded when under 10% of its patches are tumor.
Patient probabilities are the plain mean of the per-gene probabilities over
all tumor patches pooled across the patient's slides, and the mutually
exclusive molecular subgroup falls out of a three-branch threshold rule on
the IDH probability and the 1p19q/ATRX ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from gliomol.genomics import SUBGROUP_ASTRO, SUBGROUP_GBM, SUBGROUP_OLIGO
from gliomol.slides.preprocess import (
    PATCH_SIZE,
    REGION_NONDIAG,
    REGION_NORMAL,
    REGION_TUMOR,
    Patch,
)

TUMOR_FRACTION_MIN = 0.10

CLASS_ORDER = (REGION_NORMAL, REGION_TUMOR, REGION_NONDIAG)


@dataclass
class SegmentationVerdict:
    """Per-patch region call plus the class probabilities behind it."""

    region: int
    probs: np.ndarray  # ordered (normal, tumor, nondiagnostic)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if int(np.argmax(self.probs)) != CLASS_ORDER.index(self.region):
            raise ValueError("stored region class disagrees with argmax of probabilities")

    @property
    def is_tumor(self) -> bool:
        return self.region == REGION_TUMOR

    @property
    def tumor_prob(self) -> float:
        return float(self.probs[CLASS_ORDER.index(REGION_TUMOR)])


class Segmenter(Protocol):
    def classify_patches(self, patches: list) -> list: ...


class GroundTruthSegmenter:
    """Reads the synthetic generator's region mask; class probabilities are
    the pixel fractions of each region inside the patch window."""

    def classify_patches(self, patches: list) -> list:
        verdicts = []
        for p in patches:
            mask = p.slide.mask
            if mask is None:
                raise ValueError(f"slide {p.slide_id} carries no ground-truth mask")
            y, x = p.origin
            win = mask[y : y + PATCH_SIZE, x : x + PATCH_SIZE]
            total = win.size
            probs = np.array([
                float((win == cls).sum()) / total for cls in CLASS_ORDER
            ])
            region = CLASS_ORDER[int(np.argmax(probs))]
            verdicts.append(SegmentationVerdict(region=region, probs=probs))
        return verdicts


def gate_slide(patches: list, segmenter: Segmenter) -> tuple:
    """(tumor patches, excluded flag); excluded when tumor patches < 10%."""
    if not patches:
        raise ValueError("cannot gate an empty patch list")
    verdicts = segmenter.classify_patches(patches)
    tumor = [p for p, v in zip(patches, verdicts) if v.is_tumor]
    excluded = len(tumor) / len(patches) < TUMOR_FRACTION_MIN
    return tumor, excluded


@dataclass
class PatientPrediction:
    patient_id: str
    genes: tuple
    probabilities: np.ndarray  # one per gene
    tumor_patches: int  # the normalizer Z
    subgroup: str | None = None
    thresholds: dict = field(default_factory=dict)

    def prob(self, gene: str) -> float:
        return float(self.probabilities[self.genes.index(gene)])

    def to_json_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "genes": {g: float(p) for g, p in zip(self.genes, self.probabilities)},
            "Z": int(self.tumor_patches),
            "subgroup": self.subgroup,
            "thresholds": self.thresholds,
        }


def aggregate_patient(slide_predictions: list, genes: tuple, patient_id: str = "") -> PatientPrediction:
    """Mean per-gene probability over tumor patches pooled across slides.

    ``slide_predictions`` holds one (n_tumor_patches, n_genes) array per
    slide, already gated; slides excluded upstream simply contribute no rows.
    """
    rows = [np.asarray(a, dtype=np.float64).reshape(-1, len(genes)) for a in slide_predictions]
    stacked = np.concatenate(rows, axis=0) if rows else np.zeros((0, len(genes)))
    z = stacked.shape[0]
    if z == 0:
        raise ValueError(f"patient {patient_id!r} has no tumor patches to aggregate")
    return PatientPrediction(
        patient_id=patient_id,
        genes=tuple(genes),
        probabilities=stacked.sum(axis=0) / z,
        tumor_patches=z,
    )


def predict_subgroup(pred: PatientPrediction, tau: float = 0.5, psi: float = 1.0,
                     eps: float = 1e-8) -> PatientPrediction:
    """Fill in the molecular subgroup decision; exactly one branch fires.

    IDH below tau is glioblastoma; otherwise the 1p19q/(ATRX + eps) ratio
    above psi selects oligodendroglioma, anything else astrocytoma. IDH at
    exactly tau follows the mutant branches; ratio at exactly psi is
    astrocytoma.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    p_idh = pred.prob("IDH")
    p_codel = pred.prob("1p19q")
    p_atrx = pred.prob("ATRX")
    if p_idh < tau:
        subgroup = SUBGROUP_GBM
    elif p_codel / (p_atrx + eps) > psi:
        subgroup = SUBGROUP_OLIGO
    else:
        subgroup = SUBGROUP_ASTRO
    pred.subgroup = subgroup
    pred.thresholds = {"tau": tau, "psi": psi, "eps": eps}
    return pred
