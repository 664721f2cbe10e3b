"""Dense overlapping patch prediction pooled into per-pixel probability
fields, conditional molecular subgroup heatmaps, and PNG rendering.

Patches are sampled on a 100-px stride so interior pixels collect up to
nine overlapping predictions; each pixel's per-gene probability is the mean
over its covering patches. Subgroup heatmaps gate the IDH probability with
threshold masks: the glioblastoma map is simply 1 - p(IDH), the
oligodendroglioma map requires IDH and 1p19q both above threshold, and the
astrocytoma map requires IDH above threshold with 1p19q below threshold or
ATRX above it. Rendering paints tumor pixels through a fixed 256-entry
colormap shipped as package data and leaves everything else as the
grayscale tissue underlay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from gliomol import _kernels
from gliomol.genomics import SUBGROUP_ASTRO, SUBGROUP_GBM, SUBGROUP_OLIGO
from gliomol.slides.preprocess import PATCH_SIZE, WholeSlide

DEFAULT_STRIDE = 100

SUBGROUP_TAGS = {"gbm": SUBGROUP_GBM, "oligo": SUBGROUP_OLIGO, "astro": SUBGROUP_ASTRO}


def dense_grid(dims: tuple, stride: int = DEFAULT_STRIDE, patch: int = PATCH_SIZE) -> np.ndarray:
    """(P, 2) int64 top-left origins; every patch fits inside the slide."""
    h, w = dims
    if h < patch or w < patch:
        raise ValueError(f"slide {h}x{w} smaller than one {patch}px patch")
    ys = np.arange(0, h - patch + 1, stride)
    xs = np.arange(0, w - patch + 1, stride)
    grid = [(y, x) for y in ys for x in xs]
    return np.asarray(grid, dtype=np.int64)


@dataclass
class ProbabilityField:
    """Per-pixel per-gene means plus coverage counts and the tumor gate."""

    probs: np.ndarray  # (H, W, L)
    counts: np.ndarray  # (H, W) number of covering patches
    tumor_mask: np.ndarray  # (H, W) bool
    genes: tuple

    @property
    def covered(self) -> np.ndarray:
        return self.counts > 0

    def gene_plane(self, gene: str) -> np.ndarray:
        return self.probs[:, :, self.genes.index(gene)]


def pool_overlaps(predictions: np.ndarray, origins: np.ndarray, dims: tuple, genes: tuple,
                  tumor_probs: np.ndarray | None = None, patch: int = PATCH_SIZE) -> ProbabilityField:
    """Average overlapping patch predictions per pixel.

    ``tumor_probs`` (one tumor probability per patch, from the segmenter)
    pools the same way; pixels whose pooled tumor probability exceeds 0.5
    form the tumor mask. Without it the mask covers every pooled pixel.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    origins = np.asarray(origins, dtype=np.int64)
    if predictions.shape[0] != origins.shape[0]:
        raise ValueError(f"{predictions.shape[0]} predictions for {origins.shape[0]} origins")
    values = predictions
    if tumor_probs is not None:
        tumor_probs = np.asarray(tumor_probs, dtype=np.float64).reshape(-1, 1)
        if tumor_probs.shape[0] != origins.shape[0]:
            raise ValueError("tumor probabilities must align with origins")
        values = np.concatenate([predictions, tumor_probs], axis=1)
    sums, counts = _kernels.pool_accumulate(origins, values, dims, patch)
    denom = np.maximum(counts, 1)[:, :, None].astype(np.float64)
    means = sums / denom
    covered = counts > 0
    if tumor_probs is not None:
        probs = means[:, :, :-1]
        tumor_mask = (means[:, :, -1] > 0.5) & covered
    else:
        probs = means
        tumor_mask = covered.copy()
    probs = np.where(covered[:, :, None], probs, 0.0)
    return ProbabilityField(probs=probs, counts=counts, tumor_mask=tumor_mask, genes=tuple(genes))


@dataclass
class SubgroupHeatmap:
    values: np.ndarray  # (H, W) in [0, 1]; zero wherever masked out
    subgroup: str
    thresholds: dict
    tumor_mask: np.ndarray


def oligo_mask(p_idh: np.ndarray, p_codel: np.ndarray, tau: float, phi: float) -> np.ndarray:
    return (p_idh > tau) & (p_codel > phi)


def astro_mask(p_idh: np.ndarray, p_codel: np.ndarray, p_atrx: np.ndarray,
               tau: float, phi: float, pi: float) -> np.ndarray:
    return (p_idh > tau) & ((p_codel < phi) | (p_atrx > pi))


def subgroup_heatmap(field: ProbabilityField, subgroup: str, tau: float = 0.5,
                     phi: float = 0.5, pi: float = 0.5) -> SubgroupHeatmap:
    """Conditional per-pixel subgroup probability map over covered pixels."""
    tag = SUBGROUP_TAGS.get(subgroup, subgroup)
    p_idh = field.gene_plane("IDH")
    p_codel = field.gene_plane("1p19q")
    p_atrx = field.gene_plane("ATRX")
    if tag == SUBGROUP_GBM:
        values = 1.0 - p_idh
    elif tag == SUBGROUP_OLIGO:
        values = oligo_mask(p_idh, p_codel, tau, phi) * p_idh
    elif tag == SUBGROUP_ASTRO:
        values = astro_mask(p_idh, p_codel, p_atrx, tau, phi, pi) * p_idh
    else:
        raise ValueError(f"unknown subgroup {subgroup!r}")
    values = np.where(field.covered, values, 0.0)
    return SubgroupHeatmap(
        values=values,
        subgroup=tag,
        thresholds={"tau": tau, "phi": phi, "pi": pi},
        tumor_mask=field.tumor_mask.copy(),
    )


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _load_colormap() -> np.ndarray:
    with resources.files("gliomol.data").joinpath("colormap.json").open("r") as fh:
        table = json.load(fh)
    return np.asarray(table["rgb"], dtype=np.uint8)


_COLORMAP: np.ndarray | None = None


def colormap_table() -> np.ndarray:
    global _COLORMAP
    if _COLORMAP is None:
        _COLORMAP = _load_colormap()
    return _COLORMAP


def colormap_lookup(p) -> np.ndarray:
    """Map probabilities in [0, 1] to RGB rows; 0 -> entry 0, 1 -> entry 255."""
    table = colormap_table()
    idx = np.clip(np.round(np.asarray(p, dtype=np.float64) * 255.0), 0, 255).astype(np.int64)
    return table[idx]


def slide_underlay(slide: WholeSlide) -> np.ndarray:
    """Grayscale tissue image in [0, 1]: the mean of the two channels."""
    a = slide.ch2845.astype(np.float64) / 65535.0
    b = slide.ch2930.astype(np.float64) / 65535.0
    return (a + b) / 2.0


def render_image(heatmap: SubgroupHeatmap, underlay: np.ndarray, alpha: float = 0.65) -> np.ndarray:
    """8-bit RGB: colormap over tumor pixels with positive heatmap value,
    grayscale underlay everywhere else. Deterministic for fixed inputs."""
    if heatmap.values.shape != underlay.shape:
        raise ValueError(f"heatmap {heatmap.values.shape} vs underlay {underlay.shape}")
    gray = np.clip(underlay * 255.0, 0, 255).astype(np.uint8)
    out = np.repeat(gray[:, :, None], 3, axis=2).astype(np.float64)
    lit = heatmap.tumor_mask & (heatmap.values > 0.0)
    if lit.any():
        colors = colormap_lookup(heatmap.values[lit]).astype(np.float64)
        out[lit] = alpha * colors + (1.0 - alpha) * out[lit]
    return np.round(out).astype(np.uint8)


def write_png(image: np.ndarray, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image, mode="RGB").save(path)


def render_to_file(heatmap: SubgroupHeatmap, slide: WholeSlide, path) -> None:
    write_png(render_image(heatmap, slide_underlay(slide)), path)
