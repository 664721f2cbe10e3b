"""Two-channel slide preprocessing: registration, channel math, patching.

Slides carry two 16-bit intensity channels acquired at different Raman
shifts (named by wavenumber, 2845 and 2930). Preprocessing registers the
2930 channel onto the 2845 channel by translation, derives a third channel
as the clamped difference, and tiles the slide into non-overlapping 300x300
patches that inherit the patient's labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from gliomol.genomics import GenePanel, LabelVector

PATCH_SIZE = 300

REGION_NORMAL = 0
REGION_TUMOR = 1
REGION_NONDIAG = 2


class RegistrationError(ValueError):
    """Raised when translation registration has no unique correlation peak."""


@dataclass
class WholeSlide:
    """Paired single-channel images of equal size plus patient metadata."""

    ch2845: np.ndarray
    ch2930: np.ndarray
    patient_id: str
    slide_id: str
    labels: LabelVector
    mask: np.ndarray | None = None  # ground-truth region classes, 2845 frame
    center: str = "center-0"

    def __post_init__(self):
        if self.ch2845.shape != self.ch2930.shape:
            raise ValueError(
                f"channel shapes differ: {self.ch2845.shape} vs {self.ch2930.shape}"
            )
        if self.mask is not None and self.mask.shape != self.ch2845.shape:
            raise ValueError("mask shape must match channels")

    @property
    def shape(self) -> tuple:
        return self.ch2845.shape


def register_translation(fixed: np.ndarray, moving: np.ndarray) -> tuple:
    """Integer (dy, dx) such that ``moving == roll(fixed, (dy, dx))``.

    Computed by frequency-domain phase correlation: the normalized cross
    power spectrum of a pure translation is a complex exponential whose
    inverse transform peaks at the (negated) shift. Shifts are reported in
    the signed range (-N/2, N/2].
    """
    fixed = np.asarray(fixed, dtype=np.float64)
    moving = np.asarray(moving, dtype=np.float64)
    if fixed.shape != moving.shape:
        raise ValueError(f"shape mismatch: {fixed.shape} vs {moving.shape}")
    if fixed.std() == 0.0 or moving.std() == 0.0:
        raise RegistrationError("constant image: correlation peak is not unique")
    ff = np.fft.fft2(fixed)
    fm = np.fft.fft2(moving)
    cross = ff * np.conj(fm)
    mag = np.abs(cross)
    r = np.fft.ifft2(cross / np.maximum(mag, 1e-15)).real
    peak = np.unravel_index(np.argmax(r), r.shape)
    shift = []
    for p, n in zip(peak, r.shape):
        s = (-p) % n
        if s > n // 2:
            s -= n
        shift.append(int(s))
    return tuple(shift)


def align_channels(slide: WholeSlide) -> WholeSlide:
    """Register ch2930 onto ch2845 and undo the estimated translation."""
    dy, dx = register_translation(slide.ch2845, slide.ch2930)
    aligned = np.roll(slide.ch2930, (-dy, -dx), axis=(0, 1))
    return WholeSlide(
        ch2845=slide.ch2845,
        ch2930=aligned,
        patient_id=slide.patient_id,
        slide_id=slide.slide_id,
        labels=slide.labels,
        mask=slide.mask,
        center=slide.center,
    )


def _to_unit_float(channel: np.ndarray) -> np.ndarray:
    if np.issubdtype(channel.dtype, np.integer):
        return channel.astype(np.float64) / 65535.0
    return channel.astype(np.float64)


def subtract_channel(ch2845: np.ndarray, ch2930: np.ndarray) -> np.ndarray:
    """Stack (ch2845, ch2930, clamp(ch2930 - ch2845, >= 0)) as unit floats.

    Integer inputs are rescaled by 1/65535; float inputs pass through, which
    keeps the difference rule exact in either representation.
    """
    a = _to_unit_float(ch2845)
    b = _to_unit_float(ch2930)
    third = np.clip(b - a, 0.0, None)
    return np.stack([a, b, third], axis=-1)


@dataclass
class Patch:
    """A 300x300 window of a slide; pixel data materializes on demand."""

    slide: WholeSlide
    grid: tuple
    origin: tuple

    def image(self) -> np.ndarray:
        """Three-channel float64 image, (300, 300, 3), intensities in [0, 1]."""
        y, x = self.origin
        win = (slice(y, y + PATCH_SIZE), slice(x, x + PATCH_SIZE))
        return subtract_channel(self.slide.ch2845[win], self.slide.ch2930[win])

    @property
    def labels(self) -> LabelVector:
        return self.slide.labels

    @property
    def slide_id(self) -> str:
        return self.slide.slide_id

    @property
    def patient_id(self) -> str:
        return self.slide.patient_id


def extract_patches(slide: WholeSlide) -> list:
    """Non-overlapping raster tiling; remainder rows/columns are dropped."""
    h, w = slide.shape
    if h < PATCH_SIZE or w < PATCH_SIZE:
        raise ValueError(f"slide {h}x{w} smaller than one {PATCH_SIZE}px patch")
    patches = []
    for r in range(h // PATCH_SIZE):
        for c in range(w // PATCH_SIZE):
            patches.append(Patch(slide=slide, grid=(r, c), origin=(r * PATCH_SIZE, c * PATCH_SIZE)))
    return patches


# ---------------------------------------------------------------------------
# disk layout: <slide_id>_ch2845.png, <slide_id>_ch2930.png, <slide_id>_mask.png,
# <slide_id>.json sidecar
# ---------------------------------------------------------------------------

def save_slide(slide: WholeSlide, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, channel in (("ch2845", slide.ch2845), ("ch2930", slide.ch2930)):
        img = Image.fromarray(channel.astype(np.uint16), mode="I;16")
        img.save(directory / f"{slide.slide_id}_{name}.png")
    if slide.mask is not None:
        Image.fromarray(slide.mask.astype(np.uint8), mode="L").save(
            directory / f"{slide.slide_id}_mask.png"
        )
    sidecar = {
        "patient_id": slide.patient_id,
        "slide_id": slide.slide_id,
        "center": slide.center,
        "states": [int(s) for s in slide.labels.states],
        "weights": [float(w) for w in slide.labels.weights],
    }
    (directory / f"{slide.slide_id}.json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_slide(directory, slide_id: str) -> WholeSlide:
    directory = Path(directory)
    sidecar = json.loads((directory / f"{slide_id}.json").read_text(encoding="utf-8"))
    ch2845 = np.asarray(Image.open(directory / f"{slide_id}_ch2845.png"), dtype=np.uint16)
    ch2930 = np.asarray(Image.open(directory / f"{slide_id}_ch2930.png"), dtype=np.uint16)
    mask_path = directory / f"{slide_id}_mask.png"
    mask = np.asarray(Image.open(mask_path), dtype=np.uint8) if mask_path.exists() else None
    labels = LabelVector(states=np.asarray(sidecar["states"], dtype=np.int64),
                         weights=np.asarray(sidecar["weights"], dtype=np.float64))
    return WholeSlide(
        ch2845=ch2845,
        ch2930=ch2930,
        patient_id=sidecar["patient_id"],
        slide_id=sidecar["slide_id"],
        labels=labels,
        mask=mask,
        center=sidecar.get("center", "center-0"),
    )


def list_slide_ids(directory) -> list:
    return sorted(p.stem for p in Path(directory).glob("*.json"))


def cache_patches(patches: list, directory) -> list:
    """Materialize patch images into .arr files; returns the written paths."""
    from gliomol import arrayio

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for p in patches:
        path = directory / f"{p.slide_id}_r{p.grid[0]:03d}_c{p.grid[1]:03d}.arr"
        arrayio.write_array(path, p.image())
        paths.append(path)
    return paths


def load_patch_images(directory) -> dict:
    """Read every cached patch image back, keyed by file stem."""
    from gliomol import arrayio

    return {p.stem: arrayio.read_array(p) for p in sorted(Path(directory).glob("*.arr"))}
