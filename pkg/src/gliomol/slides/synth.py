"""Seeded synthetic whole slides with planted, label-linked textures.

Each gene gets its own texture statistic, present inside tumor regions iff
the patient carries the mutation:

* IDH       - band-limited speckle in the 2930 channel (mid/high band)
* 1p19q     - bright nucleus-like dots added to both channels
* ATRX      - coarse band-limited mottling in the 2845 channel (low band,
              deliberately weaker: the hardest label)

Label vectors are drawn per patient from three molecular subgroups so that
mutations co-occur with realistic structure, and the generator also emits
standalone mutation profiles for co-occurrence training. Everything is
deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gliomol.genomics import (
    MUTANT,
    SUBGROUP_ASTRO,
    SUBGROUP_GBM,
    SUBGROUP_OLIGO,
    WILDTYPE,
    GenePanel,
    LabelVector,
    MutationProfile,
)
from gliomol.slides.preprocess import (
    REGION_NONDIAG,
    REGION_NORMAL,
    REGION_TUMOR,
    WholeSlide,
)

GENES = ("IDH", "1p19q", "ATRX")


@dataclass
class PlantedTexture:
    """One gene's texture: either a frequency annulus or dot field."""

    kind: str  # "band" or "dots"
    channel: str  # "ch2845" or "ch2930"
    amplitude: float
    band: tuple = (0.18, 0.30)  # cycles/pixel annulus for kind="band"
    dot_spacing: float = 24.0  # mean px between dots for kind="dots"
    dot_sigma: float = 2.0


def default_textures() -> dict:
    return {
        "IDH": PlantedTexture(kind="band", channel="ch2930", amplitude=0.10, band=(0.18, 0.30)),
        "1p19q": PlantedTexture(kind="dots", channel="ch2930", amplitude=0.45, dot_spacing=22.0, dot_sigma=3.0),
        "ATRX": PlantedTexture(kind="band", channel="ch2845", amplitude=0.075, band=(0.05, 0.10)),
    }


@dataclass
class SynthConfig:
    n_patients: int = 60
    slides_per_patient: int = 2
    slide_shape: tuple = (900, 1650)
    seed: int = 0
    # fraction of patients per molecular subgroup (gbm, oligo, astro)
    subgroup_priors: tuple = (0.619, 0.172, 0.21)
    # chance of an ATRX mutation inside each subgroup
    atrx_rate: dict = field(
        default_factory=lambda: {SUBGROUP_GBM: 0.15, SUBGROUP_OLIGO: 0.05, SUBGROUP_ASTRO: 0.78}
    )
    exact_counts: bool = True  # allocate subgroups by proportion, not iid draws
    tumor_fraction: float = 0.65
    nondiag_fraction: float = 0.05
    max_misalignment: int = 3
    n_centers: int = 3
    textures: dict = field(default_factory=default_textures)

    def panel(self) -> GenePanel:
        return GenePanel(GENES)


def _lowpass_fields(rng: np.random.Generator, shape: tuple, cutoff: float) -> tuple:
    """Two independent smooth fields from one complex FFT draw, unit std."""
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    rho2 = fy * fy + fx * fx
    filt = np.exp(-rho2 / (2.0 * cutoff * cutoff))
    spec = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * filt
    out = np.fft.ifft2(spec)
    fields = []
    for f in (out.real, out.imag):
        f = f - f.mean()
        std = f.std()
        fields.append(f / (std if std > 0 else 1.0))
    return fields[0], fields[1]


def _bandpass_field(rng: np.random.Generator, shape: tuple, band: tuple) -> np.ndarray:
    """Unit-std noise whose spectrum lives in a radial frequency annulus."""
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    rho = np.sqrt(fy * fy + fx * fx)
    lo, hi = band
    filt = ((rho >= lo) & (rho <= hi)).astype(np.float64)
    spec = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * filt
    f = np.fft.ifft2(spec).real
    f -= f.mean()
    std = f.std()
    return f / (std if std > 0 else 1.0)


def _dot_field(rng: np.random.Generator, shape: tuple, tumor: np.ndarray,
               spacing: float, sigma: float) -> np.ndarray:
    """Gaussian bumps scattered over tumor pixels at roughly 1/spacing^2."""
    h, w = shape
    n_target = int(tumor.sum() / (spacing * spacing))
    out = np.zeros(shape)
    if n_target == 0:
        return out
    ys = rng.integers(0, h, size=3 * n_target)
    xs = rng.integers(0, w, size=3 * n_target)
    keep = tumor[ys, xs]
    ys, xs = ys[keep][:n_target], xs[keep][:n_target]
    r = int(np.ceil(3 * sigma))
    ax = np.arange(-r, r + 1)
    stamp = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma * sigma))
    for y, x in zip(ys, xs):
        y0, y1 = max(y - r, 0), min(y + r + 1, h)
        x0, x1 = max(x - r, 0), min(x + r + 1, w)
        out[y0:y1, x0:x1] += stamp[r - (y - y0) : r + (y1 - y), r - (x - x0) : r + (x1 - x)]
    return out


def sample_subgroup_labels(rng: np.random.Generator, cfg: SynthConfig, n: int) -> list:
    """Draw (subgroup, LabelVector) pairs mirroring subgroup co-occurrence."""
    subgroups = [SUBGROUP_GBM, SUBGROUP_OLIGO, SUBGROUP_ASTRO]
    if cfg.exact_counts:
        counts = np.floor(np.asarray(cfg.subgroup_priors) * n).astype(int)
        while counts.sum() < n:
            counts[int(np.argmax(np.asarray(cfg.subgroup_priors) * n - counts))] += 1
        assignment = np.repeat(np.arange(3), counts)
        rng.shuffle(assignment)
        # allocate ATRX mutants per subgroup at the exact configured rate
        atrx_flags = np.zeros(n, dtype=bool)
        for k, sub in enumerate(subgroups):
            members = np.nonzero(assignment == k)[0]
            n_mut = int(round(cfg.atrx_rate[sub] * len(members)))
            if n_mut:
                atrx_flags[rng.choice(members, size=n_mut, replace=False)] = True
    else:
        assignment = rng.choice(3, size=n, p=np.asarray(cfg.subgroup_priors) / sum(cfg.subgroup_priors))
        atrx_flags = np.array([
            rng.random() < cfg.atrx_rate[subgroups[int(k)]] for k in assignment
        ])
    out = []
    for k, atrx_mut in zip(assignment, atrx_flags):
        sub = subgroups[int(k)]
        idh = MUTANT if sub != SUBGROUP_GBM else WILDTYPE
        codel = MUTANT if sub == SUBGROUP_OLIGO else WILDTYPE
        atrx = MUTANT if atrx_mut else WILDTYPE
        states = np.array([idh, codel, atrx], dtype=np.int64)
        out.append((sub, LabelVector(states=states)))
    return out


def synth_profiles(cfg: SynthConfig, n: int, seed: int) -> list:
    """Standalone mutation profiles for co-occurrence / embedding training."""
    rng = np.random.default_rng(seed)
    panel = cfg.panel()
    labeled = sample_subgroup_labels(rng, cfg, n)
    profiles = []
    for i, (_, lv) in enumerate(labeled):
        calls = {g: int(s) for g, s in zip(panel.genes, lv.states)}
        profiles.append(MutationProfile(patient_id=f"g{i:05d}", calls=calls))
    return profiles


def synth_slide(cfg: SynthConfig, labels: LabelVector, patient_id: str, slide_id: str,
                seed, center: str = "center-0") -> WholeSlide:
    """One deterministic slide with textures planted per the label vector."""
    panel = cfg.panel()
    rng = np.random.default_rng(seed)
    h, w = cfg.slide_shape

    base_a, base_b = _lowpass_fields(rng, (h, w), cutoff=0.012)
    region_field, _ = _lowpass_fields(rng, (h, w), cutoff=0.004)

    tumor_cut = np.quantile(region_field, 1.0 - cfg.tumor_fraction)
    nondiag_cut = np.quantile(region_field, cfg.nondiag_fraction)
    tumor = region_field > tumor_cut
    nondiag = (region_field < nondiag_cut) & ~tumor
    mask = np.full((h, w), REGION_NORMAL, dtype=np.uint8)
    mask[tumor] = REGION_TUMOR
    mask[nondiag] = REGION_NONDIAG

    ch2845 = 0.45 + 0.10 * base_a
    ch2930 = 0.50 + 0.06 * base_a + 0.08 * base_b
    # tumor runs slightly protein-rich; nondiagnostic regions wash out dark
    ch2930 = ch2930 + 0.03 * tumor
    ch2845 = np.where(nondiag, 0.12 + 0.02 * base_a, ch2845)
    ch2930 = np.where(nondiag, 0.10 + 0.02 * base_b, ch2930)

    channels = {"ch2845": ch2845, "ch2930": ch2930}
    for gene, tex in cfg.textures.items():
        gi = panel.gene_index(gene)
        if labels.states[gi] != MUTANT:
            continue
        if tex.kind == "band":
            f = _bandpass_field(rng, (h, w), tex.band)
            channels[tex.channel] = channels[tex.channel] + tex.amplitude * f * tumor
        elif tex.kind == "dots":
            dots = _dot_field(rng, (h, w), tumor, tex.dot_spacing, tex.dot_sigma)
            channels["ch2930"] = channels["ch2930"] + tex.amplitude * dots
            channels["ch2845"] = channels["ch2845"] + 0.4 * tex.amplitude * dots
        else:
            raise ValueError(f"unknown texture kind {tex.kind!r}")

    quantized = {}
    for name, arr in channels.items():
        arr = np.clip(arr, 0.0, 1.0)
        quantized[name] = np.round(arr * 65535.0).astype(np.uint16)

    # plant a channel misalignment for registration to recover
    if cfg.max_misalignment > 0:
        m = cfg.max_misalignment
        dy, dx = int(rng.integers(-m, m + 1)), int(rng.integers(-m, m + 1))
        quantized["ch2930"] = np.roll(quantized["ch2930"], (dy, dx), axis=(0, 1))

    return WholeSlide(
        ch2845=quantized["ch2845"],
        ch2930=quantized["ch2930"],
        patient_id=patient_id,
        slide_id=slide_id,
        labels=labels,
        mask=mask,
        center=center,
    )


@dataclass
class SynthPatient:
    patient_id: str
    subgroup: str
    labels: LabelVector
    center: str
    slides: list


def synth_dataset(cfg: SynthConfig) -> list:
    """All patients with their slides, deterministic given cfg.seed."""
    root = np.random.SeedSequence(cfg.seed)
    label_seed, *slide_seeds = root.spawn(1 + cfg.n_patients)
    rng = np.random.default_rng(label_seed)
    labeled = sample_subgroup_labels(rng, cfg, cfg.n_patients)
    patients = []
    for i, (sub, lv) in enumerate(labeled):
        pid = f"p{i:04d}"
        center = f"center-{i % cfg.n_centers}"
        per_slide = slide_seeds[i].spawn(cfg.slides_per_patient)
        slides = [
            synth_slide(cfg, lv, pid, f"{pid}_s{j}", seed=per_slide[j], center=center)
            for j in range(cfg.slides_per_patient)
        ]
        patients.append(SynthPatient(patient_id=pid, subgroup=sub, labels=lv, center=center, slides=slides))
    return patients
