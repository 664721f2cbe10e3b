"""Slide preprocessing, synthetic generation, augmentation, and encoding."""

from gliomol.slides.preprocess import (
    PATCH_SIZE,
    REGION_NONDIAG,
    REGION_NORMAL,
    REGION_TUMOR,
    Patch,
    RegistrationError,
    WholeSlide,
    align_channels,
    cache_patches,
    extract_patches,
    list_slide_ids,
    load_patch_images,
    load_slide,
    register_translation,
    save_slide,
    subtract_channel,
)
from gliomol.slides.synth import (
    GENES,
    SUBGROUP_ASTRO,
    SUBGROUP_GBM,
    SUBGROUP_OLIGO,
    PlantedTexture,
    SynthConfig,
    SynthPatient,
    default_textures,
    sample_subgroup_labels,
    synth_dataset,
    synth_profiles,
    synth_slide,
)
from gliomol.slides.augment import AugmentConfig, augment_patch
from gliomol.slides.encoder import ConvEncoder, EncoderConfig
