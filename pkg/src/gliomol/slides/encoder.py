"""Small strided convolutional patch encoder with global average pooling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gliomol import arrayio
from gliomol.autodiff import Conv2d, Tensor, l2_normalize, relu, tmean


@dataclass
class EncoderConfig:
    widths: tuple = (4, 8, 16, 32, 64, 128)
    in_channels: int = 3
    kernel: int = 3
    stride: int = 2
    seed: int = 0

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]


class ConvEncoder:
    """Stack of stride-2 3x3 conv+ReLU layers; 300px input pools to widths[-1]."""

    def __init__(self, config: EncoderConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.layers = []
        c_in = config.in_channels
        for c_out in config.widths:
            self.layers.append(Conv2d(c_in, c_out, rng, kernel=config.kernel, stride=config.stride, pad=1))
            c_in = c_out

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def parameters(self) -> list:
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def forward(self, x: Tensor) -> Tensor:
        """(B, H, W, 3) -> (B, d) pooled features (not normalized)."""
        h = (x - 0.5) * 2.0  # center unit-range intensities
        for layer in self.layers:
            h = relu(layer(h))
        return tmean(h, axis=(1, 2))

    def encode(self, images: np.ndarray, normalize: bool = True) -> np.ndarray:
        """Inference helper: stack of images -> feature rows, unit norm."""
        single = images.ndim == 3
        if single:
            images = images[None]
        feats = self.forward(Tensor(images))
        out = l2_normalize(feats, axis=-1) if normalize else feats
        return out.data[0] if single else out.data

    def encode_batches(self, image_iter, batch: int = 32, normalize: bool = True) -> np.ndarray:
        """Encode an iterable of (H, W, 3) images in fixed-size batches."""
        chunks, buf = [], []
        for img in image_iter:
            buf.append(img)
            if len(buf) == batch:
                chunks.append(self.encode(np.stack(buf), normalize=normalize))
                buf = []
        if buf:
            chunks.append(self.encode(np.stack(buf), normalize=normalize))
        if not chunks:
            return np.zeros((0, self.feature_dim))
        return np.concatenate(chunks, axis=0)

    # -- persistence --------------------------------------------------------
    def state_arrays(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"conv{i}_w"] = layer.w.data
            out[f"conv{i}_b"] = layer.b.data
        return out

    def save(self, directory, extra_manifest: dict | None = None) -> None:
        manifest = {
            "kind": "conv_encoder",
            "widths": list(self.config.widths),
            "in_channels": self.config.in_channels,
            "kernel": self.config.kernel,
            "stride": self.config.stride,
            "seed": self.config.seed,
        }
        manifest.update(extra_manifest or {})
        arrayio.save_checkpoint(directory, self.state_arrays(), manifest)

    @classmethod
    def load(cls, directory) -> "ConvEncoder":
        arrays, manifest = arrayio.load_checkpoint(directory)
        config = EncoderConfig(
            widths=tuple(manifest["widths"]),
            in_channels=manifest["in_channels"],
            kernel=manifest["kernel"],
            stride=manifest["stride"],
            seed=manifest["seed"],
        )
        enc = cls(config)
        for i, layer in enumerate(enc.layers):
            layer.w.data[...] = arrays[f"conv{i}_w"]
            layer.b.data[...] = arrays[f"conv{i}_b"]
        return enc
