"""Image-level feature backbones.

``toy-<dim>`` is a deterministic stand-in used by the tests: resize to a
fixed 16x16 RGB grid, scale to [0,1], flatten, and project through a
Gaussian matrix drawn from a fixed seed. The ``hf:`` and ``torchhub:``
prefixes reach real pretrained models and import torch lazily; they are
thin adapters and not exercised by CI (no weights in the test environment).
"""

from __future__ import annotations

import re

import numpy as np
from PIL import Image


class BackboneError(ValueError):
    pass


class ToyBackbone:
    SIDE = 16
    PROJECTION_SEED = 0xF06

    def __init__(self, dim: int) -> None:
        if dim < 1:
            raise BackboneError("toy backbone width must be positive")
        self.name = f"toy-{dim}"
        self.dim = dim
        rng = np.random.default_rng(self.PROJECTION_SEED)
        flat = 3 * self.SIDE * self.SIDE
        self._proj = rng.standard_normal((flat, dim)) / np.sqrt(flat)

    def features(self, image: Image.Image) -> np.ndarray:
        small = image.convert("RGB").resize(
            (self.SIDE, self.SIDE), Image.Resampling.BILINEAR
        )
        flat = np.asarray(small, dtype=np.float64).reshape(-1) / 255.0
        return (flat @ self._proj).astype(np.float32)

    def preprocessing(self) -> dict:
        return {
            "input": "RGB",
            "resize": [self.SIDE, self.SIDE],
            "resample": "bilinear",
            "scale": "1/255",
            "projection_seed": self.PROJECTION_SEED,
        }


class HfBackbone:
    """Global-token features from a transformers vision encoder. Not CI-tested."""

    def __init__(self, model_id: str) -> None:
        try:
            import torch
            from transformers import AutoImageProcessor, AutoModel
        except ImportError as exc:
            raise BackboneError(f"backbone 'hf:{model_id}' needs torch and transformers: {exc}")
        self._torch = torch
        self._processor = AutoImageProcessor.from_pretrained(model_id)
        self._model = AutoModel.from_pretrained(model_id).eval()
        self.name = f"hf:{model_id}"
        self.dim = int(self._model.config.hidden_size)

    def features(self, image: Image.Image) -> np.ndarray:
        with self._torch.no_grad():
            inputs = self._processor(images=image.convert("RGB"), return_tensors="pt")
            out = self._model(**inputs)
        # first token of the last layer is the global image token
        return out.last_hidden_state[0, 0].cpu().numpy().astype(np.float32)

    def preprocessing(self) -> dict:
        return {"processor": type(self._processor).__name__, "settings": "processor defaults"}


class TorchHubBackbone:
    """torch.hub model whose forward yields one vector per image. Not CI-tested."""

    def __init__(self, locator: str) -> None:
        repo, _, model = locator.partition(":")
        if not repo or not model:
            raise BackboneError("torchhub locator must look like torchhub:<repo>:<model>")
        try:
            import torch
            import torchvision.transforms as T
        except ImportError as exc:
            raise BackboneError(f"backbone 'torchhub:{locator}' needs torch: {exc}")
        self._torch = torch
        self._model = torch.hub.load(repo, model).eval()
        self.name = f"torchhub:{locator}"
        self.dim = None  # discovered from the first forward pass
        self._tf = T.Compose([
            T.Resize(256), T.CenterCrop(224), T.ToTensor(),
            T.Normalize((0.485, 0.456, 0.406), (0.229, 0.224, 0.225)),
        ])

    def features(self, image: Image.Image) -> np.ndarray:
        with self._torch.no_grad():
            out = self._model(self._tf(image.convert("RGB")).unsqueeze(0))
        vec = out.squeeze(0).cpu().numpy().astype(np.float32)
        if vec.ndim != 1:
            raise BackboneError(f"{self.name}: forward returned shape {vec.shape}, expected a vector")
        if self.dim is None:
            self.dim = int(vec.shape[0])
        return vec

    def preprocessing(self) -> dict:
        return {
            "resize": 256, "center_crop": 224,
            "normalize": "imagenet mean/std",
        }


def resolve_backbone(name: str):
    m = re.fullmatch(r"toy-(\d+)", name)
    if m:
        return ToyBackbone(int(m.group(1)))
    if name.startswith("hf:"):
        return HfBackbone(name[3:])
    if name.startswith("torchhub:"):
        return TorchHubBackbone(name[len("torchhub:"):])
    raise BackboneError(
        f"unknown backbone '{name}'; expected toy-<dim>, hf:<model>, or torchhub:<repo>:<model>"
    )
