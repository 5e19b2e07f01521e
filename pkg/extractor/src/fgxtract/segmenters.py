"""Prompt-driven foreground confidence.

``toy`` is a deterministic border-contrast saliency stand-in: each pixel's
absolute deviation from the mean border intensity, normalized into [0,1].
It ignores the prompt string, which only selects the output folder. The
``hf:`` prefix adapts text-prompted segmentation checkpoints exposing the
CLIPSeg-style interface; not CI-tested.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


class SegmenterError(ValueError):
    pass


class ToySaliency:
    name = "toy"

    def confidence(self, image: Image.Image, prompt: str) -> np.ndarray:
        gray = np.asarray(image.convert("L"), dtype=np.float64) / 255.0
        border = np.concatenate([gray[0], gray[-1], gray[:, 0], gray[:, -1]])
        sal = np.abs(gray - border.mean())
        top = sal.max()
        if top > 0:
            sal = sal / top
        return sal.astype(np.float32)

    def preprocessing(self) -> dict:
        return {
            "method": "absolute deviation from mean border intensity, max-normalized",
            "prompt_used": False,
        }


class HfPromptSegmenter:
    """Text-prompted segmentation through transformers. Not CI-tested."""

    def __init__(self, model_id: str) -> None:
        try:
            import torch
            from transformers import AutoProcessor, CLIPSegForImageSegmentation
        except ImportError as exc:
            raise SegmenterError(f"segmenter 'hf:{model_id}' needs torch and transformers: {exc}")
        self._torch = torch
        self._processor = AutoProcessor.from_pretrained(model_id)
        self._model = CLIPSegForImageSegmentation.from_pretrained(model_id).eval()
        self.name = f"hf:{model_id}"

    def confidence(self, image: Image.Image, prompt: str) -> np.ndarray:
        with self._torch.no_grad():
            inputs = self._processor(
                text=[prompt], images=[image.convert("RGB")], return_tensors="pt"
            )
            logits = self._model(**inputs).logits
        probs = self._torch.sigmoid(logits).squeeze().cpu().numpy()
        if probs.ndim != 2:
            raise SegmenterError(f"{self.name}: logits squeezed to shape {probs.shape}")
        return probs.astype(np.float32)

    def preprocessing(self) -> dict:
        return {"prompt_used": True, "activation": "sigmoid over logits"}


def resolve_segmenter(name: str):
    if name == "toy":
        return ToySaliency()
    if name.startswith("hf:"):
        return HfPromptSegmenter(name[3:])
    raise SegmenterError(f"unknown segmenter '{name}'; expected toy or hf:<model>")
