"""Filter-transfer benchmark: learn a known filter from one pair, score it on a corpus.

Everything runs on luma planes, as the model is trained on Y only.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .blend import RetouchModel, apply_to_plane
from .filters import FilterSpec
from .image_io import ImageBuf, load_image, luma
from .metrics import EvalReport
from .training import TrainConfig, train

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


def list_images(folder) -> list[Path]:
    return sorted(p for p in Path(folder).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_luma(path) -> np.ndarray:
    return luma(load_image(path))


def filter_pair(plane: np.ndarray, spec: FilterSpec) -> tuple[ImageBuf, ImageBuf]:
    return ImageBuf.from_array(plane), ImageBuf.from_array(spec(plane))


def train_on_filter(before: np.ndarray, spec: FilterSpec, cfg: TrainConfig, log_stream=None):
    b, a = filter_pair(before, spec)
    return train(b, a, cfg, log_stream=log_stream)


def evaluate_on_corpus(model: RetouchModel, planes: dict[str, np.ndarray], spec: FilterSpec) -> EvalReport:
    def items():
        for name, plane in planes.items():
            out = np.clip(apply_to_plane(model, model.band_maps[0], plane), 0.0, 1.0)
            yield name, out, np.clip(spec(plane), 0.0, 1.0)
    return EvalReport.from_pairs(items())


def k_sweep(before: np.ndarray, planes: dict[str, np.ndarray], spec: FilterSpec,
            cfg: TrainConfig, ks) -> list[tuple[int, EvalReport]]:
    rows = []
    for k in ks:
        model, _ = train_on_filter(before, spec, replace(cfg, K=int(k)))
        rows.append((int(k), evaluate_on_corpus(model, planes, spec)))
    return rows
