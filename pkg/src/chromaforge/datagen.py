"""Desk-scale datasets.

``generate_synthetic`` draws images whose class is determined by hue, so a
per-channel tone curve can genuinely move an image across a decision
boundary. ``load_binary_batches`` reads the common 32x32 record format of one
label byte followed by 1024 red, 1024 green and 1024 blue bytes.
"""

from __future__ import annotations

import colorsys
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensorcore import LabeledImage, load_image, save_image

RECORD_BYTES = 1 + 32 * 32 * 3
HUE_MARGIN = 0.05


def default_palette(num_classes: int, margin: float = HUE_MARGIN) -> list[tuple[float, float]]:
    width = 1.0 / num_classes
    return [(c * width + margin / 2, (c + 1) * width - margin / 2) for c in range(num_classes)]


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 6
    samples_per_class: int = 200
    image_size: tuple[int, int] = (32, 32)
    seed: int = 0
    palette: list[tuple[float, float]] | None = None
    texture_noise: float = 0.04
    saturation: tuple[float, float] = (0.45, 0.95)
    value: tuple[float, float] = (0.45, 0.95)
    holdout_every: int = 5
    _hues: list[tuple[float, float]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_classes < 2 or self.samples_per_class < 1:
            raise ValueError("need at least two classes and one sample per class")
        hues = self.palette if self.palette is not None else default_palette(self.num_classes)
        hues = [(float(lo), float(hi)) for lo, hi in hues]
        if len(hues) != self.num_classes:
            raise ValueError("palette must give one hue range per class")
        for lo, hi in hues:
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"bad hue range ({lo}, {hi})")
        for a in range(len(hues)):
            for b in range(a + 1, len(hues)):
                if _range_gap(hues[a], hues[b]) < HUE_MARGIN - 1e-12:
                    raise ValueError(f"hue ranges {hues[a]} and {hues[b]} are closer than {HUE_MARGIN}")
        object.__setattr__(self, "_hues", hues)

    @property
    def hues(self) -> list[tuple[float, float]]:
        return self._hues


def _range_gap(a, b) -> float:
    """Circular distance between two hue intervals (0 if they overlap)."""
    (a0, a1), (b0, b1) = a, b
    if a0 <= b1 and b0 <= a1:
        return 0.0
    forward = (b0 - a1) % 1.0
    backward = (a0 - b1) % 1.0
    return min(forward, backward)


def _base_color(hue: float, sat: float, val: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(hue % 1.0, sat, val))


def class_base_color(spec: SyntheticSpec, label: int) -> np.ndarray:
    lo, hi = spec.hues[label]
    return _base_color((lo + hi) / 2, sum(spec.saturation) / 2, sum(spec.value) / 2)


def _render(spec: SyntheticSpec, rng: np.random.Generator, label: int, first: bool) -> np.ndarray:
    h, w = spec.image_size
    if first:
        rgb = class_base_color(spec, label)
    else:
        lo, hi = spec.hues[label]
        rgb = _base_color(rng.uniform(lo, hi), rng.uniform(*spec.saturation), rng.uniform(*spec.value))
    amp = spec.texture_noise
    # low-frequency shading plus bounded per-pixel noise, both scaled by amp
    yy, xx = np.mgrid[0:h, 0:w]
    yy = yy / max(h - 1, 1) - 0.5
    xx = xx / max(w - 1, 1) - 0.5
    angle, phase = rng.uniform(0, 2 * np.pi, size=2)
    tilt = rng.uniform(-1.0, 1.0)
    shade = 1.0 + amp * (2.0 * tilt * (np.cos(angle) * xx + np.sin(angle) * yy) + np.sin(3 * xx + 2 * yy + phase))
    noise = rng.uniform(-amp, amp, size=(h, w, 3))
    img = rgb[None, None, :] * shade[..., None] + noise
    return np.clip(img, 0.0, 1.0)


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> tuple[list[LabeledImage], list[LabeledImage]]:
    """Return ``(train, holdout)``.

    Samples are interleaved by class; every ``holdout_every``-th sample goes
    to the holdout set. The first sample of each class is rendered from the
    class's base color, so with zero noise it is exactly that color.
    """
    rng = np.random.default_rng(spec.seed)
    train, holdout = [], []
    index = 0
    for j in range(spec.samples_per_class):
        for label in range(spec.num_classes):
            item = LabeledImage(_render(spec, rng, label, first=(j == 0)), label)
            (holdout if index % spec.holdout_every == spec.holdout_every - 1 else train).append(item)
            index += 1
    return train, holdout


def export_dataset(items: list[LabeledImage], out_dir, prefix: str = "img") -> Path:
    """Write items as PPM files plus a labels.csv index; return the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "labels.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label"])
        for i, item in enumerate(items):
            name = f"{prefix}_{i:05d}.ppm"
            save_image(item.image, out_dir / name)
            writer.writerow([name, item.label])
    return csv_path


def load_labeled_dir(directory) -> list[LabeledImage]:
    """Read a directory written by ``export_dataset``."""
    directory = Path(directory)
    items = []
    with open(directory / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            items.append(LabeledImage(load_image(directory / row["filename"]), int(row["label"])))
    return items


def load_binary_batches(path, num_classes: int = 10) -> list[LabeledImage]:
    """Decode one record file, or every ``*.bin`` file in a directory (sorted)."""
    path = Path(path)
    files = sorted(path.glob("*.bin")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no .bin files in {path}")
    items = []
    for f in files:
        raw = f.read_bytes()
        if len(raw) == 0 or len(raw) % RECORD_BYTES:
            raise ValueError(f"{f}: size {len(raw)} is not a multiple of {RECORD_BYTES}")
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
        labels = records[:, 0]
        if labels.max() >= num_classes:
            raise ValueError(f"{f}: label {int(labels.max())} out of range for {num_classes} classes")
        pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1) / 255.0
        items.extend(LabeledImage(p, int(lab)) for p, lab in zip(pixels, labels))
    return items
