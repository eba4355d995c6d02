"""Procedural source/target segmentation domains with a controllable gap.

Scenes are seeded compositions of rectangles, discs and stripes over a
background class; both domains share the label-generation process and differ
only in rendering (per-class colors, noise, gain/offset, texture), i.e. the
shift is purely covariate.  The default class frequencies include two rare
classes so negative transfer on infrequent categories is measurable.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TEXTURE_AMP = 0.06

DEFAULT_CLASS_FREQUENCY = (0.55, 0.20, 0.15, 0.06, 0.04)

# distinct hues, background first
DEFAULT_PALETTE = np.array([
    [0.36, 0.38, 0.42],
    [0.72, 0.24, 0.20],
    [0.20, 0.58, 0.26],
    [0.22, 0.30, 0.68],
    [0.78, 0.66, 0.20],
])


@dataclass
class SceneSpec:
    height: int = 32
    width: int = 32
    num_classes: int = 5
    class_frequency: tuple = DEFAULT_CLASS_FREQUENCY
    shape_count_range: tuple = (3, 8)

    def __post_init__(self):
        freq = np.asarray(self.class_frequency, dtype=float)
        if self.num_classes < 3:
            raise ValueError(f"SceneSpec: num_classes must be >= 3, got {self.num_classes}")
        if len(freq) != self.num_classes:
            raise ValueError(f"SceneSpec: {len(freq)} frequencies for {self.num_classes} classes")
        if not np.isclose(freq.sum(), 1.0, atol=1e-9):
            raise ValueError(f"SceneSpec: class_frequency sums to {freq.sum()}, expected 1")
        if not (freq <= 0.05).any():
            raise ValueError("SceneSpec: need at least one rare class (frequency <= 0.05)")

    @property
    def background_class(self) -> int:
        return int(np.argmax(self.class_frequency))

    @property
    def rare_classes(self) -> list:
        return [c for c, f in enumerate(self.class_frequency) if f <= 0.05]


@dataclass
class DomainTransform:
    class_colors: np.ndarray
    noise_std: float = 0.03
    gain: float = 1.0
    offset: float = 0.0
    texture_freq: float = 3.0

    def to_dict(self) -> dict:
        return {"class_colors": np.asarray(self.class_colors).tolist(),
                "noise_std": self.noise_std, "gain": self.gain,
                "offset": self.offset, "texture_freq": self.texture_freq}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainTransform":
        return cls(class_colors=np.array(d["class_colors"], dtype=float),
                   noise_std=d["noise_std"], gain=d["gain"],
                   offset=d["offset"], texture_freq=d["texture_freq"])


@dataclass
class LabeledImage:
    image: np.ndarray           # (3, H, W) float64 in [0, 1]
    labels: np.ndarray          # (H, W) int64 in [0, C)
    domain: str                 # "source" | "target"


def rotate_hue(colors: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate RGB colors around the gray axis by the given angle."""
    theta = np.deg2rad(degrees)
    k = np.ones(3) / np.sqrt(3.0)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    rot = np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)
    return np.clip(np.asarray(colors) @ rot.T, 0.0, 1.0)


def default_source_transform(spec: SceneSpec | None = None) -> DomainTransform:
    spec = spec or SceneSpec()
    return DomainTransform(class_colors=DEFAULT_PALETTE[:spec.num_classes].copy())


def default_target_transform(spec: SceneSpec | None = None,
                             hue_degrees: float = 50.0) -> DomainTransform:
    """Hue-rotated palette, doubled noise, darker gain with an offset."""
    src = default_source_transform(spec)
    return DomainTransform(class_colors=rotate_hue(src.class_colors, hue_degrees),
                           noise_std=2.0 * src.noise_std,
                           gain=0.8, offset=0.1,
                           texture_freq=src.texture_freq)


def _paint_rect(labels, rng, cls, lo, hi):
    h, w = labels.shape
    rh = int(rng.integers(lo, hi + 1))
    rw = int(rng.integers(lo, hi + 1))
    r = int(rng.integers(0, max(h - rh, 0) + 1))
    c = int(rng.integers(0, max(w - rw, 0) + 1))
    labels[r:r + rh, c:c + rw] = cls


def _paint_disc(labels, rng, cls, lo, hi):
    h, w = labels.shape
    radius = int(rng.integers(max(lo // 2, 2), max(hi // 2, 3) + 1))
    cy = int(rng.integers(0, h))
    cx = int(rng.integers(0, w))
    yy, xx = np.ogrid[:h, :w]
    labels[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2] = cls


def _paint_stripe(labels, rng, cls, lo, hi):
    h, w = labels.shape
    thickness = int(rng.integers(2, max(lo, 3) + 1))
    if rng.random() < 0.5:
        r = int(rng.integers(0, max(h - thickness, 0) + 1))
        labels[r:r + thickness, :] = cls
    else:
        c = int(rng.integers(0, max(w - thickness, 0) + 1))
        labels[:, c:c + thickness] = cls


def generate_scene(spec: SceneSpec, seed) -> np.ndarray:
    """Composite seeded random shapes over the background class.

    Identical seed gives an identical map.  Shape classes are drawn in
    proportion to the non-background class frequencies, so empirical
    frequencies track ``spec.class_frequency``.
    """
    rng = np.random.default_rng(seed)
    bg = spec.background_class
    labels = np.full((spec.height, spec.width), bg, dtype=np.int64)
    freq = np.asarray(spec.class_frequency, dtype=float)
    fg = [c for c in range(spec.num_classes) if c != bg]
    fg_prob = freq[fg] / freq[fg].sum()
    lo, hi = spec.shape_count_range
    n_shapes = int(rng.integers(lo, hi + 1))
    if n_shapes == 0 and freq[fg].sum() > 0:
        warnings.warn("generate_scene: shape count 0 cannot realize non-background "
                      "frequencies; map is all background", stacklevel=2)
    side = min(spec.height, spec.width)
    size_lo, size_hi = max(3, side // 8), max(4, (3 * side) // 8)
    painters = (_paint_rect, _paint_disc, _paint_stripe)
    for _ in range(n_shapes):
        cls = int(rng.choice(fg, p=fg_prob))
        painter = painters[int(rng.integers(0, len(painters)))]
        painter(labels, rng, cls, size_lo, size_hi)
    return labels


def render(labels: np.ndarray, transform: DomainTransform, seed) -> np.ndarray:
    """Class color fill + sinusoidal texture + Gaussian noise, then gain/offset,
    clipped to [0, 1]; returns a (3, H, W) image."""
    rng = np.random.default_rng(seed)
    colors = np.asarray(transform.class_colors, dtype=float)
    if labels.min() < 0 or labels.max() >= len(colors):
        raise ValueError(f"render: label outside [0, {len(colors)})")
    img = colors[labels].transpose(2, 0, 1).astype(np.float64)
    h, w = labels.shape
    f = transform.texture_freq
    if f > 0:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        img = img + TEXTURE_AMP * np.sin(2.0 * np.pi * f * (ii + jj) / (h + w) + phase)
    if transform.noise_std > 0:
        img = img + rng.normal(0.0, transform.noise_std, size=img.shape)
    img = transform.gain * img + transform.offset
    return np.clip(img, 0.0, 1.0)


def make_dataset(n: int, domain: str, spec: SceneSpec, transform: DomainTransform,
                 seed) -> list:
    """n independently seeded scenes rendered through one domain transform."""
    if n < 1:
        raise ValueError(f"make_dataset: n must be >= 1, got {n}")
    if domain not in ("source", "target"):
        raise ValueError(f"make_dataset: unknown domain {domain!r}")
    items = []
    for child in np.random.SeedSequence(seed).spawn(n):
        scene_seed, render_seed = child.spawn(2)
        labels = generate_scene(spec, scene_seed)
        image = render(labels, transform, render_seed)
        items.append(LabeledImage(image=image, labels=labels, domain=domain))
    return items


@dataclass
class DataConfig:
    spec: SceneSpec = field(default_factory=SceneSpec)
    source_transform: DomainTransform | None = None
    target_transform: DomainTransform | None = None
    num_train: int = 128        # per domain
    num_eval: int = 32          # per domain

    def __post_init__(self):
        if self.source_transform is None:
            self.source_transform = default_source_transform(self.spec)
        if self.target_transform is None:
            self.target_transform = default_target_transform(self.spec)

    def to_dict(self) -> dict:
        return {"spec": {"height": self.spec.height, "width": self.spec.width,
                         "num_classes": self.spec.num_classes,
                         "class_frequency": list(self.spec.class_frequency),
                         "shape_count_range": list(self.spec.shape_count_range)},
                "source_transform": self.source_transform.to_dict(),
                "target_transform": self.target_transform.to_dict(),
                "num_train": self.num_train, "num_eval": self.num_eval}

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        spec = SceneSpec(height=d["spec"]["height"], width=d["spec"]["width"],
                         num_classes=d["spec"]["num_classes"],
                         class_frequency=tuple(d["spec"]["class_frequency"]),
                         shape_count_range=tuple(d["spec"]["shape_count_range"]))
        return cls(spec=spec,
                   source_transform=DomainTransform.from_dict(d["source_transform"]),
                   target_transform=DomainTransform.from_dict(d["target_transform"]),
                   num_train=d["num_train"], num_eval=d["num_eval"])


SPLITS = ("source_train", "target_train", "source_eval", "target_eval")


def generate_splits(config: DataConfig, seed) -> dict:
    """Training and evaluation splits for both domains from disjoint seed
    streams.  Target labels ride along for evaluation only."""
    seeds = np.random.SeedSequence(seed).spawn(4)
    sizes = (config.num_train, config.num_train, config.num_eval, config.num_eval)
    domains = ("source", "target", "source", "target")
    transforms = (config.source_transform, config.target_transform,
                  config.source_transform, config.target_transform)
    return {name: make_dataset(n, dom, config.spec, tr, s)
            for name, n, dom, tr, s in zip(SPLITS, sizes, domains, transforms, seeds)}


def _stack(items):
    return (np.stack([it.image for it in items]),
            np.stack([it.labels for it in items]))


def save_dataset(path, splits: dict, config: DataConfig, seed: int):
    """Write a dataset directory: JSON manifest + one .npy pair per split."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": config.to_dict(), "seed": int(seed),
                "splits": {}}
    for name in SPLITS:
        images, labels = _stack(splits[name])
        np.save(out / f"{name}_images.npy", images)
        np.save(out / f"{name}_labels.npy", labels)
        manifest["splits"][name] = {"count": len(splits[name]),
                                    "domain": splits[name][0].domain}
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    manifest["hash"] = hashlib.sha256(blob.encode()).hexdigest()[:16]
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)


def load_dataset(path):
    """Inverse of save_dataset; returns (splits, DataConfig, manifest)."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"load_dataset: no manifest at {manifest_path}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    config = DataConfig.from_dict(manifest["config"])
    splits = {}
    for name in SPLITS:
        images = np.load(root / f"{name}_images.npy")
        labels = np.load(root / f"{name}_labels.npy")
        domain = manifest["splits"][name]["domain"]
        splits[name] = [LabeledImage(image=img, labels=lab, domain=domain)
                        for img, lab in zip(images, labels)]
    return splits, config, manifest
