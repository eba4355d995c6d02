"""Segmentation generator (shared extractor + twin 1x1 classifier heads) and
a fully-convolutional domain discriminator, at configurable desk scale.

The reference-scale discriminator is 5 conv layers, kernel 4x4, stride 2,
channels {64, 128, 256, 512, 1}, Leaky-ReLU slope 0.2 after every layer but
the last; the desk-scale default shrinks that to 3 layers {8, 16, 1} and
upsamples the score map back to the input size (factor 2^layers).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

REFERENCE_DISCRIMINATOR_CHANNELS = (64, 128, 256, 512, 1)


@dataclass
class GeneratorConfig:
    in_channels: int = 3
    num_classes: int = 5
    extractor_channels: tuple = (16, 32, 32)
    kernel_size: int = 3        # stride 1, padding preserves spatial size


@dataclass
class DiscriminatorConfig:
    in_channels: int = 5        # class channels of the prediction map
    channels: tuple = (8, 16, 1)
    kernel_size: int = 4
    stride: int = 2
    leaky_slope: float = 0.2


@dataclass
class ConvLayer:
    weight: Tensor              # (Cout, Cin, k, k)
    bias: Tensor                # (Cout,)


@dataclass
class GeneratorParams:
    extractor: list
    head1: ConvLayer            # 1x1 conv, feature channels -> num_classes
    head2: ConvLayer            # same shape as head1, independently initialized
    config: GeneratorConfig


@dataclass
class DiscriminatorParams:
    layers: list
    config: DiscriminatorConfig


@dataclass
class PredictionPair:
    """Per-pixel probability maps of both heads, their ensemble, and the
    extractor feature map the heads consumed (kept for alignment analysis)."""
    p1: Tensor
    p2: Tensor
    ensemble: Tensor
    features: Tensor


def _he_conv(rng, cout, cin, k) -> ConvLayer:
    scale = np.sqrt(2.0 / (cin * k * k))
    weight = Tensor(rng.normal(0.0, scale, size=(cout, cin, k, k)))
    bias = Tensor(np.zeros(cout))
    return ConvLayer(weight, bias)


def init_generator(config: GeneratorConfig, seed: int) -> GeneratorParams:
    """He-initialized extractor and heads; head2 is drawn from a separate
    seed stream so the two classifiers start diverse."""
    ss = np.random.SeedSequence(seed)
    rng_ext, rng_h1, rng_h2 = (np.random.default_rng(s) for s in ss.spawn(3))
    k = config.kernel_size
    extractor = []
    cin = config.in_channels
    for cout in config.extractor_channels:
        extractor.append(_he_conv(rng_ext, cout, cin, k))
        cin = cout
    head1 = _he_conv(rng_h1, config.num_classes, cin, 1)
    head2 = _he_conv(rng_h2, config.num_classes, cin, 1)
    return GeneratorParams(extractor, head1, head2, config)


def init_discriminator(config: DiscriminatorConfig, seed: int) -> DiscriminatorParams:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    layers = []
    cin = config.in_channels
    for cout in config.channels:
        layers.append(_he_conv(rng, cout, cin, config.kernel_size))
        cin = cout
    return DiscriminatorParams(layers, config)


def _channel_axis(x: Tensor) -> int:
    return 0 if x.data.ndim == 3 else 1


def forward_generator(x, params: GeneratorParams, twin: bool = True) -> PredictionPair:
    """Run extractor and classifier heads; probabilities via per-pixel softmax.

    With ``twin=False`` only head1 is evaluated (single-classifier baseline)
    and the ensemble is head1's own probability map.
    """
    x = T.as_tensor(x)
    cfg = params.config
    in_ch = x.data.shape[_channel_axis(x)]
    if in_ch != cfg.in_channels:
        raise T.ShapeError("forward_generator", x.data.shape, (cfg.in_channels, -1, -1))
    pad = cfg.kernel_size // 2
    feat = x
    for layer in params.extractor:
        feat = T.relu(T.conv2d(feat, layer.weight, layer.bias, stride=1, padding=pad))
    axis = _channel_axis(feat)
    logits1 = T.conv2d(feat, params.head1.weight, params.head1.bias)
    p1 = T.softmax(logits1, axis)
    if not twin:
        return PredictionPair(p1, p1, p1, feat)
    logits2 = T.conv2d(feat, params.head2.weight, params.head2.bias)
    p2 = T.softmax(logits2, axis)
    ensemble = T.softmax(logits1 + logits2, axis)
    return PredictionPair(p1, p2, ensemble, feat)


def discriminator_min_size(config: DiscriminatorConfig) -> int:
    return config.stride ** len(config.channels)


def forward_discriminator(p, params: DiscriminatorParams) -> Tensor:
    """Map a class-probability map to per-pixel source-probabilities in (0,1).

    The stride stack downsamples by stride^layers; the score map is
    nearest-upsampled back to the input size before the sigmoid.
    """
    p = T.as_tensor(p)
    cfg = params.config
    h, w = p.data.shape[-2], p.data.shape[-1]
    factor = discriminator_min_size(cfg)
    if h < factor or w < factor or h % factor or w % factor:
        raise ValueError(
            f"forward_discriminator: spatial size {h}x{w} too small; both sides "
            f"must be multiples of {factor} (and at least {factor}) for "
            f"{len(cfg.channels)} stride-{cfg.stride} layers"
        )
    pad = cfg.kernel_size // 2 - 1 if cfg.kernel_size % 2 == 0 else cfg.kernel_size // 2
    out = p
    for i, layer in enumerate(params.layers):
        out = T.conv2d(out, layer.weight, layer.bias, stride=cfg.stride, padding=pad)
        if i < len(params.layers) - 1:
            out = T.leaky_relu(out, cfg.leaky_slope)
    return T.sigmoid(T.upsample_nearest(out, factor))


def flatten_classifier_weights(params: GeneratorParams):
    """Flattened conv-kernel vectors of the two heads; biases excluded."""
    w1 = T.flatten_concat([params.head1.weight])
    w2 = T.flatten_concat([params.head2.weight])
    return w1, w2


def generator_parameters(params: GeneratorParams, twin: bool = True) -> list:
    """Trainable tensors; head2 is excluded for the single-head baseline."""
    out = []
    for layer in params.extractor:
        out += [layer.weight, layer.bias]
    out += [params.head1.weight, params.head1.bias]
    if twin:
        out += [params.head2.weight, params.head2.bias]
    return out


def discriminator_parameters(params: DiscriminatorParams) -> list:
    out = []
    for layer in params.layers:
        out += [layer.weight, layer.bias]
    return out


# --- checkpoint serialization -------------------------------------------------

def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _pack(name, layer: ConvLayer, into: dict):
    into[f"{name}.weight"] = {"shape": list(layer.weight.data.shape),
                              "data": layer.weight.data.ravel().tolist()}
    into[f"{name}.bias"] = {"shape": list(layer.bias.data.shape),
                            "data": layer.bias.data.ravel().tolist()}


def _unpack(name, entries: dict) -> ConvLayer:
    w = entries[f"{name}.weight"]
    b = entries[f"{name}.bias"]
    return ConvLayer(Tensor(np.array(w["data"]).reshape(w["shape"])),
                     Tensor(np.array(b["data"]).reshape(b["shape"])))


def save_checkpoint(path, gen: GeneratorParams, disc: DiscriminatorParams | None,
                    extra: dict | None = None):
    """Write shapes + flat parameter arrays + config hash as one JSON document.

    Floats are serialized via repr so the round trip is bit-exact.
    """
    gen_cfg = {"in_channels": gen.config.in_channels,
               "num_classes": gen.config.num_classes,
               "extractor_channels": list(gen.config.extractor_channels),
               "kernel_size": gen.config.kernel_size}
    entries = {}
    for i, layer in enumerate(gen.extractor):
        _pack(f"extractor.{i}", layer, entries)
    _pack("head1", gen.head1, entries)
    _pack("head2", gen.head2, entries)
    doc = {"generator_config": gen_cfg, "generator": entries}
    if disc is not None:
        disc_cfg = {"in_channels": disc.config.in_channels,
                    "channels": list(disc.config.channels),
                    "kernel_size": disc.config.kernel_size,
                    "stride": disc.config.stride,
                    "leaky_slope": disc.config.leaky_slope}
        d_entries = {}
        for i, layer in enumerate(disc.layers):
            _pack(f"layers.{i}", layer, d_entries)
        doc["discriminator_config"] = disc_cfg
        doc["discriminator"] = d_entries
    doc["config_hash"] = config_hash({k: doc[k] for k in doc if k.endswith("_config")})
    if extra:
        doc["extra"] = extra
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (GeneratorParams, DiscriminatorParams | None, extra)."""
    with open(path) as f:
        doc = json.load(f)
    gcfg = doc["generator_config"]
    gen_config = GeneratorConfig(in_channels=gcfg["in_channels"],
                                 num_classes=gcfg["num_classes"],
                                 extractor_channels=tuple(gcfg["extractor_channels"]),
                                 kernel_size=gcfg["kernel_size"])
    entries = doc["generator"]
    extractor = [_unpack(f"extractor.{i}", entries)
                 for i in range(len(gen_config.extractor_channels))]
    gen = GeneratorParams(extractor, _unpack("head1", entries), _unpack("head2", entries),
                          gen_config)
    disc = None
    if "discriminator" in doc:
        dcfg = doc["discriminator_config"]
        disc_config = DiscriminatorConfig(in_channels=dcfg["in_channels"],
                                          channels=tuple(dcfg["channels"]),
                                          kernel_size=dcfg["kernel_size"],
                                          stride=dcfg["stride"],
                                          leaky_slope=dcfg["leaky_slope"])
        layers = [_unpack(f"layers.{i}", doc["discriminator"])
                  for i in range(len(disc_config.channels))]
        disc = DiscriminatorParams(layers, disc_config)
    return gen, disc, doc.get("extra")
