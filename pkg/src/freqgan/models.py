"""ResNet generator and PatchGAN discriminator, scaled by preset.

One code path serves both the full-size architecture (nine residual blocks,
70x70-receptive-field discriminator on 256px images) and a desk-scale
variant for CPU experiments. Parameters live in flat name->Tensor dicts so
they checkpoint through the tensor container unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import convops as C
from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class ScalePreset:
    name: str
    image_size: int
    resnet_blocks: int
    base_channels: int
    discriminator_layers: int

    def __post_init__(self):
        if self.image_size % 4 != 0:
            raise ValueError("image_size must be divisible by 4 (two stride-2 stages)")


PRESETS = {
    "paper": ScalePreset("paper", 256, 9, 64, 3),
    "toy": ScalePreset("toy", 32, 3, 16, 2),
    "toy64": ScalePreset("toy64", 64, 3, 16, 2),
}


def get_preset(name: str, image_size: int | None = None) -> ScalePreset:
    p = PRESETS[name]
    if image_size is not None and image_size != p.image_size:
        p = ScalePreset(p.name, image_size, p.resnet_blocks, p.base_channels, p.discriminator_layers)
    return p


def _conv_param(rng, cout, cin, kh, kw, name, params):
    params[f"{name}.w"] = Tensor(
        rng.normal(0.0, 0.02, (cout, cin, kh, kw)), requires_grad=True, name=f"{name}.w"
    )
    params[f"{name}.b"] = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.b")


def _convt_param(rng, cin, cout, kh, kw, name, params):
    params[f"{name}.w"] = Tensor(
        rng.normal(0.0, 0.02, (cin, cout, kh, kw)), requires_grad=True, name=f"{name}.w"
    )
    params[f"{name}.b"] = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.b")


def _norm_param(c, name, params):
    params[f"{name}.g"] = Tensor(np.ones(c), requires_grad=True, name=f"{name}.g")
    params[f"{name}.be"] = Tensor(np.zeros(c), requires_grad=True, name=f"{name}.be")


def build_generator(preset: ScalePreset, seed: int) -> dict[str, Tensor]:
    """Conv kernels ~ Normal(0, 0.02) from seed; norm affines at identity."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    f = preset.base_channels
    p: dict[str, Tensor] = {}
    _conv_param(rng, f, 3, 7, 7, "head", p)
    _norm_param(f, "head.n", p)
    _conv_param(rng, 2 * f, f, 3, 3, "down1", p)
    _norm_param(2 * f, "down1.n", p)
    _conv_param(rng, 4 * f, 2 * f, 3, 3, "down2", p)
    _norm_param(4 * f, "down2.n", p)
    for i in range(preset.resnet_blocks):
        _conv_param(rng, 4 * f, 4 * f, 3, 3, f"res{i}.c1", p)
        _norm_param(4 * f, f"res{i}.c1.n", p)
        _conv_param(rng, 4 * f, 4 * f, 3, 3, f"res{i}.c2", p)
        _norm_param(4 * f, f"res{i}.c2.n", p)
    _convt_param(rng, 4 * f, 2 * f, 3, 3, "up1", p)
    _norm_param(2 * f, "up1.n", p)
    _convt_param(rng, 2 * f, f, 3, 3, "up2", p)
    _norm_param(f, "up2.n", p)
    _conv_param(rng, 3, f, 7, 7, "tail", p)
    return p


def generator_forward(params: dict[str, Tensor], x: Tensor, preset: ScalePreset) -> Tensor:
    def cin(name, h, stride=1, pad=0):
        h = T.pad_reflect(h, pad) if pad else h
        h = C.conv2d(h, params[f"{name}.w"], params[f"{name}.b"], stride=stride)
        return C.instance_norm(h, params[f"{name}.n.g"], params[f"{name}.n.be"])

    h = T.relu(cin("head", x, pad=3))
    h = T.relu(cin("down1", h, stride=2, pad=1))
    h = T.relu(cin("down2", h, stride=2, pad=1))
    for i in range(preset.resnet_blocks):
        r = T.relu(cin(f"res{i}.c1", h, pad=1))
        r = cin(f"res{i}.c2", r, pad=1)
        h = T.add(h, r)
    for name in ("up1", "up2"):
        h = C.conv_transpose2d(
            h, params[f"{name}.w"], params[f"{name}.b"], stride=2, padding=1, output_padding=1
        )
        h = T.relu(C.instance_norm(h, params[f"{name}.n.g"], params[f"{name}.n.be"]))
    h = T.pad_reflect(h, 3)
    h = C.conv2d(h, params["tail.w"], params["tail.b"])
    return T.tanh(h)


def build_discriminator(preset: ScalePreset, seed: int) -> dict[str, Tensor]:
    """Stride-2 conv stack; instance norm from the second layer on."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    f = preset.base_channels
    p: dict[str, Tensor] = {}
    cin_ch = 3
    ch = f
    for i in range(preset.discriminator_layers):
        _conv_param(rng, ch, cin_ch, 4, 4, f"d{i}", p)
        if i > 0:
            _norm_param(ch, f"d{i}.n", p)
        cin_ch, ch = ch, ch * 2
    if preset.discriminator_layers >= 3:
        # stride-1 widening layer; omitted at desk scale to keep the
        # receptive field smaller than the toy image
        _conv_param(rng, ch, cin_ch, 4, 4, "pen", p)
        _norm_param(ch, "pen.n", p)
        cin_ch = ch
    _conv_param(rng, 1, cin_ch, 4, 4, "out", p)
    return p


def discriminator_forward(
    params: dict[str, Tensor], x: Tensor, preset: ScalePreset, use_norm: bool = True
) -> Tensor:
    """Patch logit map (no sigmoid).

    use_norm=False bypasses instance norm; its spatial statistics couple
    every pixel, which would hide the convolutional receptive field from
    gradient-footprint probes.
    """
    h = x
    for i in range(preset.discriminator_layers):
        h = C.conv2d(h, params[f"d{i}.w"], params[f"d{i}.b"], stride=2, padding=1)
        if i > 0 and use_norm:
            h = C.instance_norm(h, params[f"d{i}.n.g"], params[f"d{i}.n.be"])
        h = T.leaky_relu(h, 0.2)
    if preset.discriminator_layers >= 3:
        h = C.conv2d(h, params["pen.w"], params["pen.b"], stride=1, padding=1)
        if use_norm:
            h = C.instance_norm(h, params["pen.n.g"], params["pen.n.be"])
        h = T.leaky_relu(h, 0.2)
    return C.conv2d(h, params["out.w"], params["out.b"], stride=1, padding=1)


def discriminator_receptive_field(preset: ScalePreset) -> int:
    """Analytic receptive field of one output logit."""
    layers = [(4, 2)] * preset.discriminator_layers
    if preset.discriminator_layers >= 3:
        layers.append((4, 1))
    layers.append((4, 1))
    rf = 1
    for k, s in reversed(layers):
        rf = rf * s + (k - s)
    return rf


def param_count(params: dict[str, Tensor]) -> int:
    return sum(t.data.size for t in params.values())


def params_to_arrays(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: v.data for k, v in params.items()}


def params_from_arrays(arrays: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in arrays.items()}
