"""Neighborhood-attention U-Net over 2-channel GAF inputs.

Encoder levels double their filter count and halve the spatial side;
the decoder mirrors them. Each skip connection passes through an
attention gate that fuses the level's feature map with its finer and
coarser neighbors (where they exist) plus a gating signal from the
decoder, with progressive expansion applied inside the gate.
"""

import json
import os
from dataclasses import dataclass, asdict, field

import numpy as np

from . import tensor as T
from .pe import PeSpec, pe_expand
from .tensor import Tensor, ShapeError


@dataclass
class ModelConfig:
    num_classes: int
    gaf_side: int = 32
    base_filters: int = 128
    depth: int = 3
    use_pe: bool = True
    use_agpe: bool = True
    pe_function: str = "arctan"
    pe_terms: int = 2
    seed: int = 0
    in_channels: int = 2


@dataclass
class AgPeBlock:
    """Attention gate for one skip connection.

    All inputs are projected by 1x1 convolutions to a common width equal
    to the gated level's channel count; the fused output multiplies the
    projected maps with the broadcast attention coefficients.
    """
    level: int
    pe_spec: PeSpec
    use_pe: bool
    has_lower_neighbor: bool
    has_upper_neighbor: bool
    w_x: Tensor = None
    w_lower: Tensor = None
    w_upper: Tensor = None
    w_g: Tensor = None
    b_g: Tensor = None
    w_psi: Tensor = None
    b_psi: Tensor = None
    _zero_bias: Tensor = None


def _conv1x1(x, w, b):
    return T.conv2d(x, w, b, stride=1, padding=0)


def agpe_forward(block, x_l, g, x_lower=None, x_upper=None, alpha_override=None):
    """Gate one level. Returns (gated feature map, attention map).

    ``x_lower`` is the finer neighbor (double spatial side, pooled down);
    ``x_upper`` the coarser one (half side, upsampled). ``g`` is the
    decoder feature one level coarser, upsampled to the gated extent.
    ``alpha_override`` replaces the computed attention map, for limit
    tests (fully open / fully closed gate).
    """
    if x_l is None:
        raise ShapeError("attention gate requires the gated level's feature map")
    if block.has_lower_neighbor != (x_lower is not None):
        raise ShapeError(f"level {block.level}: lower-neighbor flag is "
                         f"{block.has_lower_neighbor} but operand presence disagrees")
    if block.has_upper_neighbor != (x_upper is not None):
        raise ShapeError(f"level {block.level}: upper-neighbor flag is "
                         f"{block.has_upper_neighbor} but operand presence disagrees")

    g_up = T.upsample2d(g)
    if g_up.shape[2:] != x_l.shape[2:]:
        raise ShapeError(f"gating signal spatial extent {g.shape[2:]} does not match "
                         f"gated level {x_l.shape[2:]} after upsampling")

    zb = block._zero_bias
    projections = [_conv1x1(x_l, block.w_x, zb)]
    if x_lower is not None:
        projections.append(_conv1x1(T.maxpool2d(x_lower), block.w_lower, zb))
    if x_upper is not None:
        projections.append(_conv1x1(T.upsample2d(x_upper), block.w_upper, zb))

    terms = [pe_expand(p, block.pe_spec) if block.use_pe else p for p in projections]
    combined = _conv1x1(g_up, block.w_g, block.b_g)
    for t in terms:
        combined = T.add(combined, t)

    if alpha_override is not None:
        alpha = alpha_override
    else:
        q = _conv1x1(T.relu(combined), block.w_psi, block.b_psi)
        a = T.sigmoid(q)
        if block.use_pe:
            a = pe_expand(a, block.pe_spec, mode="last")
        # per-sample min-max renormalization keeps the coefficients in [0, 1]
        mn = T.reduce_min(a, axes=(1, 2, 3))
        mx = T.reduce_max(a, axes=(1, 2, 3))
        alpha = T.div(T.sub(a, mn), T.add_scalar(T.sub(mx, mn), 1e-12))

    fused = projections[0]
    for p in projections[1:]:
        fused = T.mul(fused, p)
    return T.mul(fused, alpha), alpha


class NauNetModel:
    """Built by :func:`build_model`; holds named parameters and the forward pass."""

    def __init__(self, config):
        self.config = config
        self.params = {}          # name -> Tensor(requires_grad=True), insertion-ordered
        self.gates = []           # AgPeBlock per encoder level, or []
        self._zero_biases = {}

    # -- construction helpers -------------------------------------------------

    def _add(self, name, array):
        t = Tensor(array, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _conv_param(self, rng, name, cout, cin, k):
        fan_in = cin * k * k
        limit = np.sqrt(6.0 / fan_in)
        w = self._add(f"{name}.w", rng.uniform(-limit, limit, size=(cout, cin, k, k)))
        b = self._add(f"{name}.b", np.zeros(cout))
        return w, b

    def _zero_bias(self, cout):
        if cout not in self._zero_biases:
            self._zero_biases[cout] = Tensor(np.zeros(cout))
        return self._zero_biases[cout]

    # -- queries --------------------------------------------------------------

    def parameter_count(self):
        return sum(p.data.size for p in self.params.values())

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def level_channels(self, level):
        return self.config.base_filters * (2 ** level)

    def shape_trace(self, batch=1):
        """Per-level (side, channels) for encoder and decoder, plus bottleneck."""
        cfg = self.config
        enc = [(cfg.gaf_side // (2 ** l), self.level_channels(l)) for l in range(cfg.depth)]
        bott = (cfg.gaf_side // (2 ** cfg.depth), self.level_channels(cfg.depth))
        dec = list(reversed(enc))
        return {"encoder": enc, "bottleneck": bott, "decoder": dec,
                "output": (cfg.gaf_side, cfg.num_classes)}

    # -- forward --------------------------------------------------------------

    def _double_conv(self, x, name):
        x = T.relu(T.conv2d(x, self.params[f"{name}a.w"], self.params[f"{name}a.b"], padding=1))
        return T.relu(T.conv2d(x, self.params[f"{name}b.w"], self.params[f"{name}b.b"], padding=1))

    def forward(self, batch):
        cfg = self.config
        if batch.data.ndim != 4:
            raise ShapeError(f"input must be 4-d [N,C,S,S], got shape {batch.shape}")
        if batch.shape[1] != cfg.in_channels:
            raise ShapeError(f"input must have {cfg.in_channels} channels "
                             f"(summation + difference field), got {batch.shape[1]}")
        if batch.shape[2] != cfg.gaf_side or batch.shape[3] != cfg.gaf_side:
            raise ShapeError(f"input spatial extent must be {cfg.gaf_side}, got {batch.shape[2:]}")

        skips = []
        x = batch
        for l in range(cfg.depth):
            x = self._double_conv(x, f"enc{l}")
            skips.append(x)
            x = T.maxpool2d(x)
        d = self._double_conv(x, "bott")

        for l in reversed(range(cfg.depth)):
            if cfg.use_agpe:
                gate = self.gates[l]
                x_lower = skips[l - 1] if gate.has_lower_neighbor else None
                x_upper = skips[l + 1] if gate.has_upper_neighbor else None
                skip, _ = agpe_forward(gate, skips[l], d, x_lower=x_lower, x_upper=x_upper)
            else:
                skip = skips[l]
            d = T.concat([T.upsample2d(d), skip], axis=1)
            d = self._double_conv(d, f"dec{l}")

        return T.conv2d(d, self.params["head.w"], self.params["head.b"])

    __call__ = forward


def build_model(config):
    cfg = config
    if cfg.depth < 2:
        raise ValueError(f"depth must be >= 2, got {cfg.depth}")
    if cfg.gaf_side % (2 ** cfg.depth) != 0:
        raise ValueError(f"input side {cfg.gaf_side} is not divisible by 2^depth = {2 ** cfg.depth}")

    model = NauNetModel(cfg)
    rng = np.random.default_rng(cfg.seed)
    spec = PeSpec(cfg.pe_function, cfg.pe_terms)

    in_ch = cfg.in_channels
    for l in range(cfg.depth):
        ch = model.level_channels(l)
        model._conv_param(rng, f"enc{l}a", ch, in_ch, 3)
        model._conv_param(rng, f"enc{l}b", ch, ch, 3)
        in_ch = ch
    ch_bott = model.level_channels(cfg.depth)
    model._conv_param(rng, "botta", ch_bott, in_ch, 3)
    model._conv_param(rng, "bottb", ch_bott, ch_bott, 3)

    if cfg.use_agpe:
        k_width = cfg.pe_terms if cfg.use_pe else 1
        for l in range(cfg.depth):
            ch = model.level_channels(l)
            f_int = ch
            gate = AgPeBlock(level=l, pe_spec=spec, use_pe=cfg.use_pe,
                             has_lower_neighbor=l > 0, has_upper_neighbor=l < cfg.depth - 1)
            gate.w_x = _gate_conv(model, rng, f"gate{l}.x", f_int, ch)
            if gate.has_lower_neighbor:
                gate.w_lower = _gate_conv(model, rng, f"gate{l}.lower", f_int,
                                          model.level_channels(l - 1))
            if gate.has_upper_neighbor:
                gate.w_upper = _gate_conv(model, rng, f"gate{l}.upper", f_int,
                                          model.level_channels(l + 1))
            g_ch = model.level_channels(l + 1)
            gate.w_g = _gate_conv(model, rng, f"gate{l}.g", f_int * k_width, g_ch)
            gate.b_g = model._add(f"gate{l}.bg", np.zeros(f_int * k_width))
            gate.w_psi = _gate_conv(model, rng, f"gate{l}.psi", 1, f_int * k_width)
            gate.b_psi = model._add(f"gate{l}.bpsi", np.zeros(1))
            gate._zero_bias = model._zero_bias(f_int)
            model.gates.append(gate)

    for l in range(cfg.depth):
        ch = model.level_channels(l)
        model._conv_param(rng, f"dec{l}a", ch, 2 * ch + ch, 3)
        model._conv_param(rng, f"dec{l}b", ch, ch, 3)
    model._conv_param(rng, "head", cfg.num_classes, cfg.base_filters, 1)
    return model


def _gate_conv(model, rng, name, cout, cin):
    limit = np.sqrt(6.0 / cin)
    return model._add(f"{name}.w", rng.uniform(-limit, limit, size=(cout, cin, 1, 1)))


# ---------------------------------------------------------------------------
# checkpoints: flat float32 little-endian blob + JSON manifest

def save_checkpoint(model, prefix):
    manifest = {"config": asdict(model.config), "params": {}}
    offset = 0
    chunks = []
    for name, p in model.params.items():
        manifest["params"][name] = {"offset": offset, "shape": list(p.data.shape)}
        chunks.append(p.data.astype("<f4").reshape(-1))
        offset += p.data.size
    np.concatenate(chunks).tofile(prefix + ".bin")
    with open(prefix + ".json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return prefix + ".json"


def load_checkpoint(prefix):
    with open(prefix + ".json") as fh:
        manifest = json.load(fh)
    model = build_model(ModelConfig(**manifest["config"]))
    blob = np.fromfile(prefix + ".bin", dtype="<f4")
    for name, meta in manifest["params"].items():
        if name not in model.params:
            raise ValueError(f"checkpoint parameter {name} not present in rebuilt model")
        shape = tuple(meta["shape"])
        n = int(np.prod(shape)) if shape else 1
        values = blob[meta["offset"]:meta["offset"] + n].astype(np.float64).reshape(shape)
        model.params[name].data = values
    return model
