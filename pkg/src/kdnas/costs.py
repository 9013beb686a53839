"""Analytic resource profiling: parameter counts, flops, and a latency proxy.

Conventions, shared with the trainer's model builder so the two totals agree
exactly:

  * one multiply-accumulate = 2 flops; a bias add = 1 flop per output element
  * convolutions use "same" padding, so H_out = ceil(H / stride)
  * block convolutions (stem, expand, depthwise, fused, project, tail input
    projection) carry no bias; squeeze-and-excite convolutions and the
    classifier affine do
  * normalization layers, activations and poolings cost nothing here; their
    parameters are likewise excluded from the count
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .space import ArchitectureSpec, BlockKind, ConvSlotSpec, SearchSpaceDef, TransformerTailSpec


@dataclass(frozen=True)
class LatencyModelConfig:
    """Linear latency proxy: seconds per flop, per parameter, and per layer.

    Stands in for on-device measurement; a measured latency reported by an
    evaluation backend overrides the proxy downstream.
    """

    per_flop: float = 1e-10
    per_param: float = 1e-9
    per_layer: float = 1e-4

    def __post_init__(self):
        if min(self.per_flop, self.per_param, self.per_layer) < 0:
            raise ValueError("latency coefficients must be non-negative")


@dataclass(frozen=True)
class TensorShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if min(self.height, self.width, self.channels) < 1:
            raise ValueError("tensor dimensions must be >= 1")


@dataclass(frozen=True)
class ResourceProfile:
    """Additive params/flops totals; latency_proxy is filled in by profile()."""

    params: int
    flops: int
    latency_proxy: float = 0.0

    def __post_init__(self):
        if self.params < 0 or self.flops < 0 or self.latency_proxy < 0:
            raise ValueError("resource totals must be non-negative")

    def __add__(self, other: "ResourceProfile") -> "ResourceProfile":
        return ResourceProfile(self.params + other.params, self.flops + other.flops,
                               self.latency_proxy + other.latency_proxy)


ZERO = ResourceProfile(0, 0)


def conv_cost(shape: TensorShape, kernel: int, out_channels: int, stride: int,
              groups: int = 1, bias: bool = False) -> tuple[ResourceProfile, TensorShape]:
    """Cost of one (grouped) convolution; returns the output shape too."""
    if shape.channels % groups != 0 or out_channels % groups != 0:
        raise ValueError(f"channels {shape.channels}->{out_channels} not divisible by "
                         f"groups {groups}")
    h_out = math.ceil(shape.height / stride)
    w_out = math.ceil(shape.width / stride)
    weight_params = kernel * kernel * (shape.channels // groups) * out_channels
    params = weight_params + (out_channels if bias else 0)
    flops = 2 * h_out * w_out * weight_params
    if bias:
        flops += h_out * w_out * out_channels
    return ResourceProfile(params, flops), TensorShape(h_out, w_out, out_channels)


def _se_cost(channels: int, base_channels: int, se_ratio: float) -> ResourceProfile:
    """Squeeze-and-excite over `channels`, bottleneck sized from `base_channels`.

    Both 1x1 maps run at 1x1 spatial size after the global pool; the pool
    itself is free under the counting convention.
    """
    hidden = max(1, math.floor(se_ratio * base_channels))
    squeezed = TensorShape(1, 1, channels)
    down, shape = conv_cost(squeezed, 1, hidden, 1, bias=True)
    up, _ = conv_cost(shape, 1, channels, 1, bias=True)
    return down + up


def mbconv_cost(shape: TensorShape, slot: ConvSlotSpec) -> tuple[ResourceProfile, TensorShape]:
    """Inverted bottleneck stack: expand, depthwise, optional SE, project.

    The slot stride applies to the first layer only; later layers repeat the
    structure at stride 1 with matched channels.
    """
    if slot.kind is not BlockKind.MBCONV:
        raise ValueError(f"mbconv_cost got slot kind {slot.kind}")
    total = ZERO
    for layer in range(slot.layers):
        stride = slot.stride if layer == 0 else 1
        c_in = shape.channels
        mid = slot.expansion * c_in
        layer_cost = ZERO
        if slot.expansion > 1:
            cost, shape = conv_cost(shape, 1, mid, 1)
            layer_cost += cost
        cost, shape = conv_cost(shape, slot.kernel, mid, stride, groups=mid)
        layer_cost += cost
        if slot.se_ratio > 0:
            layer_cost += _se_cost(mid, c_in, slot.se_ratio)
        cost, shape = conv_cost(shape, 1, slot.out_channels, 1)
        layer_cost += cost
        total += layer_cost
    return total, shape


def fused_mbconv_cost(shape: TensorShape,
                      slot: ConvSlotSpec) -> tuple[ResourceProfile, TensorShape]:
    """Fused variant: one full KxK conv replaces the expand/depthwise pair.

    With expansion 1 the block collapses to a single KxK conv straight to the
    output width (no projection); optional SE still applies to whatever width
    that conv produced.
    """
    if slot.kind is not BlockKind.FUSED_MBCONV:
        raise ValueError(f"fused_mbconv_cost got slot kind {slot.kind}")
    total = ZERO
    for layer in range(slot.layers):
        stride = slot.stride if layer == 0 else 1
        c_in = shape.channels
        layer_cost = ZERO
        if slot.expansion > 1:
            mid = slot.expansion * c_in
            cost, shape = conv_cost(shape, slot.kernel, mid, stride)
            layer_cost += cost
            if slot.se_ratio > 0:
                layer_cost += _se_cost(mid, c_in, slot.se_ratio)
            cost, shape = conv_cost(shape, 1, slot.out_channels, 1)
            layer_cost += cost
        else:
            cost, shape = conv_cost(shape, slot.kernel, slot.out_channels, stride)
            layer_cost += cost
            if slot.se_ratio > 0:
                layer_cost += _se_cost(slot.out_channels, c_in, slot.se_ratio)
        total += layer_cost
    return total, shape


def conv_slot_cost(shape: TensorShape, slot: ConvSlotSpec) -> tuple[ResourceProfile, TensorShape]:
    if not slot.active:
        return ZERO, shape
    if slot.kind is BlockKind.MBCONV:
        return mbconv_cost(shape, slot)
    return fused_mbconv_cost(shape, slot)


def transformer_tail_cost(shape: TensorShape, tail: TransformerTailSpec) -> ResourceProfile:
    """Tail cost: one 1x1 input projection, then `depth` identical blocks.

    Tokens are the H*W spatial positions. Per block: four d x d attention
    projections (with bias) plus the two N^2-sized attention matmuls, and a
    two-layer FFN of ratio r (with bias). Bias adds are not charged to the
    flop total here; only the matmuls are.
    """
    if tail.depth < 1:
        raise ValueError("transformer_tail_cost requires depth >= 1; skip inactive tails")
    n = shape.height * shape.width
    d = tail.embed_dim
    r = tail.mlp_ratio

    projection, _ = conv_cost(shape, 1, d, 1)

    attn_params = 4 * d * d + 4 * d
    attn_flops = 2 * n * (4 * d * d) + 2 * 2 * n * n * d
    ffn_params = 2 * r * d * d + (r + 1) * d
    ffn_flops = 2 * n * (2 * r * d * d)
    block = ResourceProfile(attn_params + ffn_params, attn_flops + ffn_flops)

    per_depth = ResourceProfile(block.params * tail.depth, block.flops * tail.depth)
    return projection + per_depth


def head_cost(hidden: int, num_classes: int) -> ResourceProfile:
    """Global average pool (free) plus one affine map with bias."""
    cost, _ = conv_cost(TensorShape(1, 1, hidden), 1, num_classes, 1, bias=True)
    return cost


def layer_count(arch: ArchitectureSpec) -> int:
    """Units for the per-layer latency term: stem, each repeated conv layer,
    each Transformer block, and the head."""
    return 1 + sum(s.layers for s in arch.conv_slots) + arch.tail.depth + 1


def profile(space: SearchSpaceDef, arch: ArchitectureSpec,
            latency: LatencyModelConfig | None = None) -> ResourceProfile:
    """Whole-network profile: stem + active slots + optional tail + head."""
    latency = latency if latency is not None else LatencyModelConfig()
    shape = TensorShape(space.input_resolution, space.input_resolution, 3)

    total, shape = conv_cost(shape, arch.stem.kernel, arch.stem.out_channels, arch.stem.stride)
    for slot in arch.conv_slots:
        cost, shape = conv_slot_cost(shape, slot)
        total += cost
    if arch.tail.active:
        total += transformer_tail_cost(shape, arch.tail)
    total += head_cost(arch.head.hidden, arch.head.num_classes)

    proxy = (latency.per_flop * total.flops + latency.per_param * total.params
             + latency.per_layer * layer_count(arch))
    return ResourceProfile(total.params, total.flops, proxy)
