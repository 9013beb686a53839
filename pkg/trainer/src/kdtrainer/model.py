"""Builds runnable student networks from the architecture documents on the wire.

The builder mirrors the search engine's cost conventions so the two parameter
totals can be reconciled exactly:

  * block convolutions (stem, expand, depthwise, fused, project, tail input
    projection) carry no bias; squeeze-and-excite convolutions and the
    classifier affine do
  * attention uses four d x d projections with bias, the FFN two biased
    linears of ratio r
  * normalization affine parameters exist in the network but are excluded
    from the convention-matched count

The architecture document is the plain dict produced by the search engine:
stem / conv_slots / tail / head, plus input_resolution.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .losses import conv1x1_view, linear_view


class SqueezeExcite(nn.Module):
    """Channel gate: pooled bottleneck of two biased 1x1 convolutions."""

    def __init__(self, channels: int, hidden: int):
        super().__init__()
        self.reduce = nn.Conv2d(channels, hidden, 1, bias=True)
        self.expand = nn.Conv2d(hidden, channels, 1, bias=True)
        self.act = nn.SiLU()

    def forward(self, x):
        gate = x.mean(dim=(2, 3), keepdim=True)
        gate = self.expand(self.act(self.reduce(gate)))
        return x * torch.sigmoid(gate)


def _conv_bn_act(c_in: int, c_out: int, kernel: int, stride: int, groups: int = 1,
                 act: bool = True) -> nn.Sequential:
    layers = [nn.Conv2d(c_in, c_out, kernel, stride=stride, padding=kernel // 2,
                        groups=groups, bias=False),
              nn.BatchNorm2d(c_out)]
    if act:
        layers.append(nn.SiLU())
    return nn.Sequential(*layers)


class MBConvLayer(nn.Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, expansion: int,
                 se_ratio: float, use_residual: bool):
        super().__init__()
        mid = expansion * c_in
        self.expand = _conv_bn_act(c_in, mid, 1, 1) if expansion > 1 else None
        self.depthwise = _conv_bn_act(mid, mid, kernel, stride, groups=mid)
        self.se = SqueezeExcite(mid, max(1, math.floor(se_ratio * c_in))) \
            if se_ratio > 0 else None
        self.project = _conv_bn_act(mid, c_out, 1, 1, act=False)
        self.residual = use_residual and stride == 1 and c_in == c_out

    def forward(self, x):
        out = self.expand(x) if self.expand is not None else x
        out = self.depthwise(out)
        if self.se is not None:
            out = self.se(out)
        out = self.project(out)
        return x + out if self.residual else out


class FusedMBConvLayer(nn.Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, expansion: int,
                 se_ratio: float, use_residual: bool):
        super().__init__()
        se_hidden = max(1, math.floor(se_ratio * c_in))
        if expansion > 1:
            mid = expansion * c_in
            self.fused = _conv_bn_act(c_in, mid, kernel, stride)
            self.se = SqueezeExcite(mid, se_hidden) if se_ratio > 0 else None
            self.project = _conv_bn_act(mid, c_out, 1, 1, act=False)
        else:
            self.fused = _conv_bn_act(c_in, c_out, kernel, stride)
            self.se = SqueezeExcite(c_out, se_hidden) if se_ratio > 0 else None
            self.project = None
        self.residual = use_residual and stride == 1 and c_in == c_out

    def forward(self, x):
        out = self.fused(x)
        if self.se is not None:
            out = self.se(out)
        if self.project is not None:
            out = self.project(out)
        return x + out if self.residual else out


class Ffn(nn.Module):
    """Position-wise feed-forward pair; its linears are orthogonality targets."""

    def __init__(self, dim: int, ratio: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, ratio * dim)
        self.fc2 = nn.Linear(ratio * dim, dim)
        self.act = nn.GELU()

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ratio: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = Ffn(dim, ratio)

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.ffn(self.norm2(x))


class StudentNet(nn.Module):
    """Stem, conv slots, optional Transformer tail, pooled classifier."""

    def __init__(self, arch: dict, num_classes: int):
        super().__init__()
        stem = arch["stem"]
        self.stem = _conv_bn_act(3, stem["out_channels"], stem["kernel"], stem["stride"])

        layers: list[nn.Module] = []
        c = stem["out_channels"]
        for slot in arch["conv_slots"]:
            if slot["layers"] == 0:
                continue
            cls = MBConvLayer if slot["kind"] == "mbconv" else FusedMBConvLayer
            for i in range(slot["layers"]):
                layers.append(cls(
                    c_in=c, c_out=slot["out_channels"], kernel=slot["kernel"],
                    stride=slot["stride"] if i == 0 else 1, expansion=slot["expansion"],
                    se_ratio=slot["se_ratio"], use_residual=slot["skip"] == "residual"))
                c = slot["out_channels"]
        self.backbone = nn.Sequential(*layers)

        tail = arch["tail"]
        if tail["depth"] > 0:
            dim = tail["embed_dim"]
            self.tail_proj = nn.Conv2d(c, dim, 1, bias=False)
            self.tail_blocks = nn.ModuleList(
                TransformerBlock(dim, tail["heads"], tail["mlp_ratio"])
                for _ in range(tail["depth"]))
            self.tail_norm = nn.LayerNorm(dim)
            c = dim
        else:
            self.tail_proj = None
            self.tail_blocks = None
            self.tail_norm = None

        head = arch["head"]
        if head["hidden"] != c:
            raise ValueError(f"head width {head['hidden']} does not match the backbone "
                             f"output width {c}")
        self.head = nn.Linear(c, num_classes, bias=True)

    def forward(self, x):
        x = self.backbone(self.stem(x))
        if self.tail_proj is not None:
            x = self.tail_proj(x)
            x = x.flatten(2).transpose(1, 2)  # (batch, tokens, dim)
            for block in self.tail_blocks:
                x = block(x)
            x = self.tail_norm(x).mean(dim=1)
        else:
            x = x.mean(dim=(2, 3))
        return self.head(x)

    def orth_weight_views(self) -> list[torch.Tensor]:
        """Every 1x1 convolution kernel and FFN matrix, and nothing else."""
        views = []
        for module in self.modules():
            if isinstance(module, nn.Conv2d) and module.kernel_size == (1, 1):
                views.append(conv1x1_view(module.weight))
            elif isinstance(module, Ffn):
                views.append(linear_view(module.fc1.weight))
                views.append(linear_view(module.fc2.weight))
        return views


def param_counts(model: nn.Module) -> dict[str, int]:
    """Two totals: everything, and the convention-matched count that excludes
    normalization affine parameters (what the analytic cost model counts)."""
    full = sum(p.numel() for p in model.parameters())
    norm = sum(p.numel() for m in model.modules()
               if isinstance(m, (nn.BatchNorm2d, nn.LayerNorm))
               for p in m.parameters(recurse=False))
    return {"full": full, "convention": full - norm}


def build_model(arch: dict, num_classes: int | None = None,
                input_res: int | None = None) -> tuple[StudentNet, dict[str, int]]:
    """Instantiate the document's network; returns (model, parameter totals).

    A forward shape check runs once at build time: a canonical architecture
    from the search engine can never fail it.
    """
    num_classes = num_classes if num_classes is not None else arch["head"]["num_classes"]
    input_res = input_res if input_res is not None else arch.get("input_resolution", 32)
    model = StudentNet(arch, num_classes)
    with torch.no_grad():
        out = model(torch.zeros(1, 3, input_res, input_res))
    if out.shape != (1, num_classes):
        raise ValueError(f"forward produced {tuple(out.shape)}, "
                         f"expected (1, {num_classes})")
    return model, param_counts(model)
