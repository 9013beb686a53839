"""Hybrid conv/Transformer search space and its unit-hypercube encoding.

The space is factorized: seven convolutional slots (Fused-MBConv or MBConv,
each a stack of identical layers) followed by an optional Transformer tail,
then a pooling classifier head. Every searchable field has a finite menu, so
an architecture maps to a point in [0, 1]^d and back:

    decode: coordinate v on a k-way menu selects index floor(v * k), clamped.
    encode: menu index i maps to the bin center (i + 0.5) / k.

Decoding is total: every point in the hypercube yields a valid architecture
after canonicalization (inactive slots collapse to menu defaults, impossible
residual skips are dropped, an all-inactive backbone gets one forced layer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

NUM_CONV_SLOTS = 7

# Searchable fields in canonical encoding order (slot-major, then tail).
SLOT_FIELDS = ("kind", "layers", "kernel", "se_ratio", "skip", "expansion", "out_channels")
TAIL_FIELDS = ("depth", "embed_dim", "heads", "mlp_ratio")


class BlockKind(str, Enum):
    FUSED_MBCONV = "fused_mbconv"
    MBCONV = "mbconv"


class SkipKind(str, Enum):
    NONE = "none"
    RESIDUAL = "residual"


@dataclass(frozen=True)
class ConvSlotSpec:
    """One backbone slot: `layers` identical blocks (0 = slot inactive).

    `stride` applies to the first layer only and is fixed per slot position,
    not searched. A residual skip is applied per layer wherever that layer
    has stride 1 and equal input/output channels.
    """

    kind: BlockKind
    layers: int
    kernel: int
    se_ratio: float
    skip: SkipKind
    expansion: int
    out_channels: int
    stride: int

    @property
    def active(self) -> bool:
        return self.layers > 0


@dataclass(frozen=True)
class TransformerTailSpec:
    """Transformer stage appended after the conv backbone; depth 0 = unused."""

    depth: int
    embed_dim: int
    heads: int
    mlp_ratio: int

    def __post_init__(self):
        if self.depth > 0 and self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")

    @property
    def active(self) -> bool:
        return self.depth > 0


@dataclass(frozen=True)
class StemSpec:
    out_channels: int
    kernel: int = 3
    stride: int = 2


@dataclass(frozen=True)
class HeadSpec:
    """Classifier: global average pool followed by one affine map."""

    hidden: int
    num_classes: int


@dataclass(frozen=True)
class ArchitectureSpec:
    """A fully decoded candidate network."""

    stem: StemSpec
    conv_slots: tuple[ConvSlotSpec, ...]
    tail: TransformerTailSpec
    head: HeadSpec

    def active_slots(self) -> tuple[ConvSlotSpec, ...]:
        return tuple(s for s in self.conv_slots if s.active)

    def to_dict(self) -> dict:
        """Stable-key document used on the evaluator wire and in run history."""
        return {
            "stem": {"out_channels": self.stem.out_channels, "kernel": self.stem.kernel,
                     "stride": self.stem.stride},
            "conv_slots": [
                {"kind": s.kind.value, "layers": s.layers, "kernel": s.kernel,
                 "se_ratio": s.se_ratio, "skip": s.skip.value, "expansion": s.expansion,
                 "out_channels": s.out_channels, "stride": s.stride}
                for s in self.conv_slots
            ],
            "tail": {"depth": self.tail.depth, "embed_dim": self.tail.embed_dim,
                     "heads": self.tail.heads, "mlp_ratio": self.tail.mlp_ratio},
            "head": {"hidden": self.head.hidden, "num_classes": self.head.num_classes},
        }

    @staticmethod
    def from_dict(doc: dict) -> "ArchitectureSpec":
        stem = StemSpec(**doc["stem"])
        slots = tuple(
            ConvSlotSpec(kind=BlockKind(s["kind"]), layers=s["layers"], kernel=s["kernel"],
                         se_ratio=s["se_ratio"], skip=SkipKind(s["skip"]),
                         expansion=s["expansion"], out_channels=s["out_channels"],
                         stride=s["stride"])
            for s in doc["conv_slots"]
        )
        tail = TransformerTailSpec(**doc["tail"])
        head = HeadSpec(**doc["head"])
        return ArchitectureSpec(stem=stem, conv_slots=slots, tail=tail, head=head)


@dataclass(frozen=True)
class EncodedPoint:
    """Coordinates of a candidate in the optimizer's unit hypercube."""

    coords: tuple[float, ...]

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("encoded point has non-finite coordinates")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("encoded point has coordinates outside [0, 1]")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class SlotMenus:
    """Per-slot menus for every searchable field, plus the fixed stride."""

    out_channels: tuple[int, ...]
    stride: int
    kind: tuple[BlockKind, ...] = (BlockKind.FUSED_MBCONV, BlockKind.MBCONV)
    layers: tuple[int, ...] = (0, 1, 2, 3, 4)
    kernel: tuple[int, ...] = (3, 5)
    se_ratio: tuple[float, ...] = (0.0, 0.25)
    skip: tuple[SkipKind, ...] = (SkipKind.NONE, SkipKind.RESIDUAL)
    expansion: tuple[int, ...] = (1, 4, 6)


@dataclass(frozen=True)
class TailMenus:
    depth: tuple[int, ...] = tuple(range(13))
    embed_dim: tuple[int, ...] = (128, 192, 256)
    heads: tuple[int, ...] = (4, 8)
    mlp_ratio: tuple[int, ...] = (2, 4)


@dataclass(frozen=True)
class SearchSpaceDef:
    """Menus for all searchable fields; fixes the encoding dimensionality d."""

    slots: tuple[SlotMenus, ...]
    tail: TailMenus = field(default_factory=TailMenus)
    stem_out_channels: int = 16
    input_resolution: int = 32
    num_classes: int = 10

    def __post_init__(self):
        if len(self.slots) != NUM_CONV_SLOTS:
            raise ValueError(f"expected {NUM_CONV_SLOTS} conv slots, got {len(self.slots)}")


def default_space() -> SearchSpaceDef:
    """The shipped space: MnasNet-style factorized menus scaled for 32-px inputs.

    Channel menus widen stage by stage; slots 2, 4 and 6 downsample.
    """
    channel_menus = [
        (16, 24, 32, 48),
        (24, 32, 48, 64),
        (32, 48, 64, 96),
        (48, 64, 96, 128),
        (64, 96, 128, 192),
        (96, 128, 192, 256),
        (160, 192, 256, 320),
    ]
    strides = [1, 2, 1, 2, 1, 2, 1]
    slots = tuple(SlotMenus(out_channels=ch, stride=st) for ch, st in zip(channel_menus, strides))
    return SearchSpaceDef(slots=slots)


def field_menus(space: SearchSpaceDef) -> list[tuple[str, tuple]]:
    """All searchable (name, menu) pairs in canonical encoding order."""
    out: list[tuple[str, tuple]] = []
    for i, slot in enumerate(space.slots):
        for name in SLOT_FIELDS:
            out.append((f"slot{i + 1}.{name}", getattr(slot, name)))
    for name in TAIL_FIELDS:
        out.append((f"tail.{name}", getattr(space.tail, name)))
    return out


def dimensionality(space: SearchSpaceDef) -> int:
    """Number of searchable fields; the length of every encoded point."""
    menus = field_menus(space)
    for name, menu in menus:
        if len(menu) == 0:
            raise ValueError(f"empty menu for searchable field {name}")
    return len(menus)


def _menu_index(value: float, size: int) -> int:
    return min(int(math.floor(value * size)), size - 1)


def _coords_to_indices(space: SearchSpaceDef, coords: np.ndarray) -> list[int]:
    return [_menu_index(v, len(menu)) for v, (_, menu) in zip(coords, field_menus(space))]


def decode(space: SearchSpaceDef, point: EncodedPoint | np.ndarray) -> ArchitectureSpec:
    """Map a hypercube point to its canonical architecture. Total on [0, 1]^d."""
    coords = point.array if isinstance(point, EncodedPoint) else np.asarray(point, dtype=float)
    d = dimensionality(space)
    if coords.shape != (d,):
        raise ValueError(f"expected {d} coordinates, got shape {coords.shape}")
    if np.any(np.isnan(coords)):
        raise ValueError("NaN coordinate in encoded point")
    if np.any(coords < 0.0) or np.any(coords > 1.0):
        raise ValueError("coordinate outside [0, 1]")

    idx = iter(_coords_to_indices(space, coords))

    raw_slots = []
    for menus in space.slots:
        values = {name: getattr(menus, name)[next(idx)] for name in SLOT_FIELDS}
        raw_slots.append(ConvSlotSpec(stride=menus.stride, **values))
    tail_values = {name: getattr(space.tail, name)[next(idx)] for name in TAIL_FIELDS}

    return _canonicalize(space, raw_slots, tail_values)


def _inactive_slot(menus: SlotMenus) -> ConvSlotSpec:
    return ConvSlotSpec(
        kind=menus.kind[0], layers=0, kernel=menus.kernel[0], se_ratio=menus.se_ratio[0],
        skip=menus.skip[0], expansion=menus.expansion[0], out_channels=menus.out_channels[0],
        stride=menus.stride,
    )


def _canonicalize(space: SearchSpaceDef, raw_slots: list[ConvSlotSpec],
                  tail_values: dict) -> ArchitectureSpec:
    # Inactive slots ignore their other fields: pin them to menu defaults.
    slots = [s if s.active else _inactive_slot(m) for s, m in zip(raw_slots, space.slots)]

    # The backbone must do some work: an all-inactive decode revives slot 1.
    if not any(s.active for s in slots):
        slots[0] = replace(_inactive_slot(space.slots[0]), layers=1)

    # Walk the channel chain; a residual skip that no layer could ever carry
    # (single layer with a stride or a channel change) canonicalizes to none.
    in_ch = space.stem_out_channels
    for i, s in enumerate(slots):
        if not s.active:
            continue
        if s.skip is SkipKind.RESIDUAL and s.layers == 1 and (
                s.stride != 1 or in_ch != s.out_channels):
            slots[i] = s = replace(s, skip=SkipKind.NONE)
        in_ch = s.out_channels
    backbone_out = in_ch

    depth = tail_values["depth"]
    if depth == 0:
        tail = TransformerTailSpec(depth=0, embed_dim=space.tail.embed_dim[0],
                                   heads=space.tail.heads[0], mlp_ratio=space.tail.mlp_ratio[0])
    else:
        tail = TransformerTailSpec(**tail_values)

    head = HeadSpec(hidden=tail.embed_dim if tail.active else backbone_out,
                    num_classes=space.num_classes)
    stem = StemSpec(out_channels=space.stem_out_channels)
    return ArchitectureSpec(stem=stem, conv_slots=tuple(slots), tail=tail, head=head)


def encode(space: SearchSpaceDef, arch: ArchitectureSpec) -> EncodedPoint:
    """Map an architecture to the bin centers of its menu choices.

    Inverse of decode on canonical architectures: decode(encode(a)) == a.
    """
    coords: list[float] = []
    for i, (slot, menus) in enumerate(zip(arch.conv_slots, space.slots)):
        if slot.stride != menus.stride:
            raise ValueError(f"slot {i + 1} stride {slot.stride} differs from the fixed "
                             f"schedule value {menus.stride}")
        for name in SLOT_FIELDS:
            coords.append(_field_coord(f"slot{i + 1}.{name}", getattr(slot, name),
                                       getattr(menus, name)))
    for name in TAIL_FIELDS:
        coords.append(_field_coord(f"tail.{name}", getattr(arch.tail, name),
                                   getattr(space.tail, name)))
    return EncodedPoint(coords=tuple(coords))


def _field_coord(name: str, value, menu: tuple) -> float:
    try:
        i = menu.index(value)
    except ValueError:
        raise ValueError(f"value {value!r} for field {name} is not in its menu {menu}") from None
    return (i + 0.5) / len(menu)


def random_arch(space: SearchSpaceDef, rng_seed: int) -> ArchitectureSpec:
    """Uniform independent menu choice per field, then canonicalization."""
    rng = np.random.default_rng(rng_seed)
    return decode(space, rng.random(dimensionality(space)))


def validate_arch(space: SearchSpaceDef, arch: ArchitectureSpec) -> None:
    """Raise if `arch` violates the structural invariants of this space."""
    if len(arch.conv_slots) != NUM_CONV_SLOTS:
        raise ValueError(f"expected {NUM_CONV_SLOTS} conv slots, got {len(arch.conv_slots)}")
    if not any(s.active for s in arch.conv_slots):
        raise ValueError("no active conv slot")
    expected_hidden = arch.tail.embed_dim if arch.tail.active else \
        arch.active_slots()[-1].out_channels
    if arch.head.hidden != expected_hidden:
        raise ValueError(f"head hidden width {arch.head.hidden} does not match the "
                         f"backbone output width {expected_hidden}")
