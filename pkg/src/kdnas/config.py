"""Config file parsing: the search-space definition and the run configuration.

Both files use the same plain key-value text format: one `key = value` entry
per line, `#` comments, values either scalars or comma-separated lists.
Dotted keys group related entries (`slot3.kernel = 3, 5`,
`optimizer.batch_size = 4`).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .costs import LatencyModelConfig
from .objective import TeacherBudget
from .space import (
    NUM_CONV_SLOTS,
    BlockKind,
    SearchSpaceDef,
    SkipKind,
    SlotMenus,
    TailMenus,
    default_space,
)
from .turbo import OptimizerConfig


class ConfigError(ValueError):
    """A config file is missing, malformed, or inconsistent."""


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, list[str]]:
    """Parse `key = value[, value...]` lines into raw string tokens."""
    entries: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        tokens = [t.strip() for t in value.split(",")]
        if any(not t for t in tokens):
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        entries[key] = tokens
    return entries


def _scalar(entries: dict[str, list[str]], key: str, convert, default=None):
    if key not in entries:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    tokens = entries.pop(key)
    if len(tokens) != 1:
        raise ConfigError(f"key {key!r} expects a single value, got {len(tokens)}")
    try:
        return convert(tokens[0])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def _list(entries: dict[str, list[str]], key: str, convert) -> tuple:
    if key not in entries:
        raise ConfigError(f"missing required key {key!r}")
    tokens = entries.pop(key)
    try:
        return tuple(convert(t) for t in tokens)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def _as_bool(token: str) -> bool:
    lowered = token.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {token!r}")


# ---------------------------------------------------------------------------
# Search-space files
# ---------------------------------------------------------------------------

def load_space(path: str | Path) -> SearchSpaceDef:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read space file {path}: {exc}") from None
    return space_from_text(text, source=str(path))


def space_from_text(text: str, source: str = "<space>") -> SearchSpaceDef:
    entries = parse_kv_text(text, source=source)
    input_resolution = _scalar(entries, "input_resolution", int, default=32)
    num_classes = _scalar(entries, "num_classes", int, default=10)
    stem_out = _scalar(entries, "stem.out_channels", int, default=16)

    slots = []
    for i in range(1, NUM_CONV_SLOTS + 1):
        prefix = f"slot{i}."
        slots.append(SlotMenus(
            stride=_scalar(entries, prefix + "stride", int),
            kind=_list(entries, prefix + "kind", BlockKind),
            layers=_list(entries, prefix + "layers", int),
            kernel=_list(entries, prefix + "kernel", int),
            se_ratio=_list(entries, prefix + "se_ratio", float),
            skip=_list(entries, prefix + "skip", SkipKind),
            expansion=_list(entries, prefix + "expansion", int),
            out_channels=_list(entries, prefix + "out_channels", int),
        ))
    tail = TailMenus(
        depth=_list(entries, "tail.depth", int),
        embed_dim=_list(entries, "tail.embed_dim", int),
        heads=_list(entries, "tail.heads", int),
        mlp_ratio=_list(entries, "tail.mlp_ratio", int),
    )
    if entries:
        raise ConfigError(f"{source}: unknown keys {sorted(entries)}")
    return SearchSpaceDef(slots=tuple(slots), tail=tail, stem_out_channels=stem_out,
                          input_resolution=input_resolution, num_classes=num_classes)


def space_to_text(space: SearchSpaceDef) -> str:
    """Serialize a space back to the key-value format accepted by load_space."""
    lines = [
        "# kdnas search-space definition",
        f"input_resolution = {space.input_resolution}",
        f"num_classes = {space.num_classes}",
        f"stem.out_channels = {space.stem_out_channels}",
        "",
    ]
    for i, slot in enumerate(space.slots, start=1):
        lines.append(f"slot{i}.stride = {slot.stride}")
        lines.append(f"slot{i}.kind = " + ", ".join(k.value for k in slot.kind))
        lines.append(f"slot{i}.layers = " + ", ".join(map(str, slot.layers)))
        lines.append(f"slot{i}.kernel = " + ", ".join(map(str, slot.kernel)))
        lines.append(f"slot{i}.se_ratio = " + ", ".join(repr(v) for v in slot.se_ratio))
        lines.append(f"slot{i}.skip = " + ", ".join(s.value for s in slot.skip))
        lines.append(f"slot{i}.expansion = " + ", ".join(map(str, slot.expansion)))
        lines.append(f"slot{i}.out_channels = " + ", ".join(map(str, slot.out_channels)))
        lines.append("")
    lines.append("tail.depth = " + ", ".join(map(str, space.tail.depth)))
    lines.append("tail.embed_dim = " + ", ".join(map(str, space.tail.embed_dim)))
    lines.append("tail.heads = " + ", ".join(map(str, space.tail.heads)))
    lines.append("tail.mlp_ratio = " + ", ".join(map(str, space.tail.mlp_ratio)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProxyConfig:
    """Proxy-task settings forwarded to the trainer worker with each request."""

    data_fraction: float = 0.25
    epochs: int = 2
    temperature: float = 1.0
    alpha: float = 0.7
    orth_lambda: float = 1e-4

    def __post_init__(self):
        if not 0 < self.data_fraction <= 1:
            raise ValueError("data_fraction must be in (0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    space: SearchSpaceDef
    optimizer: OptimizerConfig
    budget: TeacherBudget | None  # None: derive from the space's mid-point arch
    evaluations: int = 200
    epsilon: float = 0.01
    backend: str = "synthetic"
    worker_cmd: str = ""
    worker_timeout: float = 3600.0
    latency: LatencyModelConfig = field(default_factory=LatencyModelConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    out_dir: str = "kdnas-run"
    record_walltime: bool = False

    def __post_init__(self):
        if self.evaluations < self.optimizer.n_init * self.optimizer.n_regions:
            raise ValueError("evaluation budget must cover initialization: "
                             f"{self.evaluations} < n_init * n_regions = "
                             f"{self.optimizer.n_init * self.optimizer.n_regions}")
        if self.backend not in ("synthetic", "subprocess"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "subprocess" and not self.worker_cmd:
            raise ValueError("subprocess backend requires worker.command")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def load_run_config(path: str | Path, base_dir: str | Path | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return run_config_from_text(text, source=str(path),
                                base_dir=base_dir if base_dir is not None else path.parent)


def run_config_from_text(text: str, source: str = "<run>",
                         base_dir: str | Path = ".") -> RunConfig:
    entries = parse_kv_text(text, source=source)

    space_path = _scalar(entries, "space", str, default="")
    if space_path:
        space = load_space(Path(base_dir) / space_path)
    else:
        space = default_space()

    optimizer = OptimizerConfig(
        n_init=_scalar(entries, "optimizer.n_init", int, default=10),
        n_regions=_scalar(entries, "optimizer.n_regions", int, default=3),
        batch_size=_scalar(entries, "optimizer.batch_size", int, default=4),
        candidates_per_proposal=_scalar(entries, "optimizer.candidates_per_proposal",
                                        int, default=0) or None,
        success_tolerance=_scalar(entries, "optimizer.success_tolerance", int, default=2),
        failure_tolerance=_scalar(entries, "optimizer.failure_tolerance", int, default=2),
        length_init=_scalar(entries, "optimizer.length_init", float, default=0.4),
        length_min=_scalar(entries, "optimizer.length_min", float, default=0.1),
        length_max=_scalar(entries, "optimizer.length_max", float, default=0.8),
        seed=_scalar(entries, "seed", int, default=0),
    )

    budget = None
    if any(k.startswith("teacher.") for k in entries):
        budget = TeacherBudget(
            np_teacher=_scalar(entries, "teacher.params", int),
            flops_teacher=_scalar(entries, "teacher.flops", int),
            latency_teacher=_scalar(entries, "teacher.latency", float),
            acc_target=_scalar(entries, "teacher.acc_target", float),
        )

    latency = LatencyModelConfig(
        per_flop=_scalar(entries, "latency.per_flop", float, default=1e-10),
        per_param=_scalar(entries, "latency.per_param", float, default=1e-9),
        per_layer=_scalar(entries, "latency.per_layer", float, default=1e-4),
    )
    proxy = ProxyConfig(
        data_fraction=_scalar(entries, "proxy.data_fraction", float, default=0.25),
        epochs=_scalar(entries, "proxy.epochs", int, default=2),
        temperature=_scalar(entries, "proxy.temperature", float, default=1.0),
        alpha=_scalar(entries, "proxy.alpha", float, default=0.7),
        orth_lambda=_scalar(entries, "proxy.orth_lambda", float, default=1e-4),
    )

    try:
        cfg = RunConfig(
            space=space,
            optimizer=optimizer,
            budget=budget,
            evaluations=_scalar(entries, "budget", int, default=200),
            epsilon=_scalar(entries, "epsilon", float, default=0.01),
            backend=_scalar(entries, "backend", str, default="synthetic"),
            worker_cmd=_scalar(entries, "worker.command", str, default=""),
            worker_timeout=_scalar(entries, "worker.timeout", float, default=3600.0),
            latency=latency,
            proxy=proxy,
            out_dir=_scalar(entries, "out", str, default="kdnas-run"),
            record_walltime=_scalar(entries, "record_walltime", _as_bool, default=False),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if entries:
        raise ConfigError(f"{source}: unknown keys {sorted(entries)}")
    return cfg


# ---------------------------------------------------------------------------
# Checkpoint round trip
# ---------------------------------------------------------------------------

def run_config_to_dict(cfg: RunConfig) -> dict:
    """JSON-friendly snapshot of a resolved run config (space embedded)."""
    return {
        "space_text": space_to_text(cfg.space),
        "optimizer": dataclasses.asdict(cfg.optimizer),
        "budget": None if cfg.budget is None else dataclasses.asdict(cfg.budget),
        "evaluations": cfg.evaluations,
        "epsilon": cfg.epsilon,
        "backend": cfg.backend,
        "worker_cmd": cfg.worker_cmd,
        "worker_timeout": cfg.worker_timeout,
        "latency": dataclasses.asdict(cfg.latency),
        "proxy": dataclasses.asdict(cfg.proxy),
        "out_dir": cfg.out_dir,
        "record_walltime": cfg.record_walltime,
    }


def run_config_from_dict(doc: dict) -> RunConfig:
    budget = None if doc["budget"] is None else TeacherBudget(**doc["budget"])
    return RunConfig(
        space=space_from_text(doc["space_text"], source="<checkpoint>"),
        optimizer=OptimizerConfig(**doc["optimizer"]),
        budget=budget,
        evaluations=doc["evaluations"],
        epsilon=doc["epsilon"],
        backend=doc["backend"],
        worker_cmd=doc["worker_cmd"],
        worker_timeout=doc["worker_timeout"],
        latency=LatencyModelConfig(**doc["latency"]),
        proxy=ProxyConfig(**doc["proxy"]),
        out_dir=doc["out_dir"],
        record_walltime=doc["record_walltime"],
    )
