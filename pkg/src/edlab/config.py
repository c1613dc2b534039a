"""Run configuration: TOML-backed sections with fixed defaults, dotted-key
overrides, and a byte-stable echo writer so every run directory records
exactly the configuration that produced it.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["RunConfig", "load_config", "parse_override", "config_toml"]


@dataclass
class LossConfig:
    kind: str = "ed"
    t: float = 1.0
    m: int = 4
    w: float = 1.0
    eps: float = 0.05
    step_size: float = 0.1


@dataclass
class ModelConfig:
    hidden: int = 128
    layers: int = 4
    activation: str = "softplus"


@dataclass
class DataConfig:
    name: str = "gauss25"
    batch: int = 256


@dataclass
class TrainConfig:
    iters: int = 50_000
    lr: float = 0.001
    seed: int = 0


@dataclass
class EvalConfig:
    grid: int = 100
    logz_n: int = 5000
    eval_every: int = 1000


@dataclass
class SampleConfig:
    langevin_steps: int = 100
    langevin_step_size: float = 0.1
    n: int = 1000


@dataclass
class RunConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)

    def set_key(self, dotted: str, value) -> None:
        """Apply one section.key override with type coercion against the
        default's type."""
        try:
            section_name, key = dotted.split(".", 1)
            section = getattr(self, section_name)
            current = getattr(section, key)
        except (ValueError, AttributeError):
            raise KeyError(f"unknown config key {dotted!r}") from None
        target = type(current)
        if target is bool:
            value = value in (True, "true", "1")
        elif target is int:
            value = int(value)
        elif target is float:
            value = float(value)
        else:
            value = str(value)
        setattr(section, key, value)


VALID_LOSS_KINDS = ("ed", "ed-discrete", "cd", "sm", "dsm")


def parse_override(item: str) -> tuple[str, str]:
    """Split one --set key=value argument."""
    if "=" not in item:
        raise ValueError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    return key.strip(), value.strip()


def load_config(path: str | None = None, overrides: list[str] | None = None,
                seed: int | None = None) -> tuple[RunConfig, set[str]]:
    """Defaults, then the TOML file, then --set overrides, then --seed.
    Returns the config plus the set of dotted keys that were touched."""
    cfg = RunConfig()
    touched: set[str] = set()
    if path is not None:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        for section, table in doc.items():
            if not isinstance(table, dict):
                raise KeyError(f"top-level config entry {section!r} must be a section")
            for key, value in table.items():
                cfg.set_key(f"{section}.{key}", value)
                touched.add(f"{section}.{key}")
    for item in overrides or []:
        key, value = parse_override(item)
        cfg.set_key(key, value)
        touched.add(key)
    if seed is not None:
        cfg.train.seed = int(seed)
        touched.add("train.seed")
    if cfg.loss.kind not in VALID_LOSS_KINDS:
        raise ValueError(f"unknown loss kind {cfg.loss.kind!r}")
    return cfg, touched


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def config_toml(cfg: RunConfig) -> str:
    """Deterministic TOML echo (fixed section and key order)."""
    out = []
    for f in fields(cfg):
        section = getattr(cfg, f.name)
        out.append(f"[{f.name}]")
        for key, value in asdict(section).items():
            out.append(f"{key} = {_toml_value(value)}")
        out.append("")
    return "\n".join(out)
