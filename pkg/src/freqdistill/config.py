"""Run configuration: flat ``key = value`` files layered under CLI overrides."""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .losses import DistillMode
from .models import ARCHS


class ConfigError(ValueError):
    pass


def _default_data_dir() -> str:
    return os.environ.get("FREQDISTILL_DATA", "data")


@dataclass
class RunConfig:
    dataset: str = "sbm"
    data_dir: str = field(default_factory=_default_data_dir)
    normalize_features: bool = True
    random_split: bool = False
    split_per_class: int = 20
    split_val: int = 500
    split_test: int = 1000

    arch: str = "gcn"
    num_layers: int = 2
    hidden_dim: int = 256
    dropout: float = 0.5
    gat_heads: int = 8
    gat_slope: float = 0.2

    mode: str = "ff-g2m"
    lam: float = 0.5
    tau1: float = 1.0
    tau2: float = 1.0
    literal_denominator: bool = False

    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 500
    patience: int = 0  # 0 disables early stopping

    seeds: list = field(default_factory=lambda: [0])
    output: str = "runs"
    teacher: str = ""
    auto_train: bool = False
    checkpoint: str = ""
    jobs: int = 1

    sbm_blocks: int = 2
    sbm_nodes_per_block: int = 30
    sbm_p_in: float = 0.5
    sbm_p_out: float = 0.02
    sbm_feature_dim: int = 8
    sbm_feature_noise: float = 1.0
    sbm_seed: int = 0

    synthetic: bool = False
    spectra_orders: list = field(default_factory=lambda: [1, 2, 3])
    spectra_points: int = 201
    histogram_bins: int = 20
    eigen_cap: int = 4000

    def validate(self) -> "RunConfig":
        if self.arch.lower() not in ARCHS or self.arch.lower() == "mlp":
            raise ConfigError(f"invalid teacher arch {self.arch!r}; choose gcn, sage or gat")
        self.arch = self.arch.lower()
        try:
            DistillMode(self.mode)
        except ValueError:
            raise ConfigError(f"invalid mode {self.mode!r}; choose from "
                              f"{[m.value for m in DistillMode]}") from None
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ConfigError("temperatures must be positive")
        if self.num_layers < 1 or self.hidden_dim < 1 or self.epochs < 1:
            raise ConfigError("num_layers, hidden_dim and epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_HINTS = typing.get_type_hints(RunConfig)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_seeds(text) -> list[int]:
    """``"5"`` means five seeds 0..4; ``"3,7"`` lists seeds explicitly."""
    if isinstance(text, list):
        return [int(s) for s in text]
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    if len(parts) == 1:
        count = int(parts[0])
        if count < 1:
            raise ConfigError("seed count must be >= 1")
        return list(range(count))
    return [int(p) for p in parts]


def coerce(key: str, raw):
    if key not in _HINTS:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    hint = _HINTS[key]
    try:
        if key == "seeds":
            return parse_seeds(raw)
        if key == "spectra_orders":
            return [int(p) for p in raw.split(",") if p.strip()]
        if hint is bool:
            return _parse_bool(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None
    return raw.strip()


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            out[key] = coerce(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{lineno}: {exc}") from None
    return out


def builtin_defaults(dataset: str) -> dict:
    """Shipped per-dataset settings, if any."""
    name = f"{dataset.lower()}.cfg"
    ref = resources.files("freqdistill") / "configs" / name
    if not ref.is_file():
        return {}
    return parse_config_text(ref.read_text(), origin=name)


def resolve(overrides: dict, config_file: str | None = None) -> RunConfig:
    """Defaults < shipped dataset file < ``config_file`` < ``overrides``."""
    layered = {}
    file_values = parse_config_text(Path(config_file).read_text(), config_file) if config_file else {}
    dataset = overrides.get("dataset") or file_values.get("dataset") or RunConfig.dataset
    layered.update(builtin_defaults(dataset))
    layered.update(file_values)
    layered.update({k: coerce(k, v) for k, v in overrides.items()})
    try:
        cfg = RunConfig(**layered)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def replace(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **changes)
