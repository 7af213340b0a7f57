"""Flat ``key = value`` run configuration. Keys mirror CLI flags; flags override the file."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError("empty number list")
    return vals


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    input_size: int = 352
    cfp_variant: str = "regular"
    cfp_fusion: str = "concat"
    base_channels: int = 16
    channels: int = 32
    small_threshold: float = 0.05
    interval_width: float = 0.005
    lr: float = 1e-4
    scales: tuple[float, ...] = (0.75, 1.0, 1.25)
    epochs: int = 20
    batch_size: int = 4
    train_ratio: float = 0.8
    clip: float | None = None

    def __post_init__(self):
        if self.cfp_variant not in ("regular", "asymmetric"):
            raise ConfigError(f"cfp-variant must be regular or asymmetric, got {self.cfp_variant!r}")
        if self.cfp_fusion not in ("concat", "sum"):
            raise ConfigError(f"cfp-fusion must be concat or sum, got {self.cfp_fusion!r}")
        if self.input_size <= 0 or self.epochs < 0 or self.batch_size <= 0:
            raise ConfigError("input-size and batch-size must be positive, epochs non-negative")
        if self.lr <= 0 or self.interval_width <= 0:
            raise ConfigError("lr and interval-width must be positive")
        if not 0 < self.small_threshold <= 1:
            raise ConfigError("small-threshold must lie in (0, 1]")

    def updated(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_FIELDS = {f.name: f for f in fields(RunConfig)}


def parse_value(key: str, text: str):
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text.lower() in ("", "none") else float(text)
        if kind == "tuple[float, ...]":
            return _floats(text)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None
    return text


def parse_config(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        values[key] = parse_value(key, value)
    return values


def load_config(path: str | Path | None, **flags) -> RunConfig:
    """File values first, then any non-None flag on top."""
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        values = parse_config(text, str(p))
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        lines.append(f"{name.replace('_', '-')} = {v}")
    return "\n".join(lines) + "\n"
