"""Run configuration: a flat key=value file, every key overridable by a CLI
flag of the same name."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

DEFAULT_ETA = {"lr": 2.0, "nn": 1.0}


class ConfigError(ValueError):
    pass


@dataclass
class TrainingConfig:
    mode: str = "fdml"               # local | centralized | fdml
    model: str = "lr"                # lr | nn
    parties: int = 2
    tau: int = 8
    eta: float | None = None         # None -> per-model default
    lam: float = 1e-4
    batch: int = 100
    epochs: int = 40
    seed: int = 0
    hidden: int = 64
    reduction: str = "mean"          # sum | mean
    noise_mechanism: str = "none"    # none | laplace | gaussian
    noise_level: float = 0.0
    noise_seed: int = 0
    deterministic: bool = False
    use_bias: bool = True
    carrier: str = "inprocess"       # inprocess | socket
    partition_sizes: tuple | None = None  # e.g. (67, 57); None -> even split
    partition_file: str | None = None

    def __post_init__(self):
        if self.parties < 1:
            raise ConfigError("parties must be >= 1")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.batch < 1 or self.epochs < 0:
            raise ConfigError("batch must be >= 1 and epochs >= 0")
        if self.reduction not in ("sum", "mean"):
            raise ConfigError(f"unknown reduction {self.reduction!r}")
        if self.model not in ("lr", "nn"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.eta is not None and self.eta <= 0:
            raise ConfigError("eta must be > 0")

    @property
    def base_rate(self) -> float:
        return self.eta if self.eta is not None else DEFAULT_ETA[self.model]

    def with_overrides(self, **kw) -> "TrainingConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(name: str, raw: str):
    ftypes = {f.name: f.type for f in fields(TrainingConfig)}
    if name not in ftypes:
        raise ConfigError(f"unknown config key {name!r}")
    if name in ("eta",):
        return float(raw)
    if name in ("lam", "noise_level"):
        return float(raw)
    if name in ("parties", "tau", "batch", "epochs", "seed", "hidden", "noise_seed"):
        return int(raw)
    if name in ("deterministic", "use_bias"):
        try:
            return _BOOL[raw.strip().lower()]
        except KeyError:
            raise ConfigError(f"{name} must be a boolean, got {raw!r}") from None
    if name == "partition_sizes":
        return tuple(int(x) for x in raw.split(",") if x.strip())
    return raw


def read_config_file(path) -> dict:
    """Parse 'key = value' lines; '#' starts a comment."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            if key == "lambda":
                key = "lam"
            out[key] = _coerce(key, raw.strip())
    return out


def config_from_file(path) -> TrainingConfig:
    return TrainingConfig(**read_config_file(path))
