"""Run configuration: sectioned ``key = value`` files with flag overrides.

Defaults come from the config dataclasses themselves, so the file format,
``--help`` listing and the library agree by construction.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from typing import Any

from .augment import AugmentConfig
from .data import SynthConfig
from .graph import LabelSpec
from .model import ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


# model keys that come from the dataset rather than the config file
_DERIVED_MODEL_KEYS = ("input_dim", "output_dim")


def _defaults(cls, skip=()) -> dict[str, Any]:
    return {f.name: f.default for f in dataclasses.fields(cls) if f.name not in skip}


DEFAULTS: dict[str, dict[str, Any]] = {
    "data": {
        "edges": "",
        "features": "",
        "subgraphs": "",
        "task_kind": "",
        "num_classes": 0,
        "split": (0.7, 0.15, 0.15),
        "split_seed": 0,
    },
    "synth": _defaults(SynthConfig),
    "augment": _defaults(AugmentConfig),
    "model": _defaults(ModelConfig, skip=_DERIVED_MODEL_KEYS),
    "train": _defaults(TrainConfig),
    "ablate": {
        "strategies": ("drop_node", "drop_edge", "drop_edge_sub", "plain", "multi_view"),
        "seeds": (0, 1, 2, 3, 4, 5, 6, 7, 8, 9),
        "metric_split": "test",
        "jobs": 1,
    },
    "gradcheck": {
        "instances": 20,
        "max_nodes": 12,
        "step": 1e-5,
        "tolerance": 1e-4,
        "seed": 0,
    },
}

# keys whose default is None but hold ints when set
_OPTIONAL_INT = {("train", "early_stop_patience")}
# tuple-valued keys and their element type
_TUPLE_TYPES = {
    ("data", "split"): float,
    ("model", "head_hidden_dims"): int,
    ("ablate", "strategies"): str,
    ("ablate", "seeds"): int,
}

DOCS = {
    ("data", "edges"): "edge-list file (empty: synthesize from [synth])",
    ("data", "features"): "feature file (optional)",
    ("data", "subgraphs"): "subgraph JSON Lines file",
    ("data", "task_kind"): "multiclass | multilabel (empty: infer from labels)",
    ("data", "num_classes"): "class count (0: infer)",
    ("data", "split"): "train,val,test fractions for unsplit datasets",
    ("augment", "in_place"): "none | graph | subgraph",
    ("train", "optimizer"): "adam | sgd_momentum",
    ("ablate", "strategies"): "subset of drop_node,drop_edge,drop_edge_sub,plain,multi_view",
}


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0,3,5"`` or ranges ``"0..9"`` (inclusive), comma-combinable."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError("empty seed list")
    return tuple(out)


def _parse(section: str, key: str, text: str):
    default = DEFAULTS[section][key]
    text = text.strip()
    try:
        if (section, key) in _OPTIONAL_INT:
            return None if text.lower() in ("", "none") else int(text)
        if (section, key) in _TUPLE_TYPES:
            if (section, key) == ("ablate", "seeds"):
                return parse_seeds(text)
            elem = _TUPLE_TYPES[(section, key)]
            return tuple(elem(x.strip()) for x in text.split(",") if x.strip())
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {text!r}")
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as err:
        raise ConfigError(f"[{section}] {key}: {err}") from None


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


class RunConfig:
    """Effective configuration for one command invocation."""

    def __init__(self, values: dict[str, dict[str, Any]] | None = None):
        self.values = {s: dict(d) for s, d in DEFAULTS.items()}
        for section, items in (values or {}).items():
            for key, val in items.items():
                self.set(section, key, val)

    def set(self, section: str, key: str, value) -> None:
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        if key not in DEFAULTS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        self.values[section][key] = _parse(section, key, value) if isinstance(value, str) else value

    def get(self, section: str, key: str):
        return self.values[section][key]

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as err:
            raise ConfigError(f"{path}: {err}") from None
        cfg = cls()
        for section in parser.sections():
            for key, val in parser.items(section):
                cfg.set(section, key, val)
        return cfg

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, items in self.values.items():
            parser[section] = {k: _format(v) for k, v in items.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def validate(self) -> None:
        """Build every typed config once so errors surface before any work."""
        try:
            self.augment_config()
            self.train_config()
            self.synth_config()
            self.model_config(1, 2)
            self.label_spec()
            frac = self.get("data", "split")
            if len(frac) != 3 or min(frac) <= 0 or abs(sum(frac) - 1) > 1e-9:
                raise ValueError("[data] split must be three positive fractions summing to 1")
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from None

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(**self.values["augment"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.values["train"])

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**self.values["synth"])

    def model_config(self, input_dim: int, output_dim: int) -> ModelConfig:
        return ModelConfig(input_dim=input_dim, output_dim=output_dim, **self.values["model"])

    def label_spec(self) -> LabelSpec | None:
        kind, c = self.get("data", "task_kind"), self.get("data", "num_classes")
        if not kind:
            return None
        return LabelSpec(kind, c)


def describe_defaults() -> str:
    """Every config key with its default, for ``--help``."""
    lines = ["configuration keys (section.key = default):"]
    for section, items in DEFAULTS.items():
        for key, val in items.items():
            doc = DOCS.get((section, key))
            line = f"  {section}.{key} = {_format(val)}"
            lines.append(f"{line}    # {doc}" if doc else line)
    return "\n".join(lines)
