"""Sectioned key-value run configuration (INI syntax).

One section per stage; every key maps onto a dataclass field. ``[run] seed``
seeds every stage so a single number reproduces a whole pipeline::

    [run]
    seed = 3

    [generate]
    n_patients = 400
    intervals = periodic:0.5, aperiodic:3, lab:12

    [train]
    lr_grid = 0.001, 0.003

Lists are comma separated; ``none`` clears an optional value.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import types
import typing
from pathlib import Path

from .eval.experiment import ExperimentConfig
from .eval.probes import ProbeConfig
from .synthdata import GeneratorConfig


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class PreprocessConfig:
    replicates: int = 5
    min_fraction: float = 0.1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not 0 <= self.min_fraction <= 1:
            raise ValueError("min_fraction must lie in [0, 1]")


TRAIN_KEYS = ("m", "T", "lr_grid", "activation_grid", "hidden", "max_epochs", "patience",
              "batch_patients", "batch_records")
EVALUATE_KEYS = ("models", "directions", "tasks", "fractions", "raw_layers", "curve_models")


@dataclasses.dataclass
class RunConfig:
    seed: int
    generate: GeneratorConfig
    preprocess: PreprocessConfig
    experiment: ExperimentConfig
    text: str
    digest: str


def _parse_scalar(raw: str, tp):
    if tp is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return tp(raw)


def _parse(raw: str, tp):
    raw = raw.strip()
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.lower() == "none":
            return None
        return _parse(raw, args[0])
    if origin is tuple:
        elem = typing.get_args(tp)[0]
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(_parse(s, elem) for s in items)
    if origin is dict or tp is dict:
        out = {}
        for item in raw.split(","):
            key, sep, value = item.partition(":")
            if not sep:
                raise ValueError(f"expected key:value pairs, got {item!r}")
            out[key.strip()] = float(value)
        return out
    return _parse_scalar(raw, tp)


def _build(cls, section: dict[str, str], name: str, allowed=None, **fixed):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    allowed = set(allowed) if allowed is not None else names - set(fixed)
    kwargs = dict(fixed)
    for key, raw in section.items():
        if key not in allowed:
            raise ConfigError(f"[{name}] unknown key {key!r}; expected one of {sorted(allowed)}")
        try:
            kwargs[key] = _parse(raw, hints[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}] {key} = {raw!r}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


SECTIONS = ("run", "generate", "preprocess", "train", "probe", "evaluate")


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str   # keys are case sensitive (T)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config is not valid INI: {exc}") from None
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}; expected {list(SECTIONS)}")
    sec = {s: dict(cp[s]) if cp.has_section(s) else {} for s in SECTIONS}
    run = dict(sec["run"])
    try:
        seed = int(run.pop("seed", "0"))
    except ValueError:
        raise ConfigError("[run] seed must be an integer") from None
    if run:
        raise ConfigError(f"[run] unknown keys {sorted(run)}; only 'seed' is accepted")
    gen = _build(GeneratorConfig, sec["generate"], "generate", seed=seed)
    try:
        gen.validate()
    except ValueError as exc:
        raise ConfigError(f"[generate] {exc}") from None
    pre = _build(PreprocessConfig, sec["preprocess"], "preprocess")
    probe = _build(ProbeConfig, sec["probe"], "probe", seed=seed)
    merged = {**sec["train"], **sec["evaluate"]}
    for key in sec["train"]:
        if key not in TRAIN_KEYS:
            raise ConfigError(f"[train] unknown key {key!r}; expected one of {list(TRAIN_KEYS)}")
    for key in sec["evaluate"]:
        if key not in EVALUATE_KEYS:
            raise ConfigError(f"[evaluate] unknown key {key!r}; "
                              f"expected one of {list(EVALUATE_KEYS)}")
    exp = _build(ExperimentConfig, merged, "train/evaluate", TRAIN_KEYS + EVALUATE_KEYS,
                 probe=probe, seed=seed)
    return RunConfig(seed, gen, pre, exp, text, hashlib.sha256(text.encode()).hexdigest())


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, dict):
        return ", ".join(f"{k}:{_fmt(v)}" for k, v in value.items())
    if value is None:
        return "none"
    return str(value)


def render_defaults() -> str:
    """Every key with its default, as a ready-to-edit config file."""
    gen, pre, exp = GeneratorConfig(), PreprocessConfig(), ExperimentConfig()
    lines = ["[run]", "seed = 0", "", "[generate]"]
    lines += [f"{f.name} = {_fmt(getattr(gen, f.name))}" for f in dataclasses.fields(gen)
              if f.name != "seed"]
    lines += ["", "[preprocess]"]
    lines += [f"{f.name} = {_fmt(getattr(pre, f.name))}" for f in dataclasses.fields(pre)]
    lines += ["", "[train]"] + [f"{k} = {_fmt(getattr(exp, k))}" for k in TRAIN_KEYS]
    lines += ["", "[probe]"]
    lines += [f"{f.name} = {_fmt(getattr(exp.probe, f.name))}"
              for f in dataclasses.fields(exp.probe) if f.name != "seed"]
    lines += ["", "[evaluate]"] + [f"{k} = {_fmt(getattr(exp, k))}" for k in EVALUATE_KEYS]
    return "\n".join(lines) + "\n"
