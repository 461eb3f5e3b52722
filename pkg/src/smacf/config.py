"""Experiment configuration: a flat INI grammar mapped onto the estimators.

A config file has an ``[experiment]`` section naming the dataset, task,
trainer, split ratio, and seeds, a ``[train]`` section with the shared SGD
hyperparameters, and one optional trainer-specific section (``[sma_rating]``
or ``[topn]``). Every key can be overridden from the command line. Example::

    [experiment]
    dataset = data/ml-100k/u.data
    format = ml100k
    task = rating
    trainer = sma_rating
    ratio = 0.9
    seeds = 101, 202, 303

    [train]
    rank = 20
    lr = 0.001
    mu1 = 0.06
    mu2 = 0.06
    max_epochs = 250
    conv_eps = 0.0001
    clamp = 1, 5

    [sma_rating]
    K = 3
    p = 0.8
    lambdas = equal

``lambdas`` is either ``equal`` (all K+1 weights are 1/(K+1)) or an explicit
comma list of K+1 values; ``clamp`` is ``none`` or ``lo, hi``. A sweep is
declared with ``sweep_param``/``sweep_values`` in ``[experiment]``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .data import SEPARATORS
from .rating import RSVD, SMARating
from .topn import SMATopN
from .validation import ConfigError

TASKS = ("rating", "topn")
TRAINERS = {
    "rsvd": "rating",
    "sma_rating": "rating",
    "wma": "topn",
    "sma_topn_boundary": "topn",
    "sma_topn_random": "topn",
}
TOPN_MODES = {"wma": "wma", "sma_topn_boundary": "boundary", "sma_topn_random": "random"}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(text)


def _parse_clamp(text: str):
    if text.strip().lower() == "none":
        return None
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 2:
        raise ValueError(text)
    return (parts[0], parts[1])


def _parse_lambdas(text: str):
    if text.strip().lower() == "equal":
        return None
    return tuple(float(x) for x in text.split(","))


# key -> (caster, which tasks use it)
TRAIN_KEYS = {
    "rank": (int, ("rating", "topn")),
    "lr": (float, ("rating", "topn")),
    "mu1": (float, ("rating", "topn")),
    "mu2": (float, ("rating", "topn")),
    "max_epochs": (int, ("rating", "topn")),
    "conv_eps": (float, ("rating", "topn")),
    "init_scale": (float, ("rating", "topn")),
    "clamp": (_parse_clamp, ("rating",)),
    "center": (_parse_bool, ("rating",)),
    "eval_every": (int, ("topn",)),
    "eval_n": (int, ("topn",)),
}
SMA_RATING_KEYS = {"K": int, "p": float, "lambdas": _parse_lambdas}
TOPN_KEYS = {"loss": str.lower, "gamma": float, "w_pos": float, "w_neg": float,
             "lambda0": float, "lambda1": float}

# defaults per task (the topn task follows the binary-task recipe:
# lighter regularization, longer maximum horizon, no clamp)
TRAIN_DEFAULTS = {
    "rating": {"rank": 20, "lr": 0.001, "mu1": 0.06, "mu2": 0.06, "max_epochs": 250,
               "conv_eps": 1e-4, "init_scale": 0.01, "clamp": (1.0, 5.0), "center": False},
    "topn": {"rank": 100, "lr": 0.001, "mu1": 0.001, "mu2": 0.001, "max_epochs": 2000,
             "conv_eps": 1e-4, "init_scale": 0.01, "eval_every": 0, "eval_n": 10},
}
SMA_RATING_DEFAULTS = {"K": 3, "p": 0.8, "lambdas": None}
TOPN_DEFAULTS = {"loss": "exp", "gamma": 0.3, "w_pos": 1.0, "w_neg": 0.03,
                 "lambda0": 1.0, "lambda1": 1.0}

KNOWN_SECTIONS = ("experiment", "train", "sma_rating", "topn")

# what a sweep may vary, with its caster
SWEEPABLE = {
    "rank": int, "lr": float, "mu1": float, "mu2": float, "max_epochs": int,
    "K": int, "p": float, "gamma": float, "w_pos": float, "w_neg": float,
    "lambda0": float, "lambda1": float,
}


@dataclass
class ExperimentConfig:
    """A fully resolved experiment: dataset, pipeline shape, trainer params."""

    dataset: str
    fmt: str = "ml100k"
    task: str = "rating"
    trainer: str = "rsvd"
    ratio: float = 0.9
    seeds: tuple = (0,)
    params: dict = field(default_factory=dict)
    sweep_param: str | None = None
    sweep_values: tuple | None = None

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        """Parse an INI file; ``overrides`` maps ``section.key`` to raw strings."""
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            read = parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            if section not in KNOWN_SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
        if overrides:
            for dotted, raw in overrides.items():
                section, _, key = dotted.partition(".")
                if not parser.has_section(section):
                    parser.add_section(section)
                parser.set(section, key, raw)
        return cls._resolve(parser)

    @classmethod
    def _resolve(cls, parser) -> "ExperimentConfig":
        def get(section, key, cast, default=None, required=False):
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    return cast(raw)
                except (ValueError, TypeError):
                    raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from None
            if required:
                raise ConfigError(f"{section}.{key} is required")
            return default

        dataset = get("experiment", "dataset", str, required=True)
        fmt = get("experiment", "format", str.lower, "ml100k")
        if fmt not in SEPARATORS:
            raise ConfigError(f"experiment.format: unknown format {fmt!r}")
        task = get("experiment", "task", str.lower, "rating")
        if task not in TASKS:
            raise ConfigError(f"experiment.task: must be one of {TASKS}, got {task!r}")
        trainer = get("experiment", "trainer", str.lower, required=True)
        if trainer not in TRAINERS:
            raise ConfigError(
                f"experiment.trainer: must be one of {sorted(TRAINERS)}, got {trainer!r}")
        if TRAINERS[trainer] != task:
            raise ConfigError(
                f"experiment.trainer: {trainer!r} belongs to task {TRAINERS[trainer]!r}, "
                f"config says {task!r}")
        ratio = get("experiment", "ratio", float, 0.9)
        if not (0.0 < ratio < 1.0):
            raise ConfigError(f"experiment.ratio: must be in (0, 1), got {ratio}")
        seeds = get("experiment", "seeds",
                    lambda s: tuple(int(x) for x in s.split(",")), (0,))
        if not seeds:
            raise ConfigError("experiment.seeds: need at least one seed")

        params = dict(TRAIN_DEFAULTS[task])
        if parser.has_section("train"):
            for key in parser.options("train"):
                if key not in TRAIN_KEYS:
                    raise ConfigError(f"train.{key}: unknown key")
                cast, tasks = TRAIN_KEYS[key]
                if task not in tasks:
                    raise ConfigError(f"train.{key}: not valid for task {task!r}")
                params[key] = get("train", key, cast)

        if trainer == "sma_rating":
            params.update(SMA_RATING_DEFAULTS)
            if parser.has_section("sma_rating"):
                for key in parser.options("sma_rating"):
                    # configparser lowercases keys; K is declared uppercase
                    canonical = "K" if key == "k" else key
                    if canonical not in SMA_RATING_KEYS:
                        raise ConfigError(f"sma_rating.{key}: unknown key")
                    params[canonical] = get("sma_rating", key, SMA_RATING_KEYS[canonical])
        if task == "topn":
            params.update(TOPN_DEFAULTS)
            if parser.has_section("topn"):
                for key in parser.options("topn"):
                    if key not in TOPN_KEYS:
                        raise ConfigError(f"topn.{key}: unknown key")
                    params[key] = get("topn", key, TOPN_KEYS[key])
            params["mode"] = TOPN_MODES[trainer]

        sweep_param = get("experiment", "sweep_param", str, None)
        sweep_values = None
        if sweep_param is not None:
            if sweep_param not in SWEEPABLE:
                raise ConfigError(
                    f"experiment.sweep_param: cannot sweep {sweep_param!r} "
                    f"(choose from {sorted(SWEEPABLE)})")
            raw_values = get("experiment", "sweep_values", str, required=True)
            try:
                sweep_values = tuple(SWEEPABLE[sweep_param](v) for v in raw_values.split(","))
            except ValueError:
                raise ConfigError(
                    f"experiment.sweep_values: cannot parse {raw_values!r}") from None
            if not sweep_values:
                raise ConfigError("experiment.sweep_values: need at least one value")

        return cls(dataset=dataset, fmt=fmt, task=task, trainer=trainer, ratio=ratio,
                   seeds=seeds, params=params, sweep_param=sweep_param,
                   sweep_values=sweep_values)

    def to_dict(self) -> dict:
        """JSON-clean echo of the resolved configuration."""
        params = {}
        for key, value in self.params.items():
            params[key] = list(value) if isinstance(value, tuple) else value
        return {
            "dataset": self.dataset,
            "format": self.fmt,
            "task": self.task,
            "trainer": self.trainer,
            "ratio": self.ratio,
            "seeds": list(self.seeds),
            "params": params,
            "sweep": (
                {"param": self.sweep_param, "values": list(self.sweep_values)}
                if self.sweep_param else None),
        }

    def make_estimator(self, seed: int, param_override: dict | None = None):
        """Instantiate the configured trainer for one run seed."""
        params = dict(self.params)
        if param_override:
            params.update(param_override)
        if self.trainer == "rsvd":
            return RSVD(seed=seed, **params)
        if self.trainer == "sma_rating":
            return SMARating(seed=seed, **params)
        return SMATopN(seed=seed, **params)

    def replace_sweep_value(self, value) -> dict:
        """Param override dict for one sweep point."""
        return {self.sweep_param: value}
