"""Run configuration: one TOML file, every key defaulted, unknown keys rejected.

Layout (all sections optional)::

    seed = 0
    [synth]   [attack1] .. [attack4]   [split]   [adasyn]   [train]   [paths]

``--set section.key=value`` overrides are parsed as TOML values, so
``--set train.baselines='["CnnGru"]'`` and ``--set synth.n_days=30`` work.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import sys
from dataclasses import dataclass, fields
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .attacks import AttackParams
from .detector import Architecture, DetectorConfig
from .nn import TrainConfig
from .prep import AdasynConfig, SplitConfig
from .synth import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AdasynSection:
    enabled: bool = True
    k_neighbors: int = 5
    target_ratio: float = 1.0


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    min_delta: float = 0.0
    val_fraction: float = 0.1
    forward: str = "probabilities"
    baselines: tuple[str, ...] = ("MLP", "GRU", "CNN", "CnnGru")
    threshold: float = 0.5
    epochs_stage1: int = 100
    epochs_stage2: int = 100
    epochs_stage3: int = 100
    epochs_mlp: int = 100
    epochs_gru: int = 100
    epochs_cnn: int = 100
    epochs_cnngru: int = 100


@dataclass(frozen=True)
class PathsSection:
    out_dir: str = "runs"


_ATTACK_KEYS = {
    1: ("b_range", "p_range", "min_window_hours"),
    2: ("alpha", "beta"),
    3: ("alpha_range", "beta_range"),
    4: ("m1_range", "m2_range"),
}

# section -> (dataclass holding defaults, exposed keys)
SECTIONS: dict[str, tuple[type, tuple[str, ...]]] = {
    "synth": (
        SynthConfig,
        ("n_customers", "n_days", "start_date", "c_max_range", "temp_coefficient", "stc_irradiance", "n_locations"),
    ),
    **{f"attack{a}": (AttackParams, keys) for a, keys in _ATTACK_KEYS.items()},
    "split": (SplitConfig, ("train_fraction", "stratify_by_label")),
    "adasyn": (AdasynSection, tuple(f.name for f in fields(AdasynSection))),
    "train": (TrainSection, tuple(f.name for f in fields(TrainSection))),
    "paths": (PathsSection, ("out_dir",)),
}

DOCS = {
    "seed": "global seed; every random draw derives from it",
    "synth.n_customers": "number of synthetic customers",
    "synth.n_days": "days per customer",
    "synth.start_date": "first simulated date",
    "synth.c_max_range": "uniform range of contracted max generation C_max (kWh/h)",
    "synth.temp_coefficient": "PV power temperature coefficient per degree C above 25",
    "synth.stc_irradiance": "irradiance at standard test conditions (W/m2)",
    "synth.n_locations": "number of weather locations shared by customers",
    "attack1.b_range": "intermittent attack: positive-slot scale b_t range",
    "attack1.p_range": "intermittent attack: negative-slot C_max fraction p_t range",
    "attack1.min_window_hours": "intermittent attack: shortest attack window",
    "attack2.alpha": "fixed scaling: positive-reading factor",
    "attack2.beta": "fixed scaling: negative-reading factor",
    "attack3.alpha_range": "time-varying scaling: range of alpha_t",
    "attack3.beta_range": "time-varying scaling: range of beta_t",
    "attack4.m1_range": "history attack: range of M1_t",
    "attack4.m2_range": "history attack: range of M2_t",
    "split.train_fraction": "training share of the train/test split",
    "split.stratify_by_label": "keep the class ratio equal in both parts",
    "adasyn.enabled": "balance the training set with ADASYN",
    "adasyn.k_neighbors": "ADASYN neighbourhood size",
    "adasyn.target_ratio": "minority/majority ratio after balancing",
    "train.batch_size": "mini-batch size",
    "train.lr": "Adam learning rate",
    "train.beta1": "Adam first-moment decay",
    "train.beta2": "Adam second-moment decay",
    "train.eps": "Adam epsilon",
    "train.patience": "early-stopping patience in epochs",
    "train.min_delta": "minimum validation-loss improvement",
    "train.val_fraction": "share of the training set held out for early stopping",
    "train.forward": "what a stage passes on: probabilities | penultimate",
    "train.baselines": "baselines trained by train/e2e (MLP, GRU, CNN, CnnGru)",
    "train.threshold": "decision threshold on p_malicious",
    "train.epochs_stage1": "max epochs, stage 1",
    "train.epochs_stage2": "max epochs, stage 2",
    "train.epochs_stage3": "max epochs, stage 3",
    "train.epochs_mlp": "max epochs, MLP baseline",
    "train.epochs_gru": "max epochs, GRU baseline",
    "train.epochs_cnn": "max epochs, CNN baseline",
    "train.epochs_cnngru": "max epochs, CnnGru baseline",
    "paths.out_dir": "parent directory of run directories",
}


def _defaults() -> dict[str, dict[str, Any]]:
    out = {}
    for section, (cls, keys) in SECTIONS.items():
        proto = cls(attack_id=int(section[-1])) if cls is AttackParams else cls()
        out[section] = {k: getattr(proto, k) for k in keys}
    return out


DEFAULTS = _defaults()


def _coerce(name: str, value, default):
    """Convert a TOML value to the type of ``default``."""
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if isinstance(default, dt.date):
            if isinstance(value, str):
                return dt.date.fromisoformat(value)
            if isinstance(value, dt.date) and not isinstance(value, dt.datetime):
                return value
            raise TypeError
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)) or len(value) == 0:
                raise TypeError
            if all(isinstance(d, str) for d in default):
                if not all(isinstance(v, str) for v in value):
                    raise TypeError
                return tuple(value)
            if len(value) != len(default) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise TypeError
            return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"{name}: expected {_type_name(default)}, got {value!r}")


def _type_name(default) -> str:
    if isinstance(default, bool):
        return "a boolean"
    if isinstance(default, int):
        return "an integer"
    if isinstance(default, float):
        return "a number"
    if isinstance(default, dt.date):
        return "a date (YYYY-MM-DD)"
    if isinstance(default, tuple):
        return "a list of strings" if all(isinstance(d, str) for d in default) else f"a list of {len(default)} numbers"
    return "a string"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    values: dict = dataclasses.field(default_factory=lambda: json.loads(json.dumps(DEFAULTS, default=str)))

    def __post_init__(self):
        # normalise through coercion so dates/tuples have their real types
        clean = {}
        for section, keys in DEFAULTS.items():
            given = self.values.get(section, {})
            clean[section] = {k: _coerce(f"{section}.{k}", given.get(k, d), d) for k, d in keys.items()}
        object.__setattr__(self, "values", clean)
        try:
            self.synth_config(), self.attack_params(), self.split_config(), self.adasyn_config()
            self.detector_config()
            self.baseline_train_configs()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    # module configs ---------------------------------------------------------

    def synth_config(self) -> SynthConfig:
        return SynthConfig(seed=self.seed, **self.values["synth"])

    def attack_params(self) -> dict[int, AttackParams]:
        return {a: AttackParams(attack_id=a, **self.values[f"attack{a}"]) for a in _ATTACK_KEYS}

    def split_config(self) -> SplitConfig:
        return SplitConfig(seed=self.seed, **self.values["split"])

    def adasyn_config(self) -> AdasynConfig | None:
        a = self.values["adasyn"]
        if not a["enabled"]:
            return None
        return AdasynConfig(k_neighbors=a["k_neighbors"], target_ratio=a["target_ratio"], seed=self.seed)

    def _train_config(self, epochs: int) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(
            batch_size=t["batch_size"],
            max_epochs=epochs,
            patience=t["patience"],
            min_delta=t["min_delta"],
            lr=t["lr"],
            beta1=t["beta1"],
            beta2=t["beta2"],
            eps=t["eps"],
            val_fraction=t["val_fraction"],
            seed=self.seed,
        )

    def detector_config(self) -> DetectorConfig:
        t = self.values["train"]
        stages = tuple(self._train_config(t[f"epochs_stage{i}"]) for i in (1, 2, 3))
        return DetectorConfig(stages, t["forward"], t["val_fraction"], self.seed)

    def baseline_train_configs(self) -> dict[Architecture, TrainConfig]:
        t = self.values["train"]
        out = {}
        for name in t["baselines"]:
            try:
                arch = Architecture(name)
            except ValueError:
                raise ConfigError(f"train.baselines: unknown architecture {name!r}") from None
            out[arch] = self._train_config(t[f"epochs_{arch.value.lower()}"])
        return out

    @property
    def threshold(self) -> float:
        return self.values["train"]["threshold"]

    # serialisation ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {"seed": self.seed, **json.loads(json.dumps(self.values, default=str))}

    def to_toml(self) -> str:
        lines = [f"seed = {self.seed}", ""]
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            for k, v in keys.items():
                lines.append(f"{k} = {_toml_value(v)}")
            lines.append("")
        return "\n".join(lines)

    @property
    def hash(self) -> str:
        # where outputs go does not change what is computed
        data = {k: v for k, v in self.to_dict().items() if k != "paths"}
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def with_overrides(self, assignments: list[str]) -> "RunConfig":
        data = {"seed": self.seed, **{s: dict(v) for s, v in self.values.items()}}
        for item in assignments:
            _apply_assignment(data, item)
        return from_dict(data)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, dt.date):
        return v.isoformat()
    if isinstance(v, tuple):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return json.dumps(v)


def _apply_assignment(data: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw  # bare strings need no quotes
    if key == "seed":
        data["seed"] = value
        return
    section, _, name = key.partition(".")
    if section not in DEFAULTS or name not in DEFAULTS[section]:
        raise ConfigError(f"unknown config key {key!r}")
    data[section][name] = value


def from_dict(data: dict) -> RunConfig:
    data = dict(data)
    seed = data.pop("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
    for section, keys in data.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(keys, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(keys) - set(DEFAULTS[section])
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    return RunConfig(seed, data)


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    cfg = from_dict(data)
    return cfg.with_overrides(overrides) if overrides else cfg


def describe_keys() -> str:
    """Every key with its default, for --help."""
    rows = [("seed", "0", DOCS["seed"])]
    for section, keys in DEFAULTS.items():
        for k, d in keys.items():
            rows.append((f"{section}.{k}", _toml_value(d), DOCS[f"{section}.{k}"]))
    width = max(len(r[0]) for r in rows)
    dwidth = max(len(r[1]) for r in rows)
    return "\n".join(f"  {k:<{width}}  {d:<{dwidth}}  {doc}" for k, d, doc in rows)

