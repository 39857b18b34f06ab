"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key is optional; see
``FIELDS`` for the accepted names, types and defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from . import ckks
from .data import default_mnist_dir
from .flcore import TrainConfig
from .ledger import GAS_PRICE_AVG, GAS_PRICE_MIN
from .simnet import DatasetSpec, ExperimentPlan, Mode


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _mode(text: str) -> str:
    return Mode(text.lower()).value


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


@dataclass(frozen=True)
class RunConfig:
    n_clients: int = 30
    rounds: int = 20
    selection_mode: str = "optimized"
    selection_count: int = 0  # 0 means use selection_fraction
    selection_fraction: float = 0.2
    encryption: bool = False
    seed: int = 0
    learning_rate: float = 0.01
    batch_size: int = 10
    momentum: float = 0.9
    local_epochs: int = 1
    eta_global: float = 1.0
    hidden: tuple[int, ...] = ()
    unreliable_fraction: float = 0.3
    dataset: str = "mnist"
    mnist_dir: str = ""
    train_size: int = 5000
    test_size: int = 1000
    classes: int = 10
    feature_dim: int = 32
    separation: float = 3.0
    ckks_preset: str = "full"
    gas_price_min: float = GAS_PRICE_MIN
    gas_price_avg: float = GAS_PRICE_AVG
    min_compute: float = 300.0
    min_bandwidth: float = 120.0
    min_data_size: int = 0
    data_type: str = "image"
    budget: int = 1_000_000_000
    security_deposit: int = 10_000_000
    closing_time: float = 600.0
    early_stop: bool = False
    output_dir: str = "out"
    record_wall_time: bool = False
    scenario: str = ""
    base_dir: str = "."

    def validate(self) -> RunConfig:
        if self.ckks_preset not in ckks.PRESETS:
            raise ConfigError(f"unknown ckks_preset {self.ckks_preset!r}; known: {', '.join(ckks.PRESETS)}")
        for name in ("mnist_dir", "scenario"):
            value = getattr(self, name)
            if value and not self.resolve(value).exists():
                raise ConfigError(f"{name} does not exist: {self.resolve(value)}")
        self.to_plan()
        return self

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def out_dir(self) -> Path:
        env = os.environ.get("FEDCHAIN_OUT")
        return Path(env) if env else self.resolve(self.output_dir)

    def dataset_spec(self) -> DatasetSpec:
        kind, mnist_dir = self.dataset, None
        if kind == "mnist":
            if self.mnist_dir:
                mnist_dir = str(self.resolve(self.mnist_dir))
            elif default_mnist_dir() is None:
                kind = "synthetic"
        return DatasetSpec(kind, mnist_dir, self.train_size, self.test_size, self.classes,
                           self.feature_dim, self.separation)

    def to_plan(self) -> ExperimentPlan:
        try:
            return ExperimentPlan(
                n_clients=self.n_clients,
                rounds=self.rounds,
                selection_mode=Mode(self.selection_mode),
                selection_count=self.selection_count or None,
                selection_fraction=self.selection_fraction,
                encryption=self.encryption,
                seed=self.seed,
                train_config=TrainConfig(self.learning_rate, self.batch_size, self.momentum,
                                         self.local_epochs, self.seed),
                eta_global=self.eta_global,
                hidden=self.hidden,
                unreliable_fraction=self.unreliable_fraction,
                dataset=self.dataset_spec(),
                ckks_preset=self.ckks_preset,
                gas_price=self.gas_price_avg,
                min_compute=self.min_compute,
                min_bandwidth=self.min_bandwidth,
                min_data_size=self.min_data_size,
                data_type=self.data_type,
                budget=self.budget,
                security_deposit=self.security_deposit,
                closing_time=self.closing_time,
                early_stop=self.early_stop,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_PARSERS = {"int": int, "float": float, "str": str, "bool": _bool, "tuple[int, ...]": _int_list}
FIELDS = {f.name: (f.type, f.default) for f in fields(RunConfig) if f.name != "base_dir"}
_SPECIAL = {"selection_mode": _mode, "dataset": _choice("mnist", "synthetic")}


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    values: dict[str, object] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in FIELDS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        parse = _SPECIAL.get(key) or _PARSERS[FIELDS[key][0]]
        try:
            values[key] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"line {n}: bad value for {key} ({exc})") from None
    return RunConfig(base_dir=base_dir, **values)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, base_dir=".").validate()
