"""Flat key=value run configuration.

Every key has a default; unknown keys are rejected so typos fail loudly.
The declared descriptor_len must equal out_channels * out_rows.
"""

from __future__ import annotations

from dataclasses import dataclass

from .loss import LossConfig
from .mixer import AggregatorConfig
from .trainer import TrainConfig

__all__ = ["RunConfig", "RunConfigError", "load_run_config", "parse_run_config", "DEFAULTS"]


class RunConfigError(ValueError):
    pass


DEFAULTS = {
    # aggregator shape
    "depth": "2",
    "out_channels": "1024",
    "out_rows": "4",
    "hidden_ratio": "1",
    "input_norm": "false",
    "descriptor_len": "",  # empty = out_channels * out_rows
    # loss
    "alpha": "2.0",
    "beta": "50.0",
    "margin": "0.5",
    "mining": "hardest_margin",
    "epsilon": "0.1",
    # training
    "places_per_batch": "8",
    "images_per_place": "4",
    "epochs": "50",
    "lr0": "0.05",
    "lr_divisor": "3.0",
    "lr_period_epochs": "5",
    "momentum": "0.9",
    "weight_decay": "0.001",
    "seed": "0",
    # paths
    "manifest": "",
    "out": "",
}

_BOOLS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


@dataclass(frozen=True)
class RunConfig:
    aggregator: AggregatorConfig
    loss: LossConfig
    train: TrainConfig
    manifest: str
    out: str


def _to_bool(key, value):
    try:
        return _BOOLS[value.lower()]
    except KeyError:
        raise RunConfigError(f"{key}: expected a boolean, got {value!r}") from None


def parse_run_config(text, source="<config>"):
    values = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise RunConfigError(f"{source}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise RunConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()

    try:
        aggregator = AggregatorConfig(
            depth=int(values["depth"]),
            out_channels=int(values["out_channels"]),
            out_rows=int(values["out_rows"]),
            hidden_ratio=int(values["hidden_ratio"]),
            input_norm=_to_bool("input_norm", values["input_norm"]),
        )
        loss = LossConfig(
            alpha=float(values["alpha"]),
            beta=float(values["beta"]),
            margin=float(values["margin"]),
            mining=values["mining"],
            epsilon=float(values["epsilon"]),
        )
        train = TrainConfig(
            places_per_batch=int(values["places_per_batch"]),
            images_per_place=int(values["images_per_place"]),
            epochs=int(values["epochs"]),
            lr0=float(values["lr0"]),
            lr_divisor=float(values["lr_divisor"]),
            lr_period_epochs=int(values["lr_period_epochs"]),
            momentum=float(values["momentum"]),
            weight_decay=float(values["weight_decay"]),
            seed=int(values["seed"]),
        )
    except RunConfigError:
        raise
    except ValueError as exc:
        raise RunConfigError(f"{source}: {exc}") from exc

    declared = values["descriptor_len"]
    if declared:
        if int(declared) != aggregator.descriptor_len:
            raise RunConfigError(
                f"{source}: descriptor_len {declared} != out_channels*out_rows "
                f"= {aggregator.descriptor_len}"
            )
    return RunConfig(
        aggregator=aggregator,
        loss=loss,
        train=train,
        manifest=values["manifest"],
        out=values["out"],
    )


def load_run_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_run_config(fh.read(), source=str(path))
