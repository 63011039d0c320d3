"""Model checkpoints: a directory holding one tensor file per weight plus a
flat key=value snapshot of the shape config (model.cfg). Inspectable with
the `inspect` CLI command; nothing bespoke.
"""

from __future__ import annotations

import os

import numpy as np

from .mixer import AggregatorModel, MixerBlock, ProjectionHead
from .tensorfile import read_tensor, write_tensor

__all__ = ["save_checkpoint", "load_checkpoint", "MODEL_CONFIG_NAME"]

MODEL_CONFIG_NAME = "model.cfg"


def _write_kv(path, items):
    lines = [f"{k}={v}" for k, v in items]
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _read_kv(path):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def save_checkpoint(directory, model):
    os.makedirs(directory, exist_ok=True)
    for name, weight in model.parameters().items():
        write_tensor(os.path.join(directory, f"{name}.vprt"), weight.astype(np.float32, copy=False))
    _write_kv(
        os.path.join(directory, MODEL_CONFIG_NAME),
        [
            ("channels", model.channels),
            ("grid_h", model.grid_h),
            ("grid_w", model.grid_w),
            ("depth", model.depth),
            ("out_channels", model.out_channels),
            ("out_rows", model.out_rows),
            ("input_norm", str(model.input_norm).lower()),
        ],
    )


def load_checkpoint(directory):
    cfg = _read_kv(os.path.join(directory, MODEL_CONFIG_NAME))
    depth = int(cfg["depth"])
    blocks = []
    for i in range(depth):
        blocks.append(
            MixerBlock(
                w1=read_tensor(os.path.join(directory, f"block{i}.w1.vprt")),
                w2=read_tensor(os.path.join(directory, f"block{i}.w2.vprt")),
            )
        )
    head = ProjectionHead(
        w_depth=read_tensor(os.path.join(directory, "head.w_depth.vprt")),
        w_row=read_tensor(os.path.join(directory, "head.w_row.vprt")),
    )
    return AggregatorModel(
        channels=int(cfg["channels"]),
        grid_h=int(cfg["grid_h"]),
        grid_w=int(cfg["grid_w"]),
        blocks=blocks,
        head=head,
        input_norm=cfg.get("input_norm", "false") == "true",
    )
