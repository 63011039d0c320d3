"""Mixer aggregation head: token grid reshape, residual MLP mixing blocks,
depth/row projections, flatten + L2 normalization, and the analytic
backward pass for every learnable weight.

Shape conventions (row-major throughout):
  tokens       (C, D)   C patch tokens of embedding length D
  feature maps (s, h, w) with s = D and h*w = C; flat view (s, n), n = h*w
  mixer block  w1 (ratio*n, n), w2 (n, ratio*n); per row x: x + w2 @ relu(w1 @ x)
  projections  w_depth (d, s) maps channels s -> d; w_row (r, n) maps rows n -> r
  descriptor   flat (d*r,), unit norm
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import ShapeError, l2_normalize, relu

__all__ = [
    "GridFactorizationError",
    "AggregatorConfig",
    "MixerBlock",
    "ProjectionHead",
    "AggregatorModel",
    "tokens_to_maps",
    "flatten_maps",
    "mixer_block_forward",
    "mixer_stack_forward",
    "depth_projection",
    "row_projection",
    "aggregate",
    "aggregate_backward",
    "init_model",
]

_NORM_EPS = 1e-6  # variance floor for the optional per-block input normalization


class GridFactorizationError(ValueError):
    """Token count does not admit the required square grid."""


@dataclass(frozen=True)
class AggregatorConfig:
    """Shape knobs of the aggregation head (everything not fixed by the input)."""

    depth: int = 2           # number of mixing blocks; 0 = projections only
    out_channels: int = 1024 # descriptor rows before flattening
    out_rows: int = 4        # descriptor columns before flattening
    hidden_ratio: int = 1    # mixer hidden width = ratio * n
    input_norm: bool = False # per-block parameter-free pre-normalization

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError(f"depth must be >= 0, got {self.depth}")
        if self.out_channels < 1 or self.out_rows < 1:
            raise ValueError("out_channels and out_rows must be positive")
        if self.hidden_ratio < 1:
            raise ValueError(f"hidden_ratio must be >= 1, got {self.hidden_ratio}")

    @property
    def descriptor_len(self):
        return self.out_channels * self.out_rows


@dataclass
class MixerBlock:
    w1: np.ndarray  # (ratio*n, n)
    w2: np.ndarray  # (n, ratio*n)


@dataclass
class ProjectionHead:
    w_depth: np.ndarray  # (d, s)
    w_row: np.ndarray    # (r, n)


@dataclass
class AggregatorModel:
    channels: int   # s, equals the token embedding length
    grid_h: int
    grid_w: int
    blocks: list[MixerBlock] = field(default_factory=list)
    head: ProjectionHead | None = None
    input_norm: bool = False

    @property
    def positions(self):
        return self.grid_h * self.grid_w

    @property
    def depth(self):
        return len(self.blocks)

    @property
    def out_channels(self):
        return self.head.w_depth.shape[0]

    @property
    def out_rows(self):
        return self.head.w_row.shape[0]

    @property
    def descriptor_len(self):
        return self.out_channels * self.out_rows

    def parameters(self):
        """Named weights in a fixed deterministic order."""
        params = {}
        for i, blk in enumerate(self.blocks):
            params[f"block{i}.w1"] = blk.w1
            params[f"block{i}.w2"] = blk.w2
        params["head.w_depth"] = self.head.w_depth
        params["head.w_row"] = self.head.w_row
        return params

    def set_parameters(self, params):
        for i, blk in enumerate(self.blocks):
            blk.w1 = params[f"block{i}.w1"]
            blk.w2 = params[f"block{i}.w2"]
        self.head.w_depth = params["head.w_depth"]
        self.head.w_row = params["head.w_row"]


def _square_side(count):
    side = math.isqrt(int(count))
    if side * side != count:
        raise GridFactorizationError(
            f"token count {count} is not a perfect square; cannot form an h x w grid"
        )
    return side


def tokens_to_maps(tokens):
    """Reshape (C, D) patch tokens into D feature maps of size sqrt(C) x sqrt(C).

    maps[i, y, x] = tokens[y*w + x, i]; requires C to be a perfect square
    (class/global tokens must already be stripped by the exporter).
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ShapeError(f"tokens must be 2-D (C, D), got {tokens.shape}")
    count, dim = tokens.shape
    side = _square_side(count)
    return np.ascontiguousarray(tokens.T).reshape(dim, side, side)


def flatten_maps(maps):
    """(s, h, w) feature maps -> (s, n) flat rows, n = h*w."""
    maps = np.asarray(maps)
    if maps.ndim != 3:
        raise ShapeError(f"maps must be 3-D (s, h, w), got {maps.shape}")
    return maps.reshape(maps.shape[0], -1)


def _row_norm(x):
    """Parameter-free per-row normalization (zero mean, unit variance)."""
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(_NORM_EPS, dtype=x.dtype))
    return centered * inv, inv


def mixer_block_forward(f, block, input_norm=False):
    """One residual mixing step: every row x becomes x + w2 @ relu(w1 @ x)."""
    f = np.asarray(f)
    if f.ndim != 2:
        raise ShapeError(f"mixer input must be 2-D (s, n), got {f.shape}")
    n = f.shape[1]
    if block.w1.shape[1] != n or block.w2.shape[0] != n:
        raise ShapeError(
            f"mixer block sized for n={block.w1.shape[1]} applied to input {f.shape}"
        )
    x = _row_norm(f)[0] if input_norm else f
    hidden = relu(x @ block.w1.T)
    return hidden @ block.w2.T + f


def mixer_stack_forward(f, blocks, input_norm=False):
    """Compose the mixing blocks in order; empty stack is the identity."""
    out = np.asarray(f)
    for block in blocks:
        out = mixer_block_forward(out, block, input_norm=input_norm)
    return out


def depth_projection(z, w_depth):
    """Map the channel dimension s -> d: output (d, n) = w_depth @ z."""
    z = np.asarray(z)
    w_depth = np.asarray(w_depth)
    if z.ndim != 2 or w_depth.ndim != 2 or w_depth.shape[1] != z.shape[0]:
        raise ShapeError(
            f"depth projection mismatch: weight {w_depth.shape} vs input {z.shape}"
        )
    return w_depth @ z


def row_projection(zp, w_row):
    """Map the row dimension n -> r: output (d, r), out[i, j] = sum_k w_row[j, k] * zp[i, k]."""
    zp = np.asarray(zp)
    w_row = np.asarray(w_row)
    if zp.ndim != 2 or w_row.ndim != 2 or w_row.shape[1] != zp.shape[1]:
        raise ShapeError(
            f"row projection mismatch: weight {w_row.shape} vs input {zp.shape}"
        )
    return zp @ w_row.T


def _forward_cache(tokens, model):
    """Full forward pass keeping every intermediate needed by the backward pass."""
    maps = tokens_to_maps(tokens)
    flat = flatten_maps(maps)
    if flat.shape[0] != model.channels or flat.shape[1] != model.positions:
        raise ShapeError(
            f"model built for ({model.channels}, {model.positions}) features, "
            f"got {flat.shape}"
        )
    xs = [flat]          # block inputs
    pre_acts = []        # w1 outputs before ReLU, per block
    normed = []          # normalized block inputs (input_norm only)
    inv_stds = []
    x = flat
    for block in model.blocks:
        if model.input_norm:
            xn, inv = _row_norm(x)
            normed.append(xn)
            inv_stds.append(inv)
        else:
            xn = x
            normed.append(None)
            inv_stds.append(None)
        a = xn @ block.w1.T
        pre_acts.append(a)
        x = relu(a) @ block.w2.T + x
        xs.append(x)
    mixed = xs[-1]
    projected = depth_projection(mixed, model.head.w_depth)
    out = row_projection(projected, model.head.w_row)
    raw = out.reshape(-1)
    descriptor = l2_normalize(raw)
    cache = {
        "xs": xs,
        "pre_acts": pre_acts,
        "normed": normed,
        "inv_stds": inv_stds,
        "mixed": mixed,
        "projected": projected,
        "raw": raw,
        "descriptor": descriptor,
    }
    return descriptor, cache


def aggregate(tokens, model):
    """Tokens -> unit-norm global descriptor of length out_channels * out_rows."""
    return _forward_cache(tokens, model)[0]


def aggregate_backward(tokens, model, grad_descriptor, cache=None):
    """Gradients of every model weight given the descriptor gradient.

    Recomputes the forward pass unless a cache from the same (tokens, model)
    pair is supplied. Returns a dict keyed like model.parameters().
    """
    if cache is None:
        _, cache = _forward_cache(tokens, model)
    grad_descriptor = np.asarray(grad_descriptor)
    raw = cache["raw"]
    if grad_descriptor.shape != raw.shape:
        raise ShapeError(
            f"grad_descriptor shape {grad_descriptor.shape} does not match "
            f"descriptor length {raw.shape}"
        )
    desc = cache["descriptor"]
    norm = np.sqrt(np.dot(raw, raw))

    # L2-normalization Jacobian: d(v/|v|) = (g - desc (desc . g)) / |v|
    g_raw = (grad_descriptor - desc * np.dot(desc, grad_descriptor)) / norm

    d, r = model.out_channels, model.out_rows
    g_out = g_raw.reshape(d, r)

    projected = cache["projected"]
    mixed = cache["mixed"]
    grads = {}
    grads["head.w_row"] = g_out.T @ projected
    g_proj = g_out @ model.head.w_row
    grads["head.w_depth"] = g_proj @ mixed.T
    g = model.head.w_depth.T @ g_proj

    for i in reversed(range(len(model.blocks))):
        block = model.blocks[i]
        x = cache["xs"][i]
        a = cache["pre_acts"][i]
        hidden = relu(a)
        g_hidden = g @ block.w2
        grads[f"block{i}.w2"] = g.T @ hidden
        g_a = g_hidden * (a > 0)
        xn = cache["normed"][i] if model.input_norm else x
        grads[f"block{i}.w1"] = g_a.T @ xn
        g_branch = g_a @ block.w1
        if model.input_norm:
            # backward through the per-row normalization
            inv = cache["inv_stds"][i]
            n = x.shape[1]
            mean_g = g_branch.mean(axis=1, keepdims=True)
            mean_gx = (g_branch * xn).mean(axis=1, keepdims=True)
            g_branch = inv * (g_branch - mean_g - xn * mean_gx)
        g = g_branch + g  # residual path
    return grads


def init_model(token_count, embed_dim, config, seed=0, dtype=np.float32):
    """Build a model for (token_count, embed_dim) inputs with seeded uniform
    fan-in initialization: each weight ~ U[-1/sqrt(fan_in), +1/sqrt(fan_in)].
    """
    side = _square_side(token_count)
    n = token_count
    hidden = config.hidden_ratio * n
    rng = np.random.default_rng(seed)

    def uniform(rows, cols, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)

    blocks = [
        MixerBlock(w1=uniform(hidden, n, n), w2=uniform(n, hidden, hidden))
        for _ in range(config.depth)
    ]
    head = ProjectionHead(
        w_depth=uniform(config.out_channels, embed_dim, embed_dim),
        w_row=uniform(config.out_rows, n, n),
    )
    return AggregatorModel(
        channels=embed_dim,
        grid_h=side,
        grid_w=side,
        blocks=blocks,
        head=head,
        input_norm=config.input_norm,
    )
