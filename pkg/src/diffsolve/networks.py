"""Trainable function approximators with exact reverse-mode gradients.

Two architectures cover every experiment here: a fully connected MLP
(affine + ReLU stacks, linear output layer) and a convolutional ResNet
(lift conv, residual blocks of conv-ReLU-conv with a skip add, project
conv).  Parameters live in one flat float32 vector; a layout table maps
named weight/bias blocks to offsets so the optimizer never needs to know
the architecture.

Forward and backward are pure functions of (params, x).  The backward
pass replays the forward to cache activations, applies the exact chain
rule, and returns both the parameter cotangent and the input cotangent.
ReLU's subgradient at exactly zero is taken as zero, which makes
gradients bit-reproducible across runs.

Convolutions use shift-and-accumulate over kernel offsets rather than an
explicit column matrix, which keeps the 3D variant's memory footprint
proportional to the field itself.  Circular padding wraps the domain;
zero padding realizes homogeneous Dirichlet boundaries.
"""

import dataclasses
import itertools
import json
import struct

import numpy as np

DTYPE = np.float32

_SPATIAL = "xyz"

_CHECKPOINT_MAGIC = b"DNET"
_CHECKPOINT_VERSION = 1


@dataclasses.dataclass(frozen=True)
class NetworkSpec:
    """Architecture descriptor for either network kind.

    MLP fields: ``input_size``, ``output_size``, ``hidden_width``,
    ``hidden_layers`` (the number of ReLU layers).  Conv ResNet fields:
    ``spatial_dim``, ``blocks``, ``hidden_channels``, ``kernel_size``,
    ``padding`` plus ``in_channels``/``out_channels``.
    """

    kind: str
    input_size: int = 0
    output_size: int = 0
    hidden_width: int = 0
    hidden_layers: int = 0
    spatial_dim: int = 0
    blocks: int = 0
    hidden_channels: int = 0
    kernel_size: int = 3
    padding: str = "circular"
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.kind == "mlp":
            for name in ("input_size", "output_size"):
                if getattr(self, name) <= 0:
                    raise ValueError(f"mlp spec needs positive {name}")
            if self.hidden_layers < 0:
                raise ValueError("hidden_layers must be nonnegative")
            if self.hidden_layers > 0 and self.hidden_width <= 0:
                raise ValueError("hidden_width must be positive")
        elif self.kind == "conv_resnet":
            if self.spatial_dim not in (1, 2, 3):
                raise ValueError("spatial_dim must be 1, 2, or 3")
            for name in ("blocks", "hidden_channels", "in_channels", "out_channels"):
                if getattr(self, name) <= 0:
                    raise ValueError(f"conv_resnet spec needs positive {name}")
            if self.kernel_size <= 0 or self.kernel_size % 2 == 0:
                raise ValueError("kernel_size must be odd and positive")
            if self.padding not in ("circular", "zero"):
                raise ValueError("padding must be 'circular' or 'zero'")
        else:
            raise ValueError(f"unknown network kind {self.kind!r}")


@dataclasses.dataclass(frozen=True)
class NetworkParams:
    """Flat parameter vector plus the layout that addresses into it."""

    flat: np.ndarray
    spec: NetworkSpec
    layout: tuple

    def view(self, name):
        """Named weight/bias block as a reshaped view of ``flat``."""
        for entry, offset, shape in self.layout:
            if entry == name:
                size = int(np.prod(shape))
                return self.flat[offset : offset + size].reshape(shape)
        raise KeyError(name)


@dataclasses.dataclass(frozen=True)
class ParamCotangent:
    """Cotangent vector matching ``NetworkParams.flat``."""

    flat: np.ndarray


def _mlp_shapes(spec):
    """Ordered (name, shape) pairs for the MLP's weights and biases."""
    dims = [spec.input_size] + [spec.hidden_width] * spec.hidden_layers + [spec.output_size]
    shapes = []
    for i in range(len(dims) - 1):
        shapes.append((f"w{i}", (dims[i], dims[i + 1])))
        shapes.append((f"b{i}", (dims[i + 1],)))
    return shapes


def _resnet_shapes(spec):
    k = (spec.kernel_size,) * spec.spatial_dim
    h = spec.hidden_channels
    shapes = [("lift_w", (h, spec.in_channels) + k), ("lift_b", (h,))]
    for i in range(spec.blocks):
        shapes.append((f"block{i}_w1", (h, h) + k))
        shapes.append((f"block{i}_b1", (h,)))
        shapes.append((f"block{i}_w2", (h, h) + k))
        shapes.append((f"block{i}_b2", (h,)))
    shapes.append(("proj_w", (spec.out_channels, h) + k))
    shapes.append(("proj_b", (spec.out_channels,)))
    return shapes


def _shapes(spec):
    return _mlp_shapes(spec) if spec.kind == "mlp" else _resnet_shapes(spec)


def _build_layout(spec):
    layout = []
    offset = 0
    for name, shape in _shapes(spec):
        layout.append((name, offset, shape))
        offset += int(np.prod(shape))
    return tuple(layout), offset


def param_count(spec):
    return _build_layout(spec)[1]


def init_params(spec, seed):
    """LeCun-normal fan-in weights, zero biases, deterministic in the seed.

    The ResNet output projection starts at 1% of the LeCun scale, so a
    fresh network is a near-zero map: autoregressive rollouts of an
    untrained emulator stay bounded and a fresh hybrid corrector passes
    states through almost unchanged, while the output stays nonzero so
    relative residuals downstream remain defined.
    """
    layout, total = _build_layout(spec)
    flat = np.zeros(total, dtype=DTYPE)
    rng = np.random.default_rng(seed)
    for name, offset, shape in layout:
        size = int(np.prod(shape))
        if len(shape) == 1:
            continue
        if spec.kind == "mlp":
            fan_in = shape[0]
        else:
            fan_in = int(np.prod(shape[1:]))
        std = np.sqrt(1.0 / fan_in)
        if name == "proj_w":
            std *= 0.01
        flat[offset : offset + size] = (rng.standard_normal(size) * std).astype(DTYPE)
    return NetworkParams(flat=flat, spec=spec, layout=layout)


# ---------------------------------------------------------------------------
# MLP forward/backward


def _mlp_forward(params, x, want_cache):
    spec = params.spec
    if x.shape[-1] != spec.input_size:
        raise ValueError(f"expected last axis {spec.input_size}, got {x.shape[-1]}")
    h = x
    cache = []
    for i in range(spec.hidden_layers + 1):
        w = params.view(f"w{i}")
        b = params.view(f"b{i}")
        pre = h @ w + b
        if i < spec.hidden_layers:
            if want_cache:
                cache.append((h, pre > 0))
            h = np.where(pre > 0, pre, DTYPE(0))
        else:
            if want_cache:
                cache.append((h, None))
            h = pre
    return h, cache


def _mlp_backward(params, cache, ybar):
    spec = params.spec
    grad = np.zeros_like(params.flat)

    def gview(name):
        for entry, offset, shape in params.layout:
            if entry == name:
                size = int(np.prod(shape))
                return grad[offset : offset + size].reshape(shape)
        raise KeyError(name)

    g = ybar
    for i in range(spec.hidden_layers, -1, -1):
        h, mask = cache[i]
        if mask is not None:
            g = np.where(mask, g, DTYPE(0))
        w = params.view(f"w{i}")
        gview(f"w{i}")[...] = np.tensordot(
            h.reshape(-1, h.shape[-1]), g.reshape(-1, g.shape[-1]), axes=([0], [0])
        )
        gview(f"b{i}")[...] = g.reshape(-1, g.shape[-1]).sum(axis=0)
        g = g @ w.T
    return grad, g


# ---------------------------------------------------------------------------
# convolution primitives (shift-and-accumulate over kernel offsets)


def _pad(x, pad, padding, dim):
    width = [(0, 0)] * (x.ndim - dim) + [(pad, pad)] * dim
    if padding == "circular":
        return np.pad(x, width, mode="wrap")
    return np.pad(x, width, mode="constant")


def _unpad_add(buf, pad, padding, dim):
    """Fold a padded-buffer cotangent back onto the core region."""
    for axis in range(buf.ndim - dim, buf.ndim):
        n = buf.shape[axis] - 2 * pad
        if padding == "circular":
            head = [slice(None)] * buf.ndim
            tail = [slice(None)] * buf.ndim
            core_head = [slice(None)] * buf.ndim
            core_tail = [slice(None)] * buf.ndim
            head[axis] = slice(0, pad)
            core_tail[axis] = slice(n, n + pad)
            tail[axis] = slice(n + pad, n + 2 * pad)
            core_head[axis] = slice(pad, 2 * pad)
            buf[tuple(core_tail)] += buf[tuple(head)]
            buf[tuple(core_head)] += buf[tuple(tail)]
        crop = [slice(None)] * buf.ndim
        crop[axis] = slice(pad, pad + n)
        buf = buf[tuple(crop)]
    return buf


def _channel_matmul(m, x, dim):
    """Apply (O, C) to the channel axis of (..., C, *spatial) via BLAS."""
    res = np.tensordot(m, x, axes=([1], [x.ndim - dim - 1]))
    return np.moveaxis(res, 0, -dim - 1)


def _conv_forward(x, w, b, padding):
    """N-dimensional cross-correlation with same-size output.

    ``x`` is (..., C, *spatial), ``w`` is (O, C, *kernel), ``b`` is (O,).
    """
    dim = w.ndim - 2
    k = w.shape[2]
    pad = k // 2
    spatial = x.shape[-dim:]
    xp = _pad(x, pad, padding, dim)
    out = None
    for offsets in itertools.product(range(k), repeat=dim):
        sl = (Ellipsis,) + tuple(slice(i, i + n) for i, n in zip(offsets, spatial))
        term = _channel_matmul(w[(slice(None), slice(None)) + offsets], xp[sl], dim)
        out = term if out is None else out + term
    return out + b.reshape((-1,) + (1,) * dim)


def _conv_backward(x, w, padding, ybar):
    """Cotangents of ``_conv_forward`` with respect to x, w, and b."""
    dim = w.ndim - 2
    k = w.shape[2]
    pad = k // 2
    spatial = x.shape[-dim:]
    xp = _pad(x, pad, padding, dim)
    # leading batch axes collapse into one so the weight cotangent sums them
    yb = ybar.reshape((-1,) + ybar.shape[ybar.ndim - dim - 1 :])
    sum_axes = (0,) + tuple(range(2, dim + 2))
    wbar = np.zeros_like(w)
    xpbar = np.zeros_like(xp)
    for offsets in itertools.product(range(k), repeat=dim):
        sl = (Ellipsis,) + tuple(slice(i, i + n) for i, n in zip(offsets, spatial))
        widx = (slice(None), slice(None)) + offsets
        xs = xp[sl]
        xs = xs.reshape((-1,) + xs.shape[xs.ndim - dim - 1 :])
        wbar[widx] = np.tensordot(yb, xs, axes=(sum_axes, sum_axes))
        xpbar[sl] += _channel_matmul(w[widx].T, ybar, dim)
    xbar = _unpad_add(xpbar, pad, padding, dim)
    bbar = ybar.reshape(-1, ybar.shape[-dim - 1], *spatial).sum(axis=sum_axes)
    return xbar, wbar, bbar


# ---------------------------------------------------------------------------
# conv ResNet forward/backward


def _maybe_add_channel(spec, x):
    dim = spec.spatial_dim
    if x.ndim < dim:
        raise ValueError("input has fewer axes than the spatial dimension")
    if x.ndim == dim or x.shape[-dim - 1] != spec.in_channels:
        if spec.in_channels != 1:
            raise ValueError(f"expected channel axis of size {spec.in_channels}")
        return np.expand_dims(x, -dim - 1), True
    return x, False


def _resnet_forward(params, x, want_cache):
    spec = params.spec
    pad = spec.padding
    h = _conv_forward(x, params.view("lift_w"), params.view("lift_b"), pad)
    cache = {"x": x, "lift_out": h} if want_cache else None
    for i in range(spec.blocks):
        pre = _conv_forward(h, params.view(f"block{i}_w1"), params.view(f"block{i}_b1"), pad)
        act = np.where(pre > 0, pre, DTYPE(0))
        branch = _conv_forward(act, params.view(f"block{i}_w2"), params.view(f"block{i}_b2"), pad)
        if want_cache:
            cache[f"block{i}"] = (h, pre > 0, act)
        h = h + branch
    if want_cache:
        cache["pre_proj"] = h
    y = _conv_forward(h, params.view("proj_w"), params.view("proj_b"), pad)
    return y, cache


def _resnet_backward(params, cache, ybar):
    spec = params.spec
    pad = spec.padding
    grad = np.zeros_like(params.flat)

    def gview(name):
        for entry, offset, shape in params.layout:
            if entry == name:
                size = int(np.prod(shape))
                return grad[offset : offset + size].reshape(shape)
        raise KeyError(name)

    hbar, wbar, bbar = _conv_backward(cache["pre_proj"], params.view("proj_w"), pad, ybar)
    gview("proj_w")[...] = wbar
    gview("proj_b")[...] = bbar
    for i in range(spec.blocks - 1, -1, -1):
        h, mask, act = cache[f"block{i}"]
        abar, wbar, bbar = _conv_backward(act, params.view(f"block{i}_w2"), pad, hbar)
        gview(f"block{i}_w2")[...] = wbar
        gview(f"block{i}_b2")[...] = bbar
        prebar = np.where(mask, abar, DTYPE(0))
        xbar, wbar, bbar = _conv_backward(h, params.view(f"block{i}_w1"), pad, prebar)
        gview(f"block{i}_w1")[...] = wbar
        gview(f"block{i}_b1")[...] = bbar
        hbar = hbar + xbar
    xbar, wbar, bbar = _conv_backward(cache["x"], params.view("lift_w"), pad, hbar)
    gview("lift_w")[...] = wbar
    gview("lift_b")[...] = bbar
    return grad, xbar


# ---------------------------------------------------------------------------
# public entry points


def _unwrap(x):
    values = getattr(x, "values", None)
    return values if isinstance(values, np.ndarray) else np.asarray(x)


def forward(params, x):
    """Evaluate the network; batch axes lead, data axes trail."""
    x = _unwrap(x).astype(params.flat.dtype, copy=False)
    if params.spec.kind == "mlp":
        y, _ = _mlp_forward(params, x, want_cache=False)
        return y
    xc, added = _maybe_add_channel(params.spec, x)
    y, _ = _resnet_forward(params, xc, want_cache=False)
    if added and params.spec.out_channels == 1:
        y = np.squeeze(y, axis=-params.spec.spatial_dim - 1)
    return y


def backward(params, x, ybar):
    """Exact reverse-mode cotangents of ``forward`` at (params, x).

    Returns ``(ParamCotangent, xbar)``; batch contributions to the
    parameter cotangent are summed in a fixed order.
    """
    x = _unwrap(x).astype(params.flat.dtype, copy=False)
    ybar = np.asarray(ybar, dtype=params.flat.dtype)
    if params.spec.kind == "mlp":
        y, cache = _mlp_forward(params, x, want_cache=True)
        if ybar.shape != y.shape:
            raise ValueError(f"cotangent shape {ybar.shape} does not match output {y.shape}")
        grad, xbar = _mlp_backward(params, cache, ybar)
        return ParamCotangent(flat=grad), xbar
    spec = params.spec
    xc, added = _maybe_add_channel(spec, x)
    y, cache = _resnet_forward(params, xc, want_cache=True)
    yb = ybar
    if added and spec.out_channels == 1:
        yb = np.expand_dims(ybar, -spec.spatial_dim - 1)
    if yb.shape != y.shape:
        raise ValueError(f"cotangent shape {ybar.shape} does not match output")
    grad, xbar = _resnet_backward(params, cache, yb)
    if added:
        xbar = np.squeeze(xbar, axis=-spec.spatial_dim - 1)
    return ParamCotangent(flat=grad), xbar


# ---------------------------------------------------------------------------
# checkpoint file


def save_checkpoint(path, params):
    """Write a versioned header plus the flat float32 vector, little-endian."""
    spec_json = json.dumps(dataclasses.asdict(params.spec), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", _CHECKPOINT_VERSION, len(spec_json)))
        fh.write(spec_json)
        fh.write(struct.pack("<Q", params.flat.size))
        fh.write(params.flat.astype("<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError("not a network checkpoint file")
        version, spec_len = struct.unpack("<II", fh.read(8))
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        spec = NetworkSpec(**json.loads(fh.read(spec_len).decode()))
        (count,) = struct.unpack("<Q", fh.read(8))
        payload = fh.read(count * 4)
        if len(payload) != count * 4:
            raise ValueError("checkpoint payload is truncated")
        flat = np.frombuffer(payload, dtype="<f4").astype(DTYPE)
    layout, total = _build_layout(spec)
    if count != total:
        raise ValueError(f"checkpoint holds {count} values, spec implies {total}")
    return NetworkParams(flat=flat, spec=spec, layout=layout)
