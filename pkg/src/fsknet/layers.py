"""Layers with hand-written forward and backward passes.

Every tensor is channel-last with a leading batch axis: ``[N, H, W, C]`` for
2-D feature maps and ``[N, H, W, D, C]`` for spectral cubes. A layer is built
once against its input shapes (batch axis excluded), then ``forward`` caches
what ``backward`` needs. ``backward`` fills ``layer.grads`` and returns the
gradient with respect to each input.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError


class StateError(RuntimeError):
    """Raised when backward runs without a matching forward."""


class ConfigError(ValueError):
    """Raised for layer or model hyper-parameters that cannot be honoured."""


# ---------------------------------------------------------------------------
# convolution kernels
# ---------------------------------------------------------------------------

def same_pads(kernel) -> list[tuple[int, int]]:
    """Zero padding that keeps the spatial size at stride 1; odd extra goes last."""
    return [((k - 1) // 2, (k - 1) - (k - 1) // 2) for k in kernel]


def pad_spatial(x: np.ndarray, pads) -> np.ndarray:
    if all(p == (0, 0) for p in pads):
        return x
    return np.pad(x, [(0, 0), *pads, (0, 0)])


def crop_spatial(x: np.ndarray, pads) -> np.ndarray:
    if all(p == (0, 0) for p in pads):
        return x
    idx = tuple(slice(lo, x.shape[i + 1] - hi) for i, (lo, hi) in enumerate(pads))
    return x[(slice(None), *idx, slice(None))]


def conv_output_size(size: int, k: int, s: int) -> int:
    return (size - k) // s + 1


def _tap_slices(tap, strides, out_dims):
    return tuple(slice(t, t + s * (o - 1) + 1, s) for t, s, o in zip(tap, strides, out_dims))


def im2col(x: np.ndarray, kernel, strides) -> np.ndarray:
    """Strided windows of ``x`` as ``[N, *out, Cin, *kernel]`` (a view)."""
    nsp = len(kernel)
    win = sliding_window_view(x, tuple(kernel), axis=tuple(range(1, nsp + 1)))
    return win[(slice(None), *(slice(None, None, s) for s in strides))]


def conv_forward(x: np.ndarray, w: np.ndarray, strides):
    """Valid cross-correlation. ``w`` is ``[*kernel, Cin, Cout]``.

    Returns the output and the im2col matrix for reuse in backward.
    """
    nsp = w.ndim - 2
    kernel, cin, cout = w.shape[:nsp], w.shape[-2], w.shape[-1]
    win = im2col(x, kernel, strides)
    out_dims = win.shape[1:nsp + 1]
    cols = win.reshape(-1, cin * math.prod(kernel))
    w2 = np.moveaxis(w, -2, 0).reshape(-1, cout)
    out = (cols @ w2).reshape(x.shape[0], *out_dims, cout)
    return out, cols


def conv_backward(grad: np.ndarray, cols: np.ndarray, x_shape, w: np.ndarray, strides,
                  input_grad: bool = True):
    """Gradients of :func:`conv_forward` with respect to input and kernel.

    The input gradient is scattered one kernel tap at a time so every partial
    product stays contiguous. With ``input_grad=False`` it is skipped (None).
    """
    nsp = w.ndim - 2
    kernel, cin, cout = w.shape[:nsp], w.shape[-2], w.shape[-1]
    out_dims = grad.shape[1:nsp + 1]
    g2 = grad.reshape(-1, cout)
    dw = (cols.T @ g2).reshape(cin, *kernel, cout)
    dw = np.moveaxis(dw, 0, -2)
    if not input_grad:
        return None, dw
    dx = np.zeros(x_shape, dtype=grad.dtype)
    part_shape = (grad.shape[0], *out_dims, cin)
    for tap in np.ndindex(*kernel):
        sl = _tap_slices(tap, strides, out_dims)
        dx[(slice(None), *sl, slice(None))] += (g2 @ w[tap].T).reshape(part_shape)
    return dx, dw


def depthwise_forward(x: np.ndarray, w: np.ndarray, strides) -> np.ndarray:
    """Per-channel valid correlation. ``w`` is ``[*kernel, C]``."""
    nsp = w.ndim - 1
    kernel = w.shape[:nsp]
    out_dims = [conv_output_size(x.shape[i + 1], k, s) for i, (k, s) in enumerate(zip(kernel, strides))]
    out = np.zeros((x.shape[0], *out_dims, x.shape[-1]), dtype=x.dtype)
    for tap in np.ndindex(*kernel):
        sl = _tap_slices(tap, strides, out_dims)
        out += x[(slice(None), *sl, slice(None))] * w[tap]
    return out


def depthwise_backward(grad: np.ndarray, x: np.ndarray, w: np.ndarray, strides):
    nsp = w.ndim - 1
    kernel = w.shape[:nsp]
    out_dims = grad.shape[1:nsp + 1]
    axes = tuple(range(nsp + 1))
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for tap in np.ndindex(*kernel):
        sl = (slice(None), *_tap_slices(tap, strides, out_dims), slice(None))
        dw[tap] = (x[sl] * grad).sum(axis=axes)
        dx[sl] += grad * w[tap]
    return dx, dw


# ---------------------------------------------------------------------------
# bilinear resampling
# ---------------------------------------------------------------------------

def _sample_grid(x: np.ndarray, offsets: np.ndarray):
    n, h, w, c = x.shape
    if offsets.shape != (n, h, w, 2 * c):
        raise ShapeError(f"offsets {offsets.shape} do not pair with feature map {x.shape}")
    rows = np.arange(h, dtype=x.dtype)[:, None, None]
    cols = np.arange(w, dtype=x.dtype)[None, :, None]
    raw_y = rows + offsets[..., 0::2]
    raw_x = cols + offsets[..., 1::2]
    # non-finite offsets (a diverged run) are pinned so the gather stays in range
    py = np.nan_to_num(np.clip(raw_y, 0, h - 1), nan=0.0)
    px = np.nan_to_num(np.clip(raw_x, 0, w - 1), nan=0.0)
    fy, fx = np.floor(py), np.floor(px)
    wy, wx = py - fy, px - fx
    y0, x0 = fy.astype(np.intp), fx.astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    base = np.arange(n)[:, None, None, None] * h
    chan = np.arange(c)
    idx = [((base + yy) * w + xx) * c + chan for yy, xx in ((y0, x0), (y0, x1), (y1, x0), (y1, x1))]
    inside_y = (raw_y >= 0) & (raw_y <= h - 1)
    inside_x = (raw_x >= 0) & (raw_x <= w - 1)
    return idx, wy, wx, inside_y, inside_x


def bilinear_sample(x: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Resample each channel of ``x`` at ``(h + dy, w + dx)``.

    ``offsets[..., 2c]`` and ``offsets[..., 2c + 1]`` hold the row and column
    displacement for channel ``c``. Positions are clamped to the image.
    """
    out, _ = _bilinear_with_cache(x, offsets)
    return out


def _bilinear_with_cache(x, offsets):
    idx, wy, wx, iy, ix = _sample_grid(x, offsets)
    flat = x.reshape(-1)
    v00, v01, v10, v11 = (flat[i] for i in idx)
    out = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11)
    return out, (idx, wy, wx, iy, ix, (v00, v01, v10, v11))


def bilinear_backward(grad: np.ndarray, x_shape, cache):
    """Gradients of :func:`bilinear_sample` for the feature map and the offsets."""
    idx, wy, wx, iy, ix, (v00, v01, v10, v11) = cache
    weights = ((1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx)
    size = math.prod(x_shape)
    dx = np.bincount(np.concatenate([i.ravel() for i in idx]),
                     weights=np.concatenate([(grad * wt).ravel() for wt in weights]),
                     minlength=size)
    dx = dx.astype(grad.dtype).reshape(x_shape)
    d_dy = grad * ((1 - wx) * (v10 - v00) + wx * (v11 - v01)) * iy
    d_dx = grad * ((1 - wy) * (v01 - v00) + wy * (v11 - v10)) * ix
    doff = np.empty(grad.shape[:-1] + (2 * grad.shape[-1],), dtype=grad.dtype)
    doff[..., 0::2] = d_dy
    doff[..., 1::2] = d_dx
    return dx, doff


# ---------------------------------------------------------------------------
# layer objects
# ---------------------------------------------------------------------------

def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)


class Layer:
    """Base class. Subclasses set ``params`` in :meth:`build`."""

    kind = "Layer"
    hidden = False  # omitted from the printed layer table

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.trainable: dict[str, bool] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.input_grad = True  # False when nothing upstream needs d(loss)/d(input)
        self.input_shapes: list[tuple[int, ...]] = []
        self.output_shape: tuple[int, ...] = ()
        self._cache = None

    def add_param(self, key: str, value: np.ndarray, trainable: bool = True) -> None:
        self.params[key] = value
        self.trainable[key] = trainable

    def build(self, input_shapes, rng, dtype) -> tuple[int, ...]:
        self.input_shapes = [tuple(s) for s in input_shapes]
        self.output_shape = tuple(self._build(*self.input_shapes, rng=rng, dtype=dtype))
        if any(d < 1 for d in self.output_shape):
            raise ConfigError(f"layer {self.name!r} would output shape {self.output_shape}")
        return self.output_shape

    def _build(self, shape, rng, dtype):
        return shape

    def param_count(self, trainable: bool | None = None) -> int:
        return sum(v.size for k, v in self.params.items()
                   if trainable is None or self.trainable[k] == trainable)

    def macs(self) -> int:
        return math.prod(self.output_shape)

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        return self._cache

    def forward(self, *inputs, training: bool = False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Conv(Layer):
    """Dense 2-D or 3-D convolution, ``valid`` or ``same`` padding."""

    kind = "Conv"

    def __init__(self, name, filters, kernel, strides=None, padding="valid",
                 use_bias=False, init="he"):
        super().__init__(name)
        if padding not in ("valid", "same"):
            raise ConfigError(f"unknown padding {padding!r}")
        self.filters = int(filters)
        self.kernel = tuple(int(k) for k in kernel)
        self.strides = tuple(int(s) for s in (strides or (1,) * len(self.kernel)))
        self.padding = padding
        self.use_bias = use_bias
        self.init = init
        if padding == "same" and any(s != 1 for s in self.strides):
            raise ConfigError(f"{name}: same padding requires stride 1")
        self.kind = f"Conv{len(self.kernel)}D"

    def _build(self, shape, rng, dtype):
        *spatial, cin = shape
        if len(spatial) != len(self.kernel):
            raise ShapeError(f"{self.name}: kernel {self.kernel} does not match input {shape}")
        wshape = (*self.kernel, cin, self.filters)
        fan_in = cin * math.prod(self.kernel)
        w = np.zeros(wshape, dtype) if self.init == "zeros" else he_normal(rng, wshape, fan_in, dtype)
        self.add_param("kernel", w)
        if self.use_bias:
            self.add_param("bias", np.zeros(self.filters, dtype))
        if self.padding == "same":
            return (*spatial, self.filters)
        out = []
        for axis, (d, k, s) in enumerate(zip(spatial, self.kernel, self.strides)):
            if k > d:
                raise ShapeError(f"{self.name}: kernel {k} exceeds input size {d} on spatial axis {axis}")
            out.append(conv_output_size(d, k, s))
        return (*out, self.filters)

    def forward(self, x, training=False):
        pads = same_pads(self.kernel) if self.padding == "same" else [(0, 0)] * len(self.kernel)
        xp = pad_spatial(x, pads)
        out, cols = conv_forward(xp, self.params["kernel"], self.strides)
        if self.use_bias:
            out = out + self.params["bias"]
        self._cache = (cols, xp.shape, pads)
        return out

    def backward(self, grad):
        cols, xp_shape, pads = self._cached()
        dxp, dw = conv_backward(grad, cols, xp_shape, self.params["kernel"], self.strides, self.input_grad)
        self.grads["kernel"] = dw
        if self.use_bias:
            self.grads["bias"] = grad.reshape(-1, grad.shape[-1]).sum(axis=0)
        return None if dxp is None else crop_spatial(dxp, pads)

    def macs(self):
        cin = self.input_shapes[0][-1]
        return math.prod(self.output_shape) * math.prod(self.kernel) * cin


class SeparableConv(Layer):
    """Depthwise valid convolution followed by a bias-free 1x1 channel mix."""

    def __init__(self, name, filters, kernel, strides=None):
        super().__init__(name)
        self.filters = int(filters)
        self.kernel = tuple(int(k) for k in kernel)
        self.strides = tuple(int(s) for s in (strides or (1,) * len(self.kernel)))
        self.kind = f"SeparableConv{len(self.kernel)}D"

    def _build(self, shape, rng, dtype):
        *spatial, cin = shape
        if len(spatial) != len(self.kernel):
            raise ShapeError(f"{self.name}: kernel {self.kernel} does not match input {shape}")
        for axis, (d, k) in enumerate(zip(spatial, self.kernel)):
            if k > d:
                raise ShapeError(f"{self.name}: kernel {k} exceeds input size {d} on spatial axis {axis}")
        self.add_param("depthwise_kernel", he_normal(rng, (*self.kernel, cin), math.prod(self.kernel), dtype))
        self.add_param("pointwise_kernel", he_normal(rng, (cin, self.filters), cin, dtype))
        out = [conv_output_size(d, k, s) for d, k, s in zip(spatial, self.kernel, self.strides)]
        return (*out, self.filters)

    def forward(self, x, training=False):
        mid = depthwise_forward(x, self.params["depthwise_kernel"], self.strides)
        self._cache = (x, mid)
        return mid @ self.params["pointwise_kernel"]

    def backward(self, grad):
        x, mid = self._cached()
        pw = self.params["pointwise_kernel"]
        cin = pw.shape[0]
        self.grads["pointwise_kernel"] = mid.reshape(-1, cin).T @ grad.reshape(-1, self.filters)
        dmid = grad @ pw.T
        dx, dw = depthwise_backward(dmid, x, self.params["depthwise_kernel"], self.strides)
        self.grads["depthwise_kernel"] = dw
        return dx

    def macs(self):
        cin = self.input_shapes[0][-1]
        spatial = math.prod(self.output_shape[:-1])
        return spatial * cin * math.prod(self.kernel) + spatial * cin * self.filters


class DeformableConv2D(Layer):
    """Flow-field deformable convolution.

    A zero-initialised 3x3 ``same`` convolution predicts one ``(dy, dx)`` pair
    per input channel and pixel; the input is bilinearly resampled along that
    field and then convolved with a regular ``K x K`` same-padding kernel.
    Both convolutions are bias free, so the layer holds
    ``K*K*Cin*Cout + 9*Cin*2*Cin`` weights.
    """

    kind = "DeformableConv2D"
    SUPPORTED = (3, 5)

    def __init__(self, name, filters, kernel_size):
        super().__init__(name)
        if kernel_size not in self.SUPPORTED:
            raise ConfigError(f"{name}: kernel size {kernel_size} not in {self.SUPPORTED}")
        self.filters = int(filters)
        self.kernel_size = int(kernel_size)

    def _build(self, shape, rng, dtype):
        h, w, cin = shape
        k = self.kernel_size
        self.add_param("offset_kernel", np.zeros((3, 3, cin, 2 * cin), dtype))
        self.add_param("kernel", he_normal(rng, (k, k, cin, self.filters), k * k * cin, dtype))
        return (h, w, self.filters)

    def offsets(self, x):
        """The predicted ``[N, H, W, 2C]`` displacement field for ``x``."""
        return self._offsets_with_cache(x)[0]

    def _offsets_with_cache(self, x):
        pads = same_pads((3, 3))
        xp = pad_spatial(x, pads)
        off, cols = conv_forward(xp, self.params["offset_kernel"], (1, 1))
        return off, (cols, xp.shape, pads)

    def forward(self, x, training=False):
        off, off_cache = self._offsets_with_cache(x)
        sampled, bl_cache = _bilinear_with_cache(x, off)
        pads = same_pads((self.kernel_size,) * 2)
        sp = pad_spatial(sampled, pads)
        out, cols = conv_forward(sp, self.params["kernel"], (1, 1))
        self._cache = (x.shape, off_cache, bl_cache, cols, sp.shape, pads)
        return out

    def backward(self, grad):
        x_shape, (ocols, oshape, opads), bl_cache, cols, sp_shape, pads = self._cached()
        dsp, dw = conv_backward(grad, cols, sp_shape, self.params["kernel"], (1, 1))
        self.grads["kernel"] = dw
        dx, doff = bilinear_backward(crop_spatial(dsp, pads), x_shape, bl_cache)
        dxp, dwo = conv_backward(doff, ocols, oshape, self.params["offset_kernel"], (1, 1))
        self.grads["offset_kernel"] = dwo
        return dx + crop_spatial(dxp, opads)

    def macs(self):
        h, w, cin = self.input_shapes[0]
        k = self.kernel_size
        offset_conv = h * w * 2 * cin * 9 * cin
        sampling = 4 * h * w * cin
        return offset_conv + sampling + h * w * self.filters * k * k * cin


class BatchNorm(Layer):
    """Per-channel batch normalisation over every axis except the last."""

    kind = "BatchNormalization"

    def __init__(self, name, epsilon=1e-3, momentum=0.99):
        super().__init__(name)
        self.epsilon = epsilon
        self.momentum = momentum

    def _build(self, shape, rng, dtype):
        c = shape[-1]
        self.add_param("gamma", np.ones(c, dtype))
        self.add_param("beta", np.zeros(c, dtype))
        self.add_param("moving_mean", np.zeros(c, dtype), trainable=False)
        self.add_param("moving_variance", np.ones(c, dtype), trainable=False)
        return shape

    def forward(self, x, training=False):
        axes = tuple(range(x.ndim - 1))
        if training:
            count = x.size // x.shape[-1]
            if count < 2:
                raise ConfigError(f"{self.name}: batch statistics need >= 2 values per channel, got {count}")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            dtype = self.params["moving_mean"].dtype
            self.params["moving_mean"] = (m * self.params["moving_mean"] + (1 - m) * mean).astype(dtype)
            self.params["moving_variance"] = (m * self.params["moving_variance"] + (1 - m) * var).astype(dtype)
        else:
            mean = self.params["moving_mean"]
            var = self.params["moving_variance"]
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, training)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, grad):
        xhat, inv_std, training = self._cached()
        axes = tuple(range(grad.ndim - 1))
        self.grads["gamma"] = (grad * xhat).sum(axis=axes)
        self.grads["beta"] = grad.sum(axis=axes)
        dxhat = grad * self.params["gamma"]
        if not training:
            return dxhat * inv_std
        m = grad.size // grad.shape[-1]
        return inv_std / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class Dense(Layer):
    """Affine map over the last axis."""

    kind = "Dense"

    def __init__(self, name, units, use_bias=False):
        super().__init__(name)
        self.units = int(units)
        self.use_bias = use_bias

    def _build(self, shape, rng, dtype):
        cin = shape[-1]
        self.add_param("kernel", he_normal(rng, (cin, self.units), cin, dtype))
        if self.use_bias:
            self.add_param("bias", np.zeros(self.units, dtype))
        return (*shape[:-1], self.units)

    def forward(self, x, training=False):
        if x.shape[-1] != self.params["kernel"].shape[0]:
            raise ShapeError(f"{self.name}: input width {x.shape[-1]} != {self.params['kernel'].shape[0]}")
        self._cache = x
        out = x @ self.params["kernel"]
        if self.use_bias:
            out = out + self.params["bias"]
        return out

    def backward(self, grad):
        x = self._cached()
        k = self.params["kernel"]
        self.grads["kernel"] = x.reshape(-1, k.shape[0]).T @ grad.reshape(-1, k.shape[1])
        if self.use_bias:
            self.grads["bias"] = grad.reshape(-1, k.shape[1]).sum(axis=0)
        return grad @ k.T

    def macs(self):
        k = self.params["kernel"]
        return math.prod(self.output_shape[:-1]) * k.shape[0] * k.shape[1]


class Activation(Layer):
    hidden = True
    kind = "Activation"

    def __init__(self, name, fn: str):
        super().__init__(name)
        if fn not in ("relu", "sigmoid", "softmax"):
            raise ConfigError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, x, training=False):
        if self.fn == "relu":
            out = np.maximum(x, 0)
        elif self.fn == "sigmoid":
            out = sigmoid(x)
        else:
            out = softmax(x)
        self._cache = (x, out)
        return out

    def backward(self, grad):
        x, out = self._cached()
        if self.fn == "relu":
            return grad * (x > 0)
        if self.fn == "sigmoid":
            return grad * out * (1 - out)
        return out * (grad - (grad * out).sum(axis=-1, keepdims=True))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


class GlobalAveragePooling2D(Layer):
    kind = "GlobalAveragePooling2D"

    def _build(self, shape, rng, dtype):
        return (shape[-1],)

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad):
        n, h, w, c = self._cached()
        return np.broadcast_to(grad[:, None, None, :] / (h * w), (n, h, w, c)).copy()

    def macs(self):
        return math.prod(self.input_shapes[0])


class Reshape(Layer):
    kind = "Reshape"

    def __init__(self, name, target=None):
        """``target=None`` folds the last two axes together."""
        super().__init__(name)
        self.target = None if target is None else tuple(int(d) for d in target)

    def _build(self, shape, rng, dtype):
        if self.target is None:
            self.target = (*shape[:-2], shape[-2] * shape[-1])
        if math.prod(shape) != math.prod(self.target):
            raise ShapeError(f"{self.name}: cannot reshape {shape} into {self.target}")
        return self.target

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], *self.target)

    def backward(self, grad):
        return grad.reshape(self._cached())

    def macs(self):
        return 0


class Add(Layer):
    kind = "Add"

    def _build(self, *shapes, rng, dtype):
        if len(set(shapes)) != 1:
            raise ShapeError(f"{self.name}: cannot add shapes {shapes}")
        return shapes[0]

    def forward(self, *xs, training=False):
        self._cache = len(xs)
        out = xs[0]
        for x in xs[1:]:
            out = out + x
        return out

    def backward(self, grad):
        return tuple(grad for _ in range(self._cached()))


class Multiply(Layer):
    """Feature map times a per-sample channel scale of shape ``[1, 1, C]``."""

    kind = "Multiply"

    def _build(self, feature, scale, rng, dtype):
        if feature[-1] != scale[-1] or any(d != 1 for d in scale[:-1]):
            raise ShapeError(f"{self.name}: scale {scale} does not gate {feature}")
        return feature

    def forward(self, x, s, training=False):
        self._cache = (x, s)
        return x * s

    def backward(self, grad):
        x, s = self._cached()
        return grad * s, (grad * x).sum(axis=(1, 2), keepdims=True)


class Input(Layer):
    kind = "InputLayer"

    def __init__(self, name, shape):
        super().__init__(name)
        self.shape = tuple(shape)

    def _build(self, *shapes, rng, dtype):
        return self.shape

    def forward(self, x, training=False):
        if tuple(x.shape[1:]) != self.shape:
            raise ShapeError(f"{self.name}: expected batch of {self.shape}, got {x.shape}")
        return x

    def backward(self, grad):
        return grad

    def macs(self):
        return 0

