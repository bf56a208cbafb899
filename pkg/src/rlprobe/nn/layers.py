"""Layer set for the encoder/decoder/Q-network architectures.

All image tensors are NCHW. Convolutions default to 3x3 kernels with stride 2
and padding 1 so spatial extents exactly halve on power-of-two inputs;
deconvolutions use output_padding 1 so extents exactly double.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor, _make

_HE_GAIN = 2.0  # ReLU networks


class LayerKind(Enum):
    DENSE = "dense"
    CONV2D = "conv2d"
    DECONV2D = "deconv2d"
    RELU = "relu"
    BATCHNORM = "batchnorm"
    FLATTEN = "flatten"
    CROP = "crop"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 3
    stride: int = 2
    padding: int = 1
    output_padding: int = 0
    in_features: int = 0
    out_features: int = 0
    features: int = 0            # batchnorm channel count
    crop: tuple = ()             # (top, left, height, width)
    zero_init: bool = False      # dense: start from all-zero weights

    def to_dict(self):
        d = {"kind": self.kind.value}
        if self.kind is LayerKind.DENSE:
            d.update(in_features=self.in_features, out_features=self.out_features,
                     zero_init=self.zero_init)
        elif self.kind in (LayerKind.CONV2D, LayerKind.DECONV2D):
            d.update(in_channels=self.in_channels, out_channels=self.out_channels,
                     kernel=self.kernel, stride=self.stride, padding=self.padding)
            if self.kind is LayerKind.DECONV2D:
                d.update(output_padding=self.output_padding)
        elif self.kind is LayerKind.BATCHNORM:
            d.update(features=self.features)
        elif self.kind is LayerKind.CROP:
            d.update(crop=list(self.crop))
        return d

    @staticmethod
    def from_dict(d):
        kind = LayerKind(d["kind"])
        kw = {k: v for k, v in d.items() if k != "kind"}
        if "crop" in kw:
            kw["crop"] = tuple(kw["crop"])
        return LayerSpec(kind=kind, **kw)


def dense(in_features, out_features, zero_init=False):
    return LayerSpec(LayerKind.DENSE, in_features=in_features,
                     out_features=out_features, zero_init=zero_init)


def conv2d(in_channels, out_channels, kernel=3, stride=2, padding=1):
    return LayerSpec(LayerKind.CONV2D, in_channels=in_channels, out_channels=out_channels,
                     kernel=kernel, stride=stride, padding=padding)


def deconv2d(in_channels, out_channels, kernel=3, stride=2, padding=1, output_padding=1):
    return LayerSpec(LayerKind.DECONV2D, in_channels=in_channels, out_channels=out_channels,
                     kernel=kernel, stride=stride, padding=padding, output_padding=output_padding)


def relu_spec():
    return LayerSpec(LayerKind.RELU)


def batchnorm(features):
    return LayerSpec(LayerKind.BATCHNORM, features=features)


def flatten():
    return LayerSpec(LayerKind.FLATTEN)


def crop(top, left, height, width):
    return LayerSpec(LayerKind.CROP, crop=(top, left, height, width))


# ---------------------------------------------------------------------------
# im2col plumbing

def _conv_out(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _pad2d(x, padding):
    if padding == 0:
        return x
    b, c, h, w = x.shape
    xp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    xp[:, :, padding:padding + h, padding:padding + w] = x
    return xp


def _im2col(xp, kernel, stride, oh, ow):
    """(B, C, Hp, Wp) padded input -> (B, C, k*k, oh*ow) patch columns."""
    b, c = xp.shape[:2]
    cols = np.empty((b, c, kernel * kernel, oh, ow), dtype=xp.dtype)
    for i in range(kernel):
        for j in range(kernel):
            cols[:, :, i * kernel + j] = xp[:, :, i:i + stride * oh:stride,
                                            j:j + stride * ow:stride]
    return cols.reshape(b, c, kernel * kernel, oh * ow)


def _col2im(cols, b, c, hp, wp, kernel, stride, oh, ow, dtype):
    """Adjoint of _im2col: scatter-add patch columns back onto a padded canvas."""
    xp = np.zeros((b, c, hp, wp), dtype=dtype)
    cols = cols.reshape(b, c, kernel * kernel, oh, ow)
    for i in range(kernel):
        for j in range(kernel):
            xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i * kernel + j]
    return xp


def conv2d_op(x, w, b, stride, padding, tape=None):
    """x (B,C,H,W), w (OC,C,k,k), b (OC,) -> (B,OC,OH,OW).

    im2col columns are folded to a single (C*k*k, B*OH*OW) GEMM operand; the
    folded form is cached and reused by the backward rule.
    """
    bs, c, h, ww = x.shape
    oc, wc, k, _ = w.shape
    if wc != c:
        raise DimensionError(f"conv2d expects {wc} input channels, got {c}")
    oh, ow = _conv_out(h, k, stride, padding), _conv_out(ww, k, stride, padding)
    if oh < 1 or ow < 1:
        raise DimensionError(f"conv2d output would be empty for input {h}x{ww}")
    xp = _pad2d(x.data, padding)
    cols = _im2col(xp, k, stride, oh, ow)                       # (B, C, kk, L)
    cols2 = np.ascontiguousarray(cols.transpose(1, 2, 0, 3)).reshape(c * k * k, bs * oh * ow)
    w2 = w.data.reshape(oc, c * k * k)
    y2 = w2 @ cols2                                             # (OC, B*L)
    y = np.ascontiguousarray(y2.reshape(oc, bs, oh, ow).transpose(1, 0, 2, 3))
    y += b.data.reshape(1, oc, 1, 1)

    def bw(g, mode):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(oc, bs * oh * ow)
        dw = (g2 @ cols2.T).reshape(w.shape)
        db = g2.sum(axis=1, dtype=np.float64).astype(b.data.dtype)
        dcols2 = w2.T @ g2                                      # (C*kk, B*L)
        dcols = np.ascontiguousarray(
            dcols2.reshape(c, k * k, bs, oh * ow).transpose(2, 0, 1, 3))
        dxp = _col2im(dcols, bs, c, h + 2 * padding, ww + 2 * padding, k, stride, oh, ow, x.data.dtype)
        if padding:
            dxp = dxp[:, :, padding:padding + h, padding:padding + ww]
        return dxp, dw, db

    return _make((x, w, b), y, bw, tape)


def deconv2d_op(x, w, b, stride, padding, output_padding, tape=None):
    """Transposed convolution. x (B,C,H,W), w (C,OC,k,k) -> (B,OC,OH,OW).

    OH = (H-1)*stride - 2*padding + kernel + output_padding.
    """
    bs, c, h, ww = x.shape
    wc, oc, k, _ = w.shape
    if wc != c:
        raise DimensionError(f"deconv2d expects {wc} input channels, got {c}")
    oh = (h - 1) * stride - 2 * padding + k + output_padding
    ow = (ww - 1) * stride - 2 * padding + k + output_padding
    w2 = w.data.reshape(c, oc * k * k)
    x2 = np.ascontiguousarray(x.data.transpose(1, 0, 2, 3)).reshape(c, bs * h * ww)
    cols2 = w2.T @ x2                                           # (OC*kk, B*H*W)
    cols = np.ascontiguousarray(
        cols2.reshape(oc, k * k, bs, h * ww).transpose(2, 0, 1, 3))
    yp = _col2im(cols, bs, oc, oh + 2 * padding, ow + 2 * padding, k, stride, h, ww, x.data.dtype)
    y = yp[:, :, padding:padding + oh, padding:padding + ow]
    if padding or output_padding:
        y = np.ascontiguousarray(y)
    y += b.data.reshape(1, oc, 1, 1)

    def bw(g, mode):
        gp = _pad2d(np.ascontiguousarray(g), padding)
        dcols = _im2col(gp, k, stride, h, ww)                   # (B, OC, kk, H*W)
        dcols2 = np.ascontiguousarray(dcols.transpose(1, 2, 0, 3)).reshape(oc * k * k, bs * h * ww)
        dx2 = w2 @ dcols2                                       # (C, B*H*W)
        dx = np.ascontiguousarray(dx2.reshape(c, bs, h, ww).transpose(1, 0, 2, 3))
        dw = (x2 @ dcols2.T).reshape(w.shape)
        db = g.sum(axis=(0, 2, 3), dtype=np.float64).astype(b.data.dtype)
        return dx, dw, db

    return _make((x, w, b), y, bw, tape)


def batchnorm_op(x, gamma, beta, running_mean, running_var, train, momentum=0.1,
                 eps=1e-5, tape=None):
    """Per-channel batch normalization over (B, H, W). Mutates running stats in train mode."""
    if x.data.ndim != 4:
        raise DimensionError(f"batchnorm expects NCHW input, got shape {x.shape}")
    dt = x.data.dtype
    n = x.shape[0] * x.shape[2] * x.shape[3]
    if train:
        mean = x.data.mean(axis=(0, 2, 3), dtype=np.float64)
        m2 = (x.data * x.data).mean(axis=(0, 2, 3), dtype=np.float64)
        var = np.maximum(m2 - mean * mean, 0.0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * var.astype(running_var.dtype)
    else:
        mean = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(dt).reshape(1, -1, 1, 1)
    mean = mean.astype(dt).reshape(1, -1, 1, 1)
    xhat = (x.data - mean) * inv_std
    y = xhat * gamma.data.reshape(1, -1, 1, 1)
    y += beta.data.reshape(1, -1, 1, 1)

    def bw(g, mode):
        dgamma = (g * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(dt)
        dbeta = g.sum(axis=(0, 2, 3), dtype=np.float64).astype(dt)
        gscale = gamma.data.reshape(1, -1, 1, 1) * inv_std
        if train:
            dx = g * n
            dx -= dbeta.reshape(1, -1, 1, 1)
            dx -= xhat * dgamma.reshape(1, -1, 1, 1)
            dx *= gscale / n
        else:
            dx = gscale * g
        return dx, dgamma, dbeta

    return _make((x, gamma, beta), y, bw, tape)


def crop2d_op(x, box, tape=None):
    top, left, height, width = box
    if x.data.ndim != 4:
        raise DimensionError(f"crop expects NCHW input, got shape {x.shape}")
    if top + height > x.shape[2] or left + width > x.shape[3]:
        raise DimensionError(f"crop box {box} exceeds input extents {x.shape[2]}x{x.shape[3]}")
    y = x.data[:, :, top:top + height, left:left + width].copy()

    def bw(g, mode):
        full = np.zeros(x.shape, dtype=x.data.dtype)
        full[:, :, top:top + height, left:left + width] = g
        return (full,)

    return _make((x,), y, bw, tape)


# ---------------------------------------------------------------------------
# Layer objects: spec + parameters + forward rule

class Layer:
    spec: LayerSpec

    def parameters(self):
        return []

    def state_arrays(self):
        return []

    def forward(self, x, tape=None, train=False):
        raise NotImplementedError

    def astype(self, dtype):
        clone = self.__class__.__new__(self.__class__)
        clone.__dict__ = dict(self.__dict__)
        for name, p in self.parameters():
            setattr(clone, name, Tensor(p.data.astype(dtype), requires_grad=p.requires_grad))
        for name, arr in self.state_arrays():
            setattr(clone, name, arr.astype(dtype))
        return clone


class Dense(Layer):
    def __init__(self, spec, rng):
        self.spec = spec
        if spec.zero_init:
            w = np.zeros((spec.in_features, spec.out_features), dtype=np.float32)
        else:
            std = np.sqrt(_HE_GAIN / spec.in_features)
            w = rng.normal(0.0, std, size=(spec.in_features, spec.out_features)).astype(np.float32)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(spec.out_features, dtype=np.float32), requires_grad=True)

    def parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x, tape=None, train=False):
        if x.data.ndim != 2 or x.shape[1] != self.spec.in_features:
            raise DimensionError(
                f"dense layer expects (B, {self.spec.in_features}), got {x.shape}")
        from .tensor import add, matmul
        return add(matmul(x, self.weight, tape), self.bias, tape)


class Conv2d(Layer):
    def __init__(self, spec, rng):
        self.spec = spec
        fan_in = spec.in_channels * spec.kernel * spec.kernel
        std = np.sqrt(_HE_GAIN / fan_in)
        w = rng.normal(0.0, std, size=(spec.out_channels, spec.in_channels,
                                       spec.kernel, spec.kernel)).astype(np.float32)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(spec.out_channels, dtype=np.float32), requires_grad=True)

    def parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x, tape=None, train=False):
        if x.data.ndim != 4:
            raise DimensionError(f"conv2d expects NCHW input, got shape {x.shape}")
        s = self.spec
        return conv2d_op(x, self.weight, self.bias, s.stride, s.padding, tape)


class Deconv2d(Layer):
    def __init__(self, spec, rng):
        self.spec = spec
        fan_in = spec.in_channels * spec.kernel * spec.kernel
        std = np.sqrt(_HE_GAIN / fan_in)
        w = rng.normal(0.0, std, size=(spec.in_channels, spec.out_channels,
                                       spec.kernel, spec.kernel)).astype(np.float32)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(spec.out_channels, dtype=np.float32), requires_grad=True)

    def parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x, tape=None, train=False):
        if x.data.ndim != 4:
            raise DimensionError(f"deconv2d expects NCHW input, got shape {x.shape}")
        s = self.spec
        return deconv2d_op(x, self.weight, self.bias, s.stride, s.padding,
                           s.output_padding, tape)


class ReLU(Layer):
    def __init__(self, spec, rng=None):
        self.spec = spec

    def forward(self, x, tape=None, train=False):
        from .tensor import relu
        return relu(x, tape)


class BatchNorm(Layer):
    def __init__(self, spec, rng=None):
        self.spec = spec
        c = spec.features
        self.gamma = Tensor(np.ones(c, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(c, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(c, dtype=np.float32)
        self.running_var = np.ones(c, dtype=np.float32)

    def parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def state_arrays(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x, tape=None, train=False):
        if x.shape[1] != self.spec.features:
            raise DimensionError(
                f"batchnorm expects {self.spec.features} channels, got {x.shape[1]}")
        return batchnorm_op(x, self.gamma, self.beta, self.running_mean,
                            self.running_var, train, tape=tape)


class Flatten(Layer):
    def __init__(self, spec, rng=None):
        self.spec = spec

    def forward(self, x, tape=None, train=False):
        from .tensor import reshape
        return reshape(x, (x.shape[0], -1), tape)


class Crop(Layer):
    def __init__(self, spec, rng=None):
        self.spec = spec

    def forward(self, x, tape=None, train=False):
        return crop2d_op(x, self.spec.crop, tape)


_LAYER_CLASSES = {
    LayerKind.DENSE: Dense,
    LayerKind.CONV2D: Conv2d,
    LayerKind.DECONV2D: Deconv2d,
    LayerKind.RELU: ReLU,
    LayerKind.BATCHNORM: BatchNorm,
    LayerKind.FLATTEN: Flatten,
    LayerKind.CROP: Crop,
}


def build_layers(specs, rng):
    return [_LAYER_CLASSES[s.kind](s, rng) for s in specs]


def forward(layers, x, tape=None, train=False):
    """Run ``x`` through a layer stack, recording every op on ``tape``."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    x.check_finite("in network input")
    for layer in layers:
        x = layer.forward(x, tape, train)
    return x


class Network:
    """A sequential layer stack with named parameters."""

    def __init__(self, specs, rng=None, layers=None):
        self.specs = list(specs)
        self.layers = layers if layers is not None else build_layers(self.specs, rng)

    def forward(self, x, tape=None, train=False):
        return forward(self.layers, x, tape, train)

    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.parameters():
                out.append((f"layers.{i}.{name}", p))
        return out

    def state_arrays(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.state_arrays():
                out.append((f"layers.{i}.{name}", arr))
        return out

    def set_requires_grad(self, flag):
        for _, p in self.parameters():
            p.requires_grad = flag
            p._needs = flag

    def zero_grad(self):
        for _, p in self.parameters():
            p.zero_grad()

    def astype(self, dtype):
        return Network(self.specs, layers=[l.astype(dtype) for l in self.layers])

    def copy(self):
        clone = self.astype(np.float32)
        for (_, src), (_, dst) in zip(self.state_arrays(), clone.state_arrays()):
            np.copyto(dst, src)
        return clone

    def load_arrays(self, named):
        """Assign parameter and state arrays from a {name: array} mapping."""
        for name, p in self.parameters():
            if name not in named:
                raise DimensionError(f"missing parameter {name}")
            arr = np.asarray(named[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise DimensionError(
                    f"parameter {name} expects shape {p.data.shape}, got {arr.shape}")
            p.data = arr.copy()
        for name, dst in self.state_arrays():
            if name not in named:
                raise DimensionError(f"missing state array {name}")
            np.copyto(dst, np.asarray(named[name], dtype=dst.dtype))

    def named_arrays(self):
        out = {name: p.data for name, p in self.parameters()}
        out.update({name: arr for name, arr in self.state_arrays()})
        return out
