"""LeNet1D: two conv blocks, global average pooling, two dense layers.

Inputs are ``(batch, channels, length)``; logits are ``(batch, output_dim)``.
Global average pooling makes the output shape independent of input length,
so a model trained on 30 s segments can score 10 s ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import NonFiniteError, ValidationError
from . import layers

ARCH_NAME = "lenet1d"
ARCH_VERSION = 1


def lenet1d_architecture(output_dim, in_channels=1, conv_channels=(16, 32), kernel_size=7,
                         pool_size=4, hidden=64) -> dict:
    if kernel_size % 2 != 1:
        raise ValidationError("kernel_size must be odd for same padding")
    return {
        "name": ARCH_NAME,
        "version": ARCH_VERSION,
        "in_channels": int(in_channels),
        "conv_channels": [int(c) for c in conv_channels],
        "kernel_size": int(kernel_size),
        "pool_size": int(pool_size),
        "hidden": int(hidden),
        "output_dim": int(output_dim),
    }


def receptive_field(arch) -> int:
    """Input span seen by one pooled feature of the last conv block."""
    k, p = arch["kernel_size"], arch["pool_size"]
    rf, jump = 1, 1
    for _ in arch["conv_channels"]:
        rf += (k - 1) * jump
        rf += (p - 1) * jump
        jump *= p
    return rf


def min_length(arch) -> int:
    return max(receptive_field(arch), arch["pool_size"] ** len(arch["conv_channels"]))


def parameter_shapes(arch) -> dict:
    shapes = {}
    c_in = arch["in_channels"]
    for i, c_out in enumerate(arch["conv_channels"], start=1):
        shapes[f"conv{i}.weight"] = (c_out, c_in, arch["kernel_size"])
        shapes[f"conv{i}.bias"] = (c_out,)
        c_in = c_out
    shapes["fc1.weight"] = (arch["hidden"], c_in)
    shapes["fc1.bias"] = (arch["hidden"],)
    shapes["fc2.weight"] = (arch["output_dim"], arch["hidden"])
    shapes["fc2.bias"] = (arch["output_dim"],)
    return shapes


@dataclass
class ModelState:
    """Architecture descriptor plus named float64 parameter tensors.

    ``target_offset``/``target_scale`` undo target standardisation for
    regression heads; classification models leave them ``None``.
    """

    arch: dict
    params: dict
    target_offset: Optional[np.ndarray] = None
    target_scale: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def output_dim(self) -> int:
        return self.arch["output_dim"]

    def copy(self) -> "ModelState":
        return ModelState(
            dict(self.arch),
            {k: v.copy() for k, v in self.params.items()},
            None if self.target_offset is None else self.target_offset.copy(),
            None if self.target_scale is None else self.target_scale.copy(),
            dict(self.extra),
        )

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


def init_model(arch, rng) -> ModelState:
    """Fan-in scaled uniform weights in ``+-sqrt(1/fan_in)``, zero biases."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    params = {}
    for name, shape in parameter_shapes(arch).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(1.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return ModelState(dict(arch), params)


def _as_channel_last(batch, arch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3 or x.shape[1] != arch["in_channels"]:
        raise ValidationError(
            f"expected input (batch, {arch['in_channels']}, length), got {np.shape(batch)}"
        )
    if x.shape[2] < min_length(arch):
        raise ValidationError(
            f"input length {x.shape[2]} below the receptive field ({min_length(arch)} samples)"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("non-finite value in network input")
    return np.ascontiguousarray(x.transpose(0, 2, 1))


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {name}")


def _forward(model: ModelState, batch, keep_cache: bool):
    arch, p = model.arch, model.params
    h = _as_channel_last(batch, arch)
    caches = []
    for i in range(1, len(arch["conv_channels"]) + 1):
        h, c_conv = layers.conv1d_forward(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"])
        # relu(maxpool(x)) == maxpool(relu(x)); pooling first touches 4x fewer values
        h, c_pool = layers.maxpool_forward(h, arch["pool_size"])
        h, c_relu = layers.relu_forward(h)
        caches.append((c_conv, c_relu, c_pool))
    h, c_gap = layers.gap_forward(h)
    h, c_fc1 = layers.dense_forward(h, p["fc1.weight"], p["fc1.bias"])
    h, c_relu = layers.relu_forward(h)
    logits, c_fc2 = layers.dense_forward(h, p["fc2.weight"], p["fc2.bias"])
    _check_finite("logits", logits)
    if not keep_cache:
        return logits, None
    return logits, (caches, c_gap, c_fc1, c_relu, c_fc2)


def forward(model: ModelState, batch) -> np.ndarray:
    """Raw logits ``(batch, output_dim)``; no output nonlinearity."""
    return _forward(model, batch, keep_cache=False)[0]


def _backprop(model: ModelState, dlogits, cache) -> dict:
    caches, c_gap, c_fc1, c_relu, c_fc2 = cache
    grads = {}
    dh, grads["fc2.weight"], grads["fc2.bias"] = layers.dense_backward(dlogits, c_fc2)
    dh = layers.relu_backward(dh, c_relu)
    dh, grads["fc1.weight"], grads["fc1.bias"] = layers.dense_backward(dh, c_fc1)
    dh = layers.gap_backward(dh, c_gap)
    for i in range(len(caches), 0, -1):
        c_conv, c_relu_i, c_pool = caches[i - 1]
        dh = layers.relu_backward(dh, c_relu_i)
        dh = layers.maxpool_backward(dh, c_pool)
        dh, grads[f"conv{i}.weight"], grads[f"conv{i}.bias"] = layers.conv1d_backward(
            dh, c_conv, need_input_grad=i > 1
        )
    for name, g in grads.items():
        _check_finite(f"gradient of {name}", g)
    return grads


# --- losses ----------------------------------------------------------------


def _check_shapes(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def bce_with_logits(logits, targets) -> float:
    """Mean over all elements of ``max(z,0) - z*t + log(1 + exp(-|z|))``."""
    z, t = _check_shapes(logits, targets)
    return float(np.mean(np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mse_loss(pred, targets) -> float:
    p, t = _check_shapes(pred, targets)
    return float(np.mean((p - t) ** 2))


LOSSES = {"bce": bce_with_logits, "mse": mse_loss}


def _loss_grad(kind, z, t):
    if kind == "bce":
        return (sigmoid(z) - t) / z.size
    if kind == "mse":
        return 2.0 * (z - t) / z.size
    raise ValidationError(f"unknown loss kind {kind!r}")


def backward(model: ModelState, batch, targets, loss_kind, loss_scale=1.0):
    """Loss and its gradient w.r.t. every parameter.

    Returns ``(loss, grads)``; ``grads`` has the same keys and shapes as
    ``model.params``. ``loss_scale`` multiplies the loss before differentiation.
    """
    if loss_kind not in LOSSES:
        raise ValidationError(f"unknown loss kind {loss_kind!r}")
    logits, cache = _forward(model, batch, keep_cache=True)
    logits, targets = _check_shapes(logits, targets)
    loss = loss_scale * LOSSES[loss_kind](logits, targets)
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite {loss_kind} loss")
    dlogits = loss_scale * _loss_grad(loss_kind, logits, targets)
    return loss, _backprop(model, dlogits, cache)
