"""Minimal dense networks with hand-written reverse-mode differentiation.

Forward passes record a tape of per-layer intermediates; backward passes
replay the tape and return exact gradients for every weight/bias plus the
cotangent on the network input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import RandomSource

ACTIVATIONS = ("identity", "leaky_relu", "logistic", "softmax")


@dataclass
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str = "identity"
    alpha: float = 0.1  # slope of the negative branch, leaky_relu only

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ValueError(f"layer shapes inconsistent: w {self.w.shape}, b {self.b.shape}")
        if self.act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.act!r}")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise ValueError("layer has non-finite parameters")


@dataclass
class MlpParams:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.w.shape[1] != prev.w.shape[0]:
                raise ValueError(
                    f"layer dims do not chain: {prev.w.shape} -> {nxt.w.shape}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[0]


def init_mlp(dims: list[int], acts: list[str], rng: RandomSource, alpha: float = 0.1) -> MlpParams:
    """Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases."""
    if len(acts) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for d_in, d_out, act in zip(dims, dims[1:], acts):
        bound = np.sqrt(6.0 / (d_in + d_out))
        w = rng.gen.uniform(-bound, bound, size=(d_out, d_in))
        layers.append(Layer(w=w, b=np.zeros(d_out), act=act, alpha=alpha))
    return MlpParams(layers)


def _apply_act(z, act, alpha):
    if act == "identity":
        return z
    if act == "leaky_relu":
        return np.where(z > 0, z, alpha * z)
    if act == "logistic":
        return 1.0 / (1.0 + np.exp(-z))
    if act == "softmax":
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(act)


def mlp_forward(params: MlpParams, x: np.ndarray):
    """Returns (output, tape); tape holds (input, preactivation, output) per layer."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != params.in_dim:
        raise ValueError(f"input shape {a.shape} does not match in_dim {params.in_dim}")
    tape = []
    for layer in params.layers:
        z = a @ layer.w.T + layer.b
        out = _apply_act(z, layer.act, layer.alpha)
        tape.append((a, z, out))
        a = out
    return a, tape


def mlp_backward(params: MlpParams, tape, grad_out: np.ndarray):
    """Chain rule through the tape.

    Returns (grads, grad_in) where grads is a list of (dW, db) congruent with
    params.layers and grad_in is the cotangent on the network input.
    """
    if len(tape) != len(params.layers):
        raise ValueError("tape does not match network depth")
    da = np.asarray(grad_out, dtype=float)
    grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        a_in, z, a_out = tape[i]
        if da.shape != a_out.shape:
            raise ValueError("cotangent shape does not match tape")
        if layer.act == "identity":
            dz = da
        elif layer.act == "leaky_relu":
            dz = da * np.where(z > 0, 1.0, layer.alpha)
        elif layer.act == "logistic":
            dz = da * a_out * (1.0 - a_out)
        else:  # softmax: J^T v = p * (v - <v, p>)
            dz = a_out * (da - np.sum(da * a_out, axis=-1, keepdims=True))
        grads[i] = (dz.T @ a_in, dz.sum(axis=0))
        da = dz @ layer.w
    return grads, da


def param_arrays(params: MlpParams) -> list[np.ndarray]:
    """Flat parameter list [w0, b0, w1, b1, ...] for the optimizer."""
    out = []
    for layer in params.layers:
        out.extend([layer.w, layer.b])
    return out


def grad_arrays(grads) -> list[np.ndarray]:
    out = []
    for dw, db in grads:
        out.extend([dw, db])
    return out


def set_param_arrays(params: MlpParams, arrays: list[np.ndarray]) -> None:
    if len(arrays) != 2 * len(params.layers):
        raise ValueError("array count does not match parameter count")
    for i, layer in enumerate(params.layers):
        w, b = arrays[2 * i], arrays[2 * i + 1]
        if w.shape != layer.w.shape or b.shape != layer.b.shape:
            raise ValueError("array shapes do not match parameters")
        layer.w, layer.b = w, b


def layer_to_dict(layer: Layer) -> dict:
    d = {"weight": layer.w.tolist(), "bias": layer.b.tolist(), "activation": layer.act}
    if layer.act == "leaky_relu":
        d["alpha"] = layer.alpha
    return d


def layer_from_dict(d: dict) -> Layer:
    return Layer(
        w=np.asarray(d["weight"], dtype=float),
        b=np.asarray(d["bias"], dtype=float),
        act=d["activation"],
        alpha=float(d.get("alpha", 0.1)),
    )


def mlp_to_dict(params: MlpParams) -> dict:
    return {"layers": [layer_to_dict(l) for l in params.layers]}


def mlp_from_dict(d: dict) -> MlpParams:
    return MlpParams([layer_from_dict(ld) for ld in d["layers"]])
