"""The stochastic sanitizer: encoder + transformed additive noise + decoder.

A record x is encoded, perturbed at the bottleneck by a learned linear
transform of external Gaussian noise (so the noise covariance is W_s W_s^T),
and decoded back to the record dimension. Forward returns a tape; backward
gives exact gradients for every parameter and for x.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import mlp
from .mlp import MlpParams
from .numerics import RandomSource

FORMAT_VERSION = 1


@dataclass
class SanitizerParams:
    encoder: MlpParams
    noise_w: np.ndarray  # (bottleneck, noise_dim), no bias
    decoder: MlpParams

    def __post_init__(self):
        self.noise_w = np.asarray(self.noise_w, dtype=float)
        b = self.encoder.out_dim
        if self.noise_w.ndim != 2 or self.noise_w.shape[0] != b:
            raise ValueError(
                f"noise transform rows {self.noise_w.shape} must match bottleneck {b}"
            )
        if self.decoder.in_dim != b:
            raise ValueError("decoder input dim must match bottleneck")
        if self.decoder.out_dim != self.encoder.in_dim:
            raise ValueError("sanitized record must keep the raw record dimension")

    @property
    def record_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def noise_dim(self) -> int:
        return self.noise_w.shape[1]


@dataclass
class SanitizerGrads:
    encoder: list
    noise_w: np.ndarray
    decoder: list


def init_sanitizer(
    record_dim: int,
    rng: RandomSource,
    bottleneck: int = 10,
    hidden: int = 20,
    noise_dim: int | None = None,
    out_act: str = "logistic",
    alpha: float = 0.1,
) -> SanitizerParams:
    """Default desk-scale shape: d -> hidden -> b, noise add, b -> hidden -> d."""
    noise_dim = bottleneck if noise_dim is None else noise_dim
    enc = mlp.init_mlp([record_dim, hidden, bottleneck], ["leaky_relu", "identity"], rng, alpha)
    bound = np.sqrt(6.0 / (bottleneck + noise_dim))
    noise_w = rng.gen.uniform(-bound, bound, size=(bottleneck, noise_dim))
    dec = mlp.init_mlp([bottleneck, hidden, record_dim], ["leaky_relu", out_act], rng, alpha)
    return SanitizerParams(enc, noise_w, dec)


def sanitize_forward(params: SanitizerParams, x: np.ndarray, xi: np.ndarray):
    """x_tilde = decoder(encoder(x) + noise_w @ xi); returns (x_tilde, tape)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if x.shape[0] != xi.shape[0]:
        raise ValueError("x and xi must have the same batch size")
    if xi.shape[1] != params.noise_dim:
        raise ValueError(f"noise dim {xi.shape[1]} != {params.noise_dim}")
    h, enc_tape = mlp.mlp_forward(params.encoder, x)
    z = h + xi @ params.noise_w.T
    x_tilde, dec_tape = mlp.mlp_forward(params.decoder, z)
    return x_tilde, (enc_tape, dec_tape, xi)


def sanitize_backward(params: SanitizerParams, tape, grad_out: np.ndarray):
    """Returns (SanitizerGrads, grad_x) contracted against grad_out."""
    enc_tape, dec_tape, xi = tape
    if len(enc_tape) != len(params.encoder.layers) or len(dec_tape) != len(params.decoder.layers):
        raise ValueError("tape does not match this sanitizer")
    dec_grads, dz = mlp.mlp_backward(params.decoder, dec_tape, grad_out)
    d_noise_w = dz.T @ xi
    enc_grads, dx = mlp.mlp_backward(params.encoder, enc_tape, dz)
    return SanitizerGrads(enc_grads, d_noise_w, dec_grads), dx


def decentralized_sanitize(sanitizers, x_blocks, xi_blocks) -> np.ndarray:
    """Concatenate independent per-block sanitizations; block i sees only (x_i, xi_i)."""
    if not (len(sanitizers) == len(x_blocks) == len(xi_blocks)):
        raise ValueError("sanitizers, x blocks and noise blocks must align")
    outs = []
    for s, xb, nb in zip(sanitizers, x_blocks, xi_blocks):
        out, _ = sanitize_forward(s, xb, nb)
        outs.append(out)
    return np.concatenate(outs, axis=1)


def param_arrays(params: SanitizerParams) -> list[np.ndarray]:
    return mlp.param_arrays(params.encoder) + [params.noise_w] + mlp.param_arrays(params.decoder)


def grad_arrays(grads: SanitizerGrads) -> list[np.ndarray]:
    return mlp.grad_arrays(grads.encoder) + [grads.noise_w] + mlp.grad_arrays(grads.decoder)


def set_param_arrays(params: SanitizerParams, arrays: list[np.ndarray]) -> None:
    n_enc = 2 * len(params.encoder.layers)
    mlp.set_param_arrays(params.encoder, arrays[:n_enc])
    params.noise_w = arrays[n_enc]
    mlp.set_param_arrays(params.decoder, arrays[n_enc + 1 :])


def to_dict(params: SanitizerParams) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "encoder": mlp.mlp_to_dict(params.encoder),
        "noise_transform": params.noise_w.tolist(),
        "decoder": mlp.mlp_to_dict(params.decoder),
    }


def from_dict(d: dict) -> SanitizerParams:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported sanitizer format version: {version}")
    return SanitizerParams(
        encoder=mlp.mlp_from_dict(d["encoder"]),
        noise_w=np.asarray(d["noise_transform"], dtype=float),
        decoder=mlp.mlp_from_dict(d["decoder"]),
    )


def save(params: SanitizerParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(params), fh)


def load(path) -> SanitizerParams:
    with open(path) as fh:
        return from_dict(json.load(fh))
