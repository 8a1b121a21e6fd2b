"""Variational utility and privacy objectives, plus the public-task utility.

All three return (value, parameter gradients, cotangents on the sanitized
batch); values are written so that larger is better for the inner model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp
from .mlp import MlpParams

PROB_FLOOR = 1e-12
TASK_KINDS = ("regression-MAE", "regression-MSE", "classification-CE")


@dataclass
class PosteriorNet:
    g_phi: MlpParams
    gamma: str = "identity"

    def __post_init__(self):
        if self.gamma != "identity":
            raise ValueError("only the identity feature map is supported")
        if self.g_phi.in_dim != self.g_phi.out_dim:
            raise ValueError("posterior must map the record dim to itself")


@dataclass
class PrivacyClassifier:
    q_tau: MlpParams
    labels: list  # class symbols, in output order

    def __post_init__(self):
        if self.q_tau.layers[-1].act != "softmax":
            raise ValueError("privacy classifier needs a softmax final layer")
        if self.q_tau.out_dim != len(self.labels):
            raise ValueError("one output per label required")


def utility_objective(post: PosteriorNet, xs, xts):
    """-(1/M) sum ||g_phi(x~) - x||^2: the reconstruction log-posterior bound."""
    x = np.atleast_2d(np.asarray(xs, dtype=float))
    xt = np.atleast_2d(np.asarray(xts, dtype=float))
    if x.shape != xt.shape or x.shape[1] != post.g_phi.in_dim:
        raise ValueError("batch shapes do not match the posterior network")
    recon, tape = mlp.mlp_forward(post.g_phi, xt)
    m = x.shape[0]
    diff = recon - x
    value = -float(np.sum(diff * diff)) / m
    grads, cot_xt = mlp.mlp_backward(post.g_phi, tape, -2.0 * diff / m)
    return value, grads, cot_xt


def _log_prob_value_and_grads(net: MlpParams, xts, idx):
    xt = np.atleast_2d(np.asarray(xts, dtype=float))
    probs, tape = mlp.mlp_forward(net, xt)
    m = xt.shape[0]
    picked = probs[np.arange(m), idx]
    clamped = np.clip(picked, PROB_FLOOR, 1.0)
    value = float(np.mean(np.log(clamped)))
    d_probs = np.zeros_like(probs)
    live = picked > PROB_FLOOR
    d_probs[np.arange(m), idx] = np.where(live, 1.0 / (m * clamped), 0.0)
    grads, cot_xt = mlp.mlp_backward(net, tape, d_probs)
    return value, grads, cot_xt


def privacy_objective(clf: PrivacyClassifier, xts, ss):
    """(1/M) sum log q_tau(s_i | x~_i) with hard labels; always <= 0."""
    s = np.asarray(ss).ravel()
    index_of = {label: i for i, label in enumerate(clf.labels)}
    try:
        idx = np.array([index_of[int(round(float(v)))] for v in s])
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not in the classifier's label set") from exc
    return _log_prob_value_and_grads(clf.q_tau, xts, idx)


def public_task_utility(task_model: MlpParams, xts, us, kind: str):
    """-loss(task_model(x~), u): negative MAE, MSE, or cross-entropy."""
    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task kind {kind!r}")
    xt = np.atleast_2d(np.asarray(xts, dtype=float))
    u = np.asarray(us, dtype=float)
    m = xt.shape[0]
    if kind == "classification-CE":
        if task_model.layers[-1].act != "softmax":
            raise ValueError("classification task model needs a softmax final layer")
        idx = u.ravel().astype(int)
        if np.any(np.abs(u.ravel() - idx) > 1e-9) or idx.min() < 0 or idx.max() >= task_model.out_dim:
            raise ValueError("labels must be integers within the model's class range")
        return _log_prob_value_and_grads(task_model, xt, idx)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    if u.shape != (m, task_model.out_dim):
        raise ValueError(f"target shape {u.shape} does not match model output")
    pred, tape = mlp.mlp_forward(task_model, xt)
    diff = pred - u
    if kind == "regression-MAE":
        value = -float(np.sum(np.abs(diff))) / m
        d_pred = -np.sign(diff) / m
    else:  # regression-MSE
        value = -float(np.sum(diff * diff)) / m
        d_pred = -2.0 * diff / m
    grads, cot_xt = mlp.mlp_backward(task_model, tape, d_pred)
    return value, grads, cot_xt
