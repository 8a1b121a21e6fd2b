"""Neural maximal-correlation estimation.

Three routes to rho(X~, S): the centered single-function ratio objective
(value -> rho^2 at the inner optimum), ACE-style alternation with an exact
conditional-mean table for discrete S, and the unconstrained two-dimensional
objective whose optimum is 1 + rho^2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .mlp import MlpParams
from .numerics import RandomSource, sym_eig
from .optim import AdamState, adam_update


@dataclass
class DiscreteTable:
    """Nonparametric g: one real vector per private symbol."""

    values: dict = field(default_factory=dict)  # int symbol -> (out_dim,) array
    out_dim: int = 1

    def lookup(self, ss: np.ndarray) -> np.ndarray:
        out = np.zeros((len(ss), self.out_dim))
        missing = set()
        for i, s in enumerate(ss):
            key = _symbol(s)
            if key in self.values:
                out[i] = self.values[key]
            else:
                missing.add(key)
        if missing:
            warnings.warn(f"unseen private symbols {sorted(missing)}; using g = 0")
        return out


def _symbol(s) -> int:
    val = float(np.asarray(s).ravel()[0])
    key = int(round(val))
    if abs(val - key) > 1e-9:
        raise ValueError(f"discrete private values must be integral, got {val}")
    return key


@dataclass
class MaxCorrNets:
    f_raw: MlpParams
    g_net: object  # MlpParams or DiscreteTable

    def __post_init__(self):
        g_dim = self.g_net.out_dim if isinstance(self.g_net, DiscreteTable) else self.g_net.out_dim
        if self.f_raw.out_dim != g_dim:
            raise ValueError("f and g output dims must match")


def init_maxcorr_nets(
    record_dim: int,
    rng: RandomSource,
    s_dim: int = 1,
    hidden: int = 8,
    out_dim: int = 1,
    discrete_g: bool = False,
    alpha: float = 0.1,
) -> MaxCorrNets:
    f = mlp.init_mlp([record_dim, hidden, out_dim], ["leaky_relu", "identity"], rng, alpha)
    if discrete_g:
        g = DiscreteTable(out_dim=out_dim)
    else:
        g = mlp.init_mlp([s_dim, hidden, out_dim], ["leaky_relu", "identity"], rng, alpha)
    return MaxCorrNets(f, g)


@dataclass
class MaxCorrEval:
    value: float
    f_grads: list
    g_grads: object  # list of (dw, db), or dict symbol -> gradient for tables
    cot_x: np.ndarray
    degenerate: bool = False


def _eval_fg(nets: MaxCorrNets, xts, ss):
    x = np.atleast_2d(np.asarray(xts, dtype=float))
    s = np.asarray(ss, dtype=float)
    if s.ndim == 1:
        s = s.reshape(-1, 1)
    fprime, f_tape = mlp.mlp_forward(nets.f_raw, x)
    if isinstance(nets.g_net, DiscreteTable):
        g, g_tape = nets.g_net.lookup(s), None
    else:
        g, g_tape = mlp.mlp_forward(nets.g_net, s)
    return x, s, fprime, f_tape, g, g_tape


def _backprop(nets, f_tape, g_tape, s, d_fprime, d_g):
    f_grads, cot_x = mlp.mlp_backward(nets.f_raw, f_tape, d_fprime)
    if isinstance(nets.g_net, DiscreteTable):
        g_grads = {}
        for i, row in enumerate(d_g):
            key = _symbol(s[i])
            g_grads[key] = g_grads.get(key, 0.0) + row
    else:
        g_grads, _ = mlp.mlp_backward(nets.g_net, g_tape, d_g)
    return f_grads, g_grads, cot_x


def nn_maxcorr_objective(nets: MaxCorrNets, xts, ss) -> MaxCorrEval:
    """(2 sum f g - sum g^2) / sum f^2 with f centered across the batch.

    Maximizing over (f, g) estimates rho^2(X~, S). Constant f' gives value 0
    with the degenerate flag set.
    """
    x, s, fprime, f_tape, g, g_tape = _eval_fg(nets, xts, ss)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    f = fprime - fprime.mean(axis=0, keepdims=True)
    a = float(np.sum(f * g))
    b = float(np.sum(g * g))
    c = float(np.sum(f * f))
    if c < 1e-30:
        warnings.warn("constant f': ratio objective undefined, returning 0")
        zero_g = {} if isinstance(nets.g_net, DiscreteTable) else [
            (np.zeros_like(l.w), np.zeros_like(l.b)) for l in nets.g_net.layers
        ]
        return MaxCorrEval(
            0.0,
            [(np.zeros_like(l.w), np.zeros_like(l.b)) for l in nets.f_raw.layers],
            zero_g,
            np.zeros_like(x),
            degenerate=True,
        )
    value = (2.0 * a - b) / c
    d_f = (2.0 * g * c - (2.0 * a - b) * 2.0 * f) / c**2
    d_fprime = d_f - d_f.mean(axis=0, keepdims=True)
    d_g = (2.0 * f - 2.0 * g) / c
    f_grads, g_grads, cot_x = _backprop(nets, f_tape, g_tape, s, d_fprime, d_g)
    return MaxCorrEval(value, f_grads, g_grads, cot_x)


def _rho_cosine(f, g):
    b = float(np.sum(g * g))
    c = float(np.sum(f * f))
    if b < 1e-30 or c < 1e-30:
        return 0.0
    return float(np.sum(f * g)) / np.sqrt(b * c)


def ace_refine_discrete(
    nets: MaxCorrNets,
    xts,
    ss,
    max_outer: int = 100,
    inner_steps: int = 50,
    lr: float = 1e-2,
    tol: float = 1e-5,
    history: list | None = None,
):
    """Alternate gradient ascent on f with exact conditional-mean updates of g.

    Step (a): `inner_steps` plain gradient-ascent iterations on
    sum(f g)/sum(f^2) over the f network; f is then rescaled to unit empirical
    second moment. Step (b): g(s) <- mean of f over samples with that symbol
    (the exact maximizer for fixed f). Stops when rho_hat moves < tol.
    Returns (nets, rho_hat) with rho_hat = sum(f g)/sqrt(sum f^2 sum g^2).
    """
    if not isinstance(nets.g_net, DiscreteTable):
        raise ValueError("ACE refinement requires the discrete-table g")
    if nets.f_raw.layers[-1].act != "identity":
        raise ValueError("ACE rescaling assumes an identity final layer on f")
    x = np.atleast_2d(np.asarray(xts, dtype=float))
    s = np.asarray(ss, dtype=float).ravel()
    keys = np.array([_symbol(v) for v in s])
    groups = {k: np.flatnonzero(keys == k) for k in np.unique(keys)}

    def centered_f():
        fprime, tape = mlp.mlp_forward(nets.f_raw, x)
        return fprime - fprime.mean(axis=0, keepdims=True), tape

    def set_table_to_conditional_mean(f):
        for k, idx in groups.items():
            nets.g_net.values[k] = f[idx].mean(axis=0)

    # bootstrap g from the initial f so step (a) has a nonzero target
    f, _ = centered_f()
    set_table_to_conditional_mean(f)
    rho = _rho_cosine(f, nets.g_net.lookup(s.reshape(-1, 1)))

    for outer in range(max_outer):
        g = nets.g_net.lookup(s.reshape(-1, 1))
        for _ in range(inner_steps):  # step (a): ascend sum(fg)/sum(f^2) over f
            fprime, tape = mlp.mlp_forward(nets.f_raw, x)
            f = fprime - fprime.mean(axis=0, keepdims=True)
            a_val = float(np.sum(f * g))
            c_val = float(np.sum(f * f))
            if c_val < 1e-30:
                break
            d_f = (g * c_val - a_val * 2.0 * f) / c_val**2
            d_fprime = d_f - d_f.mean(axis=0, keepdims=True)
            grads, _ = mlp.mlp_backward(nets.f_raw, tape, d_fprime)
            for layer, (dw, db) in zip(nets.f_raw.layers, grads):
                layer.w = layer.w + lr * dw
                layer.b = layer.b + lr * db
        f, _ = centered_f()
        rms = np.sqrt(float(np.sum(f * f)) / len(f))
        if rms > 1e-15:  # renormalize f to unit empirical second moment
            last = nets.f_raw.layers[-1]
            last.w = last.w / rms
            last.b = last.b / rms
            f = f / rms
        rho_pre = _rho_cosine(f, nets.g_net.lookup(s.reshape(-1, 1)))
        set_table_to_conditional_mean(f)  # step (b)
        rho_new = _rho_cosine(f, nets.g_net.lookup(s.reshape(-1, 1)))
        if history is not None:
            history.append({"outer": outer, "rho_pre_b": rho_pre, "rho_post_b": rho_new})
        if abs(rho_new - rho) < tol:
            rho = rho_new
            break
        rho = rho_new
    return nets, float(rho)


def _inv_sqrt_with_adjoint(c: np.ndarray, floor: float = 1e-8):
    """Returns (C^{-1/2}, adjoint) for the eigenvalue-floored inverse sqrt."""
    w, v = sym_eig(c)
    wc = np.maximum(w, floor)
    fw = 1.0 / np.sqrt(wc)
    s_mat = (v * fw) @ v.T

    def adjoint(s_cot: np.ndarray) -> np.ndarray:
        n = len(w)
        gamma = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                if abs(w[i] - w[j]) > 1e-12 * max(1.0, abs(w[i]), abs(w[j])):
                    gamma[i, j] = (fw[i] - fw[j]) / (w[i] - w[j])
                else:
                    gamma[i, j] = 0.0 if w[i] < floor else -0.5 * wc[i] ** -1.5
        inner = gamma * (v.T @ s_cot @ v)
        return v @ inner @ v.T

    return s_mat, adjoint


def rank2_unconstrained_objective(nets: MaxCorrNets, xts, ss) -> float:
    """2 tr(E[f f^T]^{-1/2} E[f g^T]) - tr(E[g g^T]); optimum -> 1 + rho^2."""
    value, _, _, _ = rank2_objective_with_grads(nets, xts, ss)
    return value


def rank2_objective_with_grads(nets: MaxCorrNets, xts, ss):
    """Value plus exact gradients (f net, g net, cotangents on the x rows)."""
    x, s, f_out, f_tape, g_out, g_tape = _eval_fg(nets, xts, ss)
    m = x.shape[0]
    if f_out.shape[1] != 2:
        raise ValueError("rank-2 objective needs 2-dimensional f and g outputs")
    cff = f_out.T @ f_out / m
    cfg = f_out.T @ g_out / m
    cgg = g_out.T @ g_out / m
    w, _ = sym_eig(cff)
    cond = np.inf if w[-1] <= 0 else w[0] / w[-1]
    if cond > 1e8:
        raise ValueError(f"second-moment matrix of f is ill-conditioned: cond = {cond:.3e}")
    s_mat, adjoint = _inv_sqrt_with_adjoint(cff)
    value = float(2.0 * np.trace(s_mat @ cfg) - np.trace(cgg))
    d_g = 2.0 * f_out @ s_mat / m - 2.0 * g_out / m
    c_cot = adjoint(2.0 * cfg.T)
    d_f = 2.0 * g_out @ s_mat.T / m + f_out @ (c_cot + c_cot.T) / m
    f_grads, g_grads, cot_x = _backprop(nets, f_tape, g_tape, s, d_f, d_g)
    return value, f_grads, g_grads, cot_x


def fit_nn_maxcorr(
    nets: MaxCorrNets,
    xts,
    ss,
    steps: int = 300,
    lr: float = 1e-2,
    rank2: bool = False,
) -> list[float]:
    """Adam ascent of the chosen objective over both networks; returns values."""
    f_state = AdamState.for_params(mlp.param_arrays(nets.f_raw))
    g_is_net = not isinstance(nets.g_net, DiscreteTable)
    g_state = AdamState.for_params(mlp.param_arrays(nets.g_net)) if g_is_net else None
    hyper = {"lr": lr, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
    values = []
    for _ in range(steps):
        if rank2:
            value, f_grads, g_grads, _ = rank2_objective_with_grads(nets, xts, ss)
        else:
            ev = nn_maxcorr_objective(nets, xts, ss)
            value, f_grads, g_grads = ev.value, ev.f_grads, ev.g_grads
        values.append(value)
        new_f = adam_update(
            mlp.param_arrays(nets.f_raw),
            [-a for a in mlp.grad_arrays(f_grads)],
            f_state,
            **hyper,
        )
        mlp.set_param_arrays(nets.f_raw, new_f)
        if g_is_net:
            new_g = adam_update(
                mlp.param_arrays(nets.g_net),
                [-a for a in mlp.grad_arrays(g_grads)],
                g_state,
                **hyper,
            )
            mlp.set_param_arrays(nets.g_net, new_g)
        else:
            for key, grad in g_grads.items():
                cur = nets.g_net.values.get(key, np.zeros(nets.g_net.out_dim))
                nets.g_net.values[key] = cur + lr * grad
    return values
