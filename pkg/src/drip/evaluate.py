"""Post-hoc evaluation: retrained adversaries, utility models, and closeness.

The threat model is a fresh adversary: models trained during sanitization are
never reused. Evaluation trains small dense networks from scratch on the
(sanitized) training split and reports test metrics averaged over seeds,
alongside the kernel maximal correlation against the private column and the
MMD legacy-compatibility score.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import mlp, sanitizer as san
from .data import Dataset
from .dependence import KernelSpec, kernel_maxcorr, mmd2_estimate
from .neural_mc import ace_refine_discrete, init_maxcorr_nets
from .numerics import RandomSource, gaussian_sample
from .optim import AdamState, adam_update, clip_global_norm
from .variational import public_task_utility


def _fit_model(net, x, y, kind, rng, steps=400, batch=128, lr=5e-3, weight_decay=0.0):
    """Minibatch Adam ascent of the negative loss; returns the trained net.

    weight_decay is decoupled L2 shrinkage on weight matrices (biases exempt),
    which keeps retrained classifier probabilities calibrated on small tables.
    """
    n = x.shape[0]
    state = AdamState.for_params(mlp.param_arrays(net))
    queue: list[int] = []
    for _ in range(steps):
        while len(queue) < min(batch, n):
            queue.extend(rng.gen.permutation(n).tolist())
        idx, queue = queue[: min(batch, n)], queue[min(batch, n) :]
        _, grads, _ = public_task_utility(net, x[idx], y[idx], kind)
        flat = clip_global_norm(mlp.grad_arrays(grads), 5.0)
        new = adam_update(mlp.param_arrays(net), [-g for g in flat], state,
                          lr=lr, beta1=0.9, beta2=0.999)
        if weight_decay > 0.0:
            new = [p * (1.0 - lr * weight_decay) if i % 2 == 0 else p
                   for i, p in enumerate(new)]
        mlp.set_param_arrays(net, new)
    return net


def train_adversary_eval(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    task_kind: str,
    seeds=(0, 1, 2),
    hidden: int = 20,
    steps: int = 400,
    lr: float = 5e-3,
    weight_decay: float = 2.0,
) -> dict:
    """Fresh 20-unit dense models per seed; mean test metrics.

    Classification returns {"accuracy", "ce_loss"}; regression {"mae"}.
    """
    d = train_x.shape[1]
    if task_kind == "classification-CE":
        classes = np.unique(train_y.astype(int))
        if len(classes) < 2:
            raise ValueError("degenerate training labels: only one class present")
        k = int(train_y.max()) + 1
        dims, acts = [d, hidden, hidden, k], ["leaky_relu", "leaky_relu", "softmax"]
    else:
        dims, acts = [d, hidden, hidden, 1], ["leaky_relu", "leaky_relu", "identity"]
    accs, losses, maes = [], [], []
    for seed in seeds:
        rng = RandomSource(seed)
        net = mlp.init_mlp(dims, acts, rng)
        _fit_model(net, train_x, train_y, task_kind, rng, steps=steps, lr=lr,
                   weight_decay=weight_decay)
        pred, _ = mlp.mlp_forward(net, test_x)
        if task_kind == "classification-CE":
            labels = test_y.astype(int)
            accs.append(float(np.mean(np.argmax(pred, axis=1) == labels)))
            picked = np.clip(pred[np.arange(len(labels)), labels], 1e-12, 1.0)
            losses.append(float(-np.mean(np.log(picked))))
        else:
            maes.append(float(np.mean(np.abs(pred.ravel() - test_y.ravel()))))
    if task_kind == "classification-CE":
        return {"accuracy": float(np.mean(accs)), "ce_loss": float(np.mean(losses))}
    return {"mae": float(np.mean(maes))}


def legacy_compat_score(spec: KernelSpec, raw_test: np.ndarray, sanitized_test: np.ndarray) -> float:
    if raw_test.shape != sanitized_test.shape:
        raise ValueError("raw and sanitized test sets must have equal shapes")
    return mmd2_estimate(spec, raw_test, sanitized_test)


@dataclass
class EvalReport:
    adversary: dict
    utility: dict | None
    kernel_maxcorr_s: float
    nn_maxcorr_s: float | None
    legacy_compat: float | None
    seeds: list

    def __post_init__(self):
        numeric = [*self.adversary.values(), self.kernel_maxcorr_s]
        if self.utility:
            numeric += list(self.utility.values())
        if self.legacy_compat is not None:
            numeric.append(self.legacy_compat)
        if not all(np.isfinite(v) for v in numeric):
            raise ValueError("evaluation produced non-finite metrics")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def sanitize_matrix(params: san.SanitizerParams, x: np.ndarray, rng: RandomSource) -> np.ndarray:
    xi = gaussian_sample(rng, (x.shape[0], params.noise_dim))
    out, _ = san.sanitize_forward(params, x, xi)
    return out


def _task_kind_for(ds: Dataset, column: str) -> str:
    kind = dict(zip(ds.names, ds.kinds))[column]
    return "classification-CE" if kind == "categorical" else "regression-MAE"


def run_evaluation(
    ds: Dataset,
    sanitizer_params: san.SanitizerParams | None = None,
    seeds=(0, 1, 2),
    spec: KernelSpec | None = None,
    with_nn_maxcorr: bool = False,
    adversary_steps: int = 400,
) -> EvalReport:
    """Evaluate raw (sanitizer None) or sanitized data against the dataset's
    private column, plus the public task when the dataset declares one."""
    spec = spec or KernelSpec(sigma=1.0, eta=0.01)
    x_train, s_train, u_train = ds.split("train")
    x_test, s_test, u_test = ds.split("test")

    legacy = None
    if sanitizer_params is not None:
        noise = RandomSource(max(seeds) + 1).spawn(2)
        xt_train = sanitize_matrix(sanitizer_params, x_train, noise[0])
        xt_test = sanitize_matrix(sanitizer_params, x_test, noise[1])
        legacy = legacy_compat_score(spec, x_test, xt_test)
    else:
        xt_train, xt_test = x_train, x_test

    adversary = train_adversary_eval(
        xt_train, s_train, xt_test, s_test, _task_kind_for(ds, ds.private),
        seeds=seeds, steps=adversary_steps,
    )
    utility = None
    if ds.public is not None:
        utility = train_adversary_eval(
            xt_train, u_train, xt_test, u_test, _task_kind_for(ds, ds.public),
            seeds=seeds, steps=adversary_steps,
        )
    rho = kernel_maxcorr(spec, spec, xt_test, s_test.reshape(-1, 1)).rho_hat

    nn_rho = None
    if with_nn_maxcorr:
        nets = init_maxcorr_nets(xt_test.shape[1], RandomSource(seeds[0]), discrete_g=True)
        _, nn_rho = ace_refine_discrete(nets, xt_test, s_test)
    return EvalReport(
        adversary=adversary,
        utility=utility,
        kernel_maxcorr_s=float(rho),
        nn_maxcorr_s=nn_rho,
        legacy_compat=legacy,
        seeds=list(seeds),
    )
