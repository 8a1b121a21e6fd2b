"""Alternating max-min training of the sanitizer.

Each outer step draws a minibatch and noise, freezes the sanitizer while the
inner models (reconstruction posterior or task model, privacy adversary,
discriminator) take their ascent steps, then pushes one Adam step on the
sanitizer through the combined objective J = utility - l1*privacy - l2*reg.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import mlp, sanitizer as san
from .dependence import KernelSpec, kernel_maxcorr, kernel_maxcorr_gradient
from .mlp import MlpParams
from .neural_mc import DiscreteTable, MaxCorrNets, init_maxcorr_nets, nn_maxcorr_objective
from .numerics import RandomSource, gaussian_sample
from .optim import AdamState, adam_update, clip_global_norm
from .regularizer import Discriminator, da_loss, regularizer_value
from .sanitizer import SanitizerParams
from .variational import PosteriorNet, PrivacyClassifier, privacy_objective, public_task_utility, utility_objective

PRIVACY_METRICS = ("variational", "nn-maxcorr", "kernel-maxcorr")
REGULARIZERS = ("domain-adaptation", "mmd")
UTILITIES = ("variational-reconstruction", "public-task")


@dataclass
class TradeoffConfig:
    lambda1: float = 1.0
    lambda2: float = 0.0
    privacy_metric: str = "kernel-maxcorr"
    regularizer: str = "mmd"
    utility: str = "variational-reconstruction"
    task_kind: str = "classification-CE"  # only for public-task utility
    batch_size: int = 64
    inner_steps: int = 5
    outer_steps: int = 500
    lr: float = 1e-4
    inner_lr: float | None = None  # inner models fall back to lr when unset
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    bottleneck: int = 10
    hidden: int = 20
    sigma: float = 1.0
    eta: float = 0.01
    reg_sigma: float | None = None  # wider MMD kernel for training keeps the
    # closeness pull alive while clouds are still far apart; None -> sigma
    clip_norm: float = 5.0
    conv_window: int = 50
    conv_tol: float = 1e-4

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda weights must be nonnegative")
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2")
        if self.privacy_metric not in PRIVACY_METRICS:
            raise ValueError(f"unknown privacy metric {self.privacy_metric!r}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.utility not in UTILITIES:
            raise ValueError(f"unknown utility {self.utility!r}")

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(sigma=self.sigma, eta=self.eta)

    def reg_spec(self) -> KernelSpec:
        return KernelSpec(sigma=self.sigma if self.reg_sigma is None else self.reg_sigma,
                          eta=self.eta)


@dataclass
class TrainData:
    """Training arrays: records, private labels/values, optional public target."""

    x: np.ndarray
    s: np.ndarray
    u: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.s = np.asarray(self.s, dtype=float).ravel()
        if self.x.shape[0] == 0:
            raise ValueError("empty dataset")
        if len(self.s) != self.x.shape[0]:
            raise ValueError("private column length must match the record count")
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float).ravel()
            if len(self.u) != self.x.shape[0]:
                raise ValueError("public column length must match the record count")


@dataclass
class TrainState:
    sanitizer: SanitizerParams
    sanitizer_opt: AdamState
    utility_model: object  # PosteriorNet or task MlpParams
    utility_opt: AdamState
    privacy_model: object | None  # PrivacyClassifier, MaxCorrNets, or None (kernel)
    privacy_opt: object | None
    discriminator: Discriminator | None
    disc_opt: AdamState | None
    noise_rng: RandomSource
    step: int = 0
    metrics: list = field(default_factory=list)
    last_inner_trace: dict = field(default_factory=dict)


def _discrete_labels(values: np.ndarray) -> list[int] | None:
    """Sorted integer label set, or None if the column is not integral/small."""
    vals = np.unique(values)
    ints = np.round(vals).astype(int)
    if np.max(np.abs(vals - ints)) > 1e-9 or len(vals) > 20:
        return None
    return [int(v) for v in ints]


def init_state(config: TradeoffConfig, data: TrainData) -> TrainState:
    root = RandomSource(config.seed)
    init_rng, noise_rng = root.spawn(2)
    d = data.x.shape[1]
    sanit = san.init_sanitizer(
        d, init_rng, bottleneck=config.bottleneck, hidden=config.hidden
    )

    if config.utility == "variational-reconstruction":
        net = mlp.init_mlp([d, config.hidden, d], ["leaky_relu", "identity"], init_rng)
        utility_model: object = PosteriorNet(net)
        util_params = mlp.param_arrays(net)
    else:
        if data.u is None:
            raise ValueError("public-task utility configured but the dataset has no public column")
        if config.task_kind == "classification-CE":
            labels = _discrete_labels(data.u)
            if labels is None:
                raise ValueError("classification task needs small integer labels")
            if labels != list(range(len(labels))):
                raise ValueError("classification labels must be 0..K-1")
            utility_model = mlp.init_mlp(
                [d, config.hidden, len(labels)], ["leaky_relu", "softmax"], init_rng
            )
        else:
            utility_model = mlp.init_mlp([d, config.hidden, 1], ["leaky_relu", "identity"], init_rng)
        util_params = mlp.param_arrays(utility_model)

    privacy_model: object | None = None
    privacy_opt: object | None = None
    if config.privacy_metric == "variational":
        labels = _discrete_labels(data.s)
        if labels is None:
            raise ValueError("variational privacy needs a discrete private column")
        net = mlp.init_mlp([d, config.hidden, len(labels)], ["leaky_relu", "softmax"], init_rng)
        privacy_model = PrivacyClassifier(net, labels)
        privacy_opt = AdamState.for_params(mlp.param_arrays(net))
    elif config.privacy_metric == "nn-maxcorr":
        discrete = _discrete_labels(data.s) is not None
        privacy_model = init_maxcorr_nets(
            d, init_rng, s_dim=1, hidden=config.hidden, discrete_g=discrete
        )
        privacy_opt = {
            "f": AdamState.for_params(mlp.param_arrays(privacy_model.f_raw)),
            "g": None
            if discrete
            else AdamState.for_params(mlp.param_arrays(privacy_model.g_net)),
        }

    discriminator = None
    disc_opt = None
    if config.regularizer == "domain-adaptation":
        net = mlp.init_mlp([d, config.hidden, 1], ["leaky_relu", "logistic"], init_rng)
        discriminator = Discriminator(net)
        disc_opt = AdamState.for_params(mlp.param_arrays(net))

    return TrainState(
        sanitizer=sanit,
        sanitizer_opt=AdamState.for_params(san.param_arrays(sanit)),
        utility_model=utility_model,
        utility_opt=AdamState.for_params(util_params),
        privacy_model=privacy_model,
        privacy_opt=privacy_opt,
        discriminator=discriminator,
        disc_opt=disc_opt,
        noise_rng=noise_rng,
    )


def _utility_eval(config, state, x, xt, u):
    if config.utility == "variational-reconstruction":
        value, grads, cot = utility_objective(state.utility_model, x, xt)
        params = mlp.param_arrays(state.utility_model.g_phi)
        return value, grads, cot, params, state.utility_model.g_phi
    value, grads, cot = public_task_utility(state.utility_model, xt, u, config.task_kind)
    return value, grads, cot, mlp.param_arrays(state.utility_model), state.utility_model


def _privacy_eval(config, state, xt, s):
    """Value, cotangents on xt, and extra metrics for the configured privacy term."""
    if config.privacy_metric == "variational":
        value, _, cot = privacy_objective(state.privacy_model, xt, s)
        return value, cot, {}
    if config.privacy_metric == "nn-maxcorr":
        ev = nn_maxcorr_objective(state.privacy_model, xt, s)
        rho = np.sqrt(max(ev.value, 0.0))
        return ev.value, ev.cot_x, {"rho_hat": float(rho)}
    spec = config.kernel_spec()
    sol = kernel_maxcorr(spec, spec, xt, s.reshape(-1, 1))
    cot = kernel_maxcorr_gradient(spec, sol, xt)
    return sol.rho_hat, cot, {"rho_hat": sol.rho_hat}


def _regularizer_eval(config, state, x, xt):
    if config.lambda2 == 0.0:
        return 0.0, np.zeros_like(xt)
    reg_state = state.discriminator if config.regularizer == "domain-adaptation" else config.reg_spec()
    return regularizer_value(config.regularizer, reg_state, x, xt)


def assemble_objective(config: TradeoffConfig, state: TrainState, x, xt, s, u=None):
    """J = utility - l1*privacy - l2*regularizer, with cotangents on xt.

    Inner models are treated as frozen; the cotangent is what the sanitizer
    update backpropagates.
    """
    util_value, _, util_cot, _, _ = _utility_eval(config, state, x, xt, u)
    parts = {"utility": util_value, "privacy": 0.0, "regularizer": 0.0}
    cot = util_cot.copy()
    if config.lambda1 > 0:
        p_value, p_cot, extra = _privacy_eval(config, state, xt, s)
        parts["privacy"] = p_value
        parts.update(extra)
        cot -= config.lambda1 * p_cot
    reg_value, reg_cot = _regularizer_eval(config, state, x, xt)
    parts["regularizer"] = reg_value
    if config.lambda2 > 0:
        cot -= config.lambda2 * reg_cot
    j = util_value - config.lambda1 * parts["privacy"] - config.lambda2 * reg_value
    return j, cot, parts


def _ascend(params, grads, opt_state, config):
    neg = [-g for g in clip_global_norm(grads, config.clip_norm)]
    lr = config.lr if config.inner_lr is None else config.inner_lr
    return adam_update(params, neg, opt_state, lr=lr, beta1=config.beta1,
                       beta2=config.beta2, eps=config.eps)


def _inner_utility_phase(config, state, x, xt, u) -> list[float]:
    values = []
    for _ in range(config.inner_steps):
        value, grads, _, params, net = _utility_eval(config, state, x, xt, u)
        values.append(value)
        mlp.set_param_arrays(net, _ascend(params, mlp.grad_arrays(grads), state.utility_opt, config))
    return values


def _inner_privacy_phase(config, state, xt, s) -> list[float]:
    values = []
    if config.privacy_metric == "variational":
        for _ in range(config.inner_steps):
            value, grads, _ = privacy_objective(state.privacy_model, xt, s)
            values.append(value)
            params = mlp.param_arrays(state.privacy_model.q_tau)
            mlp.set_param_arrays(
                state.privacy_model.q_tau,
                _ascend(params, mlp.grad_arrays(grads), state.privacy_opt, config),
            )
    elif config.privacy_metric == "nn-maxcorr":
        nets: MaxCorrNets = state.privacy_model
        table = isinstance(nets.g_net, DiscreteTable)

        def refresh_table():
            # exact conditional-mean refresh: the maximizing g for fixed f
            fprime, _ = mlp.mlp_forward(nets.f_raw, xt)
            f = fprime - fprime.mean(axis=0, keepdims=True)
            keys = np.round(np.asarray(s, dtype=float).ravel()).astype(int)
            for k in np.unique(keys):
                nets.g_net.values[int(k)] = f[keys == k].mean(axis=0)

        if table:
            refresh_table()  # bootstrap so the first ascent has a live target
        for _ in range(config.inner_steps):
            ev = nn_maxcorr_objective(nets, xt, s)
            values.append(ev.value)
            mlp.set_param_arrays(
                nets.f_raw,
                _ascend(mlp.param_arrays(nets.f_raw), mlp.grad_arrays(ev.f_grads),
                        state.privacy_opt["f"], config),
            )
            if table:
                refresh_table()
            else:
                mlp.set_param_arrays(
                    nets.g_net,
                    _ascend(mlp.param_arrays(nets.g_net), mlp.grad_arrays(ev.g_grads),
                            state.privacy_opt["g"], config),
                )
    # kernel-maxcorr: the inner maximization is solved exactly per batch
    return values


def _inner_regularizer_phase(config, state, x, xt) -> list[float]:
    values = []
    if config.regularizer == "domain-adaptation":
        for _ in range(config.inner_steps):
            value, grads, _ = da_loss(state.discriminator, x, xt)
            values.append(value)
            params = mlp.param_arrays(state.discriminator.d_net)
            mlp.set_param_arrays(
                state.discriminator.d_net,
                _ascend(params, mlp.grad_arrays(grads), state.disc_opt, config),
            )
    return values


def alternating_step(state: TrainState, config: TradeoffConfig, batch, rng: RandomSource | None = None) -> TrainState:
    """One outer iteration: noise draw, inner ascents, one sanitizer update."""
    x, s, u = batch
    noise_rng = rng if rng is not None else state.noise_rng
    xi = gaussian_sample(noise_rng, (x.shape[0], state.sanitizer.noise_dim))
    xt, tape = san.sanitize_forward(state.sanitizer, x, xi)

    trace = {"utility": _inner_utility_phase(config, state, x, xt, u)}
    if config.lambda1 > 0:
        trace["privacy"] = _inner_privacy_phase(config, state, xt, s)
    if config.lambda2 > 0:
        trace["regularizer"] = _inner_regularizer_phase(config, state, x, xt)
    state.last_inner_trace = trace

    j, cot, parts = assemble_objective(config, state, x, xt, s, u)
    grads, _ = san.sanitize_backward(state.sanitizer, tape, cot)
    flat = clip_global_norm(san.grad_arrays(grads), config.clip_norm)
    new_params = adam_update(
        san.param_arrays(state.sanitizer),
        [-g for g in flat],
        state.sanitizer_opt,
        lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps,
    )
    san.set_param_arrays(state.sanitizer, new_params)

    state.step += 1
    row = {"step": state.step, "J": float(j),
           "utility": float(parts["utility"]),
           "privacy": float(parts["privacy"]),
           "regularizer": float(parts["regularizer"])}
    if "rho_hat" in parts:
        row["rho_hat"] = float(parts["rho_hat"])
    state.metrics.append(row)
    return state


def train(config: TradeoffConfig, data: TrainData):
    """Run alternating steps with epoch-wise shuffled minibatches.

    Stops at outer_steps or when the window-averaged J stops moving
    (|ma_t - ma_{t-1}| < conv_tol once more than conv_window steps exist).
    Returns (final TrainState, metrics history).
    """
    state = init_state(config, data)
    shuffle_rng = RandomSource(config.seed).spawn(3)[2]
    n = data.x.shape[0]
    m = min(config.batch_size, n)
    queue: list[int] = []
    while state.step < config.outer_steps:
        while len(queue) < m:  # refill with a fresh epoch permutation
            queue.extend(shuffle_rng.gen.permutation(n).tolist())
        idx, queue = queue[:m], queue[m:]
        batch = (data.x[idx], data.s[idx], None if data.u is None else data.u[idx])
        alternating_step(state, config, batch)
        js = [row["J"] for row in state.metrics]
        w = config.conv_window
        if len(js) > w:
            ma_now = float(np.mean(js[-w:]))
            ma_prev = float(np.mean(js[-w - 1 : -1]))
            if abs(ma_now - ma_prev) < config.conv_tol:
                break
    return state, state.metrics


def state_to_dict(state: TrainState, config: TradeoffConfig) -> dict:
    """Checkpoint payload: sanitizer + inner models (optimizer moments excluded)."""
    out = {
        "format_version": san.FORMAT_VERSION,
        "config": asdict(config),
        "sanitizer": san.to_dict(state.sanitizer),
        "step": state.step,
    }
    if isinstance(state.utility_model, PosteriorNet):
        out["utility_model"] = {"kind": "posterior", "net": mlp.mlp_to_dict(state.utility_model.g_phi)}
    else:
        out["utility_model"] = {"kind": "task", "net": mlp.mlp_to_dict(state.utility_model)}
    if isinstance(state.privacy_model, PrivacyClassifier):
        out["privacy_model"] = {
            "kind": "classifier",
            "net": mlp.mlp_to_dict(state.privacy_model.q_tau),
            "labels": state.privacy_model.labels,
        }
    elif isinstance(state.privacy_model, MaxCorrNets):
        g = state.privacy_model.g_net
        out["privacy_model"] = {
            "kind": "maxcorr",
            "f": mlp.mlp_to_dict(state.privacy_model.f_raw),
            "g": {str(k): np.asarray(v).tolist() for k, v in g.values.items()}
            if isinstance(g, DiscreteTable)
            else mlp.mlp_to_dict(g),
            "g_is_table": isinstance(g, DiscreteTable),
        }
    if state.discriminator is not None:
        out["discriminator"] = mlp.mlp_to_dict(state.discriminator.d_net)
    return out


def metrics_to_json_lines(metrics: list[dict]) -> str:
    import json

    return "\n".join(json.dumps(row, sort_keys=True) for row in metrics) + "\n"
