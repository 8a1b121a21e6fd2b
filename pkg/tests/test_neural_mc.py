import numpy as np
import pytest

from drip import mlp
from drip.neural_mc import (
    DiscreteTable,
    MaxCorrNets,
    ace_refine_discrete,
    fit_nn_maxcorr,
    init_maxcorr_nets,
    nn_maxcorr_objective,
    rank2_objective_with_grads,
    rank2_unconstrained_objective,
)
from drip.numerics import RandomSource
from drip.oracle import gaussian_pair_dataset, sample_discrete_joint, DiscreteJoint

from .conftest import fd_check


def pair_data(seed=0, r=0.8, n=60):
    pair = gaussian_pair_dataset(RandomSource(seed), r, n)
    return pair[:, :1], pair[:, 1:]


def test_output_dim_mismatch_rejected(rng):
    f = mlp.init_mlp([1, 4, 2], ["leaky_relu", "identity"], rng)
    g = mlp.init_mlp([1, 4, 1], ["leaky_relu", "identity"], rng)
    with pytest.raises(ValueError):
        MaxCorrNets(f, g)


def test_discrete_table_lookup_warns_on_unseen():
    table = DiscreteTable(values={0: np.array([1.5])}, out_dim=1)
    with pytest.warns(UserWarning, match="unseen"):
        out = table.lookup(np.array([[0.0], [3.0]]))
    assert np.array_equal(out, np.array([[1.5], [0.0]]))
    with pytest.raises(ValueError):
        table.lookup(np.array([[0.25]]))


def test_objective_constant_shift_invariance():
    # Adding any constant to f' must not change the centered objective.
    x, s = pair_data(seed=1)
    nets = init_maxcorr_nets(1, RandomSource(2))
    base = nn_maxcorr_objective(nets, x, s).value
    last = nets.f_raw.layers[-1]
    last.b = last.b + 37.5
    shifted = nn_maxcorr_objective(nets, x, s).value
    assert abs(base - shifted) <= 1e-10


def test_objective_degenerate_constant_f():
    x, s = pair_data(seed=3)
    nets = init_maxcorr_nets(1, RandomSource(4))
    last = nets.f_raw.layers[-1]
    last.w = np.zeros_like(last.w)
    with pytest.warns(UserWarning, match="constant"):
        ev = nn_maxcorr_objective(nets, x, s)
    assert ev.degenerate and ev.value == 0.0
    assert np.array_equal(ev.cot_x, np.zeros_like(x))


def test_objective_gradients_finite_difference():
    x, s = pair_data(seed=5, n=20)
    nets = init_maxcorr_nets(1, RandomSource(6))
    ev = nn_maxcorr_objective(nets, x, s)

    base_f = [p.copy() for p in mlp.param_arrays(nets.f_raw)]
    flat_f = mlp.grad_arrays(ev.f_grads)
    for k in range(len(base_f)):
        def f(a, k=k):
            arrays = [p.copy() for p in base_f]
            arrays[k] = a.reshape(base_f[k].shape)
            probe = mlp.mlp_from_dict(mlp.mlp_to_dict(nets.f_raw))
            mlp.set_param_arrays(probe, arrays)
            return nn_maxcorr_objective(MaxCorrNets(probe, nets.g_net), x, s).value

        fd_check(f, base_f[k], flat_f[k], rel_tol=1e-4, rng=RandomSource(20 + k))

    base_g = [p.copy() for p in mlp.param_arrays(nets.g_net)]
    flat_g = mlp.grad_arrays(ev.g_grads)
    for k in range(len(base_g)):
        def f(a, k=k):
            arrays = [p.copy() for p in base_g]
            arrays[k] = a.reshape(base_g[k].shape)
            probe = mlp.mlp_from_dict(mlp.mlp_to_dict(nets.g_net))
            mlp.set_param_arrays(probe, arrays)
            return nn_maxcorr_objective(MaxCorrNets(nets.f_raw, probe), x, s).value

        fd_check(f, base_g[k], flat_g[k], rel_tol=1e-4, rng=RandomSource(40 + k))

    def f_x(xv):
        return nn_maxcorr_objective(nets, xv.reshape(x.shape), s).value

    fd_check(f_x, x, ev.cot_x, rel_tol=1e-4, rng=RandomSource(60))


def test_objective_table_gradients_finite_difference():
    g = RandomSource(7)
    x = g.gen.standard_normal((24, 1))
    s = (x[:, 0] > 0).astype(float).reshape(-1, 1)
    nets = init_maxcorr_nets(1, RandomSource(8), discrete_g=True)
    nets.g_net.values = {0: np.array([-0.4]), 1: np.array([0.7])}
    ev = nn_maxcorr_objective(nets, x, s)
    for key in (0, 1):
        def f(v, key=key):
            saved = nets.g_net.values[key]
            nets.g_net.values[key] = v.reshape(saved.shape)
            out = nn_maxcorr_objective(nets, x, s).value
            nets.g_net.values[key] = saved
            return out

        fd_check(f, nets.g_net.values[key], ev.g_grads[key], rel_tol=1e-4,
                 rng=RandomSource(70 + key))


def test_fitted_ratio_value_bounded_and_orders_dependence():
    x_dep, s_dep = pair_data(seed=9, r=0.9, n=400)
    x_ind, s_ind = pair_data(seed=10, r=0.0, n=400)
    vals_dep = fit_nn_maxcorr(init_maxcorr_nets(1, RandomSource(11)), x_dep, s_dep, steps=200)
    vals_ind = fit_nn_maxcorr(init_maxcorr_nets(1, RandomSource(11)), x_ind, s_ind, steps=200)
    assert vals_dep[-1] <= 1.0 + 1e-6
    assert vals_ind[-1] <= 1.0 + 1e-6
    assert vals_dep[-1] > 0.6
    assert vals_ind[-1] < 0.2


def test_ace_step_b_never_decreases_rho():
    joint = DiscreteJoint(np.array([[0.45, 0.05], [0.05, 0.45]]))
    draws = sample_discrete_joint(RandomSource(12), joint, 300)
    x, s = draws[:, :1], draws[:, 1:]
    nets = init_maxcorr_nets(1, RandomSource(13), discrete_g=True)
    hist = []
    nets, rho = ace_refine_discrete(nets, x, s, max_outer=20, history=hist)
    assert hist, "expected at least one alternation record"
    for rec in hist:
        assert rec["rho_post_b"] >= rec["rho_pre_b"] - 1e-8
    assert 0.0 <= rho <= 1.0 + 1e-6
    assert rho > 0.5  # strongly dependent binary pair


def test_ace_requires_table_and_identity_head(rng):
    x, s = pair_data(seed=14, n=30)
    with pytest.raises(ValueError, match="discrete-table"):
        ace_refine_discrete(init_maxcorr_nets(1, rng), x, s)
    bad = init_maxcorr_nets(1, rng, discrete_g=True)
    bad.f_raw.layers[-1].act = "logistic"
    with pytest.raises(ValueError, match="identity"):
        ace_refine_discrete(bad, x, s)


def test_rank2_gradients_finite_difference():
    x, s = pair_data(seed=15, n=30)
    nets = init_maxcorr_nets(1, RandomSource(16), out_dim=2)
    value, f_grads, g_grads, cot_x = rank2_objective_with_grads(nets, x, s)
    assert np.isfinite(value)

    base_f = [p.copy() for p in mlp.param_arrays(nets.f_raw)]
    flat_f = mlp.grad_arrays(f_grads)
    for k in range(len(base_f)):
        def f(a, k=k):
            arrays = [p.copy() for p in base_f]
            arrays[k] = a.reshape(base_f[k].shape)
            probe = mlp.mlp_from_dict(mlp.mlp_to_dict(nets.f_raw))
            mlp.set_param_arrays(probe, arrays)
            return rank2_unconstrained_objective(MaxCorrNets(probe, nets.g_net), x, s)

        fd_check(f, base_f[k], flat_f[k], rel_tol=1e-4, rng=RandomSource(80 + k))

    def f_x(xv):
        return rank2_unconstrained_objective(nets, xv.reshape(x.shape), s)

    fd_check(f_x, x, cot_x, rel_tol=1e-4, rng=RandomSource(90))


def test_rank2_fitted_endpoints():
    # The unconstrained two-function objective peaks at 1 + rho^2: about 1 for
    # independent pairs and near 1.81 for correlation 0.9.
    x_ind, s_ind = pair_data(seed=17, r=0.0, n=500)
    nets = init_maxcorr_nets(1, RandomSource(18), out_dim=2)
    vals = fit_nn_maxcorr(nets, x_ind, s_ind, steps=300, rank2=True)
    assert 0.85 <= vals[-1] <= 1.25
    assert vals[-1] <= 2.0 + 1e-6

    x_dep, s_dep = pair_data(seed=19, r=0.9, n=500)
    nets = init_maxcorr_nets(1, RandomSource(18), out_dim=2)
    vals = fit_nn_maxcorr(nets, x_dep, s_dep, steps=300, rank2=True)
    assert 1.5 <= vals[-1] <= 2.0 + 1e-6


def test_rank2_rejects_wrong_width_and_collinear_f(rng):
    x, s = pair_data(seed=20, n=40)
    with pytest.raises(ValueError, match="2-dimensional"):
        rank2_objective_with_grads(init_maxcorr_nets(1, rng), x, s)
    nets = init_maxcorr_nets(1, RandomSource(21), out_dim=2)
    last = nets.f_raw.layers[-1]
    last.w = np.tile(last.w[:1], (2, 1))  # both outputs identical -> singular
    last.b = np.zeros_like(last.b)
    with pytest.raises(ValueError, match="ill-conditioned"):
        rank2_objective_with_grads(nets, x, s)
