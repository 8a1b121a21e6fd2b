import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drip.mlp import (
    Layer,
    MlpParams,
    grad_arrays,
    init_mlp,
    mlp_backward,
    mlp_forward,
    mlp_from_dict,
    mlp_to_dict,
    param_arrays,
    set_param_arrays,
)
from drip.numerics import RandomSource

from .conftest import fd_check


def small_net(acts, rng, dims=(3, 5, 2)):
    return init_mlp(list(dims), list(acts), rng)


def test_forward_shapes_and_tape(rng):
    net = small_net(["leaky_relu", "identity"], rng)
    x = rng.gen.standard_normal((7, 3))
    y, tape = mlp_forward(net, x)
    assert y.shape == (7, 2)
    assert len(tape) == 2
    a_in, z, a_out = tape[0]
    assert a_in.shape == (7, 3) and z.shape == (7, 5) and a_out.shape == (7, 5)


def test_forward_rejects_bad_input_shape(rng):
    net = small_net(["identity", "identity"], rng)
    with pytest.raises(ValueError):
        mlp_forward(net, np.zeros((4, 7)))


def test_layer_validation():
    with pytest.raises(ValueError):
        Layer(w=np.zeros((2, 3)), b=np.zeros(3))
    with pytest.raises(ValueError):
        Layer(w=np.zeros((2, 3)), b=np.zeros(2), act="tanh")
    with pytest.raises(ValueError):
        Layer(w=np.full((2, 3), np.nan), b=np.zeros(2))
    with pytest.raises(ValueError):
        MlpParams(
            [
                Layer(w=np.zeros((4, 3)), b=np.zeros(4)),
                Layer(w=np.zeros((2, 5)), b=np.zeros(2)),
            ]
        )


@pytest.mark.parametrize(
    "acts",
    [
        ["identity", "identity"],
        ["leaky_relu", "identity"],
        ["logistic", "identity"],
        ["leaky_relu", "logistic"],
        ["identity", "softmax"],
    ],
)
def test_param_gradients_finite_difference(acts):
    rng = RandomSource(5)
    net = small_net(acts, rng, dims=(3, 6, 4))
    x = rng.gen.standard_normal((9, 3)) + 0.3  # keep away from the leaky kink
    w_out = rng.gen.standard_normal((9, 4))

    def loss_for(arrays):
        probe = mlp_from_dict(mlp_to_dict(net))
        set_param_arrays(probe, [a.reshape(p.shape) for a, p in zip(arrays, param_arrays(probe))])
        y, _ = mlp_forward(probe, x)
        return float(np.sum(y * w_out))

    y, tape = mlp_forward(net, x)
    grads, _ = mlp_backward(net, tape, w_out)
    flat = grad_arrays(grads)
    base = param_arrays(net)
    for k in range(len(base)):
        def f(a, k=k):
            arrays = [p.copy() for p in base]
            arrays[k] = a.reshape(base[k].shape)
            return loss_for(arrays)

        fd_check(f, base[k], flat[k], rel_tol=1e-4, rng=RandomSource(k + 1))


def test_input_gradient_finite_difference():
    rng = RandomSource(6)
    net = small_net(["logistic", "softmax"], rng, dims=(4, 5, 3))
    x = rng.gen.standard_normal((6, 4))
    w_out = rng.gen.standard_normal((6, 3))
    y, tape = mlp_forward(net, x)
    _, grad_in = mlp_backward(net, tape, w_out)

    def f(xv):
        yy, _ = mlp_forward(net, xv.reshape(x.shape))
        return float(np.sum(yy * w_out))

    fd_check(f, x, grad_in, rel_tol=1e-4, rng=RandomSource(9))


def test_softmax_rows_normalized(rng):
    net = init_mlp([3, 4], ["softmax"], rng)
    y, _ = mlp_forward(net, rng.gen.standard_normal((10, 3)) * 30)
    assert np.allclose(y.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(y >= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_serialization_roundtrip_bitwise(seed):
    net = init_mlp([3, 4, 2], ["leaky_relu", "logistic"], RandomSource(seed))
    clone = mlp_from_dict(mlp_to_dict(net))
    for a, b in zip(param_arrays(net), param_arrays(clone)):
        assert np.array_equal(a, b)
    x = RandomSource(seed + 1).gen.standard_normal((5, 3))
    ya, _ = mlp_forward(net, x)
    yb, _ = mlp_forward(clone, x)
    assert np.array_equal(ya, yb)


def test_set_param_arrays_validates(rng):
    net = small_net(["identity", "identity"], rng)
    with pytest.raises(ValueError):
        set_param_arrays(net, param_arrays(net)[:-1])
    bad = [p.copy() for p in param_arrays(net)]
    bad[0] = np.zeros((1, 1))
    with pytest.raises(ValueError):
        set_param_arrays(net, bad)


def test_init_is_deterministic_for_seed():
    a = init_mlp([4, 3], ["identity"], RandomSource(2))
    b = init_mlp([4, 3], ["identity"], RandomSource(2))
    assert np.array_equal(a.layers[0].w, b.layers[0].w)
    assert np.all(a.layers[0].b == 0.0)
