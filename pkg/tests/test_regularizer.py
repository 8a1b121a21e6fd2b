import numpy as np
import pytest

from drip import mlp
from drip.dependence import KernelSpec, mmd2_estimate
from drip.numerics import RandomSource
from drip.regularizer import Discriminator, da_loss, discriminator_probs, regularizer_value

from .conftest import fd_check


def make_disc(in_dim=4, seed=0, **kwargs):
    net = mlp.init_mlp([in_dim, 6, 1], ["leaky_relu", "logistic"], RandomSource(seed))
    return Discriminator(net, **kwargs)


def test_discriminator_validation(rng):
    with pytest.raises(ValueError, match="logistic"):
        Discriminator(mlp.init_mlp([4, 1], ["identity"], rng))
    with pytest.raises(ValueError, match="logistic"):
        Discriminator(mlp.init_mlp([4, 2], ["logistic"], rng))
    with pytest.raises(ValueError, match="together"):
        Discriminator(mlp.init_mlp([4, 1], ["logistic"], rng), grid_shape=(2, 2))
    with pytest.raises(ValueError, match="partition"):
        Discriminator(
            mlp.init_mlp([3, 1], ["logistic"], rng), grid_shape=(2, 3), tile_shape=(2, 2)
        )
    with pytest.raises(ValueError, match="tile size"):
        Discriminator(
            mlp.init_mlp([3, 1], ["logistic"], rng), grid_shape=(2, 2), tile_shape=(1, 2)
        )


def test_whole_record_loss_matches_direct_formula(rng):
    disc = make_disc()
    x = rng.gen.standard_normal((9, 4))
    xt = rng.gen.standard_normal((7, 4)) + 0.5
    value, _, _ = da_loss(disc, x, xt)
    px = discriminator_probs(disc, x)[:, 0]
    pt = discriminator_probs(disc, xt)[:, 0]
    direct = float(np.mean(np.log(px)) + np.mean(np.log(1.0 - pt)))
    assert value == direct


def test_patched_loss_matches_direct_formula(rng):
    disc = make_disc(in_dim=2, seed=1, grid_shape=(2, 2), tile_shape=(1, 2))
    assert disc.patch_count == 2
    x = rng.gen.standard_normal((8, 4))
    xt = rng.gen.standard_normal((8, 4)) + 0.3
    value, _, _ = da_loss(disc, x, xt)
    px = discriminator_probs(disc, x)
    pt = discriminator_probs(disc, xt)
    direct = float(np.mean(np.log(px).mean(axis=1)) + np.mean(np.log(1.0 - pt).mean(axis=1)))
    assert abs(value - direct) <= 1e-15


def test_patched_probs_share_weights_across_tiles(rng):
    disc = make_disc(in_dim=2, seed=2, grid_shape=(2, 2), tile_shape=(1, 2))
    tile = rng.gen.standard_normal(2)
    record = np.concatenate([tile, tile]).reshape(1, 4)  # both tiles identical
    probs = discriminator_probs(disc, record)
    assert probs.shape == (1, 2)
    assert probs[0, 0] == probs[0, 1]


def test_uninformed_discriminator_is_swap_invariant(rng):
    # Zeroed weights output exactly 0.5 for every record, so exchanging the
    # raw and sanitized batches cannot change the payoff.
    disc = make_disc(seed=3)
    for layer in disc.d_net.layers:
        layer.w = np.zeros_like(layer.w)
        layer.b = np.zeros_like(layer.b)
    x = rng.gen.standard_normal((6, 4))
    xt = rng.gen.standard_normal((5, 4))
    a, _, _ = da_loss(disc, x, xt)
    b, _, _ = da_loss(disc, xt, x)
    assert a == b
    assert abs(a - 2.0 * np.log(0.5)) <= 1e-12


def test_da_loss_gradients_finite_difference():
    disc = make_disc(seed=4)
    g = RandomSource(5)
    x = g.gen.standard_normal((6, 4))
    xt = g.gen.standard_normal((6, 4)) + 0.2
    _, grads, cot_xt = da_loss(disc, x, xt)

    base = [p.copy() for p in mlp.param_arrays(disc.d_net)]
    flat = mlp.grad_arrays(grads)
    for k in range(len(base)):
        def f(a, k=k):
            arrays = [p.copy() for p in base]
            arrays[k] = a.reshape(base[k].shape)
            probe = mlp.mlp_from_dict(mlp.mlp_to_dict(disc.d_net))
            mlp.set_param_arrays(probe, arrays)
            return da_loss(Discriminator(probe), x, xt)[0]

        fd_check(f, base[k], flat[k], rel_tol=1e-4, rng=RandomSource(80 + k))

    def f_xt(v):
        return da_loss(disc, x, v.reshape(xt.shape))[0]

    fd_check(f_xt, xt, cot_xt, rel_tol=1e-4, rng=RandomSource(90))


def test_patched_cotangents_keep_record_shape(rng):
    disc = make_disc(in_dim=2, seed=6, grid_shape=(2, 2), tile_shape=(1, 2))
    x = rng.gen.standard_normal((5, 4))
    xt = rng.gen.standard_normal((5, 4))
    _, _, cot_xt = da_loss(disc, x, xt)
    assert cot_xt.shape == xt.shape

    def f_xt(v):
        return da_loss(disc, x, v.reshape(xt.shape))[0]

    fd_check(f_xt, xt, cot_xt, rel_tol=1e-4, rng=RandomSource(91))


def test_da_loss_validation(rng):
    disc = make_disc()
    with pytest.raises(ValueError, match="dimension"):
        da_loss(disc, rng.gen.standard_normal((3, 4)), rng.gen.standard_normal((3, 5)))
    with pytest.raises(ValueError, match="nonempty"):
        da_loss(disc, np.zeros((0, 4)), np.zeros((3, 4)))


def test_regularizer_value_dispatch(rng):
    spec = KernelSpec()
    x = rng.gen.standard_normal((8, 3))
    xt = rng.gen.standard_normal((8, 3))
    value, grad = regularizer_value("mmd", spec, x, xt)
    assert value == mmd2_estimate(spec, x, xt)
    assert value >= -1e-12
    assert grad.shape == xt.shape

    disc = make_disc(in_dim=3, seed=7)
    value, cot = regularizer_value("domain-adaptation", disc, x, xt)
    assert np.isfinite(value) and cot.shape == xt.shape

    with pytest.raises(ValueError, match="KernelSpec"):
        regularizer_value("mmd", disc, x, xt)
    with pytest.raises(ValueError, match="Discriminator"):
        regularizer_value("domain-adaptation", spec, x, xt)
    with pytest.raises(ValueError, match="unknown regularizer"):
        regularizer_value("wasserstein", spec, x, xt)
