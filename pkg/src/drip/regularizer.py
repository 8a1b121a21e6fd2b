"""Legacy-compatibility regularizers: adversarial domain discriminator or MMD.

The discriminator scores how distinguishable sanitized records are from raw
ones; minimizing its payoff over the sanitizer pushes the sanitized marginal
toward the raw marginal. The MMD route needs no inner model at all.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp
from .dependence import KernelSpec, mmd2_estimate, mmd2_gradient
from .mlp import MlpParams

PROB_FLOOR = 1e-12


@dataclass
class Discriminator:
    """One logistic score per patch; P = 1 scores the whole record.

    With grid_shape/tile_shape set, records are read as row-major 2-d grids
    cut into equal tiles and d_net scores each tile (shared weights).
    """

    d_net: MlpParams
    grid_shape: tuple | None = None
    tile_shape: tuple | None = None

    def __post_init__(self):
        if self.d_net.layers[-1].act != "logistic" or self.d_net.out_dim != 1:
            raise ValueError("discriminator net must end in a single logistic unit")
        if (self.grid_shape is None) != (self.tile_shape is None):
            raise ValueError("grid_shape and tile_shape must be set together")
        if self.grid_shape is not None:
            gh, gw = self.grid_shape
            th, tw = self.tile_shape
            if gh % th or gw % tw:
                raise ValueError("tiles must partition the grid exactly")
            if self.d_net.in_dim != th * tw:
                raise ValueError("d_net input dim must equal the tile size")

    @property
    def patch_count(self) -> int:
        if self.grid_shape is None:
            return 1
        return (self.grid_shape[0] // self.tile_shape[0]) * (self.grid_shape[1] // self.tile_shape[1])


def _to_tiles(disc: Discriminator, batch: np.ndarray) -> np.ndarray:
    """(M, D) -> (M * P, tile_size) in patch-major order per record."""
    if disc.grid_shape is None:
        return batch
    m = batch.shape[0]
    gh, gw = disc.grid_shape
    th, tw = disc.tile_shape
    grid = batch.reshape(m, gh // th, th, gw // tw, tw)
    tiles = grid.transpose(0, 1, 3, 2, 4).reshape(m * disc.patch_count, th * tw)
    return tiles


def _from_tiles(disc: Discriminator, tiles: np.ndarray, m: int) -> np.ndarray:
    if disc.grid_shape is None:
        return tiles
    gh, gw = disc.grid_shape
    th, tw = disc.tile_shape
    grid = tiles.reshape(m, gh // th, gw // tw, th, tw).transpose(0, 1, 3, 2, 4)
    return grid.reshape(m, gh * gw)


def discriminator_probs(disc: Discriminator, batch) -> np.ndarray:
    """(M, P) matrix of per-patch 'this looks raw' probabilities."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    probs, _ = mlp.mlp_forward(disc.d_net, _to_tiles(disc, batch))
    return probs.reshape(batch.shape[0], disc.patch_count)


def da_loss(disc: Discriminator, xs, xts):
    """(1/P) sum_p [mean log D_p(x) + mean log(1 - D_p(x~))].

    Returns (value, gradients for d_net, cotangents on x~s); the raw batch is
    data, so cotangents flow only through the second term.
    """
    x = np.atleast_2d(np.asarray(xs, dtype=float))
    xt = np.atleast_2d(np.asarray(xts, dtype=float))
    if x.shape[1] != xt.shape[1]:
        raise ValueError("raw and sanitized records must share a dimension")
    if x.shape[0] == 0 or xt.shape[0] == 0:
        raise ValueError("batches must be nonempty")
    p = disc.patch_count

    probs_x, tape_x = mlp.mlp_forward(disc.d_net, _to_tiles(disc, x))
    probs_t, tape_t = mlp.mlp_forward(disc.d_net, _to_tiles(disc, xt))
    clamped_x = np.clip(probs_x, PROB_FLOOR, 1.0 - PROB_FLOOR)
    clamped_t = np.clip(probs_t, PROB_FLOOR, 1.0 - PROB_FLOOR)
    value = float(np.log(clamped_x).sum() / (p * x.shape[0])
                  + np.log(1.0 - clamped_t).sum() / (p * xt.shape[0]))

    live_x = (probs_x > PROB_FLOOR) & (probs_x < 1.0 - PROB_FLOOR)
    live_t = (probs_t > PROB_FLOOR) & (probs_t < 1.0 - PROB_FLOOR)
    d_probs_x = np.where(live_x, 1.0 / (p * x.shape[0] * clamped_x), 0.0)
    d_probs_t = np.where(live_t, -1.0 / (p * xt.shape[0] * (1.0 - clamped_t)), 0.0)
    grads_x, _ = mlp.mlp_backward(disc.d_net, tape_x, d_probs_x)
    grads_t, cot_tiles = mlp.mlp_backward(disc.d_net, tape_t, d_probs_t)
    grads = [(gx[0] + gt[0], gx[1] + gt[1]) for gx, gt in zip(grads_x, grads_t)]
    cot_xt = _from_tiles(disc, cot_tiles, xt.shape[0])
    return value, grads, cot_xt


def regularizer_value(choice: str, state, xs, xts):
    """Value to be minimized over the sanitizer, plus cotangents on x~s."""
    if choice == "mmd":
        if not isinstance(state, KernelSpec):
            raise ValueError("mmd regularizer needs a KernelSpec state")
        return mmd2_estimate(state, xs, xts), mmd2_gradient(state, xs, xts)
    if choice == "domain-adaptation":
        if not isinstance(state, Discriminator):
            raise ValueError("domain-adaptation regularizer needs a Discriminator state")
        value, _, cot_xt = da_loss(state, xs, xts)
        return value, cot_xt
    raise ValueError(f"unknown regularizer {choice!r}")
