"""Ground-truth computations on small discrete (or discretized) distributions.

These are deliberately independent of the estimators they validate: exact
SVD of the divergence transition matrix, exact mutual information by
summation, population MMD by double sums, and a correlated-Gaussian sampler
with a quantile-grid discretization path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dependence import KernelSpec, gram_matrix
from .numerics import RandomSource, svd


@dataclass
class DiscreteJoint:
    pmf: np.ndarray  # (m, n)

    def __post_init__(self):
        self.pmf = np.asarray(self.pmf, dtype=float)
        if self.pmf.ndim != 2:
            raise ValueError("joint pmf must be a matrix")
        if np.any(self.pmf < 0):
            raise ValueError("pmf entries must be nonnegative")
        if abs(self.pmf.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {self.pmf.sum()!r}, not 1")

    @property
    def row_marginal(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.pmf.sum(axis=0)


def discrete_maxcorr_svd(joint: DiscreteJoint) -> float:
    """Second-largest singular value of Q(y,z) = p(y,z)/sqrt(p(y) p(z))."""
    py = joint.row_marginal
    pz = joint.col_marginal
    if np.any(py <= 0) or np.any(pz <= 0):
        raise ValueError("maximal correlation needs strictly positive marginals")
    q = joint.pmf / np.sqrt(np.outer(py, pz))
    sv, _, _ = svd(q)
    if len(sv) < 2:
        return 0.0
    return float(min(max(sv[1], 0.0), 1.0))


def discrete_mutual_information(joint: DiscreteJoint) -> float:
    """I(Y;Z) in nats by direct summation over the support."""
    py = joint.row_marginal
    pz = joint.col_marginal
    p = joint.pmf
    mask = p > 0
    outer = np.outer(py, pz)
    return float(np.sum(p[mask] * np.log(p[mask] / outer[mask])))


def population_mmd2_discrete(p, q, points, spec: KernelSpec) -> float:
    """Exact squared MMD between two pmfs on a shared finite point set."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if p.shape != q.shape or p.shape[0] != pts.shape[0]:
        raise ValueError("pmfs must live on the same point set")
    for name, pmf in (("p", p), ("q", q)):
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError(f"{name} is not a valid pmf")
    k = gram_matrix(spec, pts)
    return float(p @ k @ p + q @ k @ q - 2.0 * p @ k @ q)


def gaussian_pair_dataset(rng: RandomSource, r: float, n: int) -> np.ndarray:
    """N i.i.d. draws of a standard bivariate normal with correlation r.

    Returns an (N, 2) array; column 0 plays the sanitized-proxy role, column 1
    the private attribute. r = 1 duplicates column 0 bitwise.
    """
    if abs(r) > 1.0:
        raise ValueError(f"correlation must satisfy |r| <= 1, got {r}")
    if n <= 0:
        raise ValueError("need a positive sample count")
    z = rng.gen.standard_normal((n, 2))
    x = z[:, 0]
    if r == 1.0:
        s = x.copy()
    elif r == -1.0:
        s = -x
    else:
        s = r * x + np.sqrt(1.0 - r * r) * z[:, 1]
    return np.column_stack([x, s])


def quantile_joint(xs, ys, bins: int = 50) -> DiscreteJoint:
    """Joint pmf of two samples binned on their equal-probability quantile grids."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("samples must have equal length")
    edges_x = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    edges_y = np.quantile(y, np.linspace(0, 1, bins + 1)[1:-1])
    ix = np.searchsorted(edges_x, x, side="right")
    iy = np.searchsorted(edges_y, y, side="right")
    counts = np.zeros((bins, bins))
    np.add.at(counts, (ix, iy), 1.0)
    return DiscreteJoint(counts / counts.sum())


def gaussian_maxcorr_oracle(r: float, bins: int = 50, n: int = 200_000, seed: int = 20_240_501) -> float:
    """Discretized-SVD reference value for the correlation-r Gaussian pair."""
    pair = gaussian_pair_dataset(RandomSource(seed), r, n)
    return discrete_maxcorr_svd(quantile_joint(pair[:, 0], pair[:, 1], bins))


def sample_discrete_joint(rng: RandomSource, joint: DiscreteJoint, n: int) -> np.ndarray:
    """Draw n (row, col) index pairs from a joint pmf; returns an (n, 2) float array."""
    m, k = joint.pmf.shape
    flat = rng.gen.choice(m * k, size=n, p=joint.pmf.ravel())
    return np.column_stack([(flat // k).astype(float), (flat % k).astype(float)])
