"""Dense linear algebra and seeded sampling shared by every estimator.

Thin wrappers over numpy/scipy routines with the error contracts the rest of
the package relies on (symmetry checks, SPD rejection, descending order), plus
a reproducible random source that can spawn independent child streams.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class NumericsError(ValueError):
    """Raised when an input violates a numeric precondition."""


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise NumericsError(f"expected a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericsError("matrix has non-finite entries")
    return a


def sym_eig(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues descending, eigenvectors as columns in matching
    order). Rejects inputs that are not symmetric within 1e-10.
    """
    a = _as_matrix(a)
    scale = max(1.0, np.abs(a).max())
    if a.shape[0] != a.shape[1] or np.abs(a - a.T).max() > 1e-10 * scale:
        raise NumericsError("sym_eig requires a symmetric matrix")
    w, v = np.linalg.eigh(a)
    return w[::-1].copy(), v[:, ::-1].copy()


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full SVD: returns (singular values descending, U, Vt)."""
    a = _as_matrix(a)
    u, s, vt = np.linalg.svd(a)
    return s, u, vt


def solve_spd(a, b) -> np.ndarray:
    """Solve A X = B for symmetric positive definite A via Cholesky."""
    a = _as_matrix(a)
    b = np.asarray(b, dtype=float)
    scale = max(1.0, np.abs(a).max())
    if np.abs(a - a.T).max() > 1e-10 * scale:
        raise NumericsError("solve_spd requires a symmetric matrix")
    try:
        c, low = scipy.linalg.cho_factor(a, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"matrix is not positive definite: {exc}") from exc
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - alias of the above
        raise NumericsError(f"matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve((c, low), b, check_finite=False)


def inv_sqrt_psd(a, floor: float = 1e-8) -> np.ndarray:
    """Symmetric inverse square root with eigenvalues clipped at `floor`."""
    w, v = sym_eig(a)
    w = np.maximum(w, floor)
    return (v * (1.0 / np.sqrt(w))) @ v.T


@dataclass
class RandomSource:
    """Seeded random stream; children spawned from it are independent."""

    seed: int
    _seq: np.random.SeedSequence = field(init=False, repr=False)
    gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._seq = np.random.SeedSequence(self.seed)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int) -> list["RandomSource"]:
        children = []
        for child_seq in self._seq.spawn(n):
            src = object.__new__(RandomSource)
            src.seed = self.seed
            src._seq = child_seq
            src.gen = np.random.Generator(np.random.PCG64(child_seq))
            children.append(src)
        return children


def gaussian_sample(rng: RandomSource, n) -> np.ndarray:
    """Draw i.i.d. standard normal values; `n` is a count or a shape tuple."""
    if np.prod(n) <= 0:
        raise NumericsError(f"gaussian_sample needs a positive count, got {n}")
    return rng.gen.standard_normal(n)
