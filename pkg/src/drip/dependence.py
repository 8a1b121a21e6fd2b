"""Kernel dependence and discrepancy measures.

Empirical squared MMD (plus gradient), kernel maximal correlation via a
regularized singular-value reduction (plus gradient with the witness
coefficients frozen), and HSIC. All kernels are RBF exp(-||d||^2 / (2 sigma^2)).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import solve_spd, svd


@dataclass
class KernelSpec:
    sigma: float = 1.0
    eta: float = 0.01
    family: str = "rbf"

    def __post_init__(self):
        if self.family != "rbf":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not (self.sigma > 0 and self.eta > 0):
            raise ValueError("sigma and eta must be positive")


def _as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        p = p.reshape(-1, 1)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError(f"expected a nonempty point set, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("points contain non-finite values")
    return p


def _cross_gram(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq_a = np.sum(a * a, axis=1)
    sq_b = np.sum(b * b, axis=1)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
    np.clip(d2, 0.0, None, out=d2)
    return np.exp(-d2 / (2.0 * spec.sigma**2))


def gram_matrix(spec: KernelSpec, points) -> np.ndarray:
    """K_ij = exp(-||p_i - p_j||^2 / (2 sigma^2)); symmetric, unit diagonal."""
    p = _as_points(points)
    k = _cross_gram(spec, p, p)
    np.fill_diagonal(k, 1.0)
    return k


def center_gram(k: np.ndarray) -> np.ndarray:
    """HKH with H = I - (1/M) 11^T, computed without materializing H."""
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("center_gram requires a square matrix")
    row = k.mean(axis=1, keepdims=True)
    col = k.mean(axis=0, keepdims=True)
    return k - row - col + k.mean()


def mmd2_estimate(spec: KernelSpec, xs, yts, unbiased: bool = False) -> float:
    """Squared-MMD estimate between two equal-size sample sets.

    Default is the V-statistic (1/N^2)[sum K(x,x) - 2 sum K(y,x) + sum K(y,y)]
    with diagonal terms included; unbiased=True switches the within-set sums
    to the U-statistic form excluding diagonals.
    """
    x = _as_points(xs)
    y = _as_points(yts)
    if x.shape != y.shape:
        raise ValueError(f"sample sets must match in shape: {x.shape} vs {y.shape}")
    n = x.shape[0]
    kxx = _cross_gram(spec, x, x)
    kxy = _cross_gram(spec, y, x)
    kyy = _cross_gram(spec, y, y)
    if unbiased:
        if n < 2:
            raise ValueError("the U-statistic needs at least 2 points per set")
        within = (kxx.sum() - np.trace(kxx) + kyy.sum() - np.trace(kyy)) / (n * (n - 1))
        return within - 2.0 * kxy.sum() / n**2
    return (kxx.sum() - 2.0 * kxy.sum() + kyy.sum()) / n**2


def mmd2_gradient(spec: KernelSpec, xs, yts) -> np.ndarray:
    """Exact gradient of the V-statistic mmd2_estimate w.r.t. each row of yts."""
    x = _as_points(xs)
    y = _as_points(yts)
    if x.shape != y.shape:
        raise ValueError(f"sample sets must match in shape: {x.shape} vs {y.shape}")
    n = x.shape[0]
    kxy = _cross_gram(spec, y, x)
    kyy = _cross_gram(spec, y, y)
    within = kyy @ y - kyy.sum(axis=1, keepdims=True) * y
    cross = kxy @ x - kxy.sum(axis=1, keepdims=True) * y
    return 2.0 / (spec.sigma**2 * n**2) * (within - cross)


@dataclass
class KernelMaxCorrSolution:
    """Output of kernel_maxcorr, carrying what its gradient needs.

    alpha_ij = p_i q_j with p = H a, q = Kbar_S b; r is the centered image of
    a under (Kbar_X + eta I), which the ratio gradient's denominator term uses.
    """

    rho_hat: float
    a: np.ndarray
    b: np.ndarray
    alpha: np.ndarray
    p: np.ndarray = field(repr=False, default=None)
    q: np.ndarray = field(repr=False, default=None)
    r: np.ndarray = field(repr=False, default=None)
    degenerate: bool = False
    spec_x: KernelSpec = None
    _xts: np.ndarray = field(repr=False, default=None)


def kernel_maxcorr(spec_x: KernelSpec, spec_s: KernelSpec, xts, ss) -> KernelMaxCorrSolution:
    """Regularized kernel maximal correlation between two sample sets.

    Maximizes a^T Kbar_X Kbar_S b / (||(Kbar_X + eta I) a|| ||(Kbar_S + eta I) b||)
    by the half-size reduction: rho_hat is the top singular value of
    R_X R_S with R = (Kbar + eta I)^{-1} Kbar, and (a, b) are recovered from
    the corresponding singular vectors (scaled so the denominators equal M).
    All-identical sample sets give rho_hat = 0 with the degenerate flag set.
    """
    x = _as_points(xts)
    s = _as_points(ss)
    m = x.shape[0]
    if s.shape[0] != m:
        raise ValueError("sample sets must have the same size")
    if m < 2:
        raise ValueError("kernel_maxcorr needs at least 2 samples")
    kxb = center_gram(gram_matrix(spec_x, x))
    ksb = center_gram(gram_matrix(spec_s, s))
    if np.abs(kxb).max() < 1e-12 or np.abs(ksb).max() < 1e-12:
        zero = np.zeros(m)
        return KernelMaxCorrSolution(
            rho_hat=0.0, a=zero, b=zero.copy(), alpha=np.zeros((m, m)),
            p=zero.copy(), q=zero.copy(), r=zero.copy(),
            degenerate=True, spec_x=spec_x, _xts=x.copy(),
        )
    eye = np.eye(m)
    rx = solve_spd(kxb + spec_x.eta * eye, kxb)
    rs = solve_spd(ksb + spec_s.eta * eye, ksb)
    sv, u_mat, vt_mat = svd(rx @ rs)
    rho = float(sv[0])
    u = u_mat[:, 0] * np.sqrt(m)
    v = vt_mat[0] * np.sqrt(m)
    a = solve_spd(kxb + spec_x.eta * eye, u)
    b = solve_spd(ksb + spec_s.eta * eye, v)
    p = a - a.mean()
    q = ksb @ b
    r = u - u.mean()
    return KernelMaxCorrSolution(
        rho_hat=rho, a=a, b=b, alpha=np.outer(p, q), p=p, q=q, r=r,
        degenerate=False, spec_x=spec_x, _xts=x.copy(),
    )


def kernel_maxcorr_gradient(
    spec_x: KernelSpec,
    solution: KernelMaxCorrSolution,
    xts,
    form: str = "exact",
) -> np.ndarray:
    """Gradient of rho_hat w.r.t. each x-row with the witnesses (a, b) frozen.

    form="exact" differentiates the frozen-coefficient ratio itself:
        cot_i = (1/M) sum_j [(alpha_ij + alpha_ji) - rho (gamma_ij + gamma_ji)]
                          * dK/dx_i (x_i - x_j),        gamma_ij = r_i p_j,
    which matches central finite differences of the ratio. form="as-printed"
    uses the antisymmetric weights (alpha_ij - alpha_ji) instead; it is kept
    for reference but does not track the frozen-ratio finite differences.
    """
    x = _as_points(xts)
    if solution._xts is None or not np.array_equal(solution._xts, x):
        raise ValueError("stale solution: kernel_maxcorr was run on different data")
    if solution.degenerate:
        return np.zeros_like(x)
    m = x.shape[0]
    alpha = solution.alpha
    if form == "as-printed":
        weights = alpha - alpha.T
    elif form == "exact":
        gamma = np.outer(solution.r, solution.p)
        weights = (alpha + alpha.T) - solution.rho_hat * (gamma + gamma.T)
    else:
        raise ValueError(f"unknown gradient form {form!r}")
    k = gram_matrix(spec_x, x)
    w = weights * k
    # each pair contributes w_ij * dK/dx_i with dK(d) = -d/sigma^2 * K(d)
    grad = -(w.sum(axis=1, keepdims=True) * x - w @ x) / spec_x.sigma**2
    return grad / m


def hsic_estimate(spec_x: KernelSpec, spec_s: KernelSpec, xts, ss) -> float:
    """Empirical HSIC: (1/(M-1)^2) trace(K_X H K_S H)."""
    x = _as_points(xts)
    s = _as_points(ss)
    m = x.shape[0]
    if s.shape[0] != m:
        raise ValueError("sample sets must have the same size")
    if m < 2:
        raise ValueError("hsic_estimate needs at least 2 samples")
    kx = gram_matrix(spec_x, x)
    ks = gram_matrix(spec_s, s)
    return float(np.sum(center_gram(kx) * ks)) / (m - 1) ** 2


@dataclass
class DependenceReport:
    estimator: str
    value: float
    M: int
    sigma: float
    eta: float
    seed: int | None = None
    oracle_value: float | None = None

    def to_json_line(self) -> str:
        d = {k: v for k, v in self.__dict__.items() if v is not None}
        return json.dumps(d, sort_keys=True)
