"""Radial basis function interpolation with relaxed (overcomplete) centers.

With ``K > N`` centers the interpolation system ``phi @ w = y`` is
underdetermined.  Every interpolant is written ``w = w0 + null_basis @ alpha``
where ``w0`` is the minimum-norm solution and ``null_basis`` is an
orthonormal basis of ``ker(phi)``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-12
DUPLICATE_TOL = 1e-12


class KernelKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    THIN_PLATE = "thin_plate"


class CenterStrategy(str, enum.Enum):
    UNIFORM_GRID = "uniform_grid"
    HALTON = "halton"


class RankDeficiencyError(np.linalg.LinAlgError):
    """Raised when the interpolation matrix is numerically rank deficient."""


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.GAUSSIAN
    epsilon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.GAUSSIAN and not self.epsilon > 0:
            raise ValueError(f"Gaussian kernel needs epsilon > 0, got {self.epsilon}")

    def __call__(self, r):
        return kernel_eval(self, r)


def kernel_eval(kernel: KernelSpec, r):
    """Evaluate the radial kernel at distance(s) ``r``.

    Accepts a scalar or an array; returns the same shape.  The thin-plate
    spline takes its analytic limit 0 at ``r = 0``.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("kernel distance must be nonnegative")
    if kernel.kind is KernelKind.GAUSSIAN:
        out = np.exp(-(kernel.epsilon**2) * r_arr**2)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r_arr > 0, r_arr**2 * np.log(np.where(r_arr > 0, r_arr, 1.0)), 0.0)
    if np.ndim(r) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BoxNormalizer:
    """Affine map of a box ``[lo, hi]`` onto the unit cube."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds lo/hi must be 1-D arrays of equal length")
        if np.any(hi <= lo):
            raise ValueError("degenerate bounds: need hi > lo in every dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def forward(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lo) / self.span

    def inverse(self, u) -> np.ndarray:
        return self.lo + np.asarray(u, dtype=float) * self.span

    @classmethod
    def from_bounds(cls, bounds) -> "BoxNormalizer":
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        return cls(b[:, 0], b[:, 1])

    @property
    def bounds(self) -> np.ndarray:
        return np.column_stack([self.lo, self.hi])


@dataclass(frozen=True)
class Dataset:
    """Scarce training set: inputs ``X`` (N x d), responses ``y`` and the box they live in."""

    X: np.ndarray
    y: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("dataset needs N >= 1 and d >= 1")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if bounds.shape[0] != X.shape[1]:
            raise ValueError("bounds must have one [lo, hi] row per input dimension")
        tol = 1e-12 * np.maximum(1.0, np.abs(bounds).max(axis=1))
        if np.any(X < bounds[:, 0] - tol) or np.any(X > bounds[:, 1] + tol):
            raise ValueError("training points must lie inside bounds")
        u = BoxNormalizer.from_bounds(bounds).forward(X)
        if X.shape[0] > 1:
            d2 = _sq_dists(u, u)
            np.fill_diagonal(d2, np.inf)
            if np.sqrt(d2.min()) <= DUPLICATE_TOL:
                raise ValueError("duplicate training points")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "bounds", bounds)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d2, 0.0)


def place_centers(bounds, K: int, strategy=None, seed: int = 0) -> np.ndarray:
    """Place ``K`` RBF centers inside ``bounds``.

    ``UNIFORM_GRID`` gives a tensor grid including the box corners and needs
    ``K`` to be a perfect d-th power when ``d > 1``; otherwise it falls back
    to Halton.  Halton points are offset by ``seed`` positions along the
    sequence so different seeds give different (still deterministic) sets.
    """
    norm = BoxNormalizer.from_bounds(bounds)
    d = norm.dim
    if K < 1:
        raise ValueError(f"need at least one center, got K={K}")
    if strategy is None:
        strategy = CenterStrategy.UNIFORM_GRID if d == 1 else CenterStrategy.HALTON
    strategy = CenterStrategy(strategy)

    if strategy is CenterStrategy.UNIFORM_GRID:
        per_dim = round(K ** (1.0 / d))
        if per_dim**d != K:
            logger.warning("K=%d is not a perfect %d-th power; using Halton centers", K, d)
            strategy = CenterStrategy.HALTON
        elif K == 1:
            u = np.full((1, d), 0.5)
        else:
            axis = np.linspace(0.0, 1.0, per_dim)
            mesh = np.meshgrid(*([axis] * d), indexing="ij")
            u = np.column_stack([m.ravel() for m in mesh])

    if strategy is CenterStrategy.HALTON:
        sampler = qmc.Halton(d=d, scramble=False)
        sampler.fast_forward(1 + int(seed))
        u = sampler.random(K)
    return norm.inverse(u)


def assemble_phi(points, centers, kernel: KernelSpec, normalizer: BoxNormalizer | None = None) -> np.ndarray:
    """Kernel matrix with entry (i, j) = phi(||points_i - centers_j||).

    Distances are taken after mapping both sets through ``normalizer``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if P.shape[1] != C.shape[1]:
        raise ValueError(f"dimension mismatch: points have d={P.shape[1]}, centers d={C.shape[1]}")
    if normalizer is not None:
        P = normalizer.forward(P)
        C = normalizer.forward(C)
    r = np.sqrt(_sq_dists(P, C))
    return kernel_eval(kernel, r)


def _svd_checked(phi: np.ndarray):
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    n, k = phi.shape
    if k < n:
        raise ValueError(f"need K >= N, got N={n}, K={k}")
    U, s, Vt = np.linalg.svd(phi, full_matrices=True)
    ratio = s[-1] / s[0] if s[0] > 0 else 0.0
    if ratio < RANK_RTOL:
        raise RankDeficiencyError(
            f"interpolation matrix is rank deficient: smallest/largest singular value = {ratio:.3e} "
            f"< {RANK_RTOL:g} (duplicate or near-duplicate points, or a pathological kernel width)"
        )
    return U, s, Vt


def min_norm_solution(phi, y) -> np.ndarray:
    """Minimum-norm ``w`` with ``phi @ w = y`` (pseudoinverse via SVD)."""
    U, s, Vt = _svd_checked(phi)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = s.size
    return Vt[:n].T @ ((U.T @ y) / s)


def _sign_normalize(B: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    B = B.copy()
    for j in range(B.shape[1]):
        nz = np.flatnonzero(np.abs(B[:, j]) > tol)
        if nz.size and B[nz[0], j] < 0:
            B[:, j] = -B[:, j]
    return B


def null_basis(phi) -> np.ndarray:
    """Orthonormal basis of ``ker(phi)`` from the trailing right singular vectors.

    Each column is sign-normalized so its first nonzero entry is positive.
    A square full-rank ``phi`` gives an empty ``K x 0`` matrix.
    """
    _, s, Vt = _svd_checked(phi)
    return _sign_normalize(Vt[s.size:].T)


def default_num_centers(dim: int, n: int) -> int:
    """Three centers per design variable, but always more than the sample count."""
    return max(3 * dim, n + 1)


@dataclass(frozen=True)
class RbfSystem:
    """Interpolation system for a dataset over a fixed set of centers."""

    centers: np.ndarray
    kernel: KernelSpec
    normalizer: BoxNormalizer
    X: np.ndarray
    y: np.ndarray
    phi: np.ndarray = field(repr=False)
    w0: np.ndarray = field(repr=False)
    null: np.ndarray = field(repr=False)

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    @property
    def null_dim(self) -> int:
        return self.null.shape[1]

    def design(self, points) -> np.ndarray:
        """Rows of kernel values for arbitrary query points."""
        return assemble_phi(points, self.centers, self.kernel, self.normalizer)

    def weights(self, alpha) -> np.ndarray:
        """Weight vector(s) ``w0 + null @ alpha``; ``alpha`` may be batched (M x K-N)."""
        alpha = np.asarray(alpha, dtype=float)
        return self.w0 + alpha @ self.null.T

    def __call__(self, points, w=None) -> np.ndarray:
        w = self.w0 if w is None else w
        return self.design(points) @ np.asarray(w, dtype=float).T


def build_system(
    data: Dataset,
    centers=None,
    kernel: KernelSpec | None = None,
    n_centers: int | None = None,
    strategy=None,
    seed: int = 0,
) -> RbfSystem:
    """Assemble ``phi``, ``w0`` and the null basis for ``data``.

    If ``centers`` is None, ``n_centers`` centers (default
    :func:`default_num_centers`) are placed inside the data bounds.
    """
    kernel = kernel or KernelSpec()
    normalizer = BoxNormalizer.from_bounds(data.bounds)
    if centers is None:
        K = n_centers or default_num_centers(data.dim, data.n)
        centers = place_centers(data.bounds, K, strategy, seed)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    phi = assemble_phi(data.X, centers, kernel, normalizer)
    w0 = min_norm_solution(phi, data.y)
    return RbfSystem(centers, kernel, normalizer, data.X, data.y, phi, w0, null_basis(phi))


def baseline_system(data: Dataset, kernel: KernelSpec | None = None) -> RbfSystem:
    """Classical square RBF interpolant with one center per data point."""
    return build_system(data, centers=data.X, kernel=kernel)


def evaluate_surrogate(system: RbfSystem, w, x) -> float:
    """``sum_j w_j phi(||x - c_j||)`` at a single point ``x``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (system.n_centers,):
        raise ValueError(f"weight vector must have length {system.n_centers}")
    return float((system.design(np.atleast_2d(x)) @ w)[0])
