"""Expert-knowledge loss terms for generated interpolants.

Structural penalties act on each generated function and are averaged over
the batch.  Distributional terms compare the batch distribution of a
functional statistic with a target Gaussian through the closed-form KL
divergence of a moment-matched Gaussian.

Every batched evaluator returns ``(value, dvalue/dV)`` where ``V`` is the
``(M, P)`` matrix of function values of M batch members at the term's P
probe points.  ReLU kinks take the zero branch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

STD_FLOOR = 1e-6
_GRAD_EPS = 1e-24


class TrainingError(FloatingPointError):
    """Raised when a loss term becomes non-finite."""


class PriorKind(str, enum.Enum):
    MONO = "mono"
    POS = "pos"
    LIP = "lip"
    CURV = "curv"
    CONV = "conv"
    BND = "bnd"
    KL_POINT = "kl_point"
    KL_REGION = "kl_region"
    KL_EXTREME = "kl_extreme"
    KL_GRAD = "kl_grad"
    KL_CURV = "kl_curv"
    KL_INTEGRAL = "kl_integral"

    @property
    def is_kl(self) -> bool:
        return self.value.startswith("kl_")


class Direction(str, enum.Enum):
    NONDECREASING = "nondecreasing"
    NONINCREASING = "nonincreasing"


class ConvexMode(str, enum.Enum):
    CONVEX = "convex"
    CONCAVE = "concave"


# ---------------------------------------------------------------------------
# batched structural penalties: V has shape (M, P); returns per-member values and dV


def _mono(V, direction):
    if V.shape[1] < 2:
        raise ValueError("monotonicity needs at least 2 grid values")
    sign = 1.0 if Direction(direction) is Direction.NONDECREASING else -1.0
    viol = -sign * np.diff(V, axis=1)
    active = (viol > 0).astype(float)
    g = V.shape[1] - 1
    vals = np.where(viol > 0, viol, 0.0).sum(axis=1) / g
    dD = -sign * active / g
    dV = np.zeros_like(V)
    dV[:, 1:] += dD
    dV[:, :-1] -= dD
    return vals, dV


def _pos(V, m, reduce="min"):
    if V.shape[1] < 1:
        raise ValueError("positivity needs at least one probe value")
    if reduce == "sum":
        viol = m - V
        return np.where(viol > 0, viol, 0.0).sum(axis=1), -(viol > 0).astype(float)
    idx = np.argmin(V, axis=1)
    vmin = V[np.arange(V.shape[0]), idx]
    viol = m - vmin
    vals = np.where(viol > 0, viol, 0.0)
    dV = np.zeros_like(V)
    dV[np.arange(V.shape[0]), idx] = -(viol > 0).astype(float)
    return vals, dV


def _lip(V, dist, L):
    p = dist.size
    if V.shape[1] != 2 * p:
        raise ValueError("Lipschitz term expects 2 values per pair")
    diff = V[:, :p] - V[:, p:]
    slope = np.abs(diff) / dist
    excess = slope - L
    active = excess > 0
    vals = np.where(active, excess, 0.0).sum(axis=1)
    dd = active * np.sign(diff) / dist
    return vals, np.concatenate([dd, -dd], axis=1)


def _second_diff(V):
    if V.shape[1] < 3:
        raise ValueError("second differences need at least 3 grid values")
    return V[:, 2:] - 2.0 * V[:, 1:-1] + V[:, :-2]


def _second_diff_adjoint(dD, P):
    dV = np.zeros((dD.shape[0], P))
    dV[:, 2:] += dD
    dV[:, 1:-1] -= 2.0 * dD
    dV[:, :-2] += dD
    return dV


def _curv(V):
    D2 = _second_diff(V)
    return (D2**2).sum(axis=1), _second_diff_adjoint(2.0 * D2, V.shape[1])


def _conv(V, mode):
    D2 = _second_diff(V)
    sign = 1.0 if ConvexMode(mode) is ConvexMode.CONVEX else -1.0
    viol = -sign * D2
    active = viol > 0
    return np.where(active, viol, 0.0).sum(axis=1), _second_diff_adjoint(-sign * active, V.shape[1])


def _bnd(V, targets):
    if V.shape[1] != targets.size:
        raise ValueError(f"got {V.shape[1]} boundary values for {targets.size} targets")
    r = V - targets
    return (r**2).sum(axis=1), 2.0 * r


# ---------------------------------------------------------------------------
# scalar forms


def _row(values) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(1, -1)


def pen_mono(values, direction=Direction.NONDECREASING) -> float:
    """Mean violation of a monotone trend over consecutive grid values."""
    return float(_mono(_row(values), direction)[0][0])


def pen_pos(values, m: float = 0.0) -> float:
    """``ReLU(m - min(values))``."""
    v = _row(values)
    if v.size == 0:
        raise ValueError("empty probe set")
    return float(_pos(v, m)[0][0])


def pen_lip(pairs, L: float) -> float:
    """Sum of slope excesses over ``L`` for ``(x, y, f(x), f(y))`` pairs."""
    xs = np.array([np.atleast_1d(p[0]) for p in pairs], dtype=float)
    ys = np.array([np.atleast_1d(p[1]) for p in pairs], dtype=float)
    dist = np.linalg.norm(xs - ys, axis=1)
    if np.any(dist == 0):
        raise ValueError("Lipschitz pair with coincident points")
    V = np.array([[p[2] for p in pairs] + [p[3] for p in pairs]], dtype=float)
    return float(_lip(V, dist, L)[0][0])


def pen_curv(values) -> float:
    """Sum of squared second differences."""
    return float(_curv(_row(values))[0][0])


def pen_conv(values, mode=ConvexMode.CONVEX) -> float:
    """Sum of second-difference sign violations (convex or concave)."""
    return float(_conv(_row(values), mode)[0][0])


def pen_bnd(values, targets) -> float:
    """Sum of squared deviations from known boundary values."""
    v = np.asarray(values, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if v.size != t.size:
        raise ValueError("values and targets differ in length")
    return float(_bnd(v[None, :], t)[0][0])


# ---------------------------------------------------------------------------
# Gaussian KL


def gaussian_kl(mu1, sigma1, mu2, sigma2):
    """KL( N(mu1, sigma1^2) || N(mu2, sigma2^2) )."""
    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if np.any(s1 <= 0) or np.any(s2 <= 0):
        raise ValueError("standard deviations must be positive")
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    out = np.log(s2 / s1) + (s1**2 + (mu1 - mu2) ** 2) / (2.0 * s2**2) - 0.5
    return float(out) if out.ndim == 0 else out


def _batch_kl(S, mu_t, sigma_t):
    """Mean over columns of KL(moment-matched batch column || target); S is (M, Q)."""
    M, Q = S.shape
    if M < 2:
        raise ValueError("KL terms need a batch of at least 2 members")
    mean = S.mean(axis=0)
    dev = S - mean
    sd = np.sqrt((dev**2).mean(axis=0) + STD_FLOOR**2)
    kl = gaussian_kl(mean, sd, mu_t, sigma_t)
    dmean = (mean - mu_t) / sigma_t**2
    dsd = -1.0 / sd + sd / sigma_t**2
    dS = (dmean / M) + dsd * dev / (M * sd)
    return float(np.mean(kl)), dS / Q


# ---------------------------------------------------------------------------
# statistics: return S (M, Q) and a function mapping dS back to dV (M, P)


def _stat(kind: PriorKind, V, params):
    if kind is PriorKind.KL_POINT:
        return V, lambda dS: dS
    if kind is PriorKind.KL_REGION:
        P = V.shape[1]
        return V.mean(axis=1, keepdims=True), lambda dS: np.repeat(dS / P, P, axis=1)
    if kind is PriorKind.KL_EXTREME:
        rows = np.arange(V.shape[0])
        idx = np.argmin(V, axis=1) if params.get("mode", "max") == "min" else np.argmax(V, axis=1)

        def back(dS):
            dV = np.zeros_like(V)
            dV[rows, idx] = dS[:, 0]
            return dV

        return V[rows, idx][:, None], back
    if kind is PriorKind.KL_GRAD:
        h = np.asarray(params["step"], dtype=float)
        d = h.size
        if V.shape[1] != 2 * d:
            raise ValueError(f"kl_grad needs 2 * {d} probe points (a +/- pair per input), got {V.shape[1]}")
        fd = (V[:, 0::2] - V[:, 1::2]) / (2.0 * h)
        norm = np.sqrt((fd**2).sum(axis=1) + _GRAD_EPS)

        def back(dS):
            dfd = dS * fd / norm[:, None] / (2.0 * h)
            dV = np.zeros_like(V)
            dV[:, 0::2] = dfd
            dV[:, 1::2] = -dfd
            return dV

        return norm[:, None], back
    if kind is PriorKind.KL_CURV:
        h = float(params["step"])
        D2 = _second_diff(V)
        n = D2.shape[1]
        S = D2.mean(axis=1, keepdims=True) / h**2
        return S, lambda dS: _second_diff_adjoint(np.repeat(dS / (n * h**2), n, axis=1), V.shape[1])
    if kind is PriorKind.KL_INTEGRAL:
        t = np.asarray(params["coords"], dtype=float)
        wts = np.zeros_like(t)
        dt = np.diff(t)
        wts[:-1] += dt / 2
        wts[1:] += dt / 2
        if params.get("integrand", "value") == "square":
            return (V**2 @ wts)[:, None], lambda dS: dS * 2.0 * V * wts
        return (V @ wts)[:, None], lambda dS: dS * wts
    raise ValueError(f"{kind} is not a distributional term")


def _stat_degree(kind: PriorKind, params) -> int:
    if kind is PriorKind.KL_INTEGRAL and params.get("integrand", "value") == "square":
        return 2
    return 1


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorTerm:
    """One weighted loss term with its probe points (raw input coordinates).

    ``params`` by kind:

    * mono: ``direction``
    * pos: ``m``, ``reduce`` ("min" penalizes the lowest probe, "sum" every probe below m)
    * lip: ``L``, ``dist`` (pair distances; points hold all firsts then all seconds)
    * conv: ``mode``
    * bnd: ``targets``
    * kl_*: ``mu``, ``sigma`` (scalars, or one per point for kl_point) plus
      ``mode`` (extreme), ``step`` (grad, curv), ``coords``/``integrand`` (integral)
    """

    kind: PriorKind
    weight: float
    points: np.ndarray
    params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", PriorKind(self.kind))
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, dtype=float)))
        if not self.weight >= 0:
            raise ValueError(f"prior weight must be nonnegative, got {self.weight}")
        if self.kind.is_kl and np.any(np.asarray(self.params["sigma"]) <= 0):
            raise ValueError("KL target sigma must be positive")
        if not self.name:
            object.__setattr__(self, "name", self.kind.value)

    def evaluate(self, V) -> tuple[float, np.ndarray]:
        """Unweighted term value and its gradient w.r.t. the (M, P) value matrix."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        k, p = self.kind, self.params
        if k.is_kl:
            S, back = _stat(k, V, p)
            Q = S.shape[1]
            mu = np.broadcast_to(np.asarray(p["mu"], dtype=float), (Q,))
            sigma = np.broadcast_to(np.asarray(p["sigma"], dtype=float), (Q,))
            val, dS = _batch_kl(S, mu, sigma)
            return val, back(dS)
        if k is PriorKind.MONO:
            vals, dV = _mono(V, p.get("direction", Direction.NONDECREASING))
        elif k is PriorKind.POS:
            vals, dV = _pos(V, float(p.get("m", 0.0)), p.get("reduce", "min"))
        elif k is PriorKind.LIP:
            vals, dV = _lip(V, np.asarray(p["dist"], dtype=float), float(p["L"]))
        elif k is PriorKind.CURV:
            vals, dV = _curv(V)
        elif k is PriorKind.CONV:
            vals, dV = _conv(V, p.get("mode", ConvexMode.CONVEX))
        elif k is PriorKind.BND:
            vals, dV = _bnd(V, np.asarray(p["targets"], dtype=float))
        else:  # pragma: no cover
            raise ValueError(k)
        M = V.shape[0]
        return float(vals.mean()), dV / M

    def scaled(self, scale: float) -> "PriorTerm":
        """The same term for responses divided by ``scale``."""
        p = dict(self.params)
        k = self.kind
        if k is PriorKind.POS:
            p["m"] = float(p.get("m", 0.0)) / scale
        elif k is PriorKind.LIP:
            p["L"] = float(p["L"]) / scale
        elif k is PriorKind.BND:
            p["targets"] = np.asarray(p["targets"], dtype=float) / scale
        elif k.is_kl:
            f = scale ** _stat_degree(k, p)
            p["mu"] = np.asarray(p["mu"], dtype=float) / f
            p["sigma"] = np.asarray(p["sigma"], dtype=float) / f
        return replace(self, params=p)


def kl_statistic(batch_weights, system, term: PriorTerm) -> float:
    """KL between the moment-matched batch statistic and the term's target.

    ``batch_weights`` is an (M, K) array of surrogate weight vectors.
    """
    W = np.atleast_2d(np.asarray(batch_weights, dtype=float))
    if W.shape[0] < 2:
        raise ValueError("KL statistic needs at least 2 batch members")
    if not term.kind.is_kl:
        raise ValueError(f"{term.kind} is not a distributional term")
    V = W @ system.design(term.points).T
    return term.evaluate(V)[0]


def total_loss(weights, values, names=None) -> float:
    """Weighted sum of term values; non-finite terms raise :class:`TrainingError`."""
    weights = list(weights)
    values = list(values)
    names = list(names) if names is not None else [f"term[{i}]" for i in range(len(values))]
    total = 0.0
    for w, v, n in zip(weights, values, names):
        if not math.isfinite(v):
            raise TrainingError(f"loss term {n!r} is not finite ({v})")
        total += w * v
    return total


# ---------------------------------------------------------------------------
# probe-grid builders


def slice_points(bounds, dim: int, anchor, n: int = 32, lo=None, hi=None) -> np.ndarray:
    """``n`` equispaced points varying coordinate ``dim``; other coordinates at ``anchor``."""
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    lo = b[dim, 0] if lo is None else lo
    hi = b[dim, 1] if hi is None else hi
    pts = np.tile(np.asarray(anchor, dtype=float), (n, 1))
    pts[:, dim] = np.linspace(lo, hi, n)
    return pts


def mono_term(points, direction, weight: float = 1.0, name: str = "") -> PriorTerm:
    return PriorTerm(PriorKind.MONO, weight, points, {"direction": Direction(direction)}, name)


def pos_term(points, m: float = 0.0, weight: float = 1.0, name: str = "", reduce: str = "min") -> PriorTerm:
    return PriorTerm(PriorKind.POS, weight, points, {"m": m, "reduce": reduce}, name)


def lip_term(bounds, L: float, n_pairs: int = 64, seed: int = 0, weight: float = 1.0, name: str = "") -> PriorTerm:
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    a = rng.uniform(b[:, 0], b[:, 1], size=(n_pairs, b.shape[0]))
    c = rng.uniform(b[:, 0], b[:, 1], size=(n_pairs, b.shape[0]))
    dist = np.linalg.norm(a - c, axis=1)
    return PriorTerm(PriorKind.LIP, weight, np.vstack([a, c]), {"L": L, "dist": dist}, name)


def grad_points(x0, step) -> np.ndarray:
    """Central-difference stencil ``x0 + h e_j, x0 - h e_j`` for every dimension j."""
    x0 = np.asarray(x0, dtype=float)
    step = np.broadcast_to(np.asarray(step, dtype=float), x0.shape)
    pts = []
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = step[j]
        pts += [x0 + e, x0 - e]
    return np.array(pts)
