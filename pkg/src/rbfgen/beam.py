"""Cantilever beam compliance benchmark.

A cantilever of length L is split into D Euler-Bernoulli elements of
rectangular section (width b, height h_i).  The root is clamped and a point
load P acts at the tip.  Designs minimize compliance subject to a volume cap
and per-element height bounds.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .priors import PriorKind, PriorTerm, mono_term, pos_term, slice_points
from .rbf import Dataset, KernelSpec
from .training import BaselineRbf, TrainConfig, fit_rbfgen

logger = logging.getLogger(__name__)

METHODS = ("baseline", "rbfgen")


@dataclass(frozen=True)
class BeamProblem:
    D: int
    L: float = 1.0
    b: float = 1.0
    E: float = 1.0
    P: float = 1.0
    h_min: float = 0.05
    h_max: float = 0.5
    volume_cap: float = 0.2
    train_lo: float = 0.05
    train_hi: float = 0.1

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("need at least one element")
        if min(self.L, self.b, self.E, self.P) <= 0:
            raise ValueError("physical constants must be positive")
        if not self.h_min <= self.train_lo < self.train_hi <= self.h_max:
            raise ValueError("training region must lie inside the height bounds")

    @property
    def bounds(self) -> np.ndarray:
        return np.tile([self.h_min, self.h_max], (self.D, 1))

    @property
    def train_bounds(self) -> np.ndarray:
        return np.tile([self.train_lo, self.train_hi], (self.D, 1))

    @property
    def midpoint(self) -> np.ndarray:
        return np.full(self.D, 0.5 * (self.train_lo + self.train_hi))


def _element_stiffness(EI: np.ndarray, le: float) -> np.ndarray:
    l2 = le * le
    base = np.array(
        [
            [12.0, 6 * le, -12.0, 6 * le],
            [6 * le, 4 * l2, -6 * le, 2 * l2],
            [-12.0, -6 * le, 12.0, -6 * le],
            [6 * le, 2 * l2, -6 * le, 4 * l2],
        ]
    )
    return (EI / le**3)[:, None, None] * base


def beam_stiffness(problem: BeamProblem, h) -> np.ndarray:
    """Global stiffness with the root DOFs (deflection, rotation) removed."""
    h = np.asarray(h, dtype=float)
    if h.shape != (problem.D,):
        raise ValueError(f"expected {problem.D} heights, got shape {h.shape}")
    if np.any(h <= 0):
        raise ValueError("element heights must be positive (stiffness would be singular)")
    D = problem.D
    EI = problem.E * problem.b * h**3 / 12.0
    ke = _element_stiffness(EI, problem.L / D)
    ndof = 2 * (D + 1)
    K = np.zeros((ndof, ndof))
    for e in range(D):
        K[2 * e : 2 * e + 4, 2 * e : 2 * e + 4] += ke[e]
    return K[2:, 2:]


def beam_compliance(problem: BeamProblem, h) -> float:
    """Tip compliance ``f . d`` with ``K(h) d = f``."""
    K = beam_stiffness(problem, h)
    f = np.zeros(K.shape[0])
    f[-2] = problem.P
    d = np.linalg.solve(K, f)
    return float(f @ d)


def beam_volume(problem: BeamProblem, h) -> float:
    return float(problem.b * problem.L / problem.D * np.sum(h))


def sample_training_data(problem: BeamProblem, n_samples: int, seed: int = 0) -> Dataset:
    """Latin-hypercube designs in the training region with their true compliance."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    u = qmc.LatinHypercube(d=problem.D, seed=seed).random(n_samples)
    X = qmc.scale(u, problem.train_lo, problem.train_hi) if problem.D > 0 else u
    X = np.atleast_2d(X)
    y = np.array([beam_compliance(problem, x) for x in X])
    return Dataset(X, y, problem.bounds)


def sample_feasible(problem: BeamProblem, n: int, rng) -> np.ndarray:
    """Uniform samples from the height box restricted to the volume cap (rejection)."""
    out = []
    a = problem.b * problem.L / problem.D
    while sum(len(o) for o in out) < n:
        cand = rng.uniform(problem.h_min, problem.h_max, size=(max(4 * n, 1024), problem.D))
        out.append(cand[a * cand.sum(axis=1) <= problem.volume_cap])
    return np.vstack(out)[:n]


def build_beam_priors(
    problem: BeamProblem,
    fem=None,
    perturb: float = 0.30,
    n_grid: int = 32,
    n_pos: int = 1024,
    seed: int = 0,
    w_mono: float = 1.0,
    w_pos: float = 1.0,
    w_kl: float = 1.0,
    pos_reduce: str = "min",
    probe_region: str = "box",
    mono_anchors: int = 0,
) -> list[PriorTerm]:
    """Monotonicity, positivity and slice-KL priors for the beam surrogate.

    Slices run across the full height range in one coordinate with the others
    frozen at the training-region midpoint.  Slice targets are Gaussians
    centered on the true compliance with standard deviation
    ``perturb * |C|``.  ``mono_anchors`` adds monotonicity slices through
    that many extra random feasible designs; ``probe_region="feasible"`` draws
    positivity probes from the volume-feasible set instead of the whole box.
    """
    fem = fem or (lambda h: beam_compliance(problem, h))
    bounds = problem.bounds
    anchor = problem.midpoint
    rng = np.random.default_rng(seed)
    anchors = [anchor]
    if mono_anchors:
        anchors += list(sample_feasible(problem, mono_anchors, rng))
    terms = []
    for j in range(problem.D):
        pts = np.vstack([slice_points(bounds, j, a, n_grid) for a in anchors])
        if len(anchors) == 1:
            terms.append(mono_term(pts, "nonincreasing", w_mono, name=f"mono_h{j + 1}"))
        else:
            for k, a in enumerate(anchors):
                terms.append(
                    mono_term(pts[k * n_grid : (k + 1) * n_grid], "nonincreasing", w_mono / len(anchors), name=f"mono_h{j + 1}_a{k}")
                )
    if probe_region == "feasible":
        probes = sample_feasible(problem, n_pos, rng)
    else:
        probes = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n_pos, problem.D))
    terms.append(pos_term(probes, 0.0, w_pos, name="pos", reduce=pos_reduce))
    for j in range(problem.D):
        pts = slice_points(bounds, j, anchor, n_grid)
        mu = np.array([fem(p) for p in pts])
        terms.append(
            PriorTerm(PriorKind.KL_POINT, w_kl, pts, {"mu": mu, "sigma": perturb * np.abs(mu)}, f"kl_slice_h{j + 1}")
        )
    return terms


# ---------------------------------------------------------------------------
# constrained optimization on a surrogate


def project_feasible(problem: BeamProblem, h, tol: float = 1e-10) -> np.ndarray:
    """Euclidean projection onto the height box intersected with the volume halfspace."""
    h = np.asarray(h, dtype=float)
    lo, hi = problem.h_min, problem.h_max
    a = problem.b * problem.L / problem.D
    cap = problem.volume_cap
    x = np.clip(h, lo, hi)
    if a * x.sum() <= cap:
        return x
    if a * lo * problem.D > cap + tol:
        raise ValueError("volume cap is infeasible with the lower height bound")

    def clipped(mu):
        return np.clip(h - mu * a, lo, hi)

    mu_lo, mu_hi = 0.0, 1.0
    while a * clipped(mu_hi).sum() > cap:
        mu_hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (mu_lo + mu_hi)
        if a * clipped(mid).sum() > cap:
            mu_lo = mid
        else:
            mu_hi = mid
        if mu_hi - mu_lo <= 1e-15 * max(1.0, mu_hi):
            break
    x = clipped(mu_hi)
    # bisection lands on the feasible side; close the remaining slack exactly
    slack = cap - a * x.sum()
    free = (x > lo) & (x < hi)
    if slack < -tol and free.any():
        x[free] += slack / (a * free.sum())
    return x


def is_feasible(problem: BeamProblem, h, tol: float = 1e-10) -> bool:
    h = np.asarray(h)
    return bool(
        np.all(h >= problem.h_min - tol)
        and np.all(h <= problem.h_max + tol)
        and beam_volume(problem, h) <= problem.volume_cap + tol
    )


def _fd_gradient(objective, x, step):
    D = x.size
    stencil = np.repeat(x[None, :], 2 * D, axis=0)
    idx = np.arange(D)
    stencil[2 * idx, idx] += step
    stencil[2 * idx + 1, idx] -= step
    vals = np.asarray(objective(stencil), dtype=float)
    return (vals[0::2] - vals[1::2]) / (2.0 * step)


def _pgd(objective, problem, x0, max_iter, fd_step):
    x = project_feasible(problem, x0)
    fx = float(objective(x[None, :])[0])
    span = problem.h_max - problem.h_min
    t0 = 0.1 * span
    for _ in range(max_iter):
        g = _fd_gradient(objective, x, fd_step)
        gn = np.linalg.norm(g)
        if not np.isfinite(gn) or gn == 0:
            break
        t = t0 / gn
        moved = False
        for _ in range(40):
            xn = project_feasible(problem, x - t * g)
            fn = float(objective(xn[None, :])[0])
            if fn < fx - 1e-4 * np.dot(g, x - xn):
                moved = True
                break
            t *= 0.5
        if not moved or np.max(np.abs(xn - x)) < 1e-12 * span:
            break
        x, fx = xn, fn
    return x, fx


def optimize_on_surrogate(
    objective,
    problem: BeamProblem,
    starts: int = 8,
    seed: int = 0,
    max_iter: int = 200,
    fd_step: float = 1e-4,
) -> tuple[np.ndarray, float]:
    """Multi-start projected gradient descent on a vectorized objective.

    ``objective`` maps an (n, D) array of designs to n predicted compliances.
    The first start is always the training-region midpoint; the rest are
    seeded uniform draws in the height box.  Finite-difference steps are
    ``fd_step`` in unit-box coordinates.
    """
    step = fd_step * (problem.h_max - problem.h_min)
    rng = np.random.default_rng(seed)
    x_starts = [problem.midpoint]
    x_starts += list(rng.uniform(problem.h_min, problem.h_max, size=(max(starts - 1, 0), problem.D)))
    best = None
    for x0 in x_starts:
        x, fx = _pgd(objective, problem, x0, max_iter, step)
        if best is None or fx < best[1]:
            best = (x, fx)
    if best is None or not is_feasible(problem, best[0]):
        raise RuntimeError("optimizer produced no feasible design")
    return best


def measured_improvement(c_initial: float, c_final: float) -> float:
    """Percentage reduction of the true objective relative to the initial design."""
    if not c_initial > 0:
        raise ValueError("initial objective must be positive")
    return 100.0 * (c_initial - c_final) / c_initial


# ---------------------------------------------------------------------------


@dataclass
class BeamStudyConfig:
    dims: list[int] = field(default_factory=lambda: [10])
    ratio: int = 1
    seeds: int = 5
    methods: tuple[str, ...] = METHODS
    train: TrainConfig = field(default_factory=TrainConfig)
    n_centers: int | None = None
    epsilon: float = 1.0
    starts: int = 8
    perturb: float = 0.30
    w_mono: float = 1.0
    w_pos: float = 1.0
    w_kl: float = 1.0
    n_pos: int = 1024
    pos_reduce: str = "min"
    probe_region: str = "box"
    mono_anchors: int = 0
    ensemble_size: int = 200


def fit_beam_surrogate(method: str, problem: BeamProblem, data: Dataset, cfg: BeamStudyConfig, seed: int):
    kernel = KernelSpec("gaussian", cfg.epsilon)
    if method == "baseline":
        return BaselineRbf.fit(data, kernel)
    if method == "rbfgen":
        priors = build_beam_priors(
            problem, perturb=cfg.perturb, n_pos=cfg.n_pos, seed=seed,
            w_mono=cfg.w_mono, w_pos=cfg.w_pos, w_kl=cfg.w_kl, pos_reduce=cfg.pos_reduce,
            probe_region=cfg.probe_region, mono_anchors=cfg.mono_anchors,
        )
        train = TrainConfig(**{**cfg.train.__dict__, "seed": seed})
        return fit_rbfgen(data, priors, train, n_centers=cfg.n_centers, kernel=kernel, ensemble_size=cfg.ensemble_size)
    raise ValueError(f"unknown method {method!r}")


def run_beam_cell(D: int, method: str, seed: int, cfg: BeamStudyConfig) -> dict:
    t0 = time.perf_counter()
    problem = BeamProblem(D)
    data = sample_training_data(problem, cfg.ratio * D, seed)
    model = fit_beam_surrogate(method, problem, data, cfg, seed)
    h_star, predicted = optimize_on_surrogate(model, problem, cfg.starts, seed)
    c0 = beam_compliance(problem, problem.midpoint)
    c1 = beam_compliance(problem, h_star)
    wall = time.perf_counter() - t0
    logger.info("beam D=%d %s seed=%d improvement %.2f%% (%.2fs)", D, method, seed, measured_improvement(c0, c1), wall)
    return {
        "D": D,
        "ratio": cfg.ratio,
        "method": method,
        "seed": seed,
        "C_initial": c0,
        "C_final_true": c1,
        "C_predicted": predicted,
        "improvement_pct": measured_improvement(c0, c1),
        "wall_time_s": wall,
    }


def run_beam_study(cfg: BeamStudyConfig, map_fn=map) -> list[dict]:
    """One row per (D, method, seed) cell, ordered by D, then method, then seed."""
    if not cfg.dims:
        raise ValueError("need at least one dimension")
    cells = [(D, m, s) for D in cfg.dims for m in cfg.methods for s in range(cfg.seeds)]
    return list(map_fn(_run_cell_star, [(D, m, s, cfg) for D, m, s in cells]))


def _run_cell_star(args):
    return run_beam_cell(*args)


def summarize(rows: list[dict]) -> list[dict]:
    """Mean and median improvement per (D, method)."""
    out = []
    keys = sorted({(r["D"], r["method"]) for r in rows}, key=lambda k: (k[0], METHODS.index(k[1]) if k[1] in METHODS else 99))
    for D, m in keys:
        vals = np.array([r["improvement_pct"] for r in rows if r["D"] == D and r["method"] == m])
        out.append({"D": D, "method": m, "mean_pct": float(vals.mean()), "median_pct": float(np.median(vals)), "n": vals.size})
    return out
