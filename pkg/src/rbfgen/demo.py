"""One-dimensional illustration: four samples of a quadratic, four prior variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .priors import PriorKind, PriorTerm, mono_term, pen_mono, slice_points
from .rbf import Dataset, KernelSpec
from .training import SurrogateEnsemble, TrainConfig, fit_rbfgen

VARIANTS = ("prior_free", "point", "curvature", "monotone")
BOUNDS = [[0.0, 1.0]]


def demo_function(x):
    return 20.0 * np.asarray(x) ** 2 + 20.0 * np.asarray(x) + 1.0


def demo_dataset() -> Dataset:
    x = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
    return Dataset(x[:, None], demo_function(x), BOUNDS)


def quadratic_curvature(data: Dataset) -> float:
    """Second derivative of the least-squares quadratic through the samples."""
    return float(2.0 * np.polyfit(data.X[:, 0], data.y, 2)[0])


@dataclass(frozen=True)
class DemoSettings:
    n_centers: int = 12
    epsilon: float = 3.0
    n_grid: int = 32
    point_x: float = 0.3
    point_sigma: float = 1.0
    curv_rel_sigma: float = 0.1
    ensemble_size: int = 200


def demo_priors(variant: str, data: Dataset | None = None, settings: DemoSettings = DemoSettings()) -> list[PriorTerm]:
    data = data or demo_dataset()
    grid = slice_points(BOUNDS, 0, [0.5], settings.n_grid)
    if variant == "prior_free":
        # a zero-weight term keeps the pipeline uniform; the generator stays at its initialization
        return [mono_term(grid, "nondecreasing", 0.0, name="none")]
    if variant == "point":
        mu = float(demo_function(settings.point_x))
        return [
            PriorTerm(PriorKind.KL_POINT, 1.0, [[settings.point_x]], {"mu": mu, "sigma": settings.point_sigma}, "kl_point")
        ]
    if variant == "curvature":
        c = quadratic_curvature(data)
        h = float(grid[1, 0] - grid[0, 0])
        return [
            PriorTerm(
                PriorKind.KL_CURV, 1.0, grid,
                {"mu": c, "sigma": settings.curv_rel_sigma * abs(c), "step": h}, "kl_curv",
            )
        ]
    if variant == "monotone":
        return [mono_term(grid, "nondecreasing", 1.0, name="mono")]
    raise ValueError(f"unknown demo variant {variant!r}")


def demo_train_config(**overrides) -> TrainConfig:
    """Defaults for the demo: a randomly initialized output layer so the untrained ensemble has spread."""
    return TrainConfig(**{"zero_final": False, "alpha_scale": 1.0, **overrides})


def fit_demo(variant: str, cfg: TrainConfig | None = None, settings: DemoSettings = DemoSettings()) -> SurrogateEnsemble:
    data = demo_dataset()
    cfg = cfg or demo_train_config()
    if variant == "prior_free":
        cfg = TrainConfig(**{**cfg.__dict__, "iterations": 1})
    return fit_rbfgen(
        data, demo_priors(variant, data, settings), cfg,
        n_centers=settings.n_centers, kernel=KernelSpec("gaussian", settings.epsilon),
        ensemble_size=settings.ensemble_size,
    )


def violation_fraction(ensemble: SurrogateEnsemble, n_grid: int = 64, tol: float = 1e-3) -> float:
    """Share of members whose mean nondecreasing-violation on a uniform grid exceeds ``tol``."""
    grid = np.linspace(0.0, 1.0, n_grid)[:, None]
    V = ensemble.sample_values(grid)
    return float(np.mean([pen_mono(v, "nondecreasing") > tol for v in V]))
