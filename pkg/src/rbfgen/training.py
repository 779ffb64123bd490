"""Generator training over the interpolation null space and ensemble prediction."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generator import Activation, GeneratorNet, backward, forward, init_generator
from .priors import PriorTerm, TrainingError, total_loss
from .rbf import Dataset, KernelSpec, RbfSystem, baseline_system, build_system

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    alpha_scale: float = 1.0
    log_every: int = 1
    hidden: tuple[int, ...] = (64, 64)
    activation: Activation = Activation.TANH
    latent_dim: int | None = None
    zero_final: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not self.alpha_scale > 0:
            raise ValueError("alpha_scale must be > 0")
        self.betas = tuple(self.betas)
        self.hidden = tuple(self.hidden)
        self.activation = Activation(self.activation)


@dataclass
class LossHistory:
    names: list[str]
    total: np.ndarray
    terms: np.ndarray  # (iterations, n_terms), unweighted

    def window_mean(self, start: bool, window: int = 50) -> float:
        w = min(window, self.total.size)
        seg = self.total[:w] if start else self.total[-w:]
        return float(seg.mean())

    def write_csv(self, path, every: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "total", *self.names])
            for i in range(0, self.total.size, max(1, every)):
                wr.writerow([i, repr(float(self.total[i])), *(repr(float(v)) for v in self.terms[i])])


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def latent_batch(seed: int, counter: int, M: int, dim: int) -> np.ndarray:
    """Standard-normal latents for one iteration, keyed by (seed, counter)."""
    return np.random.default_rng([int(seed), int(counter)]).standard_normal((M, dim))


class _ProbeBank:
    """All prior probe points stacked, with the kernel rows projected once."""

    def __init__(self, system: RbfSystem, priors: list[PriorTerm], shift: float):
        pts = [t.points for t in priors]
        sizes = [p.shape[0] for p in pts]
        self.slices = []
        start = 0
        for s in sizes:
            self.slices.append(slice(start, start + s))
            start += s
        Phi = system.design(np.vstack(pts))
        self.base = Phi @ system.w0 + shift
        self.proj = Phi @ system.null

    def values(self, A: np.ndarray) -> np.ndarray:
        return self.base + A @ self.proj.T


def train_rbfgen(
    system: RbfSystem,
    net: GeneratorNet,
    priors: list[PriorTerm],
    cfg: TrainConfig,
    shift: float = 0.0,
) -> tuple[GeneratorNet, LossHistory]:
    """Adam on the generator parameters for ``cfg.iterations`` steps.

    Priors see the generated function plus the constant ``shift``.  The input
    net is not modified; a trained copy is returned.
    """
    if net.out_dim != system.null_dim:
        raise ValueError(f"generator out_dim {net.out_dim} != null-space dimension {system.null_dim}")
    if not priors:
        raise ValueError("need at least one prior term")
    net = net.copy()
    bank = _ProbeBank(system, priors, shift)
    names = [t.name for t in priors]
    weights = [t.weight for t in priors]
    params = net.params()
    opt = Adam(params, cfg.learning_rate, cfg.betas)
    totals = np.empty(cfg.iterations)
    term_vals = np.empty((cfg.iterations, len(priors)))
    M = cfg.batch_size

    for it in range(cfg.iterations):
        Z = latent_batch(cfg.seed, it, M, net.latent_dim)
        A = forward(net, Z)
        U = bank.values(A)
        dU = np.zeros_like(U)
        for j, (term, sl) in enumerate(zip(priors, bank.slices)):
            val, dV = term.evaluate(U[:, sl])
            term_vals[it, j] = val
            if term.weight:
                dU[:, sl] += term.weight * dV
        try:
            totals[it] = total_loss(weights, term_vals[it], names)
        except TrainingError as exc:
            raise TrainingError(f"iteration {it}: {exc}") from None
        if cfg.log_every and it % cfg.log_every == 0:
            logger.debug("iter %d loss %.6g", it, totals[it])
        grads = backward(net, Z, dU @ bank.proj)
        opt.step(params, grads)

    return net, LossHistory(names, totals, term_vals)


def sample_ensemble(system: RbfSystem, net: GeneratorNet, M: int, seed: int = 0) -> np.ndarray:
    """``M`` weight vectors ``w0 + null @ G(z_m)`` as rows of an (M, K) array."""
    if M == 0:
        return np.empty((0, system.n_centers))
    Z = np.random.default_rng(seed).standard_normal((M, net.latent_dim))
    return system.weights(forward(net, Z))


def _quantiles(values: np.ndarray, level: float):
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    q = (1.0 - level) / 2.0
    return np.quantile(values, [q, 1.0 - q], axis=0, method="linear")


@dataclass
class SurrogateEnsemble:
    """Trained RBF-Gen surrogate in raw response units.

    The system interpolates standardized responses; predictions are mapped
    back through ``y_mean + y_scale * f``.
    """

    system: RbfSystem
    generator: GeneratorNet
    y_mean: float
    y_scale: float
    weights: np.ndarray
    history: LossHistory | None = field(default=None, repr=False)

    def sample_values(self, points) -> np.ndarray:
        """(M, P) raw-unit values of every cached member."""
        return self.y_mean + self.y_scale * (self.weights @ self.system.design(points).T)

    def mean(self, points) -> np.ndarray:
        wbar = self.weights.mean(axis=0)
        return self.y_mean + self.y_scale * (self.system.design(points) @ wbar)

    __call__ = mean

    def predict_with_ci(self, x, level: float = 0.95):
        """Ensemble mean and empirical central interval at one point or a batch."""
        if self.weights.shape[0] == 0:
            raise ValueError("empty ensemble")
        single = np.ndim(x) == 1
        vals = self.sample_values(np.atleast_2d(x))
        mean = vals.mean(axis=0)
        lo, hi = _quantiles(vals, level)
        if single:
            return float(mean[0]), float(lo[0]), float(hi[0])
        return mean, lo, hi

    def resample(self, M: int, seed: int = 0) -> "SurrogateEnsemble":
        return SurrogateEnsemble(
            self.system, self.generator, self.y_mean, self.y_scale,
            sample_ensemble(self.system, self.generator, M, seed), self.history,
        )

    def to_dict(self) -> dict:
        s = self.system
        return {
            "kind": "rbfgen",
            "kernel": {"kind": s.kernel.kind.value, "epsilon": s.kernel.epsilon},
            "bounds": s.normalizer.bounds.tolist(),
            "centers": s.centers.tolist(),
            "X": s.X.tolist(),
            "y": s.y.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "generator": self.generator.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, M: int = 200, seed: int = 0) -> "SurrogateEnsemble":
        data = Dataset(np.asarray(d["X"]), np.asarray(d["y"]), np.asarray(d["bounds"]))
        system = build_system(data, centers=np.asarray(d["centers"]), kernel=KernelSpec(**d["kernel"]))
        net = GeneratorNet.from_dict(d["generator"])
        return cls(system, net, float(d["y_mean"]), float(d["y_scale"]), sample_ensemble(system, net, M, seed))


def standardize(y) -> tuple[np.ndarray, float, float]:
    y = np.asarray(y, dtype=float)
    mean = float(y.mean())
    scale = float(y.std())
    if not scale > 0:
        scale = max(abs(mean), 1.0)
    return (y - mean) / scale, mean, scale


@dataclass
class BaselineRbf:
    """Square RBF interpolant (centers at the data) with the same response standardization."""

    system: RbfSystem
    y_mean: float
    y_scale: float

    @classmethod
    def fit(cls, data: Dataset, kernel: KernelSpec | None = None) -> "BaselineRbf":
        ys, mean, scale = standardize(data.y)
        return cls(baseline_system(Dataset(data.X, ys, data.bounds), kernel), mean, scale)

    def mean(self, points) -> np.ndarray:
        return self.y_mean + self.y_scale * (self.system.design(points) @ self.system.w0)

    __call__ = mean


def fit_rbfgen(
    data: Dataset,
    priors: list[PriorTerm],
    cfg: TrainConfig | None = None,
    n_centers: int | None = None,
    kernel: KernelSpec | None = None,
    strategy=None,
    ensemble_size: int = 200,
    ensemble_seed: int | None = None,
    centers=None,
) -> SurrogateEnsemble:
    """Full pipeline: standardize, build the relaxed system, train, sample.

    ``priors`` are expressed in raw response units.  Explicit ``centers``
    override ``n_centers``/``strategy``.
    """
    cfg = cfg or TrainConfig()
    ys, mean, scale = standardize(data.y)
    system = build_system(
        Dataset(data.X, ys, data.bounds), centers=centers, kernel=kernel, n_centers=n_centers, strategy=strategy
    )
    if system.null_dim < 1:
        raise ValueError("RBF-Gen needs more centers than samples")
    latent = cfg.latent_dim or min(8, system.null_dim)
    net = init_generator(
        latent, system.null_dim, cfg.hidden, cfg.activation, cfg.alpha_scale, cfg.seed, cfg.zero_final
    )
    scaled = [t.scaled(scale) for t in priors]
    net, hist = train_rbfgen(system, net, scaled, cfg, shift=mean / scale)
    seed = cfg.seed + 1 if ensemble_seed is None else ensemble_seed
    W = sample_ensemble(system, net, ensemble_size, seed)
    return SurrogateEnsemble(system, net, mean, scale, W, hist)


def predict_with_ci(ensemble: SurrogateEnsemble, x, level: float = 0.95):
    return ensemble.predict_with_ci(x, level)


def save_model(ensemble: SurrogateEnsemble, path) -> None:
    Path(path).write_text(json.dumps(ensemble.to_dict()))
