"""Leave-two-out cross-validation with PLS input reduction and monotonicity priors."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .priors import Direction, mono_term
from .rbf import Dataset, KernelSpec, place_centers
from .training import BaselineRbf, TrainConfig, fit_rbfgen

logger = logging.getLogger(__name__)

METHODS = ("baseline", "rbfgen")

# Expert monotonicity signs for 17 variables x 5 QoIs used by the synthetic generator.
REFERENCE_SIGNS = np.array(
    [
        [+1, -1, -1, +1, -1],
        [0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0],
        [-1, +1, +1, -1, -1],
        [0, 0, 0, 0, 0],
        [-1, +1, +1, -1, +1],
        [-1, +1, +1, -1, 0],
        [-1, +1, +1, -1, 0],
        [-1, +1, +1, -1, +1],
        [0, -1, -1, +1, 0],
        [0, -1, -1, +1, 0],
        [0, -1, -1, +1, +1],
        [0, 0, 0, 0, 0],
        [-1, +1, +1, -1, -1],
        [-1, +1, +1, -1, -1],
        [0, 0, 0, 0, 0],
        [-1, +1, +1, -1, -1],
    ],
    dtype=int,
)


# ---------------------------------------------------------------------------
# folds and metrics


def l2o_folds(n: int) -> list[tuple[int, int]]:
    """All unordered held-out pairs ``(i, j)``, ``i < j``, in lexicographic order."""
    if n < 3:
        raise ValueError("leave-two-out needs at least 3 rows")
    return list(combinations(range(n), 2))


def metrics(predictions) -> tuple[float, float]:
    """``(ARE, AAE)`` over ``(y_hat, y)`` pairs; ARE skips ``|y| < 1e-12``."""
    P = np.asarray(list(predictions), dtype=float).reshape(-1, 2)
    if P.shape[0] == 0:
        raise ValueError("no predictions")
    err = np.abs(P[:, 0] - P[:, 1])
    keep = np.abs(P[:, 1]) >= 1e-12
    are = float(np.mean(err[keep] / np.abs(P[keep, 1]))) if keep.any() else float("nan")
    return are, float(err.mean())


# ---------------------------------------------------------------------------
# PLS


@dataclass(frozen=True)
class PlsModel:
    """Column standardization plus unit-norm NIPALS weight vectors."""

    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray  # (d, ncomp)

    def transform(self, X) -> np.ndarray:
        return ((np.atleast_2d(X) - self.mean) / self.scale) @ self.weights


def fit_pls(X, y, ncomp: int) -> PlsModel:
    """NIPALS PLS1 on column-standardized ``X`` and centered ``y``.

    Constant columns are left at zero after centering.  If the response is
    exhausted before ``ncomp`` components, the remaining directions are the
    leading right singular vectors of the deflated ``X`` so the projection
    keeps full column rank.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Xk = (X - mean) / scale
    rank = np.linalg.matrix_rank(Xk)
    if not 1 <= ncomp <= rank:
        raise ValueError(f"ncomp must lie in [1, {rank}] (rank of centered X), got {ncomp}")
    yk = y - y.mean()
    W = np.zeros((X.shape[1], ncomp))
    for a in range(ncomp):
        w = Xk.T @ yk
        nw = np.linalg.norm(w)
        if nw <= 1e-12 * max(1.0, np.linalg.norm(Xk)) * max(1.0, np.linalg.norm(y)):
            w = np.linalg.svd(Xk, full_matrices=False)[2][0]
        else:
            w = w / nw
        t = Xk @ w
        tt = t @ t
        p = Xk.T @ t / tt
        Xk = Xk - np.outer(t, p)
        yk = yk - (yk @ t / tt) * t
        W[:, a] = w
    return PlsModel(mean, scale, W)


def pls_reduce(X, y, ncomp: int) -> tuple[np.ndarray, np.ndarray]:
    """``(projection d x ncomp, reduced X n x ncomp)``."""
    model = fit_pls(X, y, ncomp)
    return model.weights, model.transform(X)


# ---------------------------------------------------------------------------
# CSV schema


@dataclass(frozen=True)
class MultiQoiData:
    X: np.ndarray
    Y: np.ndarray
    x_names: tuple[str, ...]
    q_names: tuple[str, ...]


def read_dataset(path) -> MultiQoiData:
    """Header ``x1..xd, q1..qm``; input columns start with ``x``, QoI columns with ``q``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    xi = [i for i, h in enumerate(header) if h.lower().startswith("x")]
    qi = [i for i, h in enumerate(header) if h.lower().startswith("q")]
    if not xi or not qi or len(xi) + len(qi) != len(header):
        raise ValueError(f"{path}: header must be x1..xd followed by q1..qm")
    A = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return MultiQoiData(A[:, xi], A[:, qi], tuple(header[i] for i in xi), tuple(header[i] for i in qi))


def write_dataset(path, data: MultiQoiData) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([*data.x_names, *data.q_names])
        for x, q in zip(data.X, data.Y):
            wr.writerow([repr(float(v)) for v in (*x, *q)])


@dataclass(frozen=True)
class MonotonicityTable:
    """Signs (+1 increasing, -1 decreasing, 0 unknown); rows are variables, columns QoIs."""

    entries: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.entries)
        if E.ndim != 2:
            raise ValueError("monotonicity table must be 2-D")
        if not np.all(np.isin(E, (-1, 0, 1))):
            raise ValueError("monotonicity entries must be +1, -1 or 0")
        object.__setattr__(self, "entries", E.astype(int))

    @property
    def shape(self):
        return self.entries.shape

    def directions(self, qoi: int) -> list[tuple[int, Direction]]:
        out = []
        for v, s in enumerate(self.entries[:, qoi]):
            if s:
                out.append((v, Direction.NONDECREASING if s > 0 else Direction.NONINCREASING))
        return out

    @classmethod
    def read_csv(cls, path) -> "MonotonicityTable":
        """Optional header row and optional leading label column are skipped."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]

        def numeric(s):
            try:
                float(s)
                return True
            except ValueError:
                return False

        if rows and not all(numeric(c) for c in rows[0][1:]):
            rows = rows[1:]
        if rows and not numeric(rows[0][0]):
            rows = [r[1:] for r in rows]
        return cls(np.array([[int(float(c)) for c in r] for r in rows]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["variable", *[f"q{j + 1}" for j in range(self.shape[1])]])
            for i, row in enumerate(self.entries):
                wr.writerow([f"x{i + 1}", *[f"{int(v):+d}" if v else "0" for v in row]])


# ---------------------------------------------------------------------------
# synthetic data


_SHAPES = (
    lambda x: 1.0 - np.exp(-2.5 * x),
    lambda x: x**2,
    lambda x: np.log1p(4.0 * x) / np.log(5.0),
    lambda x: x,
)


@dataclass(frozen=True)
class SyntheticTruth:
    """Noise-free additive responses: ``offset_q + sum_v sign * amp * shape(x_v)``.

    Each term is shifted so it is nonnegative on [0, 1], keeping every QoI
    positive.
    """

    signs: np.ndarray
    relevant: tuple[np.ndarray, ...]
    amps: tuple[np.ndarray, ...]
    kinds: tuple[np.ndarray, ...]
    offsets: np.ndarray

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.empty((X.shape[0], self.offsets.size))
        for q in range(self.offsets.size):
            f = np.full(X.shape[0], self.offsets[q])
            for v, a, k in zip(self.relevant[q], self.amps[q], self.kinds[q]):
                g = _SHAPES[k](X[:, v])
                f += a * g if self.signs[v, q] > 0 else a * (1.0 - g)
            Y[:, q] = f
        return Y


def synthetic_truth(seed: int = 0, signs=None, n_relevant: int = 5) -> SyntheticTruth:
    S = REFERENCE_SIGNS if signs is None else np.asarray(signs, dtype=int)
    rng = np.random.default_rng([seed, 1])
    rel, amps, kinds = [], [], []
    for q in range(S.shape[1]):
        cand = np.flatnonzero(S[:, q])
        rel.append(np.sort(rng.choice(cand, size=min(n_relevant, cand.size), replace=False)))
        amps.append(rng.uniform(2.0, 8.0, size=rel[-1].size))
        kinds.append(rng.integers(len(_SHAPES), size=rel[-1].size))
    offsets = 5.0 + rng.uniform(0.0, 5.0, size=S.shape[1])
    return SyntheticTruth(S, tuple(rel), tuple(amps), tuple(kinds), offsets)


def synthetic_dataset(
    n: int = 20,
    seed: int = 0,
    signs: np.ndarray | None = None,
    n_relevant: int = 5,
    noise: float = 0.02,
) -> tuple[MultiQoiData, MonotonicityTable]:
    """Smooth monotone responses whose trends follow a sign table.

    Inputs are uniform on [0, 1]^d.  Each QoI depends on ``n_relevant``
    variables drawn from its nonzero table entries (see
    :class:`SyntheticTruth`); multiplicative Gaussian noise of relative size
    ``noise`` is added.
    """
    truth = synthetic_truth(seed, signs, n_relevant)
    d, m = truth.signs.shape
    X = np.random.default_rng([seed, 0]).uniform(0.0, 1.0, size=(n, d))
    Y = truth(X) * (1.0 + noise * np.random.default_rng([seed, 2]).standard_normal((n, m)))
    names_x = tuple(f"x{i + 1}" for i in range(d))
    names_q = tuple(f"q{j + 1}" for j in range(m))
    return MultiQoiData(X, Y, names_x, names_q), MonotonicityTable(truth.signs)


# ---------------------------------------------------------------------------
# L2O driver


@dataclass
class CrossValConfig:
    ncomp: int = 5
    method: str = "rbfgen"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(iterations=300, batch_size=32, hidden=(32, 32)))
    center_factor: float = 2.0
    centers: str = "halton"
    epsilon: float = 1.0
    n_grid: int = 16
    w_mono: float = 1.0
    ensemble_size: int = 64
    pad: float = 0.1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.ncomp < 1:
            raise ValueError("ncomp must be >= 1")
        if self.centers not in ("halton", "data_plus_halton"):
            raise ValueError("centers must be 'halton' or 'data_plus_halton'")
        if self.center_factor <= 1.0:
            raise ValueError("center_factor must exceed 1 so the null space is nonempty")


@dataclass
class CrossValReport:
    method: str
    q_names: tuple[str, ...]
    are: np.ndarray
    aae: np.ndarray
    n_folds: int
    predictions: list[np.ndarray]  # per QoI: rows (i, j, held_out_index, y_hat, y)

    @property
    def n_predictions(self) -> int:
        return 2 * self.n_folds

    def rows(self) -> list[dict]:
        out = [
            {"qoi": q, "method": self.method, "ARE": float(a), "AAE": float(b)}
            for q, a, b in zip(self.q_names, self.are, self.aae)
        ]
        out.append({"qoi": "overall", "method": self.method, "ARE": float(np.mean(self.are)), "AAE": float(np.mean(self.aae))})
        return out


def _reduced_bounds(Z: np.ndarray, pad: float) -> np.ndarray:
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.column_stack([lo - pad * span, hi + pad * span])


def reduced_mono_priors(X_train, pls: PlsModel, table: MonotonicityTable, qoi: int, n_grid: int, weight: float):
    """Monotonicity terms along original-variable slices, mapped into the reduced space.

    Each slice varies one variable over its training range with the others at
    their training medians.
    """
    med = np.median(X_train, axis=0)
    lo, hi = X_train.min(axis=0), X_train.max(axis=0)
    terms = []
    for v, direction in table.directions(qoi):
        if hi[v] <= lo[v]:
            continue
        pts = np.tile(med, (n_grid, 1))
        pts[:, v] = np.linspace(lo[v], hi[v], n_grid)
        terms.append(mono_term(pls.transform(pts), direction, weight, name=f"mono_x{v + 1}"))
    return terms


def fit_fold(X_train, y_train, table: MonotonicityTable | None, qoi: int, cfg: CrossValConfig):
    """Fit PLS and the surrogate on one training slice; returns a predictor on raw inputs."""
    pls = fit_pls(X_train, y_train, cfg.ncomp)
    Z = pls.transform(X_train)
    data = Dataset(Z, y_train, _reduced_bounds(Z, cfg.pad))
    kernel = KernelSpec("gaussian", cfg.epsilon)
    if cfg.method == "baseline":
        model = BaselineRbf.fit(data, kernel)
    else:
        priors = reduced_mono_priors(X_train, pls, table, qoi, cfg.n_grid, cfg.w_mono) if table is not None else []
        if not priors:
            model = BaselineRbf.fit(data, kernel)
        else:
            K = int(np.ceil(cfg.center_factor * len(y_train)))
            centers = None
            if cfg.centers == "data_plus_halton":
                centers = np.vstack([Z, place_centers(data.bounds, K - len(y_train))])
            model = fit_rbfgen(
                data, priors, cfg.train, n_centers=K, kernel=kernel, ensemble_size=cfg.ensemble_size, centers=centers
            )
    return lambda X: model(pls.transform(X))


def _run_fold(args):
    X, y, table, qoi, cfg, (i, j) = args
    mask = np.ones(len(y), dtype=bool)
    mask[[i, j]] = False
    predict = fit_fold(X[mask], y[mask], table, qoi, cfg)
    yh = predict(X[[i, j]])
    return np.array([[i, j, i, yh[0], y[i]], [i, j, j, yh[1], y[j]]])


def run_l2o(data: MultiQoiData, table: MonotonicityTable | None, cfg: CrossValConfig, map_fn=map) -> CrossValReport:
    """Leave-two-out errors for every QoI; ``map_fn`` may parallelize folds."""
    n = data.X.shape[0]
    folds = l2o_folds(n)
    if table is not None and table.shape != (data.X.shape[1], data.Y.shape[1]):
        raise ValueError(f"monotonicity table shape {table.shape} does not match data {(data.X.shape[1], data.Y.shape[1])}")
    are, aae, preds = [], [], []
    for q in range(data.Y.shape[1]):
        tasks = [(data.X, data.Y[:, q], table, q, cfg, f) for f in folds]
        P = np.vstack(list(map_fn(_run_fold, tasks)))
        a, b = metrics(P[:, 3:5])
        logger.info("L2O %s %s: ARE %.4f AAE %.4f", cfg.method, data.q_names[q], a, b)
        are.append(a)
        aae.append(b)
        preds.append(P)
    return CrossValReport(cfg.method, data.q_names, np.array(are), np.array(aae), len(folds), preds)


def write_report(path, reports: list[CrossValReport]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["qoi", "method", "ARE", "AAE"])
        wr.writeheader()
        for rep in reports:
            for row in rep.rows():
                wr.writerow({**row, "ARE": repr(row["ARE"]), "AAE": repr(row["AAE"])})


def write_predictions(path, report: CrossValReport) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["qoi", "fold_i", "fold_j", "index", "y_hat", "y"])
        for q, P in zip(report.q_names, report.predictions):
            for r in P:
                wr.writerow([q, int(r[0]), int(r[1]), int(r[2]), repr(float(r[3])), repr(float(r[4]))])


def default_paths(out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    return {"report": out / "crossval_report.csv", "predictions": out / "crossval_predictions.csv"}
