"""Declarative run configuration (JSON) for the command-line tool.

Keys are camelCase; unknown keys are rejected.  Relative paths resolve
against the directory holding the config file.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator
from pydantic.alias_generators import to_camel

from . import priors as P
from .crossval import CrossValConfig
from .demo import VARIANTS, DemoSettings
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


class _Model(BaseModel):
    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True, extra="forbid", frozen=True)


class TrainCfg(_Model):
    iterations: int = Field(2000, ge=1)
    batch_size: int = Field(64, ge=2)
    learning_rate: float = Field(1e-3, gt=0)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    alpha_scale: float = Field(1.0, gt=0)
    loss_log_every: int = Field(1, ge=1)
    hidden: tuple[Annotated[int, Field(ge=1)], ...] = (64, 64)
    activation: Literal["tanh", "relu"] = "tanh"
    latent_dim: int | None = Field(None, ge=1)
    zero_final: bool = True

    @field_validator("adam_betas")
    @classmethod
    def _betas(cls, v):
        if not all(0 <= b < 1 for b in v):
            raise ValueError("betas must lie in [0, 1)")
        return v

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            iterations=self.iterations, batch_size=self.batch_size, learning_rate=self.learning_rate,
            betas=self.adam_betas, seed=self.seed, alpha_scale=self.alpha_scale, log_every=self.loss_log_every,
            hidden=self.hidden, activation=self.activation, latent_dim=self.latent_dim, zero_final=self.zero_final,
        )


class PriorRecord(_Model):
    """One prior term.

    Probe points are either explicit ``points`` or a 1-D slice along ``dim``
    (``n`` points between ``lo`` and ``hi``, other coordinates at ``anchor``,
    which defaults to the box midpoint).  Lipschitz terms draw ``nPairs``
    seeded random pairs instead.
    """

    kind: P.PriorKind
    weight: float = Field(1.0, ge=0)
    name: str = ""
    points: list[list[float]] | None = None
    dim: int | None = Field(None, ge=0)
    anchor: list[float] | None = None
    n: int = Field(32, ge=1)
    lo: float | None = None
    hi: float | None = None
    n_pairs: int = Field(64, ge=1)
    seed: int = 0
    direction: P.Direction = P.Direction.NONDECREASING
    mode: str | None = None
    m: float = 0.0
    reduce: Literal["min", "sum"] = "min"
    lipschitz: float | None = Field(None, gt=0)
    targets: list[float] | None = None
    mu: float | list[float] | None = None
    sigma: float | list[float] | None = None
    step: float | list[float] | None = None
    integrand: Literal["value", "square"] = "value"

    @model_validator(mode="after")
    def _check(self):
        k = self.kind
        if k.is_kl and (self.mu is None or self.sigma is None):
            raise ValueError(f"{k.value} needs mu and sigma")
        if k.is_kl and np.any(np.asarray(self.sigma, dtype=float) <= 0):
            raise ValueError("sigma must be positive")
        if k is P.PriorKind.LIP and self.lipschitz is None:
            raise ValueError("lip needs lipschitz")
        if k is P.PriorKind.BND and self.targets is None:
            raise ValueError("bnd needs targets")
        if k is not P.PriorKind.LIP and self.points is None and self.dim is None:
            raise ValueError("give either points or dim")
        return self

    def build(self, bounds) -> P.PriorTerm:
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        k = self.kind
        if k is P.PriorKind.LIP:
            return P.lip_term(b, self.lipschitz, self.n_pairs, self.seed, self.weight, self.name)
        if self.points is not None:
            pts = np.asarray(self.points, dtype=float)
            coord = pts[:, self.dim] if self.dim is not None else None
        else:
            if self.dim >= b.shape[0]:
                raise ConfigError(f"priorSpec dim {self.dim} out of range for {b.shape[0]} inputs")
            anchor = self.anchor if self.anchor is not None else b.mean(axis=1)
            pts = P.slice_points(b, self.dim, anchor, self.n, self.lo, self.hi)
            coord = pts[:, self.dim]
        params: dict[str, Any] = {}
        if k is P.PriorKind.MONO:
            params = {"direction": self.direction}
        elif k is P.PriorKind.POS:
            params = {"m": self.m, "reduce": self.reduce}
        elif k is P.PriorKind.CONV:
            params = {"mode": self.mode or "convex"}
        elif k is P.PriorKind.BND:
            params = {"targets": np.asarray(self.targets, dtype=float)}
        elif k.is_kl:
            params = {"mu": np.asarray(self.mu, dtype=float), "sigma": np.asarray(self.sigma, dtype=float)}
            if k is P.PriorKind.KL_EXTREME:
                params["mode"] = self.mode or "max"
            if k in (P.PriorKind.KL_CURV, P.PriorKind.KL_GRAD):
                if self.step is None:
                    if coord is None or len(coord) < 2:
                        raise ConfigError(f"{k.value} needs step when no slice is given")
                    step = float(coord[1] - coord[0])
                else:
                    step = self.step
                params["step"] = step
                if k is P.PriorKind.KL_GRAD:
                    pts = P.grad_points(pts[0], step) if self.points is None else pts
            if k is P.PriorKind.KL_INTEGRAL:
                if coord is None:
                    raise ConfigError("kl_integral needs dim to define the integration coordinate")
                params["coords"] = coord
                params["integrand"] = self.integrand
        return P.PriorTerm(k, self.weight, pts, params, self.name)


class _Command(_Model):
    pass


class Demo1dConfig(_Command):
    command: Literal["demo1d"]
    out_dir: str
    priors: tuple[Literal["prior_free", "point", "curvature", "monotone"], ...] = VARIANTS
    train_cfg: TrainCfg = TrainCfg(zero_final=False)
    n_centers: int = Field(DemoSettings.n_centers, ge=5)
    epsilon: float = Field(DemoSettings.epsilon, gt=0)
    ensemble_size: int = Field(DemoSettings.ensemble_size, ge=1)
    n_plot: int = Field(101, ge=2)


class BeamConfig(_Command):
    command: Literal["beam"]
    out_dir: str
    dims: tuple[Annotated[int, Field(ge=1)], ...] = (10,)
    ratio: Literal[1, 2] = 1
    seeds: int = Field(5, ge=1)
    methods: tuple[Literal["baseline", "rbfgen"], ...] = ("baseline", "rbfgen")
    train_cfg: TrainCfg = TrainCfg()
    n_centers: int | None = Field(None, ge=2)
    epsilon: float = Field(1.0, gt=0)
    starts: int = Field(8, ge=1)
    perturb: float = Field(0.30, gt=0)
    n_pos: int = Field(1024, ge=1)
    ensemble_size: int = Field(200, ge=1)

    @field_validator("dims", "methods")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("must not be empty")
        return v


_CV = CrossValConfig()


class CrossvalConfig(_Command):
    command: Literal["crossval"]
    out_dir: str
    dataset_path: str
    mono_table_path: str | None = None
    ncomp: int = Field(5, ge=1)
    method: Literal["baseline", "rbfgen", "both"] = "both"
    train_cfg: TrainCfg = TrainCfg(
        iterations=_CV.train.iterations, batch_size=_CV.train.batch_size, hidden=_CV.train.hidden
    )
    center_factor: float = Field(_CV.center_factor, gt=1)
    centers: Literal["halton", "data_plus_halton"] = _CV.centers
    epsilon: float = Field(_CV.epsilon, gt=0)
    n_grid: int = Field(_CV.n_grid, ge=2)
    w_mono: float = Field(_CV.w_mono, ge=0)
    ensemble_size: int = Field(_CV.ensemble_size, ge=1)


class FitConfig(_Command):
    command: Literal["fit"]
    dataset_path: str
    prior_spec: tuple[PriorRecord, ...]
    model_out: str
    qoi: str | None = None
    bounds: list[tuple[float, float]] | None = None
    train_cfg: TrainCfg = TrainCfg()
    n_centers: int | None = Field(None, ge=2)
    epsilon: float = Field(1.0, gt=0)
    ensemble_size: int = Field(200, ge=1)

    @field_validator("prior_spec")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("at least one prior term is required")
        return v


class PredictConfig(_Command):
    command: Literal["predict"]
    model_path: str
    points_path: str
    out_csv: str
    level: float = Field(0.95, gt=0, lt=1)
    ensemble_size: int = Field(200, ge=1)
    seed: int = 0


RunConfig = Annotated[
    Union[Demo1dConfig, BeamConfig, CrossvalConfig, FitConfig, PredictConfig], Field(discriminator="command")
]
_ADAPTER = TypeAdapter(RunConfig)
COMMANDS = ("demo1d", "beam", "crossval", "fit", "predict")
_PATH_KEYS = ("out_dir", "dataset_path", "mono_table_path", "model_out", "model_path", "points_path", "out_csv")


def _format_errors(exc: ValidationError, command: str | None) -> str:
    lines = []
    for err in exc.errors():
        loc = [str(p) for p in err["loc"]]
        if command and loc and loc[0] == command:
            loc = loc[1:]
        lines.append(f"{'.'.join(loc) or '<root>'}: {err['msg']}")
    return "; ".join(lines)


def parse_config_data(data: Any, base_dir: Path | None = None):
    """Validate a decoded JSON object; raises :class:`ConfigError`."""
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a JSON object")
    command = data.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command: must be one of {', '.join(COMMANDS)} (got {command!r})")
    try:
        cfg = _ADAPTER.validate_python(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, command)) from None
    if base_dir is not None:
        updates = {}
        for key in _PATH_KEYS:
            v = getattr(cfg, key, None)
            if v is not None and not Path(v).is_absolute():
                updates[key] = str((base_dir / v).resolve())
        cfg = cfg.model_copy(update=updates)
    return cfg


def parse_config(path) -> Any:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config_data(data, path.parent)


def dump_config(cfg) -> dict:
    """JSON-ready dict (camelCase keys) that parses back to an equal config."""
    return cfg.model_dump(mode="json", by_alias=True)
