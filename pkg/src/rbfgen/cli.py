"""``rbfgen`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime or I/O error,
4 numerical failure (rank deficiency, non-finite loss).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pydantic
import scipy

from . import __version__
from .beam import BeamStudyConfig, run_beam_study, summarize
from .config import COMMANDS, ConfigError, dump_config, parse_config
from .crossval import CrossValConfig, MonotonicityTable, read_dataset, run_l2o
from .demo import BOUNDS, DemoSettings, demo_dataset, fit_demo, violation_fraction
from .priors import TrainingError
from .rbf import Dataset, KernelSpec, RankDeficiencyError
from .svg import bar_chart, line_plot
from .training import SurrogateEnsemble, TrainConfig, fit_rbfgen

logger = logging.getLogger("rbfgen")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_NUMERIC = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# output handling


class Outputs:
    """Collects output files in memory and publishes them with atomic renames."""

    def __init__(self):
        self.files: dict[Path, str] = {}

    def add(self, path, text: str) -> None:
        self.files[Path(path)] = text

    def add_csv(self, path, header, rows) -> None:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
        self.add(path, buf.getvalue())

    def commit(self) -> dict[str, str]:
        digests = {}
        for path, text in self.files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                os.replace(tmp, path)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
            digests[str(path)] = hashlib.sha256(text.encode()).hexdigest()
        return digests


def _num(v) -> str:
    return repr(float(v))


def _manifest(command, cfg, args, extra: dict, digests: dict) -> str:
    doc = {
        "command": command,
        "config": dump_config(cfg),
        "deterministic": bool(args.deterministic),
        "jobs": args.jobs,
        "versions": {
            "rbfgen": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": pydantic.VERSION,
        },
        "outputs": digests,
        **extra,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _mapper(jobs: int):
    if jobs <= 1:
        return map, None
    import multiprocessing as mp

    pool = mp.get_context("spawn").Pool(jobs)
    return (lambda f, it: pool.imap(f, list(it))), pool


def _train(cfg) -> TrainConfig:
    return cfg.train_cfg.to_train_config()


# ---------------------------------------------------------------------------
# commands


def cmd_demo1d(cfg, args, out: Outputs) -> dict:
    out_dir = Path(cfg.out_dir)
    settings = DemoSettings(n_centers=cfg.n_centers, epsilon=cfg.epsilon, ensemble_size=cfg.ensemble_size)
    data = demo_dataset()
    out.add_csv(out_dir / "demo1d_data.csv", ["x", "y"], [[_num(x), _num(y)] for x, y in zip(data.X[:, 0], data.y)])
    xs = np.linspace(BOUNDS[0][0], BOUNDS[0][1], cfg.n_plot)
    summary, timings = [], {}
    for variant in cfg.priors:
        t0 = time.perf_counter()
        ens = fit_demo(variant, _train(cfg), settings)
        timings[variant] = time.perf_counter() - t0
        V = ens.sample_values(xs[:, None])
        mean, lo, hi = ens.predict_with_ci(xs[:, None])
        header = ["x", "mean", "lo95", "hi95", *[f"member_{m}" for m in range(V.shape[0])]]
        rows = [[_num(x), _num(a), _num(b), _num(c), *map(_num, V[:, i])] for i, (x, a, b, c) in enumerate(zip(xs, mean, lo, hi))]
        out.add_csv(out_dir / f"demo1d_{variant}_curves.csv", header, rows)
        h = ens.history
        every = cfg.train_cfg.loss_log_every
        out.add_csv(
            out_dir / f"demo1d_{variant}_loss.csv", ["iteration", "total", *h.names],
            [[i, _num(h.total[i]), *map(_num, h.terms[i])] for i in range(0, h.total.size, every)],
        )
        out.add(
            out_dir / f"demo1d_{variant}.svg",
            line_plot(xs, V, title=f"1-D demo: {variant.replace('_', ' ')}", highlight=mean,
                      points=np.column_stack([data.X[:, 0], data.y])),
        )
        m3, l3, h3 = ens.predict_with_ci([0.3])
        summary.append([variant, _num(violation_fraction(ens)), _num(m3), _num(l3), _num(h3)])
        logger.info("demo1d %s done in %.2fs", variant, timings[variant])
    out.add_csv(out_dir / "demo1d_summary.csv", ["variant", "mono_violation_fraction", "mean_x0.3", "lo95_x0.3", "hi95_x0.3"], summary)
    return {"wall_time_s": timings}


BEAM_COLUMNS = ["D", "ratio", "method", "seed", "C_initial", "C_final_true", "C_predicted", "improvement_pct", "wall_time_s"]


def cmd_beam(cfg, args, out: Outputs) -> dict:
    out_dir = Path(cfg.out_dir)
    study = BeamStudyConfig(
        dims=list(cfg.dims), ratio=cfg.ratio, seeds=cfg.seeds, methods=tuple(cfg.methods), train=_train(cfg),
        n_centers=cfg.n_centers, epsilon=cfg.epsilon, starts=cfg.starts, perturb=cfg.perturb, n_pos=cfg.n_pos,
        ensemble_size=cfg.ensemble_size,
    )
    mapper, pool = _mapper(args.jobs)
    try:
        rows = run_beam_study(study, map_fn=mapper)
    finally:
        if pool is not None:
            pool.close()
    table = []
    for r in rows:
        wall = "" if args.deterministic else _num(r["wall_time_s"])
        table.append([r["D"], r["ratio"], r["method"], r["seed"], *map(_num, [r[k] for k in BEAM_COLUMNS[4:8]]), wall])
    out.add_csv(out_dir / "beam_study.csv", BEAM_COLUMNS, table)
    summ = summarize(rows)
    out.add_csv(
        out_dir / "beam_summary.csv", ["D", "method", "mean_pct", "median_pct", "n"],
        [[s["D"], s["method"], _num(s["mean_pct"]), _num(s["median_pct"]), s["n"]] for s in summ],
    )
    groups = [f"D={D}" for D in cfg.dims]
    series = {m: [next((s["median_pct"] for s in summ if s["D"] == D and s["method"] == m), float("nan")) for D in cfg.dims] for m in cfg.methods}
    out.add(out_dir / "beam_improvement.svg", bar_chart(groups, series, "Median measured improvement", "improvement (%)"))
    return {"wall_time_s": [{"D": r["D"], "method": r["method"], "seed": r["seed"], "seconds": r["wall_time_s"]} for r in rows]}


def cmd_crossval(cfg, args, out: Outputs) -> dict:
    out_dir = Path(cfg.out_dir)
    data = read_dataset(cfg.dataset_path)
    table = MonotonicityTable.read_csv(cfg.mono_table_path) if cfg.mono_table_path else None
    methods = ("baseline", "rbfgen") if cfg.method == "both" else (cfg.method,)
    mapper, pool = _mapper(args.jobs)
    reports, timings = [], {}
    try:
        for m in methods:
            t0 = time.perf_counter()
            cv = CrossValConfig(
                ncomp=cfg.ncomp, method=m, train=_train(cfg), center_factor=cfg.center_factor, centers=cfg.centers,
                epsilon=cfg.epsilon, n_grid=cfg.n_grid, w_mono=cfg.w_mono, ensemble_size=cfg.ensemble_size,
            )
            reports.append(run_l2o(data, table, cv, map_fn=mapper))
            timings[m] = time.perf_counter() - t0
    finally:
        if pool is not None:
            pool.close()
    rows = [[r["qoi"], r["method"], _num(r["ARE"]), _num(r["AAE"])] for rep in reports for r in rep.rows()]
    out.add_csv(out_dir / "crossval_report.csv", ["qoi", "method", "ARE", "AAE"], rows)
    pred_rows = []
    for rep in reports:
        for q, P in zip(rep.q_names, rep.predictions):
            pred_rows += [[rep.method, q, int(p[0]), int(p[1]), int(p[2]), _num(p[3]), _num(p[4])] for p in P]
    out.add_csv(out_dir / "crossval_predictions.csv", ["method", "qoi", "fold_i", "fold_j", "index", "y_hat", "y"], pred_rows)
    series = {rep.method: list(rep.are) for rep in reports}
    out.add(out_dir / "crossval_are.svg", bar_chart(list(data.q_names), series, "Leave-two-out ARE", "ARE"))
    return {"wall_time_s": timings, "n_folds": reports[0].n_folds, "n_predictions_per_qoi": reports[0].n_predictions}


def _read_points(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    return np.array([[float(v) for v in r] for r in rows], dtype=float)


def cmd_fit(cfg, args, out: Outputs) -> dict:
    data = read_dataset(cfg.dataset_path)
    q = 0 if cfg.qoi is None else data.q_names.index(cfg.qoi) if cfg.qoi in data.q_names else None
    if q is None:
        raise ConfigError(f"qoi: {cfg.qoi!r} not among {', '.join(data.q_names)}")
    if cfg.bounds is not None:
        bounds = np.asarray(cfg.bounds, dtype=float)
        if bounds.shape != (data.X.shape[1], 2):
            raise ConfigError(f"bounds: expected {data.X.shape[1]} [lo, hi] pairs")
    else:
        bounds = np.column_stack([data.X.min(axis=0), data.X.max(axis=0)])
    ds = Dataset(data.X, data.Y[:, q], bounds)
    terms = [rec.build(bounds) for rec in cfg.prior_spec]
    t0 = time.perf_counter()
    ens = fit_rbfgen(ds, terms, _train(cfg), n_centers=cfg.n_centers, kernel=KernelSpec("gaussian", cfg.epsilon),
                     ensemble_size=cfg.ensemble_size)
    wall = time.perf_counter() - t0
    model_out = Path(cfg.model_out)
    out.add(model_out, json.dumps(ens.to_dict()) + "\n")
    h = ens.history
    every = cfg.train_cfg.loss_log_every
    out.add_csv(
        model_out.with_suffix(".loss.csv"), ["iteration", "total", *h.names],
        [[i, _num(h.total[i]), *map(_num, h.terms[i])] for i in range(0, h.total.size, every)],
    )
    return {"wall_time_s": wall, "qoi": data.q_names[q]}


def cmd_predict(cfg, args, out: Outputs) -> dict:
    doc = json.loads(Path(cfg.model_path).read_text())
    ens = SurrogateEnsemble.from_dict(doc, M=cfg.ensemble_size, seed=cfg.seed)
    X = _read_points(cfg.points_path)
    if X.ndim != 2 or X.shape[1] != ens.system.X.shape[1]:
        raise ValueError(f"points must have {ens.system.X.shape[1]} columns")
    mean, lo, hi = ens.predict_with_ci(X, cfg.level)
    d = X.shape[1]
    out.add_csv(
        cfg.out_csv, [*[f"x{j + 1}" for j in range(d)], "mean", "lo", "hi"],
        [[*map(_num, x), _num(a), _num(b), _num(c)] for x, a, b, c in zip(X, mean, lo, hi)],
    )
    return {}


HANDLERS = {"demo1d": cmd_demo1d, "beam": cmd_beam, "crossval": cmd_crossval, "fit": cmd_fit, "predict": cmd_predict}


def _manifest_dir(cfg) -> Path:
    if hasattr(cfg, "out_dir"):
        return Path(cfg.out_dir)
    target = getattr(cfg, "model_out", None) or getattr(cfg, "out_csv")
    return Path(target).parent


# ---------------------------------------------------------------------------


def _origin(exc: BaseException) -> str:
    """Innermost package module on the traceback, for module-qualified messages."""
    name = "rbfgen.cli"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("rbfgen"):
            name = mod
        tb = tb.tb_next
    return name


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rbfgen", description="Knowledge-guided RBF surrogates.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores; 1 if deterministic)")
    p.add_argument("--deterministic", action="store_true", help="sequential, bit-reproducible outputs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs is not None and args.jobs < 1:
        print("rbfgen: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.deterministic:
        args.jobs = 1
    elif args.jobs is None:
        args.jobs = os.cpu_count() or 1
    try:
        cfg = parse_config(args.config)
        if cfg.command != args.command:
            raise ConfigError(f"command: config is for {cfg.command!r} but {args.command!r} was requested")
        out = Outputs()
        extra = HANDLERS[args.command](cfg, args, out)
        digests = out.commit()
        mdir = _manifest_dir(cfg)
        man = Outputs()
        man.add(mdir / "manifest.json", _manifest(args.command, cfg, args, extra, digests))
        man.commit()
    except ConfigError as exc:
        print(f"rbfgen.config: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RankDeficiencyError, TrainingError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"{_origin(exc)}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"{_origin(exc)}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
