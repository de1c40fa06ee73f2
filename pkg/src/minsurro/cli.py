"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    CamelBenchRun,
    ConfigError,
    GradcheckRun,
    OcpCollectRun,
    OcpSimRun,
    OcpTrainRun,
    SampleRun,
    SolveRun,
    TrainRun,
    as_array,
    config_to_dict,
    load_config_file,
    parse_overrides,
    resolve,
)

log = logging.getLogger("minsurro")


class UsageError(Exception):
    pass


class OutputCollision(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of settings")
    p.add_argument("--seed", type=int, help="seed for every random draw of the run")
    p.add_argument("--force", action="store_true", help="overwrite existing output files")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> _Parser:
    parser = _Parser(prog="minsurro", description="Learned min-of-quasiconvex surrogates for parametric optimization.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, help_ in (
        ("train", "train a surrogate on a dataset CSV"),
        ("solve", "solve a surrogate instance by decomposition"),
        ("sample", "write a projected-sampling dataset for a benchmark objective"),
        ("gradcheck", "compare analytic and finite-difference gradients"),
    ):
        _common(sub.add_parser(name, help=help_))
    sub.add_parser("version", help="print the version")
    bench = sub.add_parser("bench", help="benchmarks")
    bsub = bench.add_subparsers(dest="bench", parser_class=_Parser)
    _common(bsub.add_parser("camel", help="six-hump camel K sweep"))
    ocp = bsub.add_parser("ocp", help="path-tracking OCP pipeline")
    osub = ocp.add_subparsers(dest="stage", parser_class=_Parser)
    for stage in ("collect", "train", "simulate"):
        _common(osub.add_parser(stage))
    return parser


def _settings(cls, args, extra: list[str]):
    file_values = load_config_file(args.config) if args.config else {}
    overrides = parse_overrides(extra)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return resolve(cls, file_values, overrides)


def _prepare_out(out: str, names: list[str], force: bool) -> Path:
    path = Path(out)
    clash = [n for n in names if (path / n).exists()]
    if clash and not force:
        raise OutputCollision(f"{path / clash[0]} exists; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _recorded(cfg) -> dict:
    """Settings as stored in outputs; the output location is left out so reruns elsewhere match byte for byte."""
    d = config_to_dict(cfg)
    d.pop("out", None)
    return d


def _emit(payload: dict):
    print(json.dumps(payload, indent=2, sort_keys=True))


# -- commands -------------------------------------------------------------------


def cmd_train(cfg: TrainRun, force: bool):
    from .components import ComponentSpec, ContractError, HeadSpec
    from .io import read_dataset, save_model, write_history, write_json
    from .model import SurrogateModel, make_architecture
    from .region import FeasibleRegion
    from .training import AdamConfig, FinetuneConfig, TrainConfig, train

    if not cfg.dataset:
        raise ConfigError("train needs --dataset")
    ds = read_dataset(cfg.dataset)
    out = _prepare_out(cfg.out, ["model.json", "history.csv", "train_report.json"], force)
    lo = as_array(cfg.x_lower, ds.n_x, "x_lower") if cfg.x_lower else ds.x.min(axis=0)
    hi = as_array(cfg.x_upper, ds.n_x, "x_upper") if cfg.x_upper else ds.x.max(axis=0)
    if cfg.constraints == "box":
        box = FeasibleRegion(lo, hi)
        if ds.m and ds.m != box.m:
            raise ContractError(f"dual columns ({ds.m}) do not match the {box.m} box rows")
        ds.attach_constraints(lambda p: box.all_rows()[0].T)
    elif cfg.constraints != "none":
        raise ConfigError(f"constraints must be 'none' or 'box', got {cfg.constraints!r}")
    try:
        comp = ComponentSpec(
            cfg.family, alpha=cfg.alpha, pieces=cfg.pieces, coef_hidden=cfg.coef_hidden, widths=cfg.widths, n_q=cfg.n_q
        )
        head = HeadSpec(cfg.head, cfg.head_hidden, cfg.head_activation)
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc
    p_bounds = (ds.p.min(axis=0), ds.p.max(axis=0)) if ds.n_p else None
    arch = make_architecture(
        ds.n_x, ds.n_p, comp, K=cfg.K, head=head, shared_head=cfg.shared_head, gamma=cfg.gamma,
        x_bounds=(lo, hi), p_bounds=p_bounds,
    )
    tc = TrainConfig(
        w1=cfg.w1 if cfg.constraints == "box" else 0.0,
        w2=cfg.w2,
        gamma=cfg.gamma,
        adam=AdamConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate, batch=cfg.batch),
        finetune=FinetuneConfig(enabled=cfg.finetune_iterations > 0, iterations=cfg.finetune_iterations),
        restarts=cfg.restarts,
        seed=cfg.seed,
        selection=cfg.selection,
    )
    trained = train(SurrogateModel.create(arch, cfg.seed), ds, tc)
    trained.model.metadata["config"] = _recorded(cfg)
    save_model(trained.model, out / "model.json")
    write_history(trained.history, out / "history.csv")
    report = {
        "train_mse": trained.train_mse,
        "train_r2": trained.train_r2,
        "best_restart": trained.best_index,
        "restarts": [{"seed": r.seed, "train_mse": r.train_mse, "train_r2": r.train_r2, "failed": r.failed} for r in trained.restarts],
        "n_theta": trained.model.n_theta,
        "rows": len(ds),
        "config": _recorded(cfg),
    }
    write_json(report, out / "train_report.json")
    _emit({k: report[k] for k in ("train_mse", "train_r2", "best_restart", "n_theta")})


def cmd_solve(cfg: SolveRun, force: bool):
    from .io import load_model, write_json
    from .region import FeasibleRegion
    from .solve import SolverOptions, decompose_solve

    if not cfg.model:
        raise ConfigError("solve needs --model")
    model = load_model(cfg.model)
    arch = model.arch
    p = as_array(cfg.p, arch.n_p, "p")
    if cfg.x_lower:
        lo, hi = as_array(cfg.x_lower, arch.n_x, "x_lower"), as_array(cfg.x_upper, arch.n_x, "x_upper")
    elif arch.x_bounds is not None:
        lo, hi = np.array(arch.x_bounds[0]), np.array(arch.x_bounds[1])
    else:
        raise ConfigError("no box: pass --x_lower/--x_upper")
    rows = []
    for r in cfg.rows:
        r = as_array(r, arch.n_x + 1, "row")
        rows.append((r[:-1], r[-1]))
    region = FeasibleRegion(lo, hi, rows)
    out = _prepare_out(cfg.out, ["solve_report.json"], force)
    res = decompose_solve(model, p, region, SolverOptions(tol=cfg.tol, max_iters=cfg.max_iters, parallel=cfg.parallel))
    report = {
        "status": res.status,
        "winner": res.winner,
        "x_star": None if res.x_star is None else res.x_star.tolist(),
        "value_star": res.value_star if np.isfinite(res.value_star) else None,
        "components": [
            {
                "status": s.status,
                "value": s.value if np.isfinite(s.value) else None,
                "head_value": hv if np.isfinite(hv) else None,
                "iterations": s.iterations,
                "kkt_residual": s.kkt_residual if np.isfinite(s.kkt_residual) else None,
                "x_opt": None if s.x_opt is None else s.x_opt.tolist(),
            }
            for s, hv in zip(res.per_component, res.head_values)
        ],
    }
    write_json(report, out / "solve_report.json")
    _emit(report)


def cmd_sample(cfg: SampleRun, force: bool):
    from .data import TrainingDataset, concat_datasets, projected_sample
    from .io import write_dataset
    from .region import FeasibleRegion

    rng = np.random.default_rng(cfg.seed)
    out = _prepare_out(cfg.out, ["dataset.csv"], force)
    if cfg.problem == "camel":
        from .bench.camel import LOWER, UPPER, camel, camel_grad

        box = FeasibleRegion(LOWER, UPPER)
        X = projected_sample(box, cfg.enlargement * (UPPER - LOWER), cfg.count, rng)
        ds = TrainingDataset(X, np.zeros((len(X), 0)), camel(X[:, 0], X[:, 1]), grad=np.array([camel_grad(x) for x in X]))
    elif cfg.problem == "ocp":
        from .bench.lissajous import FrenetState, LissajousPath
        from .bench.ocp import OcpParameter, OcpProblem

        problem, path = OcpProblem(), LissajousPath()
        spec = problem.spec
        box = FeasibleRegion(spec.input_lower, spec.input_upper)
        parts = []
        for _ in range(cfg.problems):
            st = FrenetState(rng.uniform(0, 1), rng.uniform(-0.2, 0.2), rng.uniform(-np.pi / 6, np.pi / 6))
            p = OcpParameter.from_state(st, path, spec).as_vector()
            U = projected_sample(box, cfg.enlargement * (box.upper - box.lower), cfg.count, rng)
            f, g = problem.batch_value_and_grad(U, p)
            parts.append(TrainingDataset(U, np.tile(p, (len(U), 1)), f, grad=g))
        ds = concat_datasets(parts)
    else:
        raise ConfigError(f"unknown problem {cfg.problem!r}; expected camel or ocp")
    write_dataset(ds, out / "dataset.csv")
    _emit({"rows": len(ds), "path": str(out / "dataset.csv")})


def cmd_gradcheck(cfg: GradcheckRun, force: bool):
    from .diff import grad_x_smoothed, gradcheck

    rng = np.random.default_rng(cfg.seed)
    if cfg.problem == "ocp":
        from .bench.lissajous import FrenetState, LissajousPath
        from .bench.ocp import OcpParameter, OcpProblem

        problem = OcpProblem()
        spec = problem.spec
        if cfg.p:
            p = as_array(cfg.p, spec.n_p, "p")
        else:
            st = FrenetState(rng.uniform(0, 1), rng.uniform(-0.2, 0.2), rng.uniform(-np.pi / 6, np.pi / 6))
            p = OcpParameter.from_state(st, LissajousPath(), spec).as_vector()
        u = as_array(cfg.x, spec.n_u, "x") if cfg.x else rng.uniform(spec.input_lower, spec.input_upper)
        rep = gradcheck(lambda z: problem.value(z, p), u, cfg.h, grad=problem.value_and_grad(u, p)[1])
    elif cfg.model:
        from .io import load_model

        model = load_model(cfg.model)
        arch = model.arch
        if cfg.x:
            x = as_array(cfg.x, arch.n_x, "x")
        elif arch.x_bounds is not None:
            x = rng.uniform(arch.x_bounds[0], arch.x_bounds[1])
        else:
            x = rng.standard_normal(arch.n_x)
        if cfg.p:
            p = as_array(cfg.p, arch.n_p, "p")
        elif arch.p_bounds is not None:
            p = rng.uniform(arch.p_bounds[0], arch.p_bounds[1])
        else:
            p = rng.standard_normal(arch.n_p)
        rep = gradcheck(lambda z: model.smoothed(z, p), x, cfg.h, grad=grad_x_smoothed(model, x, p))
    else:
        raise ConfigError("gradcheck needs --model or --problem ocp")
    _emit(rep.to_dict())


def cmd_bench_camel(cfg: CamelBenchRun, force: bool):
    from .bench.camel import GLOBAL_MINIMIZERS, CamelConfig, run_sweep, write_outputs

    names = [f"camel_grid_K{k}.csv" for k in cfg.k] + ["camel_report.json"]
    if cfg.plots:
        names += [f"camel_K{k}.png" for k in cfg.k]
    out = _prepare_out(cfg.out, names, force)
    ccfg = CamelConfig(
        K=max(cfg.k),
        n_samples=cfg.n_samples,
        gamma=cfg.gamma,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        finetune_iterations=cfg.finetune_iterations,
        restarts=cfg.restarts,
        n_starts=cfg.n_starts,
        seed=cfg.seed,
    )
    runs, report = run_sweep(ccfg, tuple(cfg.k))
    report["config"] = _recorded(cfg)
    write_outputs(runs, report, out)
    if cfg.plots:
        from .plotting import camel_level_sets

        camel_level_sets(runs, out, GLOBAL_MINIMIZERS)
    _emit({k: {"train_mse": v["train_mse"], "x_star": v["x_star"], "refined_x": v["refined_x"]} for k, v in report["runs"].items()})


def cmd_ocp_collect(cfg: OcpCollectRun, force: bool):
    from .bench.tracking import CollectConfig, collect_dataset
    from .io import write_dataset, write_json

    out = _prepare_out(cfg.out, ["dataset.csv", "collect_report.json"], force)
    rep = collect_dataset(
        CollectConfig(
            laps=cfg.laps, problems_per_lap=cfg.problems_per_lap, lap_steps=cfg.lap_steps, augment=cfg.augment, seed=cfg.seed
        )
    )
    write_dataset(rep.dataset, out / "dataset.csv")
    report = {
        "rows": len(rep.dataset),
        "problems": rep.problems,
        "skipped": rep.skipped,
        "laps_ended_early": rep.laps_ended_early,
        "config": _recorded(cfg),
    }
    write_json(report, out / "collect_report.json")
    _emit(report)


def cmd_ocp_train(cfg: OcpTrainRun, force: bool):
    from .bench.ocp import OcpProblem
    from .bench.tracking import OcpTrainConfig, train_ocp_surrogate
    from .io import read_dataset, save_model, write_history, write_json

    if not cfg.dataset:
        raise ConfigError("bench ocp train needs --dataset")
    ds = read_dataset(cfg.dataset)
    problem = OcpProblem()
    if ds.n_x != problem.n_u or ds.n_p != problem.spec.n_p:
        raise ConfigError(f"dataset dimensions ({ds.n_x}, {ds.n_p}) do not match the OCP ({problem.n_u}, {problem.spec.n_p})")
    ds.attach_constraints(problem.constraint_jacobian)
    out = _prepare_out(cfg.out, ["model.json", "history.csv", "train_report.json"], force)
    tcfg = OcpTrainConfig(
        K=cfg.K, gamma=cfg.gamma, w1=cfg.w1, w2=cfg.w2, epochs=cfg.epochs, learning_rate=cfg.learning_rate,
        batch=cfg.batch, finetune_iterations=cfg.finetune_iterations, restarts=cfg.restarts, seed=cfg.seed,
    )
    trained = train_ocp_surrogate(ds, tcfg, problem.spec)
    trained.model.metadata["config"] = _recorded(cfg)
    save_model(trained.model, out / "model.json")
    write_history(trained.history, out / "history.csv")
    report = {
        "train_mse": trained.train_mse,
        "train_r2": trained.train_r2,
        "best_restart": trained.best_index,
        "restart_r2": [r.train_r2 for r in trained.restarts],
        "n_theta": trained.model.n_theta,
        "rows": len(ds),
        "config": _recorded(cfg),
    }
    write_json(report, out / "train_report.json")
    _emit(report)


def cmd_ocp_simulate(cfg: OcpSimRun, force: bool):
    from .bench.lissajous import LissajousPath
    from .bench.ocp import OcpProblem
    from .bench.tracking import MODES, SimConfig, closed_loop_sim, write_residuals, write_sim
    from .io import load_model

    modes = list(cfg.modes)
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown mode {m!r}; expected a subset of {list(MODES)}")
    model = None
    if any(m.startswith("learned") for m in modes):
        if not cfg.model:
            raise ConfigError("learned modes need --model")
        model = load_model(cfg.model)
    names = [f"ocp_sim_{m}.csv" for m in modes] + ["ocp_residuals.json"]
    if cfg.plots:
        names += ["ocp_trajectories.png", "ocp_residuals.png"]
    out = _prepare_out(cfg.out, names, force)
    problem, path = OcpProblem(), LissajousPath()
    sim = SimConfig(steps=cfg.steps, seed=cfg.seed)
    reports = {}
    for m in modes:
        log.info("simulating %s", m)
        reports[m] = closed_loop_sim(m, sim, problem, path, model)
        write_sim(reports[m], out)
    write_residuals(reports, out, {"config": _recorded(cfg)})
    if cfg.plots:
        from .plotting import ocp_trajectories, residual_histograms

        ocp_trajectories(reports, path, out)
        residual_histograms(reports, out)
    _emit({m: {"median_residual_at_guess": r.summary()["residual_at_guess"]["median"],
               "median_residual_after_refine": r.summary()["residual_after_refine"]["median"]} for m, r in reports.items()})


COMMANDS = {
    ("train",): (TrainRun, cmd_train),
    ("solve",): (SolveRun, cmd_solve),
    ("sample",): (SampleRun, cmd_sample),
    ("gradcheck",): (GradcheckRun, cmd_gradcheck),
    ("bench", "camel"): (CamelBenchRun, cmd_bench_camel),
    ("bench", "ocp", "collect"): (OcpCollectRun, cmd_ocp_collect),
    ("bench", "ocp", "train"): (OcpTrainRun, cmd_ocp_train),
    ("bench", "ocp", "simulate"): (OcpSimRun, cmd_ocp_simulate),
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        if args.command == "version":
            if extra:
                raise UsageError(f"version takes no arguments\n{parser.format_usage()}")
            print(__version__)
            return 0
        key = tuple(v for v in (args.command, getattr(args, "bench", None), getattr(args, "stage", None)) if v)
        if key not in COMMANDS:
            raise UsageError(f"incomplete command {' '.join(key)!r}\n{parser.format_usage()}")
        cls, fn = COMMANDS[key]
        if args.verbose:
            logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        cfg = _settings(cls, args, extra)
    except (UsageError, ConfigError) as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    try:
        fn(cfg, args.force)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime-failure code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
