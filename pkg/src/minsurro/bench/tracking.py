"""Data collection, surrogate training and closed-loop evaluation for the path-tracking OCP."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..components import ComponentSpec, ContractError, HeadSpec
from ..data import TrainingDataset, concat_datasets, projected_sample
from ..model import SurrogateModel, make_architecture
from ..region import FeasibleRegion
from ..solve import SolverOptions, decompose_solve, worker_count
from ..training import AdamConfig, FinetuneConfig, TrainConfig, TrainedModel, train
from .lissajous import FrenetState, LissajousPath, cartesian_from_frenet, frenet_dynamics_step, wrap_angle
from .ocp import (
    OcpParameter,
    OcpProblem,
    OcpSolveError,
    OcpSpec,
    shifted_guess,
    solve_ocp_reference,
    sqp_refine,
)

log = logging.getLogger(__name__)

MODES = ("cold", "shifted_full", "shifted_2", "learned_full", "learned_2")


# -- data collection ------------------------------------------------------------


@dataclass
class CollectConfig:
    laps: int = 100
    problems_per_lap: int = 10
    lap_steps: int = 100
    augment: int = 300
    enlargement: float = 0.5
    init_d: float = 0.2
    init_theta: float = np.pi / 6
    perturb_d: float = 0.02
    perturb_theta: float = np.pi / 36
    seed: int = 0

    def __post_init__(self):
        if self.problems_per_lap > self.lap_steps:
            raise ContractError("problems_per_lap cannot exceed lap_steps")


@dataclass
class CollectReport:
    dataset: TrainingDataset
    problems: int
    skipped: int
    laps_ended_early: int


def _problem_block(problem: OcpProblem, p, sol, U_aug) -> TrainingDataset:
    f_aug, g_aug = problem.batch_value_and_grad(U_aug, p)
    n = 1 + len(U_aug)
    m = problem.region(p).m
    dual = np.full((n, m), np.nan)
    dual[0] = sol.lam
    is_opt = np.zeros(n, dtype=bool)
    is_opt[0] = True
    return TrainingDataset(
        x=np.vstack([sol.u[None, :], U_aug]),
        p=np.tile(p, (n, 1)),
        f=np.concatenate([[sol.f], f_aug]),
        grad=np.vstack([sol.grad[None, :], g_aug]),
        dual=dual,
        is_optimal=is_opt,
        constraint_jac=problem.constraint_jacobian(p)[None],
    )


def _run_lap(problem: OcpProblem, path: LissajousPath, cfg: CollectConfig, lap: int):
    spec = problem.spec
    rng = np.random.default_rng([cfg.seed, lap])
    state = FrenetState(rng.uniform(0.0, 1.0), rng.uniform(-cfg.init_d, cfg.init_d), rng.uniform(-cfg.init_theta, cfg.init_theta))
    chosen = set(rng.choice(cfg.lap_steps, cfg.problems_per_lap, replace=False).tolist())
    box = FeasibleRegion(spec.input_lower, spec.input_upper)
    delta = cfg.enlargement * (box.upper - box.lower)
    blocks, skipped, ended_early = [], 0, False
    u_prev = None
    for step in range(cfg.lap_steps):
        p = OcpParameter.from_state(state, path, spec).as_vector()
        warm = None if u_prev is None else shifted_guess(u_prev, spec)
        if step in chosen:
            try:
                sol = solve_ocp_reference(problem, p, warm=warm)
            except OcpSolveError as exc:
                log.warning("lap %d step %d skipped: %s", lap, step, exc)
                skipped += 1
                sol = None
            if sol is not None:
                U_aug = projected_sample(box, delta, cfg.augment, rng)
                blocks.append(_problem_block(problem, p, sol, U_aug))
                u = sol.u
            else:
                u = sqp_refine(problem, warm if warm is not None else np.zeros(spec.n_u), p).u
        else:
            r = sqp_refine(problem, warm if warm is not None else np.zeros(spec.n_u), p)
            u = r.u if r.residual <= 1e-4 else solve_ocp_reference(problem, p, warm=warm).u
        u_prev = u
        try:
            state = frenet_dynamics_step(state, u[:2], path, spec.dt)
        except ValueError as exc:
            log.warning("lap %d ended at step %d: %s", lap, step, exc)
            ended_early = True
            break
        state = FrenetState(
            state.s,
            state.d + rng.uniform(-cfg.perturb_d, cfg.perturb_d),
            float(wrap_angle(state.theta + rng.uniform(-cfg.perturb_theta, cfg.perturb_theta))),
        )
    return blocks, skipped, ended_early


def collect_dataset(cfg: CollectConfig, problem: OcpProblem | None = None, path: LissajousPath | None = None) -> CollectReport:
    """Closed-loop laps under the reference controller; optimal records plus projected samples."""
    problem = problem or OcpProblem()
    path = path or LissajousPath()
    workers = worker_count()
    if workers > 1 and cfg.laps > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda k: _run_lap(problem, path, cfg, k), range(cfg.laps)))
    else:
        results = [_run_lap(problem, path, cfg, k) for k in range(cfg.laps)]
    blocks = [b for res in results for b in res[0]]
    if not blocks:
        raise RuntimeError("no OCP instance could be solved")
    ds = concat_datasets(blocks)
    return CollectReport(ds, len(blocks), sum(r[1] for r in results), sum(r[2] for r in results))


# -- surrogate --------------------------------------------------------------------


@dataclass
class OcpTrainConfig:
    K: int = 2
    widths: tuple = (5, 5)
    n_q: int = 5
    gamma: float = 0.1
    w1: float = 0.1
    w2: float = 0.1
    epochs: int = 1000
    learning_rate: float = 1e-3
    batch: int = 0
    finetune_iterations: int = 2000
    restarts: int = 4
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(self.widths)


def ocp_architecture(spec: OcpSpec, dataset: TrainingDataset, cfg: OcpTrainConfig):
    p_lo, p_hi = dataset.p.min(axis=0), dataset.p.max(axis=0)
    return make_architecture(
        spec.n_u,
        spec.n_p,
        ComponentSpec("icnn", widths=cfg.widths, n_q=cfg.n_q),
        K=cfg.K,
        head=HeadSpec("identity"),
        gamma=cfg.gamma,
        x_bounds=(spec.input_lower, spec.input_upper),
        p_bounds=(p_lo, p_hi),
    )


def train_ocp_surrogate(dataset: TrainingDataset, cfg: OcpTrainConfig, spec: OcpSpec | None = None) -> TrainedModel:
    spec = spec or OcpSpec()
    arch = ocp_architecture(spec, dataset, cfg)
    model = SurrogateModel.create(arch, cfg.seed)
    tc = TrainConfig(
        w1=cfg.w1,
        w2=cfg.w2,
        gamma=cfg.gamma,
        adam=AdamConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate, batch=cfg.batch),
        finetune=FinetuneConfig(enabled=cfg.finetune_iterations > 0, iterations=cfg.finetune_iterations),
        restarts=cfg.restarts,
        seed=cfg.seed,
        selection="train_r2",
    )
    return train(model, dataset, tc)


# -- closed loop --------------------------------------------------------------------


@dataclass
class SimConfig:
    steps: int = 400
    seed: int = 0
    perturb_d: float = 0.05
    perturb_theta: float = np.pi / 24
    init: tuple = (0.0, 0.0, 0.0)
    full_iters: int = 100
    limited_iters: int = 2
    tol: float = 1e-6


SIM_COLUMNS = (
    "step",
    "px",
    "py",
    "psi",
    "s",
    "d",
    "theta",
    "v",
    "omega",
    "residual_at_guess",
    "residual_after_refine",
    "sqp_iters",
    "fallback",
)


@dataclass
class SimReport:
    mode: str
    rows: list = field(default_factory=list)
    fallbacks: int = 0

    def column(self, name: str) -> np.ndarray:
        i = SIM_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def summary(self) -> dict:
        rg = self.column("residual_at_guess")
        rr = self.column("residual_after_refine")
        it = self.column("sqp_iters")
        return {
            "steps": len(self.rows),
            "fallbacks": self.fallbacks,
            "residual_at_guess": _stats(rg),
            "residual_after_refine": _stats(rr),
            "sqp_iters_mean": float(np.mean(it)),
            "sqp_iters_max": int(np.max(it)),
            "max_abs_d": float(np.max(np.abs(self.column("d")))),
            "fraction_refined_below_1e-5": float(np.mean(rr <= 1e-5)),
        }


def _stats(a: np.ndarray) -> dict:
    return {
        "median": float(np.median(a)),
        "mean": float(np.mean(a)),
        "min": float(np.min(a)),
        "max": float(np.max(a)),
        "std": float(np.std(a)),
    }


def perturbations(cfg: SimConfig) -> np.ndarray:
    """Shared per-step disturbances on (d, theta)."""
    rng = np.random.default_rng([cfg.seed, 2])
    return rng.uniform([-cfg.perturb_d, -cfg.perturb_theta], [cfg.perturb_d, cfg.perturb_theta], size=(cfg.steps, 2))


def closed_loop_sim(
    mode: str,
    cfg: SimConfig,
    problem: OcpProblem | None = None,
    path: LissajousPath | None = None,
    model: SurrogateModel | None = None,
    solver: SolverOptions | None = None,
) -> SimReport:
    if mode not in MODES:
        raise ContractError(f"unknown initialization mode {mode!r}; expected one of {MODES}")
    if mode.startswith("learned") and model is None:
        raise ContractError(f"mode {mode!r} needs a trained surrogate")
    problem = problem or OcpProblem()
    path = path or LissajousPath()
    spec = problem.spec
    solver = solver or SolverOptions(tol=1e-8, max_iters=5000)
    iters = cfg.limited_iters if mode.endswith("_2") else cfg.full_iters
    noise = perturbations(cfg)
    state = FrenetState(*cfg.init)
    report = SimReport(mode)
    u_prev = None
    for step in range(cfg.steps):
        p = OcpParameter.from_state(state, path, spec).as_vector()
        fallback = 0
        if mode == "cold" or (mode.startswith("shifted") and u_prev is None):
            guess = np.zeros(spec.n_u)
        elif mode.startswith("shifted"):
            guess = shifted_guess(u_prev, spec)
        else:
            dec = decompose_solve(model, p, problem.region(p), solver)
            if dec.x_star is None:
                guess = np.zeros(spec.n_u)
                fallback = 1
                report.fallbacks += 1
            else:
                guess = dec.x_star
        r = sqp_refine(problem, guess, p, max_iters=iters, tol=cfg.tol)
        u_prev = r.u
        pose = cartesian_from_frenet(state, path)
        report.rows.append(
            (
                step,
                *pose.tolist(),
                state.s,
                state.d,
                state.theta,
                float(r.u[0]),
                float(r.u[1]),
                r.residual_history[0],
                r.residual,
                r.iterations,
                fallback,
            )
        )
        nxt = frenet_dynamics_step(state, r.u[:2], path, spec.dt)
        state = FrenetState(nxt.s, nxt.d + noise[step, 0], float(wrap_angle(nxt.theta + noise[step, 1])))
    return report


def max_pose_gap(a: SimReport, b: SimReport) -> float:
    pa = np.stack([a.column("px"), a.column("py")], axis=1)
    pb = np.stack([b.column("px"), b.column("py")], axis=1)
    return float(np.max(np.linalg.norm(pa - pb, axis=1)))


def write_sim(report: SimReport, out_dir) -> Path:
    path = Path(out_dir) / f"ocp_sim_{report.mode}.csv"
    with open(path, "w") as fh:
        fh.write(",".join(SIM_COLUMNS) + "\n")
        for row in report.rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def residual_summary(reports: dict[str, SimReport]) -> dict:
    out = {mode: rep.summary() for mode, rep in reports.items()}
    full = [m for m in ("cold", "shifted_full", "learned_full") if m in reports]
    gaps = {}
    for i, a in enumerate(full):
        for b in full[i + 1 :]:
            gaps[f"{a}|{b}"] = max_pose_gap(reports[a], reports[b])
    return {"modes": out, "full_convergence_pose_gap": gaps}


def write_residuals(reports: dict[str, SimReport], out_dir, extra: dict | None = None) -> Path:
    path = Path(out_dir) / "ocp_residuals.json"
    payload = residual_summary(reports)
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def config_dict(cfg) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
