"""Six-hump camel benchmark: fit, K sweep, decomposition solve and warm-started descent."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..components import ComponentSpec, HeadSpec
from ..data import TrainingDataset
from ..model import SurrogateModel, make_architecture
from ..optim import lbfgs
from ..region import FeasibleRegion
from ..solve import SolverOptions, decompose_solve
from ..training import AdamConfig, FinetuneConfig, TrainConfig, TrainedModel, train

log = logging.getLogger(__name__)

LOWER = np.array([-2.0, -1.0])
UPPER = np.array([2.0, 1.0])
GLOBAL_MINIMIZERS = np.array([[0.0898, -0.7126], [-0.0898, 0.7126]])
GLOBAL_VALUE = -1.0316
GRID_SHAPE = (201, 101)


def camel(x1, x2):
    """Six-hump camel back function."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (4 - 2.1 * x1**2 + x1**4 / 3) * x1**2 + x1 * x2 + (4 * x2**2 - 4) * x2**2


def camel_grad(x) -> np.ndarray:
    x1, x2 = float(x[0]), float(x[1])
    return np.array([8 * x1 - 8.4 * x1**3 + 2 * x1**5 + x2, x1 - 8 * x2 + 16 * x2**3])


@dataclass
class CamelConfig:
    K: int = 5
    pieces: int = 10
    n_samples: int = 1000
    head_hidden: tuple = (5, 3)
    head_activation: str = "tanh"
    gamma: float = 0.1
    epochs: int = 1000
    learning_rate: float = 1e-3
    finetune_iterations: int = 5000
    restarts: int = 4
    n_starts: int = 100
    seed: int = 0

    def __post_init__(self):
        self.head_hidden = tuple(self.head_hidden)


@dataclass
class DescentResult:
    x: np.ndarray
    f: float
    iterations: int
    grad_norm: float


def local_descent(x0, max_iter: int = 200, gtol: float = 1e-10) -> DescentResult:
    """L-BFGS on the true camel function (unconstrained; all minima lie inside the box)."""

    def fg(x):
        return float(camel(x[0], x[1])), camel_grad(x)

    x, f, it = lbfgs(fg, np.asarray(x0, dtype=float), max_iter=max_iter, gtol=gtol)
    return DescentResult(x, float(f), it, float(np.linalg.norm(camel_grad(x))))


def is_global(f: float, tol: float = 1e-3) -> bool:
    return bool(f <= GLOBAL_VALUE + tol)


def distance_to_global(x) -> float:
    """Infinity-norm distance to the nearer global minimizer."""
    return float(np.min(np.max(np.abs(GLOBAL_MINIMIZERS - np.asarray(x)), axis=1)))


def multistart_baseline(n_starts: int = 100, rng: np.random.Generator | None = None, starts=None):
    """Descent from uniform random starts; returns [(x_final, f_final, is_global, iterations)]."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if starts is None:
        starts = rng.uniform(LOWER, UPPER, size=(n_starts, 2))
    out = []
    for x0 in np.atleast_2d(starts):
        res = local_descent(x0)
        out.append((res.x, res.f, is_global(res.f), res.iterations))
    return out


def camel_dataset(n_samples: int, rng: np.random.Generator) -> TrainingDataset:
    X = rng.uniform(LOWER, UPPER, size=(n_samples, 2))
    return TrainingDataset(X, np.zeros((n_samples, 0)), camel(X[:, 0], X[:, 1]))


def camel_model(cfg: CamelConfig, K: int, seed: int) -> SurrogateModel:
    arch = make_architecture(
        2,
        0,
        ComponentSpec("max_squared", pieces=cfg.pieces),
        K=K,
        head=HeadSpec("monotone", cfg.head_hidden, cfg.head_activation),
        shared_head=True,
        gamma=cfg.gamma,
        x_bounds=(LOWER, UPPER),
    )
    return SurrogateModel.create(arch, seed)


def camel_train_config(cfg: CamelConfig) -> TrainConfig:
    return TrainConfig(
        gamma=cfg.gamma,
        adam=AdamConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate),
        finetune=FinetuneConfig(enabled=cfg.finetune_iterations > 0, iterations=cfg.finetune_iterations),
        restarts=cfg.restarts,
        seed=cfg.seed,
        selection="train_mse",
    )


def grid_points() -> np.ndarray:
    g1 = np.linspace(LOWER[0], UPPER[0], GRID_SHAPE[0])
    g2 = np.linspace(LOWER[1], UPPER[1], GRID_SHAPE[1])
    G1, G2 = np.meshgrid(g1, g2, indexing="ij")
    return np.stack([G1.ravel(), G2.ravel()], axis=1)


@dataclass
class CamelRun:
    K: int
    trained: TrainedModel
    grid: np.ndarray
    f_true: np.ndarray
    f_surrogate: np.ndarray
    summary: dict = field(default_factory=dict)


def run_camel(cfg: CamelConfig, dataset: TrainingDataset | None = None) -> CamelRun:
    """Train, grid-evaluate, decompose-solve and refine one K."""
    rng = np.random.default_rng(cfg.seed)
    if dataset is None:
        dataset = camel_dataset(cfg.n_samples, rng)
    model = camel_model(cfg, cfg.K, cfg.seed)
    trained = train(model, dataset, camel_train_config(cfg))
    sm = trained.model
    G = grid_points()
    P0 = np.zeros((len(G), 0))
    f_true = camel(G[:, 0], G[:, 1])
    f_sur = sm.exact_batch(G, P0)
    g_best = G[int(np.argmin(f_sur))]
    region = FeasibleRegion(LOWER, UPPER)
    dec = decompose_solve(sm, np.zeros(0), region, SolverOptions())
    x_star = dec.x_star
    refined = local_descent(x_star)
    summary = {
        "K": cfg.K,
        "train_mse": trained.train_mse,
        "train_mse_exact": float(np.mean((sm.exact_batch(dataset.x, dataset.p) - dataset.f) ** 2)),
        "train_r2": trained.train_r2,
        "restart_mse": [r.train_mse for r in trained.restarts],
        "best_restart": trained.best_index,
        "grid_argmin": g_best.tolist(),
        "grid_argmin_camel": float(camel(*g_best)),
        "grid_argmin_distance": distance_to_global(g_best),
        "x_star": x_star.tolist(),
        "x_star_camel": float(camel(*x_star)),
        "surrogate_value": dec.value_star,
        "winner": dec.winner,
        "subproblem_status": [s.status for s in dec.per_component],
        "refined_x": refined.x.tolist(),
        "refined_f": refined.f,
        "refined_grad_norm": refined.grad_norm,
        "descent_iterations": refined.iterations,
        "refined_distance": distance_to_global(refined.x),
        "refined_is_global": is_global(refined.f),
    }
    return CamelRun(cfg.K, trained, G, f_true, f_sur, summary)


def run_sweep(cfg: CamelConfig, ks=(1, 2, 5)) -> tuple[list[CamelRun], dict]:
    """K sweep on one shared dataset plus the multistart baseline."""
    rng = np.random.default_rng(cfg.seed)
    dataset = camel_dataset(cfg.n_samples, rng)
    runs = []
    for K in ks:
        kcfg = CamelConfig(**{**asdict(cfg), "K": int(K)})
        runs.append(run_camel(kcfg, dataset))
        log.info("K=%d train mse %.4g", K, runs[-1].summary["train_mse"])
    base = multistart_baseline(cfg.n_starts, np.random.default_rng([cfg.seed, 1]))
    n_global = sum(1 for b in base if b[2])
    report = {
        "config": {**asdict(cfg), "head_hidden": list(cfg.head_hidden)},
        "runs": {str(r.K): r.summary for r in runs},
        "multistart": {
            "n_starts": len(base),
            "n_global": n_global,
            "global_fraction": n_global / max(len(base), 1),
            "max_grad_norm": float(max(np.linalg.norm(camel_grad(b[0])) for b in base)),
            "mean_iterations": float(np.mean([b[3] for b in base])),
        },
    }
    return runs, report


def write_outputs(runs: list[CamelRun], report: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for r in runs:
        path = out / f"camel_grid_K{r.K}.csv"
        with open(path, "w") as fh:
            fh.write("x1,x2,f_true,f_surrogate\n")
            for (a, b), ft, fs in zip(r.grid, r.f_true, r.f_surrogate):
                fh.write(f"{a!r},{b!r},{float(ft)!r},{float(fs)!r}\n")
        written.append(path)
    path = out / "camel_report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written
