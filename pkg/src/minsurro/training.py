"""Two-phase training (Adam, then L-BFGS fine-tuning) with multi-restart selection."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .components import ContractError
from .data import TrainingDataset
from .diff import NonFiniteLossError
from .losses import CompositeLoss, r2_score
from .model import SurrogateModel
from .optim import Adam, lbfgs

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "loss_total", "loss_fit", "reg1", "reg2")


@dataclass
class AdamConfig:
    epochs: int = 1000
    learning_rate: float = 1e-3
    batch: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class FinetuneConfig:
    enabled: bool = True
    iterations: int = 5000
    memory: int = 10


@dataclass
class TrainConfig:
    w1: float = 0.0
    w2: float = 0.0
    gamma: float = 0.1
    adam: AdamConfig = field(default_factory=AdamConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    restarts: int = 1
    seed: int = 0
    selection: str = "train_r2"

    def __post_init__(self):
        if isinstance(self.adam, dict):
            self.adam = AdamConfig(**self.adam)
        if isinstance(self.finetune, dict):
            self.finetune = FinetuneConfig(**self.finetune)
        if self.w1 < 0 or self.w2 < 0:
            raise ContractError("regularizer weights must be nonnegative")
        if self.restarts < 1:
            raise ContractError("restarts must be >= 1")
        if self.adam.epochs < 0 or self.finetune.iterations < 0 or self.adam.batch < 0:
            raise ContractError("epoch and iteration counts must be nonnegative")
        if not self.gamma > 0:
            raise ContractError("gamma must be positive")
        if self.selection not in ("train_r2", "train_mse"):
            raise ContractError(f"unknown selection metric {self.selection!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RestartResult:
    seed: int
    theta: np.ndarray | None
    history: list[tuple]
    train_mse: float
    train_r2: float
    failed: str | None = None


@dataclass
class TrainedModel:
    model: SurrogateModel
    history: list[tuple]
    restarts: list[RestartResult]
    best_index: int

    @property
    def train_mse(self) -> float:
        return self.restarts[self.best_index].train_mse

    @property
    def train_r2(self) -> float:
        return self.restarts[self.best_index].train_r2


def _run_once(model: SurrogateModel, loss: CompositeLoss, dataset: TrainingDataset, config: TrainConfig, seed: int):
    theta = model.theta
    history: list[tuple] = []
    adam_cfg = config.adam
    opt = Adam(adam_cfg.learning_rate, adam_cfg.beta1, adam_cfg.beta2, adam_cfg.eps)
    rng = np.random.default_rng(seed)
    N = len(dataset)
    epoch = 0
    for epoch in range(1, adam_cfg.epochs + 1):
        if adam_cfg.batch and adam_cfg.batch < N:
            order = rng.permutation(N)
            for start in range(0, N, adam_cfg.batch):
                _, g, _ = loss.value_grad_parts(theta, order[start : start + adam_cfg.batch])
                theta = opt.step(theta, g)
            value, _, parts = loss.value_grad_parts(theta)
        else:
            value, g, parts = loss.value_grad_parts(theta)
            if not np.isfinite(value):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch}", loss.first_nonfinite_sample(theta))
            theta = opt.step(theta, g)
        history.append((epoch, value, *parts))
    if config.finetune.enabled and config.finetune.iterations > 0:
        last_parts: list = []

        def fg(th):
            v, g, parts = loss.value_grad_parts(th)
            last_parts[:] = parts
            return v, g

        def record(it, th, f):
            # lbfgs evaluates the accepted point last, so last_parts belongs to th
            history.append((epoch + it, f, *last_parts))

        theta, f, _ = lbfgs(fg, theta, config.finetune.iterations, config.finetune.memory, callback=record)
        if not np.isfinite(f):
            raise NonFiniteLossError("non-finite loss during fine-tuning", loss.first_nonfinite_sample(theta))
    return theta, history


def train(model: SurrogateModel, dataset: TrainingDataset, config: TrainConfig) -> TrainedModel:
    """Train ``config.restarts`` fresh initializations and keep the best by the selection metric.

    Restart 0 starts from ``model``'s current parameters; restart r >= 1 is a
    fresh initialization with seed ``config.seed + r``. With zero epochs and
    fine-tuning disabled the returned model keeps the initial theta.
    """
    if len(dataset) == 0:
        raise ContractError("empty dataset")
    arch = model.arch.with_gamma(config.gamma)
    results: list[RestartResult] = []
    for r in range(config.restarts):
        seed = config.seed + r
        cand = SurrogateModel(arch, model.params) if r == 0 else SurrogateModel.create(arch, seed)
        loss = CompositeLoss(cand, dataset, config.w1, config.w2)
        try:
            theta, history = _run_once(cand, loss, dataset, config, seed)
        except (NonFiniteLossError, FloatingPointError) as exc:
            log.warning("restart %d aborted: %s", r, exc)
            results.append(RestartResult(seed, None, [], np.inf, -np.inf, failed=str(exc)))
            continue
        cand.set_theta(theta)
        pred = cand.smoothed_batch(dataset.x, dataset.p)
        mse = float(np.mean((dataset.f - pred) ** 2))
        r2 = r2_score(dataset.f, pred)
        if not np.isfinite(mse):
            results.append(RestartResult(seed, None, history, np.inf, -np.inf, failed="non-finite predictions"))
            continue
        log.info("restart %d: train mse %.4g, r2 %.6f", r, mse, r2)
        results.append(RestartResult(seed, theta, history, mse, r2))
    ok = [i for i, res in enumerate(results) if res.failed is None]
    if not ok:
        raise RuntimeError("all training restarts failed: " + "; ".join(str(r.failed) for r in results))
    if config.selection == "train_r2":
        best = max(ok, key=lambda i: (results[i].train_r2, -i))
    else:
        best = min(ok, key=lambda i: (results[i].train_mse, i))
    final = SurrogateModel(arch, model.params, dict(model.metadata))
    final.set_theta(results[best].theta)
    final.metadata.update(
        {
            "seed": config.seed,
            "train_mse": results[best].train_mse,
            "train_r2": results[best].train_r2,
            "restart": best,
        }
    )
    return TrainedModel(final, results[best].history, results, best)
