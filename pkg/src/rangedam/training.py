"""Toy training loop and the pooling/encoding ablation harness.

Training is deterministic full-batch gradient descent: every step computes
the mean per-pixel cross entropy over the whole training set, so a zero
learning rate yields a flat loss curve and identical config + seed yields
bit-identical parameters.  A non-finite loss raises TrainingDivergenceError
with the offending step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .blocks import ToyModel
from .errors import TrainingDivergenceError, ValidationError
from .metrics import ConfusionMatrix
from .synthetic import NUM_CLASSES, SyntheticScene, generate

DEFAULT_SEED = 0
DEFAULT_TRAIN_SCENES = 4
DEFAULT_EVAL_SCENES = 2


@dataclass(frozen=True)
class TrainConfig:
    use_gap: bool = True
    use_spe: bool = True
    steps: int = 500
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = DEFAULT_SEED
    stage_channels: tuple[int, ...] = (8, 16)
    depths: tuple[int, ...] = (2, 2)
    placement: str = "last_one"
    spe_dim: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.lr < 0:
            raise ValidationError(f"lr must be >= 0, got {self.lr}")


@dataclass
class TrainResult:
    model: ToyModel
    losses: np.ndarray
    config: TrainConfig


def _build_model(config: TrainConfig) -> ToyModel:
    return ToyModel(
        in_channels=5,
        num_classes=NUM_CLASSES,
        stage_channels=config.stage_channels,
        depths=config.depths,
        placement=config.placement,
        use_gap=config.use_gap,
        use_spe=config.use_spe,
        spe_dim=config.spe_dim,
        seed=config.seed,
    )


def train(config: TrainConfig, scenes: list[SyntheticScene]) -> TrainResult:
    """Full-batch SGD (optional momentum) on per-pixel cross entropy."""
    if not scenes:
        raise ValidationError("need at least one training scene")
    model = _build_model(config)
    params = model.parameters()
    velocity = [np.zeros_like(p.data) for p in params]
    inputs = [(scene.model_input(), scene.labels) for scene in scenes]
    losses = np.empty(config.steps, dtype=np.float64)

    for step in range(config.steps):
        for p in params:
            p.grad = None
        try:
            with Tape() as tape:
                total = None
                for x, labels in inputs:
                    loss_i = ad.pixelwise_cross_entropy(model.forward(Tensor(x)), labels)
                    total = loss_i if total is None else ad.add(total, loss_i)
                loss = ad.scalar_mul(total, 1.0 / len(inputs))
                tape.backward(loss)
        except ValidationError as exc:
            raise TrainingDivergenceError(step) from exc
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDivergenceError(step)
        losses[step] = value
        for p, v in zip(params, velocity):
            if p.grad is None:
                continue
            v *= config.momentum
            v += p.grad
            p.data = p.data - config.lr * v
    return TrainResult(model=model, losses=losses, config=config)


def predict_labels(model: ToyModel, scene: SyntheticScene) -> np.ndarray:
    logits = model.forward(Tensor(scene.model_input()))
    return np.argmax(logits.data, axis=0)


def evaluate(model: ToyModel, scenes: list[SyntheticScene]) -> tuple[float, ConfusionMatrix]:
    cm = ConfusionMatrix(NUM_CLASSES)
    for scene in scenes:
        cm.accumulate(scene.labels.reshape(-1), predict_labels(model, scene).reshape(-1))
    return cm.miou(), cm


@dataclass(frozen=True)
class AblationRow:
    use_gap: bool
    use_spe: bool
    miou: float
    final_loss: float
    initial_loss: float


@dataclass
class AblationReport:
    rows: list[AblationRow]
    seed: int
    elapsed_s: float
    loss_curves: dict[tuple[bool, bool], np.ndarray] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = [
            f"{int(r.use_gap)},{int(r.use_spe)},{r.miou:.6f},{r.final_loss:.6f}" for r in self.rows
        ]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        header = f"{'GAP':>4} {'SPE':>4} {'mIoU':>8} {'final loss':>11}"
        marks = {True: "yes", False: ""}
        body = [
            f"{marks[r.use_gap]:>4} {marks[r.use_spe]:>4} {r.miou:8.4f} {r.final_loss:11.4f}"
            for r in self.rows
        ]
        return "\n".join([header] + body)


# Flag combinations in the report's row order: neither, pooling only,
# encoding only, both.
ABLATION_FLAGS = ((False, False), (True, False), (False, True), (True, True))


def ablation_run(
    seed: int = DEFAULT_SEED,
    steps: int = 500,
    lr: float = 0.05,
    momentum: float = 0.9,
    n_train: int = DEFAULT_TRAIN_SCENES,
    n_eval: int = DEFAULT_EVAL_SCENES,
    base_config: TrainConfig | None = None,
) -> AblationReport:
    """Train the four flag combinations identically and score held-out scenes."""
    scenes = generate(seed, n_train + n_eval)
    train_scenes, eval_scenes = scenes[:n_train], scenes[n_train:]
    base = base_config or TrainConfig(seed=seed, steps=steps, lr=lr, momentum=momentum)
    started = time.perf_counter()
    rows = []
    curves = {}
    for use_gap, use_spe in ABLATION_FLAGS:
        config = replace(base, use_gap=use_gap, use_spe=use_spe, seed=seed)
        result = train(config, train_scenes)
        miou, _ = evaluate(result.model, eval_scenes)
        rows.append(
            AblationRow(
                use_gap=use_gap,
                use_spe=use_spe,
                miou=miou,
                final_loss=float(result.losses[-1]),
                initial_loss=float(result.losses[0]),
            )
        )
        curves[(use_gap, use_spe)] = result.losses
    return AblationReport(
        rows=rows,
        seed=seed,
        elapsed_s=time.perf_counter() - started,
        loss_curves=curves,
    )


def loss_curve_csv(losses: np.ndarray) -> str:
    return "\n".join(f"{i},{v:.8f}" for i, v in enumerate(losses)) + "\n"
