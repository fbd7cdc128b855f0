"""Transfer-learning baselines mapping a pretrained model and a target
train split to an adapted model."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .codec import MelodySequence
from .vae import EmptyDataset, ModelParams, TrainConfig, init_params, train

# the designated last layer for last-layer finetuning
LAST_LAYER_TENSORS = frozenset({"dec_out.W", "dec_out.b"})


class BaselineKind(str, Enum):
    NON_TRANSFER = "non-transfer"
    ZERO_SHOT = "zero-shot"
    FINETUNE_ALL = "finetune-all"
    FINETUNE_LAST = "finetune-last"
    STUDENT_TEACHER = "student-teacher"


@dataclass(frozen=True)
class BaselineSpec:
    kind: BaselineKind
    train_cfg: TrainConfig
    distill_weight: float | None = None
    distill_temperature: float | None = None

    def __post_init__(self) -> None:
        is_distill = self.kind == BaselineKind.STUDENT_TEACHER
        has_values = (
            self.distill_weight is not None and self.distill_temperature is not None
        )
        if is_distill and not has_values:
            raise ValueError("student-teacher requires distill weight and temperature")
        if not is_distill and (
            self.distill_weight is not None or self.distill_temperature is not None
        ):
            raise ValueError(f"{self.kind.value} takes no distillation parameters")
        if is_distill:
            if self.distill_weight < 0:
                raise ValueError("distill weight must be non-negative")
            if self.distill_temperature <= 0:
                raise ValueError("distill temperature must be positive")


def run_baseline(
    spec: BaselineSpec,
    pretrained: ModelParams,
    train_split: list[MelodySequence],
) -> ModelParams:
    """Adapt the pretrained model per the baseline kind.

    zero-shot returns the pretrained weights bit-identically with no
    training; the others train per their configs (finetune-last exposes
    only dec_out to the optimizer; student-teacher trains a fresh model
    against the data loss plus a soft-target divergence from the frozen
    pretrained teacher). Deterministic given (spec, inputs).
    """
    kind = spec.kind
    if kind == BaselineKind.ZERO_SHOT:
        return pretrained.copy()
    if not train_split:
        raise EmptyDataset(f"{kind.value} needs a non-empty train split")

    if kind == BaselineKind.NON_TRANSFER:
        fresh = init_params(spec.train_cfg.seed, pretrained.dims)
        adapted, _ = train(fresh, train_split, spec.train_cfg)
        return adapted
    if kind == BaselineKind.FINETUNE_ALL:
        adapted, _ = train(pretrained, train_split, spec.train_cfg)
        return adapted
    if kind == BaselineKind.FINETUNE_LAST:
        adapted, _ = train(
            pretrained, train_split, spec.train_cfg, trainable=set(LAST_LAYER_TENSORS)
        )
        return adapted
    if kind == BaselineKind.STUDENT_TEACHER:
        fresh = init_params(spec.train_cfg.seed, pretrained.dims)
        adapted, _ = train(
            fresh,
            train_split,
            spec.train_cfg,
            distill=(pretrained, spec.distill_weight, spec.distill_temperature),
        )
        return adapted
    raise ValueError(f"unknown baseline kind: {kind!r}")
