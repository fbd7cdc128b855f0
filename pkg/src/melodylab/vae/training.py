"""Adam training loop, early stopping, and the reconstruction metric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..codec import VOCAB, MelodySequence, batch_tokens
from .model import ModelParams
from .network import decoder_forward, encoder_forward, loss_and_gradients

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

EVAL_CHUNK = 512


class EmptyDataset(ValueError):
    """Training or evaluation requires at least one sequence."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-3
    batch_size: int = 32
    max_epochs: int = 300
    beta_max: float = 0.2
    beta_warmup_epochs: int = 50
    free_bits: float = 0.125  # per latent dimension
    early_stop_patience: int = 25
    min_improvement: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.beta_max < 0:
            raise ValueError("beta_max must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float,
    trainable: set[str],
) -> None:
    state.t += 1
    correction1 = 1.0 - ADAM_BETA1**state.t
    correction2 = 1.0 - ADAM_BETA2**state.t
    for name in trainable:
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        state.m[name] = ADAM_BETA1 * state.m[name] + (1 - ADAM_BETA1) * g
        state.v[name] = ADAM_BETA2 * state.v[name] + (1 - ADAM_BETA2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        tensors[name] -= learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def onehot_of(targets: np.ndarray) -> np.ndarray:
    """(B, T) token ids -> (B, T, V) one-hot float64."""
    batch, t_steps = targets.shape
    out = np.zeros((batch, t_steps, VOCAB))
    out[
        np.arange(batch)[:, None], np.arange(t_steps)[None, :], targets
    ] = 1.0
    return out


def _accuracy_counts(params: ModelParams, targets: np.ndarray) -> int:
    correct = 0
    for lo in range(0, targets.shape[0], EVAL_CHUNK):
        y = targets[lo : lo + EVAL_CHUNK]
        mu, _, _ = encoder_forward(params, onehot_of(y))
        logits_tbv, _ = decoder_forward(params, mu, y)
        correct += int((logits_tbv.argmax(axis=2) == y.T).sum())
    return correct


def encode_dataset_mu(params: ModelParams, dataset: list[MelodySequence]) -> np.ndarray:
    """Posterior means for a whole dataset, chunked exactly like the
    accuracy pass so downstream logits match it bit for bit."""
    targets = batch_tokens(dataset)
    chunks = [
        encoder_forward(params, onehot_of(targets[lo : lo + EVAL_CHUNK]))[0]
        for lo in range(0, targets.shape[0], EVAL_CHUNK)
    ]
    return np.concatenate(chunks, axis=0)


def accuracy_counts_fixed_mu(
    params: ModelParams, mu: np.ndarray, targets: np.ndarray
) -> int:
    """Teacher-forced correct-step count with precomputed posterior means;
    used when adapted models share the pretrained encoder."""
    correct = 0
    for lo in range(0, targets.shape[0], EVAL_CHUNK):
        y = targets[lo : lo + EVAL_CHUNK]
        logits_tbv, _ = decoder_forward(params, mu[lo : lo + EVAL_CHUNK], y)
        correct += int((logits_tbv.argmax(axis=2) == y.T).sum())
    return correct


def reconstruction_accuracy(
    params: ModelParams, dataset: list[MelodySequence]
) -> float:
    """Fraction of steps whose teacher-forced argmax token equals the target,
    with deterministic z = mu. Argmax ties break to the lowest token index;
    the result is invariant to dataset order (integer counting)."""
    if not dataset:
        raise EmptyDataset("reconstruction_accuracy needs a non-empty dataset")
    targets = batch_tokens(dataset)
    return _accuracy_counts(params, targets) / targets.size


def train(
    params: ModelParams,
    dataset: list[MelodySequence],
    cfg: TrainConfig,
    trainable: set[str] | None = None,
    distill: tuple[ModelParams, float, float] | None = None,
) -> tuple[ModelParams, list[dict]]:
    """Adam-train a copy of params on the dataset, minimizing the ELBO loss
    (plus an optional distillation term).

    beta warms linearly from 0 to beta_max over beta_warmup_epochs. The
    trainable set masks which tensors update (None trains all; an empty set
    is a bit-exact no-op). Training stops at max_epochs or once train
    accuracy has not improved by more than min_improvement for
    early_stop_patience consecutive epochs; the parameters with the best
    train accuracy seen (including the starting point) are returned.
    Deterministic per cfg.seed: shuffles and noise come from one generator.
    """
    if not dataset:
        raise EmptyDataset("train needs a non-empty dataset")
    if trainable is None:
        trainable = set(params.names())
    else:
        unknown = trainable - set(params.names())
        if unknown:
            raise ValueError(f"unknown trainable tensors: {sorted(unknown)}")

    rng = np.random.default_rng(cfg.seed)
    work = params.copy()
    targets = batch_tokens(dataset)
    n = targets.shape[0]
    total_steps = targets.size
    state = AdamState()

    best_correct = _accuracy_counts(work, targets)
    best_params = work.copy()
    best_epoch = -1
    stale = 0
    log: list[dict] = [
        {
            "epoch": -1,
            "accuracy": best_correct / total_steps,
            "loss": None,
            "reconstruction_nll": None,
            "kl_divergence": None,
            "beta": 0.0,
            "distill": None,
        }
    ]

    for epoch in range(cfg.max_epochs):
        if cfg.beta_warmup_epochs > 0:
            beta = cfg.beta_max * min(1.0, epoch / cfg.beta_warmup_epochs)
        else:
            beta = cfg.beta_max
        perm = rng.permutation(n)
        epoch_loss = 0.0
        epoch_nll = 0.0
        epoch_kl = 0.0
        epoch_distill = 0.0
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            batch_targets = targets[idx]
            eps = rng.standard_normal((len(idx), params.dims.latent))
            loss, grads, distill_value = loss_and_gradients(
                work,
                onehot_of(batch_targets),
                batch_targets,
                beta=beta,
                free_bits=cfg.free_bits,
                eps_noise=eps,
                distill=distill,
            )
            if trainable:
                adam_step(work.tensors, grads, state, cfg.learning_rate, trainable)
            epoch_loss += loss.total
            epoch_nll += loss.reconstruction_nll
            epoch_kl += loss.kl_divergence
            epoch_distill += distill_value
            batches += 1

        correct = _accuracy_counts(work, onehot, targets)
        accuracy = correct / total_steps
        log.append(
            {
                "epoch": epoch,
                "accuracy": accuracy,
                "loss": epoch_loss / batches,
                "reconstruction_nll": epoch_nll / batches,
                "kl_divergence": epoch_kl / batches,
                "beta": beta,
                "distill": epoch_distill / batches if distill else None,
            }
        )
        if correct > best_correct:
            best_params = work.copy()
            best_epoch = epoch
        if correct > best_correct + cfg.min_improvement * total_steps:
            stale = 0
        else:
            stale += 1
        if correct > best_correct:
            best_correct = correct
        if stale >= cfg.early_stop_patience:
            break

    log.append({"epoch": "best", "accuracy": best_correct / total_steps,
                "best_epoch": best_epoch})
    return best_params, log
