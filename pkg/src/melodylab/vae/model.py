"""Model parameters: named float64 tensors plus checkpoint serialization.

Tensor naming follows the architecture: a bidirectional gated-recurrent
encoder (enc_fwd_rnn / enc_bwd_rnn) feeding mu/logvar heads, and a
single-layer gated-recurrent decoder (dec_init, dec_rnn, dec_out).
dec_out is the designated last layer for last-layer finetuning.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..codec import SEQ_LEN, VOCAB

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, inconsistent, or unknown-version checkpoint."""


@dataclass(frozen=True)
class Dims:
    hidden: int = 64
    latent: int = 32
    vocab: int = VOCAB
    steps: int = SEQ_LEN

    def __post_init__(self) -> None:
        if min(self.hidden, self.latent, self.vocab, self.steps) < 1:
            raise ValueError("all dimensions must be positive")


def param_shapes(dims: Dims) -> dict[str, tuple[int, ...]]:
    """Tensor name -> shape map; order is the initialization order."""
    h, z, v = dims.hidden, dims.latent, dims.vocab
    shapes: dict[str, tuple[int, ...]] = {}
    for cell, in_dim in (
        ("enc_fwd_rnn", v),
        ("enc_bwd_rnn", v),
        ("dec_rnn", v + z),
    ):
        shapes[f"{cell}.W_x"] = (in_dim, 3 * h)
        shapes[f"{cell}.W_h"] = (h, 3 * h)
        shapes[f"{cell}.b"] = (3 * h,)
    shapes["enc_mu.W"] = (2 * h, z)
    shapes["enc_mu.b"] = (z,)
    shapes["enc_logvar.W"] = (2 * h, z)
    shapes["enc_logvar.b"] = (z,)
    shapes["dec_init.W"] = (z, h)
    shapes["dec_init.b"] = (h,)
    shapes["dec_out.W"] = (h, v)
    shapes["dec_out.b"] = (v,)
    return shapes


class ModelParams:
    """Named parameter tensors; treated as immutable once produced."""

    def __init__(self, dims: Dims, tensors: dict[str, np.ndarray]):
        expected = param_shapes(dims)
        if set(tensors) != set(expected):
            missing = set(expected) ^ set(tensors)
            raise ValueError(f"tensor names do not match dims: {sorted(missing)}")
        for name, arr in tensors.items():
            if arr.shape != expected[name]:
                raise ValueError(
                    f"{name}: shape {arr.shape} != expected {expected[name]}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite values")
        self.dims = dims
        self.tensors = {name: tensors[name] for name in expected}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.dims, {k: v.copy() for k, v in self.tensors.items()}
        )

    def equals(self, other: "ModelParams") -> bool:
        """Bit-exact equality of all tensors."""
        return self.dims == other.dims and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors
        )

    def names(self) -> list[str]:
        return list(self.tensors)


def init_params(seed: int, dims: Dims = Dims()) -> ModelParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.

    Deterministic per seed: tensors are drawn in param_shapes order.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(dims).items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(dims, tensors)


def save_checkpoint(params: ModelParams, path) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "dims": asdict(params.dims),
        "tensors": {
            name: {"shape": list(arr.shape), "values": arr.ravel().tolist()}
            for name, arr in params.tensors.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> ModelParams:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unknown checkpoint version {payload.get('format_version')!r}"
        )
    try:
        dims = Dims(**payload["dims"])
        tensors = {
            name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in payload["tensors"].items()
        }
        return ModelParams(dims, tensors)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"inconsistent checkpoint: {exc}") from exc
