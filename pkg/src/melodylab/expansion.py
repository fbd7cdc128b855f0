"""Conceptual expansions: per-layer combination matrices over the feature
rows of selected pretrained tensors.

The identity expansion (every matrix an identity, empty edit history) is
the root state and reproduces the pretrained model bit-exactly. Edits
accumulate as an action history replayed onto identity matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .vae import ModelParams

# feature rows of the decoder output projection and the decoder recurrent
# input kernel are the searchable "musical pattern" units
DEFAULT_EXPANSION_LAYERS = ("dec_out.W", "dec_rnn.W_x")

ACTION_BLEND = "blend"
ACTION_SCALE = "scale"
ACTION_RESET = "reset"


class ShapeMismatch(ValueError):
    """Expansion matrices do not match the model's feature-row counts."""


@dataclass(frozen=True)
class ExpansionAction:
    """One edit to a combination matrix.

    blend: row[target] += amount * identity-row[source] (source != target)
    scale: row[target] *= amount (amount > 0)
    reset: row[target] restored to its identity row
    """

    kind: str
    layer: str
    row: int
    source: int = -1
    amount: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in (ACTION_BLEND, ACTION_SCALE, ACTION_RESET):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if not np.isfinite(self.amount):
            raise ValueError("action amount must be finite")
        if self.kind == ACTION_BLEND and self.source == self.row:
            raise ValueError("blend source must differ from target row")
        if self.kind == ACTION_SCALE and self.amount <= 0:
            raise ValueError("scale factor must be positive")
        if self.row < 0:
            raise ValueError("row must be non-negative")


@dataclass(frozen=True)
class ConceptualExpansion:
    layers: tuple[str, ...]
    row_counts: tuple[int, ...]
    actions: tuple[ExpansionAction, ...] = ()

    def __post_init__(self) -> None:
        if len(self.layers) != len(self.row_counts):
            raise ValueError("layers and row_counts must align")
        counts = dict(zip(self.layers, self.row_counts))
        for a in self.actions:
            n = counts.get(a.layer)
            if n is None:
                raise ValueError(f"action targets unknown layer {a.layer!r}")
            if a.row >= n or (a.kind == ACTION_BLEND and not 0 <= a.source < n):
                raise ValueError(f"action indexes outside layer {a.layer!r}")

    @classmethod
    def identity(
        cls,
        params: ModelParams,
        layers: tuple[str, ...] = DEFAULT_EXPANSION_LAYERS,
    ) -> "ConceptualExpansion":
        """Root state: no combinations applied to the given layers."""
        return cls(layers, tuple(params[layer].shape[0] for layer in layers))

    def child(self, action: ExpansionAction) -> "ConceptualExpansion":
        return ConceptualExpansion(
            self.layers, self.row_counts, self.actions + (action,)
        )

    @property
    def key(self) -> tuple[ExpansionAction, ...]:
        """State identity for memoization and distinctness: the edit history."""
        return self.actions

    @cached_property
    def matrices(self) -> dict[str, np.ndarray]:
        """Combination matrices built by replaying the edit history."""
        mats = {
            layer: np.eye(n, dtype=np.float64)
            for layer, n in zip(self.layers, self.row_counts)
        }
        for a in self.actions:
            mat = mats[a.layer]
            if a.kind == ACTION_BLEND:
                mat[a.row, a.source] += a.amount
            elif a.kind == ACTION_SCALE:
                mat[a.row, :] *= a.amount
            else:
                mat[a.row, :] = 0.0
                mat[a.row, a.row] = 1.0
        return mats


def apply_expansion(pretrained: ModelParams, ce: ConceptualExpansion) -> ModelParams:
    """Replace each expanded layer's rows with A @ W; a layer bias is
    transformed the same way only when it indexes the feature rows. All
    other tensors are copied unchanged; an identity matrix leaves its layer
    bit-identical."""
    tensors = {name: arr.copy() for name, arr in pretrained.tensors.items()}
    for layer, n in zip(ce.layers, ce.row_counts):
        if layer not in tensors:
            raise ShapeMismatch(f"model has no tensor {layer!r}")
        weight = pretrained[layer]
        if weight.ndim != 2 or weight.shape[0] != n:
            raise ShapeMismatch(
                f"{layer}: expected {n} feature rows, got shape {weight.shape}"
            )
        mat = ce.matrices[layer]
        if np.array_equal(mat, np.eye(n)):
            continue
        tensors[layer] = mat @ weight
        bias_name = layer.rsplit(".", 1)[0] + ".b"
        bias = tensors.get(bias_name)
        if bias is not None and bias.shape == (n,):
            tensors[bias_name] = mat @ pretrained[bias_name]
    return ModelParams(pretrained.dims, tensors)
