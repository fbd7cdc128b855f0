"""Finite-difference verification of the hand-derived gradients."""

from __future__ import annotations

import numpy as np

from .model import ModelParams
from .network import decoder_forward, elbo_loss, encoder_forward, loss_and_gradients

# Central differences carry roundoff noise of about |loss| * ulp / epsilon
# (~1e-9 here), which swamps the relative error of near-zero gradients such
# as one-hot input rows the batch never touches. The denominator floor keeps
# that noise below 1e-6 while still flagging genuinely wrong terms, whose
# mismatch scales with the gradient itself.
REL_ERR_FLOOR = 1e-3


def _loss_only(
    params: ModelParams,
    batch: np.ndarray,
    targets: np.ndarray,
    beta: float,
    free_bits: float,
) -> float:
    mu, logvar, _ = encoder_forward(params, batch)
    logits_tbv, _ = decoder_forward(params, mu, targets)
    return elbo_loss(
        logits_tbv.transpose(1, 0, 2), targets, mu, logvar, beta, free_bits
    ).total


def gradient_check(
    params: ModelParams,
    batch: np.ndarray,
    targets: np.ndarray,
    epsilon: float = 1e-5,
    n_coords: int = 200,
    seed: int = 0,
    beta: float = 1.0,
    free_bits: float = 0.0,
) -> float:
    """Max relative error between analytic gradients of the deterministic
    (z = mu) ELBO and central finite differences over n_coords randomly
    chosen parameter coordinates."""
    _, grads, _ = loss_and_gradients(
        params, batch, targets, beta=beta, free_bits=free_bits, eps_noise=None
    )
    rng = np.random.default_rng(seed)
    names = params.names()
    sizes = np.array([params[name].size for name in names])
    offsets = np.cumsum(sizes)
    total = int(offsets[-1])

    work = params.copy()
    max_err = 0.0
    for flat in rng.choice(total, size=min(n_coords, total), replace=False):
        which = int(np.searchsorted(offsets, flat, side="right"))
        name = names[which]
        idx = int(flat - (offsets[which] - sizes[which]))
        tensor = work.tensors[name]
        original = tensor.flat[idx]

        tensor.flat[idx] = original + epsilon
        f_plus = _loss_only(work, batch, targets, beta, free_bits)
        tensor.flat[idx] = original - epsilon
        f_minus = _loss_only(work, batch, targets, beta, free_bits)
        tensor.flat[idx] = original

        numeric = (f_plus - f_minus) / (2.0 * epsilon)
        analytic = grads[name].flat[idx]
        scale = max(abs(analytic), abs(numeric), REL_ERR_FLOOR)
        max_err = max(max_err, float(abs(analytic - numeric) / scale))
    return max_err
