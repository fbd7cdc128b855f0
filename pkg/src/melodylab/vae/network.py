"""Forward and reverse-mode passes for the melody VAE.

Gated recurrent cell (one layer, 3 weight blocks r|u|c):

    r = sigmoid(x W_xr + h W_hr + b_r)          reset gate
    u = sigmoid(x W_xu + h W_hu + b_u)          update gate
    c = tanh(x W_xc + (r * h) W_hc + b_c)       candidate
    h' = u * h + (1 - u) * c

Backpropagation through time is hand-derived; gradient_check verifies it
against central finite differences. Because inputs are one-hot, the input
projections are row gathers of W_x rather than matmuls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..codec import MelodySequence
from .model import ModelParams

LOGVAR_CLAMP = 8.0
ARGMAX_TEMPERATURE = 1e-6  # below this, sampling degenerates to argmax


class NonFiniteActivation(FloatingPointError):
    """An activation overflowed to inf/nan during a forward pass."""


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    reconstruction_nll: float
    kl_divergence: float
    beta_in_effect: float


def sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# gated recurrent cell over a sequence
# ---------------------------------------------------------------------------


@dataclass
class GruCache:
    r: np.ndarray  # (T, B, H)
    u: np.ndarray
    c: np.ndarray
    h_prev: np.ndarray


def gru_sequence(
    xg: np.ndarray, w_h: np.ndarray, h0: np.ndarray
) -> tuple[np.ndarray, GruCache]:
    """Run the cell over (T, B, 3H) precomputed input gates (bias included).

    Returns hidden states (T, B, H) and the cache needed for backprop.
    """
    t_steps, batch, three_h = xg.shape
    h_dim = three_h // 3
    wh_ru = w_h[:, : 2 * h_dim]
    wh_c = w_h[:, 2 * h_dim :]
    hs = np.empty((t_steps, batch, h_dim))
    cache = GruCache(
        r=np.empty((t_steps, batch, h_dim)),
        u=np.empty((t_steps, batch, h_dim)),
        c=np.empty((t_steps, batch, h_dim)),
        h_prev=np.empty((t_steps, batch, h_dim)),
    )
    h = h0
    for t in range(t_steps):
        cache.h_prev[t] = h
        ru = sigmoid(xg[t, :, : 2 * h_dim] + h @ wh_ru)
        r = ru[:, :h_dim]
        u = ru[:, h_dim:]
        c = np.tanh(xg[t, :, 2 * h_dim :] + (r * h) @ wh_c)
        h = u * h + (1.0 - u) * c
        cache.r[t] = r
        cache.u[t] = u
        cache.c[t] = c
        hs[t] = h
    return hs, cache


@njit(cache=True)
def _gru_backward_loop(d_hs, d_final, r, u, c, hp, wh_ru_t, wh_c_t, has_dhs):
    """Time-reversed gradient recurrence; the compiled loop avoids the
    per-step temporary traffic that dominates a pure-numpy version."""
    t_steps, batch, h_dim = r.shape
    d_xg = np.empty((t_steps, batch, 3 * h_dim))
    carry = d_final.copy()
    dh = np.empty((batch, h_dim))
    dc_pre = np.empty((batch, h_dim))
    for t in range(t_steps - 1, -1, -1):
        if has_dhs:
            for b in range(batch):
                for j in range(h_dim):
                    dh[b, j] = carry[b, j] + d_hs[t, b, j]
        else:
            for b in range(batch):
                for j in range(h_dim):
                    dh[b, j] = carry[b, j]
        for b in range(batch):
            for j in range(h_dim):
                cc = c[t, b, j]
                dc_pre[b, j] = dh[b, j] * (1.0 - u[t, b, j]) * (1.0 - cc * cc)
        d_rh = np.dot(dc_pre, wh_c_t)
        for b in range(batch):
            for j in range(h_dim):
                rr = r[t, b, j]
                uu = u[t, b, j]
                d_xg[t, b, j] = d_rh[b, j] * hp[t, b, j] * rr * (1.0 - rr)
                d_xg[t, b, h_dim + j] = (
                    dh[b, j] * (hp[t, b, j] - c[t, b, j]) * uu * (1.0 - uu)
                )
                d_xg[t, b, 2 * h_dim + j] = dc_pre[b, j]
        back = np.dot(np.ascontiguousarray(d_xg[t, :, : 2 * h_dim]), wh_ru_t)
        for b in range(batch):
            for j in range(h_dim):
                carry[b, j] = (
                    dh[b, j] * u[t, b, j] + d_rh[b, j] * r[t, b, j] + back[b, j]
                )
    return d_xg, carry


def gru_sequence_backward(
    d_hs: np.ndarray | None,
    d_h_final: np.ndarray | None,
    cache: GruCache,
    w_h: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backprop through the cell loop.

    d_hs: per-step gradients on the hidden outputs (T, B, H), or None;
    d_h_final: extra gradient on the last hidden state. Returns
    (d_xg (T, B, 3H), d_w_h, d_h0).
    """
    t_steps, batch, h_dim = cache.r.shape
    wh_ru_t = np.ascontiguousarray(w_h[:, : 2 * h_dim].T)
    wh_c_t = np.ascontiguousarray(w_h[:, 2 * h_dim :].T)
    if d_h_final is None:
        d_h_final = np.zeros((batch, h_dim))
    if d_hs is None:
        d_hs_arr = np.empty((0, batch, h_dim))
        has_dhs = False
    else:
        d_hs_arr = d_hs
        has_dhs = True
    d_xg, carry = _gru_backward_loop(
        d_hs_arr,
        d_h_final,
        cache.r,
        cache.u,
        cache.c,
        cache.h_prev,
        wh_ru_t,
        wh_c_t,
        has_dhs,
    )
    # weight gradients batched over all steps
    flat = t_steps * batch
    d_w_h = np.empty_like(w_h)
    d_w_h[:, : 2 * h_dim] = (
        cache.h_prev.reshape(flat, h_dim).T
        @ np.ascontiguousarray(d_xg[:, :, : 2 * h_dim]).reshape(flat, 2 * h_dim)
    )
    d_w_h[:, 2 * h_dim :] = (cache.r * cache.h_prev).reshape(flat, h_dim).T @ (
        np.ascontiguousarray(d_xg[:, :, 2 * h_dim :]).reshape(flat, h_dim)
    )
    return d_xg, d_w_h, carry


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------


@dataclass
class EncoderCache:
    x: np.ndarray  # (B, T, V) one-hot input
    fwd: GruCache
    bwd: GruCache
    concat: np.ndarray  # (B, 2H) final hidden states
    logvar_raw: np.ndarray


def _gather_input_gates(
    tokens_tb: np.ndarray, w_x: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """One-hot input projection as a row gather: (T, B) tokens -> (T, B, 3H)."""
    return w_x[tokens_tb] + b


def encoder_forward(
    params: ModelParams, batch: np.ndarray
) -> tuple[np.ndarray, np.ndarray, EncoderCache]:
    h = params.dims.hidden
    batch_size = batch.shape[0]
    h0 = np.zeros((batch_size, h))
    tokens_tb = batch.argmax(axis=2).T  # valid because rows are one-hot

    xg_f = _gather_input_gates(
        tokens_tb, params["enc_fwd_rnn.W_x"], params["enc_fwd_rnn.b"]
    )
    hs_f, cache_f = gru_sequence(xg_f, params["enc_fwd_rnn.W_h"], h0)

    xg_b = _gather_input_gates(
        tokens_tb[::-1], params["enc_bwd_rnn.W_x"], params["enc_bwd_rnn.b"]
    )
    hs_b, cache_b = gru_sequence(xg_b, params["enc_bwd_rnn.W_h"], h0)

    concat = np.concatenate([hs_f[-1], hs_b[-1]], axis=1)
    mu = concat @ params["enc_mu.W"] + params["enc_mu.b"]
    logvar_raw = concat @ params["enc_logvar.W"] + params["enc_logvar.b"]
    logvar = np.clip(logvar_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))):
        raise NonFiniteActivation("encoder produced non-finite mu/logvar")
    return mu, logvar, EncoderCache(batch, cache_f, cache_b, concat, logvar_raw)


def encode(params: ModelParams, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map one-hot sequences (B, 32, 90) to posterior (mu, logvar), each (B, Z)."""
    mu, logvar, _ = encoder_forward(params, batch)
    return mu, logvar


def reparameterize(
    mu: np.ndarray,
    logvar: np.ndarray,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> np.ndarray:
    """z = mu + exp(logvar/2) * eps with eps ~ N(0, I); z = mu when deterministic."""
    if deterministic:
        return mu.copy()
    if rng is None:
        raise ValueError("rng required unless deterministic")
    return mu + np.exp(0.5 * logvar) * rng.standard_normal(mu.shape)


# ---------------------------------------------------------------------------
# decoder
# ---------------------------------------------------------------------------


@dataclass
class DecoderCache:
    prev_tokens_tb: np.ndarray  # (T, B); -1 marks the zero vector at step 0
    gru: GruCache
    hs: np.ndarray  # (T, B, H)
    h0: np.ndarray
    z: np.ndarray


def decoder_forward(
    params: ModelParams, z: np.ndarray, targets: np.ndarray
) -> tuple[np.ndarray, DecoderCache]:
    """Teacher-forced decoder pass; logits returned in (T, B, V) layout."""
    v = params.dims.vocab
    w_x = params["dec_rnn.W_x"]
    h0 = np.tanh(z @ params["dec_init.W"] + params["dec_init.b"])
    # step input = concat(previous-target one-hot, z); the token part is a
    # row gather, the z part is constant across steps
    z_gates = z @ w_x[v:] + params["dec_rnn.b"]
    prev_tokens = np.full(targets.shape[::-1], -1, dtype=np.int64)
    prev_tokens[1:] = targets[:, :-1].T
    xg = np.empty((targets.shape[1], targets.shape[0], w_x.shape[1]))
    xg[:] = z_gates
    xg[1:] += w_x[:v][prev_tokens[1:]]
    hs, gru_cache = gru_sequence(xg, params["dec_rnn.W_h"], h0)
    logits = hs @ params["dec_out.W"] + params["dec_out.b"]
    return logits, DecoderCache(prev_tokens, gru_cache, hs, h0, z)


def decode_teacher_forced(
    params: ModelParams, z: np.ndarray, targets: np.ndarray
) -> np.ndarray:
    """Teacher-forced logits (B, 32, 90); step input is the previous target
    token one-hot concatenated with z, with an all-zero token at step 0."""
    logits, _ = decoder_forward(params, z, targets)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteActivation("decoder produced non-finite logits")
    return logits.transpose(1, 0, 2)


def decode_sample(
    params: ModelParams,
    z: np.ndarray,
    rng: np.random.Generator,
    temperature: float = 1.0,
    source_id: str = "",
) -> MelodySequence:
    """Autoregressive sampling from the prior/posterior code z (shape (Z,)).

    Each step samples from softmax(logits / temperature) and feeds the
    sampled token back; temperatures below 1e-6 mean argmax (ties break to
    the lowest token index).
    """
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    dims = params.dims
    z_row = z.reshape(1, -1)
    h = np.tanh(z_row @ params["dec_init.W"] + params["dec_init.b"])
    w_x = params["dec_rnn.W_x"]
    w_h = params["dec_rnn.W_h"]
    z_gates = z_row @ w_x[dims.vocab :] + params["dec_rnn.b"]
    token = -1
    tokens: list[int] = []
    for _ in range(dims.steps):
        xg = z_gates if token < 0 else z_gates + w_x[token]
        hs, _ = gru_sequence(xg[None, :, :], w_h, h)
        h = hs[0]
        logits = (h @ params["dec_out.W"] + params["dec_out.b"])[0]
        if temperature < ARGMAX_TEMPERATURE:
            token = int(np.argmax(logits))
        else:
            probs = softmax(logits / temperature)
            token = int(rng.choice(dims.vocab, p=probs))
        tokens.append(token)
    return MelodySequence(tuple(tokens), source_id)


# ---------------------------------------------------------------------------
# loss and full backward pass
# ---------------------------------------------------------------------------


def elbo_loss(
    logits: np.ndarray,
    targets: np.ndarray,
    mu: np.ndarray,
    logvar: np.ndarray,
    beta: float,
    free_bits: float,
) -> LossBreakdown:
    """Cross-entropy summed over steps plus beta-weighted KL above the
    free-bits floor; both terms are batch means. Logits are (B, T, V)."""
    batch, t_steps = targets.shape
    logp = log_softmax(logits)
    picked = logp[np.arange(batch)[:, None], np.arange(t_steps)[None, :], targets]
    nll = -picked.sum() / batch
    kl = 0.5 * (np.exp(logvar) + mu**2 - 1.0 - logvar).sum() / batch
    threshold = free_bits * mu.shape[1]
    total = nll + beta * max(kl - threshold, 0.0)
    return LossBreakdown(
        total=float(total),
        reconstruction_nll=float(nll),
        kl_divergence=float(kl),
        beta_in_effect=float(beta),
    )


def loss_and_gradients(
    params: ModelParams,
    batch: np.ndarray,
    targets: np.ndarray,
    beta: float,
    free_bits: float,
    eps_noise: np.ndarray | None = None,
    distill: tuple[ModelParams, float, float] | None = None,
) -> tuple[LossBreakdown, dict[str, np.ndarray], float]:
    """One forward/backward pass. eps_noise of shape (B, Z) selects the
    sampled-z path; None means the deterministic z = mu path.

    distill = (teacher, weight, temperature) adds the soft-target term
    weight * T^2 * KL(teacher || student) summed over steps (batch mean).
    Returns (loss breakdown, gradients by tensor name, distill term value).
    """
    dims = params.dims
    batch_size, t_steps = targets.shape
    v = dims.vocab

    mu, logvar, enc_cache = encoder_forward(params, batch)
    if eps_noise is None:
        z = mu
    else:
        z = mu + np.exp(0.5 * logvar) * eps_noise
    logits_tbv, dec_cache = decoder_forward(params, z, targets)
    loss = elbo_loss(
        logits_tbv.transpose(1, 0, 2), targets, mu, logvar, beta, free_bits
    )

    # d total / d logits, in (T, B, V) layout
    d_logits = softmax(logits_tbv)
    d_logits[
        np.arange(t_steps)[:, None], np.arange(batch_size)[None, :], targets.T
    ] -= 1.0
    d_logits /= batch_size

    distill_value = 0.0
    if distill is not None:
        teacher, weight, temp = distill
        if weight > 0.0:
            t_mu, _, _ = encoder_forward(teacher, batch)
            t_logits, _ = decoder_forward(teacher, t_mu, targets)
            p_teacher = softmax(t_logits / temp)
            log_diff = log_softmax(t_logits / temp) - log_softmax(logits_tbv / temp)
            distill_value = (
                weight * temp**2 * (p_teacher * log_diff).sum() / batch_size
            )
            p_student = softmax(logits_tbv / temp)
            d_logits += weight * temp * (p_student - p_teacher) / batch_size

    grads: dict[str, np.ndarray] = {}
    flat = batch_size * t_steps

    # output projection
    hs_flat = dec_cache.hs.reshape(flat, dims.hidden)
    d_logits_flat = d_logits.reshape(flat, v)
    grads["dec_out.W"] = hs_flat.T @ d_logits_flat
    grads["dec_out.b"] = d_logits_flat.sum(axis=0)
    d_hs = d_logits @ params["dec_out.W"].T  # (T, B, H)

    # decoder recurrence
    d_xg, d_w_h, d_h0 = gru_sequence_backward(
        d_hs, None, dec_cache.gru, params["dec_rnn.W_h"]
    )
    grads["dec_rnn.W_h"] = d_w_h
    grads["dec_rnn.b"] = d_xg.sum(axis=(0, 1))
    w_x = params["dec_rnn.W_x"]
    d_w_x = np.empty_like(w_x)
    # token rows: previous-target one-hots are the input batch shifted one step
    prev_onehot_flat = (
        batch[:, :-1].transpose(1, 0, 2).reshape((t_steps - 1) * batch_size, v)
    )
    d_w_x[:v] = prev_onehot_flat.T @ d_xg[1:].reshape((t_steps - 1) * batch_size, -1)
    # z rows: z feeds every step identically
    d_xg_sum = d_xg.sum(axis=0)  # (B, 3H)
    d_w_x[v:] = z.T @ d_xg_sum
    grads["dec_rnn.W_x"] = d_w_x
    d_z = d_xg_sum @ w_x[v:].T

    # decoder initial state
    d_h0_pre = d_h0 * (1.0 - dec_cache.h0**2)
    grads["dec_init.W"] = dec_cache.z.T @ d_h0_pre
    grads["dec_init.b"] = d_h0_pre.sum(axis=0)
    d_z = d_z + d_h0_pre @ params["dec_init.W"].T

    # KL above the free-bits floor, plus the reparameterization path
    threshold = free_bits * dims.latent
    kl_active = 1.0 if loss.kl_divergence > threshold else 0.0
    d_mu = d_z + beta * kl_active * mu / batch_size
    d_logvar = beta * kl_active * 0.5 * (np.exp(logvar) - 1.0) / batch_size
    if eps_noise is not None:
        d_logvar = d_logvar + d_z * eps_noise * 0.5 * np.exp(0.5 * logvar)
    clamp_open = (enc_cache.logvar_raw > -LOGVAR_CLAMP) & (
        enc_cache.logvar_raw < LOGVAR_CLAMP
    )
    d_logvar_raw = d_logvar * clamp_open

    # encoder heads
    concat = enc_cache.concat
    grads["enc_mu.W"] = concat.T @ d_mu
    grads["enc_mu.b"] = d_mu.sum(axis=0)
    grads["enc_logvar.W"] = concat.T @ d_logvar_raw
    grads["enc_logvar.b"] = d_logvar_raw.sum(axis=0)
    d_concat = d_mu @ params["enc_mu.W"].T + d_logvar_raw @ params["enc_logvar.W"].T

    h = dims.hidden
    onehot_tbv = batch.transpose(1, 0, 2)
    for direction, d_final in (("fwd", d_concat[:, :h]), ("bwd", d_concat[:, h:])):
        cell = f"enc_{direction}_rnn"
        cache = enc_cache.fwd if direction == "fwd" else enc_cache.bwd
        d_xg_e, d_w_h_e, _ = gru_sequence_backward(
            None, d_final, cache, params[f"{cell}.W_h"]
        )
        grads[f"{cell}.W_h"] = d_w_h_e
        grads[f"{cell}.b"] = d_xg_e.sum(axis=(0, 1))
        x_dir = onehot_tbv if direction == "fwd" else onehot_tbv[::-1]
        grads[f"{cell}.W_x"] = np.ascontiguousarray(x_dir).reshape(flat, v).T @ (
            d_xg_e.reshape(flat, 3 * h)
        )

    if distill_value:
        loss = LossBreakdown(
            total=loss.total + distill_value,
            reconstruction_nll=loss.reconstruction_nll,
            kl_divergence=loss.kl_divergence,
            beta_in_effect=loss.beta_in_effect,
        )
    return loss, grads, float(distill_value)
