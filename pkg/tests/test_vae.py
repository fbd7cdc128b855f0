"""Tests for the VAE core: initialization, forward passes, loss identities,
hand-derived gradients, and the training loop."""

import math

import numpy as np
import pytest

from melodylab.codec import SEQ_LEN, VOCAB, MelodySequence, batch_onehot, batch_tokens
from melodylab.vae import (
    Dims,
    EmptyDataset,
    ModelParams,
    TrainConfig,
    decode_sample,
    decode_teacher_forced,
    elbo_loss,
    encode,
    gradient_check,
    init_params,
    load_checkpoint,
    param_shapes,
    reconstruction_accuracy,
    reparameterize,
    save_checkpoint,
    softmax,
    train,
)
from melodylab.vae.network import loss_and_gradients

SMALL = Dims(hidden=8, latent=4)


def random_dataset(rng, n, pitch_lo=40, pitch_hi=60):
    seqs = []
    for _ in range(n):
        tokens = []
        for _ in range(SEQ_LEN):
            roll = rng.random()
            if roll < 0.4:
                tokens.append(int(rng.integers(2 + pitch_lo - 21, 2 + pitch_hi - 21)))
            elif roll < 0.7:
                tokens.append(1)
            else:
                tokens.append(0)
        seqs.append(MelodySequence(tuple(tokens)))
    return seqs


def zero_params(dims=SMALL):
    shapes = param_shapes(dims)
    return ModelParams(dims, {k: np.zeros(s) for k, s in shapes.items()})


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_params(11, SMALL)
        b = init_params(11, SMALL)
        assert a.equals(b)

    def test_different_seed_differs(self):
        assert not init_params(11, SMALL).equals(init_params(12, SMALL))

    def test_bounds_and_zero_biases(self):
        p = init_params(3, SMALL)
        for name, shape in param_shapes(SMALL).items():
            arr = p[name]
            assert np.all(np.isfinite(arr))
            if len(shape) == 1:
                assert np.all(arr == 0.0)
            else:
                bound = math.sqrt(6.0 / (shape[0] + shape[1]))
                assert np.all(np.abs(arr) <= bound)


# ---------------------------------------------------------------------------
# encoder / reparameterization
# ---------------------------------------------------------------------------


class TestEncode:
    def test_zero_params_give_bias(self):
        p = zero_params()
        batch = batch_onehot(random_dataset(np.random.default_rng(0), 3))
        mu, logvar = encode(p, batch)
        np.testing.assert_array_equal(mu, np.zeros((3, SMALL.latent)))
        np.testing.assert_array_equal(logvar, np.zeros((3, SMALL.latent)))

    def test_identical_inputs_identical_rows(self):
        p = init_params(5, SMALL)
        seq = random_dataset(np.random.default_rng(1), 1)[0]
        batch = batch_onehot([seq, seq, seq])
        mu, logvar = encode(p, batch)
        np.testing.assert_array_equal(mu[0], mu[1])
        np.testing.assert_array_equal(logvar[0], logvar[2])

    def test_outputs_finite_for_random_params(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            p = init_params(seed, SMALL)
            batch = batch_onehot(random_dataset(rng, 4))
            mu, logvar = encode(p, batch)
            assert np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))
            assert np.all(np.abs(logvar) <= 8.0)


class TestReparameterize:
    def test_deterministic_flag_returns_mu(self):
        mu = np.arange(8.0).reshape(2, 4)
        logvar = np.zeros((2, 4))
        np.testing.assert_array_equal(
            reparameterize(mu, logvar, deterministic=True), mu
        )

    def test_clamped_low_logvar_stays_near_mu(self):
        rng = np.random.default_rng(0)
        mu = np.zeros((1000, 4))
        logvar = np.full((1000, 4), -8.0)
        z = reparameterize(mu, logvar, rng)
        assert np.all(np.abs(z) < 0.02 * 6)  # sigma = e^-4 ~ 0.018

    def test_sample_mean_matches_mu(self):
        rng = np.random.default_rng(7)
        n = 10**5
        mu = np.full((n, 2), 1.5)
        logvar = np.zeros((n, 2))
        z = reparameterize(mu, logvar, rng)
        # mean within 3 sigma / sqrt(N)
        assert np.all(np.abs(z.mean(axis=0) - 1.5) < 3.0 / math.sqrt(n))


# ---------------------------------------------------------------------------
# decoder
# ---------------------------------------------------------------------------


class TestDecoder:
    def test_zero_params_uniform_logits(self):
        p = zero_params()
        targets = batch_tokens(random_dataset(np.random.default_rng(3), 2))
        logits = decode_teacher_forced(p, np.zeros((2, SMALL.latent)), targets)
        np.testing.assert_array_equal(logits, np.zeros((2, SEQ_LEN, VOCAB)))

    def test_pure_function(self):
        p = init_params(4, SMALL)
        targets = batch_tokens(random_dataset(np.random.default_rng(4), 2))
        z = np.random.default_rng(5).standard_normal((2, SMALL.latent))
        np.testing.assert_array_equal(
            decode_teacher_forced(p, z, targets), decode_teacher_forced(p, z, targets)
        )

    def test_argmax_sampling_deterministic(self):
        p = init_params(6, SMALL)
        z = np.random.default_rng(6).standard_normal(SMALL.latent)
        a = decode_sample(p, z, np.random.default_rng(0), temperature=1e-9)
        b = decode_sample(p, z, np.random.default_rng(99), temperature=1e-9)
        assert a.tokens == b.tokens

    def test_sampled_tokens_in_range(self):
        p = init_params(7, SMALL)
        rng = np.random.default_rng(8)
        for _ in range(5):
            z = rng.standard_normal(SMALL.latent)
            seq = decode_sample(p, z, rng, temperature=1.0)
            assert all(0 <= t < VOCAB for t in seq.tokens)


# ---------------------------------------------------------------------------
# loss identities
# ---------------------------------------------------------------------------


class TestElboLoss:
    def test_kl_zero_for_standard_normal(self):
        targets = np.zeros((3, SEQ_LEN), dtype=np.int64)
        logits = np.zeros((3, SEQ_LEN, VOCAB))
        out = elbo_loss(logits, targets, np.zeros((3, 4)), np.zeros((3, 4)), 1.0, 0.0)
        assert abs(out.kl_divergence) < 1e-9

    def test_kl_half_z_for_unit_mu(self):
        z_dim = 4
        out = elbo_loss(
            np.zeros((2, SEQ_LEN, VOCAB)),
            np.zeros((2, SEQ_LEN), dtype=np.int64),
            np.ones((2, z_dim)),
            np.zeros((2, z_dim)),
            1.0,
            0.0,
        )
        assert abs(out.kl_divergence - 0.5 * z_dim) < 1e-9

    def test_uniform_logits_nll(self):
        targets = batch_tokens(random_dataset(np.random.default_rng(9), 4))
        out = elbo_loss(
            np.zeros((4, SEQ_LEN, VOCAB)), targets, np.zeros((4, 4)), np.zeros((4, 4)),
            1.0, 0.0,
        )
        assert abs(out.reconstruction_nll - SEQ_LEN * math.log(VOCAB)) < 1e-9

    def test_total_follows_free_bits_rule(self):
        z_dim = 4
        targets = np.zeros((1, SEQ_LEN), dtype=np.int64)
        out = elbo_loss(
            np.zeros((1, SEQ_LEN, VOCAB)), targets, np.ones((1, z_dim)),
            np.zeros((1, z_dim)), beta=0.5, free_bits=0.25,
        )
        expected = out.reconstruction_nll + 0.5 * max(
            out.kl_divergence - 0.25 * z_dim, 0.0
        )
        assert abs(out.total - expected) < 1e-12

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((5, VOCAB)) * 10
        np.testing.assert_allclose(softmax(x).sum(axis=1), 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


class TestGradients:
    def test_finite_difference_check(self):
        rng = np.random.default_rng(12)
        p = init_params(21, SMALL)
        seqs = random_dataset(rng, 2)
        err = gradient_check(
            p, batch_onehot(seqs), batch_tokens(seqs), epsilon=1e-5, n_coords=200
        )
        assert err < 1e-4

    def test_zero_params_output_bias_gradient_is_uniform_softmax(self):
        p = zero_params()
        seqs = random_dataset(np.random.default_rng(13), 1)
        targets = batch_tokens(seqs)
        _, grads, _ = loss_and_gradients(
            p, batch_onehot(seqs), targets, beta=1.0, free_bits=0.0
        )
        counts = np.bincount(targets.ravel(), minlength=VOCAB)
        expected = SEQ_LEN / VOCAB - counts  # sum over steps of (p - y), B=1
        np.testing.assert_allclose(grads["dec_out.b"], expected, atol=1e-12)

    def test_gradient_check_deterministic(self):
        p = init_params(22, SMALL)
        seqs = random_dataset(np.random.default_rng(14), 2)
        args = (batch_onehot(seqs), batch_tokens(seqs))
        assert gradient_check(p, *args, seed=5) == gradient_check(p, *args, seed=5)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class TestTrain:
    def test_empty_dataset_raises(self):
        with pytest.raises(EmptyDataset):
            train(init_params(0, SMALL), [], TrainConfig())
        with pytest.raises(EmptyDataset):
            reconstruction_accuracy(init_params(0, SMALL), [])

    def test_freeze_everything_is_noop(self):
        p = init_params(30, SMALL)
        seqs = random_dataset(np.random.default_rng(15), 4)
        cfg = TrainConfig(max_epochs=3, early_stop_patience=10, seed=1)
        out, _ = train(p, seqs, cfg, trainable=set())
        assert out.equals(p)

    def test_same_seed_identical_params(self):
        p = init_params(31, SMALL)
        seqs = random_dataset(np.random.default_rng(16), 6)
        cfg = TrainConfig(max_epochs=5, learning_rate=3e-3, seed=9)
        a, _ = train(p, seqs, cfg)
        b, _ = train(p, seqs, cfg)
        assert a.equals(b)

    def test_overfit_small_dataset(self):
        dims = Dims(hidden=32, latent=16)
        rng = np.random.default_rng(17)
        seqs = random_dataset(rng, 8)
        cfg = TrainConfig(
            learning_rate=5e-3,
            batch_size=8,
            max_epochs=500,
            beta_max=0.2,
            beta_warmup_epochs=50,
            early_stop_patience=500,
            seed=2,
        )
        params, log = train(init_params(40, dims), seqs, cfg)
        assert reconstruction_accuracy(params, seqs) >= 0.99

    def test_accuracy_order_invariant(self):
        p = init_params(33, SMALL)
        seqs = random_dataset(np.random.default_rng(18), 10)
        assert reconstruction_accuracy(p, seqs) == reconstruction_accuracy(
            p, list(reversed(seqs))
        )

    def test_accuracy_in_unit_interval(self):
        p = init_params(34, SMALL)
        seqs = random_dataset(np.random.default_rng(19), 5)
        assert 0.0 <= reconstruction_accuracy(p, seqs) <= 1.0

    def test_memorized_sequence_reconstructs_exactly(self):
        dims = Dims(hidden=32, latent=16)
        seqs = random_dataset(np.random.default_rng(20), 1)
        cfg = TrainConfig(
            learning_rate=5e-3, batch_size=1, max_epochs=400,
            beta_max=0.0, beta_warmup_epochs=0, early_stop_patience=400, seed=3,
        )
        params, _ = train(init_params(41, dims), seqs, cfg)
        assert reconstruction_accuracy(params, seqs) == 1.0
        # free-running decode from the posterior mean reproduces the sequence
        mu, _ = encode(params, batch_onehot(seqs))
        out = decode_sample(params, mu[0], np.random.default_rng(0), temperature=1e-9)
        assert out.tokens == seqs[0].tokens


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        p = init_params(50, SMALL)
        path = tmp_path / "model.ckpt"
        save_checkpoint(p, path)
        assert load_checkpoint(path).equals(p)

    def test_unknown_version_rejected(self, tmp_path):
        from melodylab.vae import CheckpointError

        p = init_params(51, SMALL)
        path = tmp_path / "model.ckpt"
        save_checkpoint(p, path)
        import json

        payload = json.loads(path.read_text())
        payload["format_version"] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_shape_mismatch_rejected(self, tmp_path):
        from melodylab.vae import CheckpointError

        p = init_params(52, SMALL)
        path = tmp_path / "model.ckpt"
        save_checkpoint(p, path)
        import json

        payload = json.loads(path.read_text())
        payload["tensors"]["dec_out.b"]["values"] = [0.0]
        path.write_text(json.dumps(payload))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
