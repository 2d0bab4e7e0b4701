import numpy as np
import pytest

import gradcheck_util
from ssvepnav import scu
from ssvepnav.errors import FormatError, ModelError
from ssvepnav.scu import (ScuHyperparams, cross_validate, fit, forward,
                          init_model, load_model, loss_and_gradients, predict,
                          save_model)
from ssvepnav.signal import (ALL_CLASSES, EegEpoch, SsvepGenParams,
                             StimulusClass, generate_dataset, generate_epoch)


def small_dataset(snr, n_per_class, seed):
    return generate_dataset(SsvepGenParams(snr=snr, rng_seed=seed), n_per_class)


def filtered_dataset(snr, n_per_class, seed):
    from ssvepnav.signal import SsvepDataset, apply_filter, design_bandpass
    raw = small_dataset(snr, n_per_class, seed)
    spec = design_bandpass()
    return SsvepDataset(epochs=[apply_filter(spec, ep) for ep in raw.epochs],
                        metadata=dict(raw.metadata))


def zeroed(hp=None):
    model = init_model(hp or ScuHyperparams())
    for name in scu.PARAM_NAMES:
        getattr(model, name)[...] = 0.0
    model.bn_running_var[...] = 1.0
    model.trained = True
    return model


class TestHyperparams:
    def test_derived_lengths(self):
        hp = ScuHyperparams()
        assert hp.conv_out_len == 373
        assert hp.pool_out_len == 186
        assert hp.flattened_len == 16 * 186

    def test_init_shapes(self):
        m = init_model(ScuHyperparams(rng_seed=5))
        assert m.conv_weights.shape == (16, 9, 10)
        assert m.dense_weights.shape == (3, 16 * 186)
        assert not m.trained

    def test_init_deterministic(self):
        a = init_model(ScuHyperparams(rng_seed=5))
        b = init_model(ScuHyperparams(rng_seed=5))
        for name in scu.PARAM_NAMES:
            assert np.array_equal(getattr(a, name), getattr(b, name))


class TestForward:
    def test_probabilities(self):
        m = init_model(ScuHyperparams(rng_seed=1))
        m.trained = True
        probs = forward(m, generate_epoch(StimulusClass.F10, SsvepGenParams(rng_seed=1), 0))
        assert probs.shape == (3,)
        assert np.all(probs >= 0)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_zero_model_uniform(self):
        m = zeroed()
        probs = forward(m, generate_epoch(StimulusClass.F15, SsvepGenParams(rng_seed=2), 0))
        assert np.allclose(probs, 1 / 3, atol=1e-12)

    def test_zero_model_tie_breaks_to_first_class(self):
        m = zeroed()
        pred = predict(m, generate_epoch(StimulusClass.F15, SsvepGenParams(rng_seed=2), 0))
        assert pred.stimulus is StimulusClass.F10
        assert pred.latency_s > 0

    def test_untrained_predict_rejected(self):
        m = init_model(ScuHyperparams(rng_seed=1))
        with pytest.raises(ModelError):
            predict(m, generate_epoch(StimulusClass.F10, SsvepGenParams(rng_seed=1), 0))


class TestLoss:
    def batch(self, n=4, seed=3):
        p = SsvepGenParams(rng_seed=seed)
        return [(generate_epoch(ALL_CLASSES[i % 3], p, i), ALL_CLASSES[i % 3])
                for i in range(n)]

    def test_zero_model_loss_is_ln3(self):
        loss, _ = loss_and_gradients(zeroed(), self.batch())
        assert loss == pytest.approx(np.log(3.0), abs=1e-12)

    def test_weight_decay_term(self):
        # total loss minus the cross entropy recomputed from the output
        # probabilities must equal l2 * sum of squared weights
        m = init_model(ScuHyperparams(rng_seed=9))
        m.trained = True
        batch = self.batch()
        loss, _ = loss_and_gradients(m, batch)
        ce = -np.mean([np.log(forward(m, ep)[cls.class_index])
                       for ep, cls in batch])
        l2 = m.hyperparams.l2_scale * ((m.conv_weights ** 2).sum()
                                       + (m.dense_weights ** 2).sum())
        assert loss - ce == pytest.approx(l2, rel=1e-9)

    def test_duplicated_batch_invariance(self):
        m = init_model(ScuHyperparams(rng_seed=9))
        batch = self.batch()
        loss_a, grads_a = loss_and_gradients(m, batch)
        loss_b, grads_b = loss_and_gradients(m, batch + batch)
        assert loss_a == loss_b
        for name in scu.PARAM_NAMES:
            assert np.allclose(grads_a[name], grads_b[name], atol=1e-12)

    def test_batch_loss_matches(self):
        m = init_model(ScuHyperparams(rng_seed=9))
        batch = self.batch()
        loss, _ = loss_and_gradients(m, batch)
        assert scu.batch_loss(m, batch) == pytest.approx(loss, rel=1e-12)


class TestGradients:
    def test_finite_difference_spot_check(self):
        # reduced sweep; the exhaustive version runs in the acceptance suite
        model, xs, batch = gradcheck_util.build_probe()
        relu_m, pool_m, dead = gradcheck_util.margins(model, xs)
        assert relu_m > 5 and pool_m > 5 and dead == 0
        labels = np.array([cls.class_index for _, cls in batch])
        loss_fn = gradcheck_util.make_loss_fn(model, xs, labels)
        _, grads = loss_and_gradients(model, batch, training=False)
        rng = np.random.default_rng(0)
        step = gradcheck_util.FD_STEP
        for name in scu.PARAM_NAMES:
            tensor = getattr(model, name)
            flat_idx = rng.choice(tensor.size, size=min(20, tensor.size),
                                  replace=False)
            for fi in flat_idx:
                idx = np.unravel_index(fi, tensor.shape)
                orig = tensor[idx]
                tensor[idx] = orig + step
                lp = loss_fn(model)
                tensor[idx] = orig - step
                lm = loss_fn(model)
                tensor[idx] = orig
                numeric = (lp - lm) / (2 * step)
                rel = abs(numeric - grads[name][idx]) / max(
                    abs(numeric), abs(grads[name][idx]), 1e-8)
                assert rel < 1e-4, (name, idx, rel)

    def test_training_mode_batch_stats_gradient(self):
        # backprop through batch statistics, not the running averages
        model, xs, batch = gradcheck_util.build_probe(seed=53)
        labels = np.array([cls.class_index for _, cls in batch])
        _, grads = loss_and_gradients(model, batch, training=True)
        step = 1e-6
        rng = np.random.default_rng(1)
        for name in ("bn_gamma", "bn_beta", "dense_bias"):
            tensor = getattr(model, name)
            for fi in rng.choice(tensor.size, size=3, replace=False):
                idx = np.unravel_index(fi, tensor.shape)
                orig = tensor[idx]
                tensor[idx] = orig + step
                lp = scu.batch_loss(model, batch, training=True)
                tensor[idx] = orig - step
                lm = scu.batch_loss(model, batch, training=True)
                tensor[idx] = orig
                numeric = (lp - lm) / (2 * step)
                assert numeric == pytest.approx(grads[name][idx], rel=1e-3, abs=1e-8)


class TestDropout:
    def test_inverted_mask_statistics(self):
        # keep probability 0.5, survivors scaled by 2: zero fraction and
        # mean both within 2% over ~10k mask draws
        model, xs, _ = gradcheck_util.build_probe()
        hp = model.hyperparams
        zeros, total, mean_sum = 0, 0, 0.0
        for i in range(4):
            rng = np.random.default_rng(100 + i)
            _, cache = scu._forward(model, xs[:1], training=True, dropout_rng=rng)
            mask = cache["mask"]
            zeros += int((mask == 0).sum())
            total += mask.size
            mean_sum += mask.mean() * mask.size
        assert total >= 10_000
        assert zeros / total == pytest.approx(0.5, abs=0.02)
        assert mean_sum / total == pytest.approx(1.0, abs=0.02)
        survivors = mask[mask != 0]
        assert np.allclose(survivors, 1 / (1 - hp.dropout_rate))

    def test_inference_has_no_dropout(self):
        model, xs, batch = gradcheck_util.build_probe()
        a = forward(model, batch[0][0])
        b = forward(model, batch[0][0])
        assert np.array_equal(a, b)


class TestFit:
    HP = ScuHyperparams(epochs=6, rng_seed=17)

    def test_deterministic_bit_for_bit(self):
        ds = small_dataset(4.0, 6, seed=31)
        a = fit(ds, self.HP).model
        b = fit(ds, self.HP).model
        for name in scu.PARAM_NAMES + scu.STATE_NAMES:
            assert np.array_equal(getattr(a, name), getattr(b, name)), name

    def test_report_contents(self):
        ds = small_dataset(4.0, 6, seed=31)
        val = small_dataset(4.0, 2, seed=32)
        report = fit(ds, self.HP, val_dataset=val)
        assert len(report.losses) == self.HP.epochs
        assert all(np.isfinite(l) for l in report.losses)
        assert all(0 <= a <= 1 for a in report.train_accuracies)
        assert all(0 <= a <= 1 for a in report.val_accuracies)
        assert report.model.trained

    def test_learns_clean_signal(self):
        # bandpassed high-snr data is separable well before the full
        # training budget; holdout trials come from the same subject
        # (same generator params, unseen trial indices)
        from ssvepnav.signal import apply_filter, design_bandpass
        params = SsvepGenParams(snr=4.0, rng_seed=41)
        ds = filtered_dataset(4.0, 12, seed=41)
        report = fit(ds, ScuHyperparams(epochs=20, rng_seed=17))
        spec = design_bandpass()
        fresh = [apply_filter(spec, generate_epoch(cls, params, trial))
                 for trial in range(12, 16) for cls in ALL_CLASSES]
        hits = sum(predict(report.model, ep).stimulus is ep.label
                   for ep in fresh)
        assert hits / len(fresh) >= 0.8

    def test_running_stats_move(self):
        ds = small_dataset(4.0, 6, seed=31)
        model = fit(ds, self.HP).model
        assert not np.allclose(model.bn_running_mean, 0.0)
        assert np.all(model.bn_running_var > 0)


class TestCrossValidate:
    def test_moderate_snr_reaches_offline_grade_accuracy(self):
        # full-protocol dataset (40 trials/class, bandpassed) at snr=1.0:
        # mean 10-fold accuracy must clear 0.75
        ds = filtered_dataset(1.0, 40, seed=104)
        cv = cross_validate(ds, ScuHyperparams(rng_seed=17), k=10)
        assert cv.mean >= 0.75

    def test_fold_structure(self):
        ds = small_dataset(0.5, 6, seed=51)
        report = cross_validate(ds, ScuHyperparams(epochs=2, rng_seed=17), k=3)
        assert len(report.fold_accuracies) == 3
        assert all(0 <= a <= 1 for a in report.fold_accuracies)
        assert report.mean == pytest.approx(np.mean(report.fold_accuracies))
        assert report.std == pytest.approx(np.std(report.fold_accuracies))


class TestPersistence:
    def trained(self, tmp_path):
        ds = small_dataset(4.0, 4, seed=61)
        return fit(ds, ScuHyperparams(epochs=3, rng_seed=17)).model

    def test_round_trip_parameters_exact(self, tmp_path):
        model = self.trained(tmp_path)
        path = tmp_path / "m.scu"
        save_model(model, path)
        clone = load_model(path)
        for name in scu.PARAM_NAMES + scu.STATE_NAMES:
            assert np.array_equal(getattr(model, name), getattr(clone, name)), name

    def test_round_trip_predictions_exact(self, tmp_path):
        model = self.trained(tmp_path)
        path = tmp_path / "m.scu"
        save_model(model, path)
        clone = load_model(path)
        p = SsvepGenParams(rng_seed=71)
        for i in range(30):
            ep = generate_epoch(ALL_CLASSES[i % 3], p, i)
            a, b = predict(model, ep), predict(clone, ep)
            assert a.stimulus is b.stimulus
            assert np.array_equal(a.probabilities, b.probabilities)

    def test_round_trip_hyperparams(self, tmp_path):
        model = self.trained(tmp_path)
        path = tmp_path / "m.scu"
        save_model(model, path)
        assert load_model(path).hyperparams == model.hyperparams

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.scu"
        path.write_text("NOPE v9\n")
        with pytest.raises(FormatError):
            load_model(path)

    def test_truncated(self, tmp_path):
        model = self.trained(tmp_path)
        path = tmp_path / "m.scu"
        save_model(model, path)
        clipped = path.read_text().splitlines()[:-2]
        path.write_text("\n".join(clipped) + "\n")
        with pytest.raises(FormatError):
            load_model(path)

    def test_nonpositive_variance_rejected(self, tmp_path):
        model = self.trained(tmp_path)
        model.bn_running_var[0] = 0.0
        path = tmp_path / "m.scu"
        save_model(model, path)
        with pytest.raises(FormatError):
            load_model(path)
