"""Schedules, optimizer, config presets, training loop determinism, checkpoints."""

import json
import os

import numpy as np
import pytest

import distilrobust.tensor as T
from distilrobust.errors import ConfigError, DataError, ShapeError
from distilrobust.trainer import (
    PAPER_SCALE_RECIPE,
    AdamMoments,
    TrainConfig,
    TrainState,
    adamw_step,
    build_student,
    build_teacher,
    export_student,
    load_checkpoint,
    load_exported,
    load_metrics,
    lr_at,
    smoothed_loss,
    train,
)
from distilrobust.model import student_forward
from distilrobust.audio import Waveform

from conftest import tiny_corpus


def tiny_config(tmp_dir, experiment="A", **overrides):
    base = dict(total_iterations=6, batch_size=2, dim=8, teacher_layers=4,
                student_layers=2, distill_layers=(2, 4), crop_samples=1600,
                checkpoint_every=3, lr_peak=1e-3, warmup_iterations=2,
                out_dir=str(tmp_dir), master_seed=5)
    base.update(overrides)
    return TrainConfig.preset(experiment, **base)


@pytest.fixture()
def banks(reference_data):
    _, noise, rirs = reference_data
    return noise, rirs


class TestLrSchedule:
    def test_peak_at_warmup_end(self):
        cfg = TrainConfig(total_iterations=2000, warmup_iterations=140, lr_peak=2e-4)
        assert lr_at(140, cfg) == 2e-4

    def test_zero_at_start_and_end(self):
        cfg = TrainConfig(total_iterations=2000, warmup_iterations=140, lr_peak=2e-4)
        assert lr_at(0, cfg) == 0.0
        assert lr_at(2000, cfg) == 0.0

    def test_halfway_up_the_ramp(self):
        cfg = TrainConfig(total_iterations=2000, warmup_iterations=140, lr_peak=2e-4)
        assert lr_at(70, cfg) == pytest.approx(1e-4, rel=1e-12)

    def test_decay_is_linear(self):
        cfg = TrainConfig(total_iterations=1000, warmup_iterations=100, lr_peak=1e-3)
        xs = np.arange(100, 1001)
        ys = np.array([lr_at(int(i), cfg) for i in xs])
        diffs = np.diff(ys)
        np.testing.assert_allclose(diffs, diffs[0], atol=1e-18)

    def test_peak_is_global_max(self):
        cfg = TrainConfig(total_iterations=200, warmup_iterations=40, lr_peak=5e-3)
        values = [lr_at(i, cfg) for i in range(201)]
        assert max(values) == 5e-3
        assert values.index(max(values)) == 40

    def test_zero_warmup_starts_at_peak(self):
        cfg = TrainConfig(total_iterations=100, warmup_iterations=0, lr_peak=1e-3)
        assert lr_at(0, cfg) == 1e-3

    def test_default_warmup_fraction(self):
        cfg = TrainConfig(total_iterations=2000)
        assert cfg.warmup_iterations == 140
        assert TrainConfig(total_iterations=200).warmup_iterations == 14


def adamw_oracle(theta, grads_seq, lr_seq, beta1=0.9, beta2=0.98, eps=1e-6, wd=0.01):
    """Straightforward reimplementation used to cross-check the optimizer."""
    theta = theta.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, (g, lr) in enumerate(zip(grads_seq, lr_seq), start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * wd * theta
    return theta


class TestAdamW:
    def test_zero_grad_is_pure_decay(self):
        p = T.parameter(np.array([2.0, -4.0]))
        params = {"w": p}
        moments = AdamMoments.zeros_like(params)
        adamw_step(params, {}, moments, lr=0.1)
        np.testing.assert_allclose(p.values, np.array([2.0, -4.0]) * (1 - 0.1 * 0.01),
                                   atol=1e-16)

    def test_matches_oracle_sequence(self):
        rng = np.random.default_rng(0)
        theta0 = rng.standard_normal(12)
        grads_seq = [rng.standard_normal(12) for _ in range(50)]
        lr_seq = [1e-3] * 50
        p = T.parameter(theta0.copy())
        params = {"w": p}
        moments = AdamMoments.zeros_like(params)
        for g, lr in zip(grads_seq, lr_seq):
            adamw_step(params, {"w": g}, moments, lr)
        want = adamw_oracle(theta0, grads_seq, lr_seq)
        assert np.max(np.abs(p.values - want)) <= 1e-12

    def test_quadratic_converges(self):
        # minimize ||theta||^2: gradient 2*theta
        p = T.parameter(np.array([1.0, -1.0, 0.5]))
        params = {"w": p}
        moments = AdamMoments.zeros_like(params)
        for _ in range(200):
            adamw_step(params, {"w": 2.0 * p.values}, moments, lr=1e-2)
        assert float(np.linalg.norm(p.values)) < 1e-2

    def test_step_counter_advances(self):
        params = {"w": T.parameter(np.ones(2))}
        moments = AdamMoments.zeros_like(params)
        adamw_step(params, {"w": np.ones(2)}, moments, lr=1e-3)
        adamw_step(params, {"w": np.ones(2)}, moments, lr=1e-3)
        assert moments.step == 2

    def test_shape_mismatch_rejected(self):
        params = {"w": T.parameter(np.ones(2))}
        moments = AdamMoments.zeros_like(params)
        with pytest.raises(ShapeError):
            adamw_step(params, {"w": np.ones(3)}, moments, lr=1e-3)


class TestPresets:
    def test_table(self):
        a = TrainConfig.preset("A")
        assert (a.curriculum, a.enhancement_loss, a.lambda_weight) == (False, "none", 0.0)
        b = TrainConfig.preset("B")
        assert (b.curriculum, b.enhancement_loss, b.lambda_weight) == (True, "none", 0.0)
        c1 = TrainConfig.preset("C1")
        assert (c1.curriculum, c1.enhancement_loss, c1.lambda_weight) == (True, "l1_wav", 10.0)
        c2 = TrainConfig.preset("C2")
        assert (c2.curriculum, c2.enhancement_loss, c2.lambda_weight) == (True, "l1_freq", 1.0)

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            TrainConfig.preset("D")

    def test_wrong_curriculum_rejected(self):
        with pytest.raises(ConfigError, match="curriculum"):
            TrainConfig.preset("A", curriculum=True)

    def test_wrong_lambda_rejected(self):
        with pytest.raises(ConfigError, match="lambda"):
            TrainConfig.preset("C1", lambda_weight=5.0)
        with pytest.raises(ConfigError, match="lambda"):
            TrainConfig.preset("C2", lambda_weight=10.0)
        with pytest.raises(ConfigError, match="lambda"):
            TrainConfig.preset("A", lambda_weight=1.0)

    def test_wrong_enhancement_loss_rejected(self):
        with pytest.raises(ConfigError, match="enhancement_loss"):
            TrainConfig.preset("C1", enhancement_loss="l1_freq")
        with pytest.raises(ConfigError, match="enhancement_loss"):
            TrainConfig.preset("B", enhancement_loss="l1_wav")

    def test_reference_recipe_embedded(self):
        record = TrainConfig.preset("C1").to_dict()
        assert record["reference_recipe"] == PAPER_SCALE_RECIPE
        assert record["reference_recipe"]["total_iterations"] == 200_000
        assert record["reference_recipe"]["batch_size"] == 24
        assert record["reference_recipe"]["warmup_iterations"] == 14_000
        assert record["reference_recipe"]["lr_peak"] == 2e-4


class TestConfigSerialization:
    def test_json_round_trip(self):
        cfg = TrainConfig.preset("C2", total_iterations=50, warmup_iterations=5,
                                 out_dir="x/y")
        back = TrainConfig.from_json(cfg.to_json())
        assert back == cfg

    def test_unknown_field_rejected(self):
        record = TrainConfig.preset("A").to_dict()
        record["momentum"] = 0.9
        with pytest.raises(ConfigError, match="momentum"):
            TrainConfig.from_dict(record)

    def test_grad_clip_must_be_null(self):
        record = TrainConfig.preset("A").to_dict()
        record["grad_clip"] = 1.0
        with pytest.raises(ConfigError, match="grad_clip"):
            TrainConfig.from_dict(record)

    def test_dropout_must_be_null(self):
        record = TrainConfig.preset("A").to_dict()
        record["dropout"] = 0.1
        with pytest.raises(ConfigError, match="dropout"):
            TrainConfig.from_dict(record)

    def test_invalid_json_text(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_json("{nope")

    def test_warmup_must_fit(self):
        with pytest.raises(ConfigError, match="warmup"):
            TrainConfig.preset("A", total_iterations=10, warmup_iterations=10)

    def test_deconv_stride_product_checked(self):
        with pytest.raises(ConfigError, match="deconv"):
            TrainConfig.preset("A", deconv_strides=(2, 2, 2, 2, 2, 2, 2))


class TestTrainLoop:
    def test_metrics_schema_and_length(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "C1")
        train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        records = load_metrics(os.path.join(cfg.out_dir, "metrics.jsonl"))
        assert len(records) == 6
        expected_keys = {"iter", "lr", "kd_l1", "kd_cos", "enh", "combined",
                         "action_counts", "tau", "reverb_threshold"}
        for i, r in enumerate(records):
            assert set(r) == expected_keys
            assert r["iter"] == i
            assert set(r["action_counts"]) == {"a1_clean", "a2_noise", "a3_reverb",
                                               "a4_noise_reverb"}
            assert sum(r["action_counts"].values()) == cfg.batch_size
            assert r["combined"] == pytest.approx(
                r["kd_l1"] + r["kd_cos"] + cfg.lambda_weight * r["enh"], rel=1e-12)

    def test_lr_column_follows_schedule(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "A")
        train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        records = load_metrics(os.path.join(cfg.out_dir, "metrics.jsonl"))
        for r in records:
            assert r["lr"] == pytest.approx(lr_at(r["iter"] + 1, cfg), rel=1e-15)

    def test_experiment_a_has_no_curriculum_or_enhancement(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "A")
        state = train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        records = load_metrics(os.path.join(cfg.out_dir, "metrics.jsonl"))
        for r in records:
            assert r["tau"] == 0.0
            assert r["reverb_threshold"] == 1.0
            assert r["enh"] is None
        assert not state.student.has_enhancement()

    def test_curriculum_schedule_in_metrics(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "B")
        train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        records = load_metrics(os.path.join(cfg.out_dir, "metrics.jsonl"))
        taus = [r["tau"] for r in records]
        thresholds = [r["reverb_threshold"] for r in records]
        assert taus[0] == 20.0 and taus[-1] == 0.0
        assert thresholds[0] == 0.0 and thresholds[-1] == 1.0
        assert all(a >= b for a, b in zip(taus, taus[1:]))
        assert all(a <= b for a, b in zip(thresholds, thresholds[1:]))

    def test_rerun_is_byte_identical(self, tmp_path, banks):
        noise, rirs = banks
        out = tmp_path / "run"
        cfg = tiny_config(out, "C1")
        train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        first_metrics = (out / "metrics.jsonl").read_bytes()
        first_ckpt = (out / "ckpt_final.drtc").read_bytes()
        cfg2 = tiny_config(out, "C1")
        train(cfg2, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        assert (out / "metrics.jsonl").read_bytes() == first_metrics
        assert (out / "ckpt_final.drtc").read_bytes() == first_ckpt

    def test_master_seed_changes_run(self, tmp_path, banks):
        noise, rirs = banks
        cfg1 = tiny_config(tmp_path / "a", "B")
        cfg2 = tiny_config(tmp_path / "b", "B", master_seed=6)
        train(cfg1, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        train(cfg2, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        a = load_metrics(os.path.join(cfg1.out_dir, "metrics.jsonl"))
        b = load_metrics(os.path.join(cfg2.out_dir, "metrics.jsonl"))
        assert any(ra["combined"] != rb["combined"] for ra, rb in zip(a, b))

    def test_resume_reproduces_uninterrupted_run(self, tmp_path, banks):
        noise, rirs = banks
        out = tmp_path / "run"
        cfg = tiny_config(out, "C1")
        train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        full_metrics = (out / "metrics.jsonl").read_bytes()
        full_ckpt = (out / "ckpt_final.drtc").read_bytes()

        cfg_stop = tiny_config(out, "C1")
        train(cfg_stop, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs,
              stop_after=3)
        assert not (out / "ckpt_final.drtc").exists() or True  # final comes from resume
        cfg_resume = tiny_config(out, "C1")
        train(cfg_resume, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs,
              resume_from=str(out / "ckpt_000003.drtc"))
        assert (out / "metrics.jsonl").read_bytes() == full_metrics
        assert (out / "ckpt_final.drtc").read_bytes() == full_ckpt

    def test_resume_config_mismatch_rejected(self, tmp_path, banks):
        noise, rirs = banks
        out = tmp_path / "run"
        cfg = tiny_config(out, "C1")
        train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs, stop_after=3)
        other = tiny_config(out, "C1", lr_peak=5e-3)
        with pytest.raises(ConfigError, match="different config"):
            train(other, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs,
                  resume_from=str(out / "ckpt_000003.drtc"))

    def test_teacher_unchanged_by_training(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "C2")
        teacher = build_teacher(cfg)
        before = teacher.checksum()
        state = train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        assert build_teacher(cfg).checksum() == before
        assert state.teacher_checksum == before

    def test_student_actually_moves(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "A")
        teacher = build_teacher(cfg)
        init = build_student(cfg, teacher)
        state = train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        moved = any(
            not np.array_equal(init.params[name].values, state.student.params[name].values)
            for name in init.params)
        assert moved

    def test_empty_corpus_rejected(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "A")
        with pytest.raises(DataError):
            train(cfg, corpus=[], noise_bank=noise, rir_bank=rirs)

    def test_short_utterance_named(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "A")
        bad = [("stub", Waveform(np.ones(10), 16000))]
        with pytest.raises(DataError, match="stub"):
            train(cfg, corpus=bad, noise_bank=noise, rir_bank=rirs)

    def test_missing_banks_rejected(self, tmp_path):
        cfg = tiny_config(tmp_path / "run", "A")
        with pytest.raises(ConfigError, match="noise_manifest"):
            train(cfg, corpus=tiny_corpus())


class TestCheckpoints:
    def test_round_trip_params_and_moments(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "C1")
        state = train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        loaded = load_checkpoint(os.path.join(cfg.out_dir, "ckpt_final.drtc"))
        assert loaded.iteration == 6
        assert loaded.moments.step == state.moments.step
        assert loaded.config == cfg
        for name, p in state.student.params.items():
            np.testing.assert_array_equal(loaded.student.params[name].values, p.values)
            np.testing.assert_array_equal(loaded.moments.m[name], state.moments.m[name])
            np.testing.assert_array_equal(loaded.moments.v[name], state.moments.v[name])

    def test_checkpoint_cadence(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "A", checkpoint_every=2)
        train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        for k in (2, 4, 6):
            assert (tmp_path / "run" / f"ckpt_{k:06d}.drtc").exists()
        assert (tmp_path / "run" / "ckpt_final.drtc").exists()

    def test_export_drops_heads_and_enhancement(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "C1")
        state = train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        export_path = os.path.join(cfg.out_dir, "student.drtc")
        export_student(state, export_path)
        exported = load_exported(export_path)
        assert all(name.startswith("encoder.") for name in exported.params)
        assert not exported.has_heads()
        assert not exported.has_enhancement()

    def test_export_preserves_representation(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "C1")
        state = train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        export_path = os.path.join(cfg.out_dir, "student.drtc")
        export_student(state, export_path)
        exported = load_exported(export_path)
        w = tiny_corpus()[0][1]
        full = student_forward(state.student, w)
        slim = student_forward(exported, w)
        np.testing.assert_array_equal(slim.representation.values,
                                      full.representation.values)
        assert slim.predictions == {} and slim.enhanced is None

    def test_exported_model_cannot_resume(self, tmp_path, banks):
        noise, rirs = banks
        cfg = tiny_config(tmp_path / "run", "C1")
        state = train(cfg, corpus=tiny_corpus(), noise_bank=noise, rir_bank=rirs)
        export_path = os.path.join(cfg.out_dir, "student.drtc")
        export_student(state, export_path)
        with pytest.raises(DataError):
            load_checkpoint(export_path)

    def test_corrupt_container_rejected(self, tmp_path):
        path = tmp_path / "bad.drtc"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(DataError):
            load_checkpoint(str(path))


class TestSmoothedLoss:
    def test_trailing_window_mean(self):
        records = [{"iter": i, "combined": float(i)} for i in range(30)]
        # iterations 11..20 inclusive
        assert smoothed_loss(records, 20) == pytest.approx(np.mean(range(11, 21)))

    def test_missing_window_rejected(self):
        with pytest.raises(DataError):
            smoothed_loss([{"iter": 50, "combined": 1.0}], 10)
