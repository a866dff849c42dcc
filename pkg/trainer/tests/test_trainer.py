"""Trainer tests: model semantics, smoke training, export, normalization."""

import csv
import io
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

from dkws_trainer.data import load_split
from dkws_trainer.export import export_weights, load_exported_into_model, quantized_arrays
from dkws_trainer.model import ACT_SCALE, DeltaGRUNet, delta_commit, fake_quant_weight
from dkws_trainer.normalize import apply_constants, channel_constants, compute_normalization
from dkws_trainer.train import (
    TrainConfig,
    TrainingDiverged,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)


class TestModel:
    def test_forward_shapes(self):
        model = DeltaGRUNet()
        feats = torch.randint(0, 4096, (3, 20, 10))
        logits, fire_rate = model(feats, 0.2)
        assert logits.shape == (3, 12)
        assert 0.0 <= float(fire_rate) <= 1.0

    def test_gating_reduces_updates(self):
        model = DeltaGRUNet()
        feats = torch.randint(0, 4096, (4, 30, 10))
        _, dense_rate = model(feats, 0.0)
        _, sparse_rate = model(feats, 0.3)
        assert float(sparse_rate) < float(dense_rate)

    def test_delta_commit_rule(self):
        v = torch.tensor([0.30, 0.10])
        v_hat = torch.zeros(2)
        committed, fired = delta_commit(v, v_hat, 0.2)
        assert fired.tolist() == [True, False]
        assert committed.tolist() == pytest.approx([0.30, 0.0])

    def test_commit_gradient_straight_through(self):
        v = torch.tensor([0.05, 0.5], requires_grad=True)
        committed, _ = delta_commit(v, torch.zeros(2), 0.2)
        committed.sum().backward()
        assert v.grad.tolist() == [1.0, 1.0]

    def test_fake_quant_grid(self):
        w = torch.tensor([0.5, -0.7, 3.0])
        q = fake_quant_weight(w)
        assert q.tolist() == pytest.approx([0.5, -0.703125, 127 / 128])


class TestTrainSmoke:
    def test_one_epoch_completes_and_checkpoint_round_trips(self, feature_root, tmp_path):
        train_set = load_split(feature_root / "train")
        config = TrainConfig(epochs=1, seed=3, batch_size=32)
        result = train(config, train_set, log_path=tmp_path / "log.csv")
        assert len(result.history) == 1
        assert np.isfinite(result.history[0]["train_loss"])
        ckpt = tmp_path / "ckpt.pt"
        save_checkpoint(result, config, ckpt)
        model2, config2, history = load_checkpoint(ckpt)
        feats = torch.randint(0, 4096, (4, 62, 10))
        assert (model2.decisions(feats, 0.2) == result.model.decisions(feats, 0.2)).all()
        with open(tmp_path / "log.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 1

    def test_learns_synthetic_task(self, feature_root):
        train_set = load_split(feature_root / "train")
        val_set = load_split(feature_root / "val")
        config = TrainConfig(epochs=8, seed=5, batch_size=24, lr=2e-3)
        result = train(config, train_set, val_set)
        losses = [h["train_loss"] for h in result.history]
        assert losses[-1] < losses[0] * 0.7
        acc = evaluate(result.model, val_set, config.theta_train)
        assert acc >= 0.5  # strongly above the 1/12 chance level

    def test_divergence_detected(self, feature_root):
        # the guard fires on the first non-finite loss; a poisoned resume
        # checkpoint is the reliable way to produce one (the saturating
        # architecture itself resists blow-up)
        train_set = load_split(feature_root / "train")
        poisoned = DeltaGRUNet()
        with torch.no_grad():
            poisoned.b_fc[0] = float("nan")
        with pytest.raises(TrainingDiverged):
            train(TrainConfig(epochs=1, seed=0), train_set, init_model=poisoned)

    def test_seeded_training_reproducible_bytes(self, feature_root, tmp_path):
        train_set = load_split(feature_root / "train")
        config = TrainConfig(epochs=1, seed=11)
        w1, w2 = tmp_path / "a.bin", tmp_path / "b.bin"
        export_weights(train(config, train_set).model, w1)
        export_weights(train(config, train_set).model, w2)
        assert w1.read_bytes() == w2.read_bytes()


def _primary_infer(weight_path, feature_files, theta):
    cmd = [
        sys.executable, "-m", "dkws", "infer",
        "--weights", str(weight_path), "--theta", str(theta),
    ] + [str(f) for f in feature_files]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    rows = list(csv.DictReader(io.StringIO(proc.stdout)))
    return [int(r["decision"]) for r in rows]


class TestExportAndParity:
    def test_export_accepted_by_primary(self, feature_root, tmp_path):
        train_set = load_split(feature_root / "train")
        result = train(TrainConfig(epochs=1, seed=7), train_set)
        wpath = tmp_path / "weights.bin"
        export_weights(result.model, wpath)
        files = sorted((feature_root / "val").glob("utt*.features.csv"))[:3]
        decisions = _primary_infer(wpath, files, 0.2)
        assert len(decisions) == 3

    def test_corrupted_export_rejected_by_primary(self, feature_root, tmp_path):
        train_set = load_split(feature_root / "train")
        result = train(TrainConfig(epochs=1, seed=7), train_set)
        wpath = tmp_path / "weights.bin"
        export_weights(result.model, wpath)
        data = bytearray(wpath.read_bytes())
        data[60] ^= 0x01
        wpath.write_bytes(bytes(data))
        files = sorted((feature_root / "val").glob("utt*.features.csv"))[:1]
        cmd = [sys.executable, "-m", "dkws", "infer", "--weights", str(wpath),
               str(files[0])]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode != 0
        assert "category=weights" in proc.stderr

    def test_export_round_trip_preserves_quantized_params(self, feature_root, tmp_path):
        train_set = load_split(feature_root / "train")
        result = train(TrainConfig(epochs=1, seed=13), train_set)
        wpath = tmp_path / "weights.bin"
        export_weights(result.model, wpath)
        clone = DeltaGRUNet()
        load_exported_into_model(wpath, clone)
        a = quantized_arrays(result.model)
        b = quantized_arrays(clone)
        for name in a:
            assert (a[name] == b[name]).all(), name

    def test_parity_with_primary_engine(self, feature_root, tmp_path):
        # trainer-side quantized inference vs the integer engine: decision
        # agreement must clear 95% on the parity set
        from dkws_trainer.infer import quantized_decisions

        train_set = load_split(feature_root / "train")
        val_set = load_split(feature_root / "val")
        result = train(TrainConfig(epochs=2, seed=17), train_set)
        wpath = tmp_path / "weights.bin"
        export_weights(result.model, wpath)
        arrays = quantized_arrays(result.model)
        trainer_dec = quantized_decisions(arrays, np.stack(val_set.features), 0.2)
        files = [feature_root / "val" / name for name in val_set.names]
        primary_dec = _primary_infer(wpath, files, 0.2)
        agree = np.mean(np.array(trainer_dec) == np.array(primary_dec))
        assert agree >= 0.95, f"agreement {agree:.3f}"

    def test_float_eval_close_to_quantized_engine(self, feature_root, tmp_path):
        # the training-time float proxy should agree with the deployed engine
        # on a clear majority of decisions (disagreements at logit near-ties)
        train_set = load_split(feature_root / "train")
        val_set = load_split(feature_root / "val")
        result = train(TrainConfig(epochs=2, seed=17), train_set)
        wpath = tmp_path / "weights.bin"
        export_weights(result.model, wpath)
        exported = DeltaGRUNet()
        load_exported_into_model(wpath, exported)
        feats = torch.from_numpy(np.stack(val_set.features))
        proxy_dec = exported.decisions(feats, 0.2).tolist()
        primary_dec = _primary_infer(wpath, [feature_root / "val" / n for n in val_set.names], 0.2)
        agree = np.mean(np.array(proxy_dec) == np.array(primary_dec))
        assert agree >= 0.75, f"agreement {agree:.3f}"


class TestNormalization:
    def test_constant_channel_span_guard(self):
        # degenerate channel: the minimum-span guard kicks in and the scale
        # saturates at the Q{16,12} format ceiling instead of exploding
        v = np.full(5000, 300.0)
        off, scale = channel_constants(v)
        assert off == 300
        assert scale == 32767

    def test_coverage_of_train_values(self):
        rng = np.random.default_rng(4)
        v = rng.normal(500, 60, size=20000)
        off, scale = channel_constants(v)
        mapped = apply_constants(v, off, scale)
        assert np.mean(mapped <= 4095) >= 0.99

    def test_updates_bank_file(self, feature_root, tmp_path):
        bank_path = tmp_path / "bank.txt"
        lines = ["format_version = 1", "sample_rate = 8000", "n_channels = 10",
                 "b_bits = 12", "a_bits = 8", "frac_b = 11", "frac_a = 6"]
        for i in range(10):
            lines += [
                f"channel.{i}.center_hz = {500 + 300 * i}.0",
                f"channel.{i}.enabled = 1",
                f"channel.{i}.offset_raw = 0",
                f"channel.{i}.scale_raw = 16384",
                f"channel.{i}.sos.0.b0_raw = 192",
                f"channel.{i}.sos.0.a1_raw = -100",
                f"channel.{i}.sos.0.a2_raw = 55",
                f"channel.{i}.sos.1.b0_raw = 190",
                f"channel.{i}.sos.1.a1_raw = -90",
                f"channel.{i}.sos.1.a2_raw = 50",
            ]
        bank_path.write_text("\n".join(lines) + "\n")
        train_set = load_split(feature_root / "train")
        report = compute_normalization(train_set.features, bank_path)
        assert set(report) == set(range(10))
        text = bank_path.read_text()
        assert "channel.0.offset_raw = 0\n" not in text or report[0]["offset_raw"] == 0
        for ch, info in report.items():
            assert f"channel.{ch}.scale_raw = {info['scale_raw']}" in text
            assert info["coverage"] >= 0.99

    def test_deterministic(self, feature_root, tmp_path):
        train_set = load_split(feature_root / "train")
        v = np.concatenate([f[:, 0] for f in train_set.features]).astype(float)
        assert channel_constants(v) == channel_constants(v.copy())


# ---------------------------------------------------------------------------
# corpus-gated criteria (need the real speech-commands corpus; run nightly)

requires_corpus = pytest.mark.skipif(
    "DKWS_DATASET_ROOT" not in __import__("os").environ,
    reason="full-corpus training needs DKWS_DATASET_ROOT",
)


@pytest.fixture(scope="session")
def corpus_training(tmp_path_factory):
    """One full-corpus training run shared by the nightly criteria."""
    import os

    root = Path(os.environ["DKWS_DATASET_ROOT"])
    tmp = tmp_path_factory.mktemp("corpus")
    feat_dir = tmp / "features"
    subprocess.run(
        [sys.executable, "-m", "dkws", "features", "--dataset-root", str(root),
         "--out", str(feat_dir)],
        check=True,
    )
    train_set = load_split(feat_dir / "train")
    val_set = load_split(feat_dir / "val")
    result = train(TrainConfig(epochs=40, theta_train=0.2, seed=0), train_set, val_set)
    wpath = tmp / "weights.bin"
    export_weights(result.model, wpath)
    test_set = load_split(feat_dir / "test")
    files = [feat_dir / "test" / n for n in test_set.names]
    return wpath, test_set, files


def _infer_rows(weight_path, feature_files, theta, cost_model=None):
    cmd = [sys.executable, "-m", "dkws", "infer", "--weights", str(weight_path),
           "--theta", str(theta)]
    if cost_model:
        cmd += ["--cost-model", str(cost_model)]
    cmd += [str(f) for f in feature_files]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return list(csv.DictReader(io.StringIO(proc.stdout)))


@requires_corpus
def test_s1_full_training_accuracy(corpus_training):
    """>= 85% 12-class test accuracy through the primary engine; 11-class >= 12-class."""
    wpath, test_set, files = corpus_training
    decisions = np.array(_primary_infer(wpath, files, 0.2))
    labels = test_set.labels
    acc12 = float(np.mean(decisions == labels))
    keep = labels != 1  # excluding the unknown class
    acc11 = float(np.mean(decisions[keep] == labels[keep]))
    assert acc12 >= 0.85
    assert acc11 >= acc12


@requires_corpus
def test_s2_sparsity_reproduction(corpus_training):
    """Mean test sparsity at theta=0.2 in [0.80, 0.92]; accuracy drop <= 1.5%."""
    wpath, test_set, files = corpus_training
    rows = _infer_rows(wpath, files, 0.2)
    sparsity = float(np.mean([float(r["sparsity"]) for r in rows]))
    assert 0.80 <= sparsity <= 0.92
    dec_sparse = np.array([int(r["decision"]) for r in rows])
    dec_dense = np.array([int(r["decision"]) for r in _infer_rows(wpath, files, 0.0)])
    labels = test_set.labels
    drop = float(np.mean(dec_dense == labels)) - float(np.mean(dec_sparse == labels))
    assert drop <= 0.015


@requires_corpus
def test_s3_ratio_reproduction(corpus_training, tmp_path):
    """Dense/sparse latency ratio in [2.1, 2.7] and energy ratio in [3.0, 3.8]."""
    wpath, _, files = corpus_training
    cm = tmp_path / "cost_model.txt"
    subprocess.run(
        [sys.executable, "-m", "dkws", "calibrate", "--cost-model", str(cm)], check=True
    )
    dense = _infer_rows(wpath, files, 0.0, cost_model=cm)
    sparse = _infer_rows(wpath, files, 0.2, cost_model=cm)
    lat_d = np.mean([float(r["latency_ms"]) for r in dense])
    lat_s = np.mean([float(r["latency_ms"]) for r in sparse])
    e_d = np.mean([float(r["energy_nj"]) for r in dense])
    e_s = np.mean([float(r["energy_nj"]) for r in sparse])
    assert 2.1 <= lat_d / lat_s <= 2.7
    assert 3.0 <= e_d / e_s <= 3.8
