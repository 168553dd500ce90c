import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from threadpoolctl import threadpool_limits

from voiceadapt import arp, nn
from voiceadapt.audio import AudioClip, FeatureConfig, write_wav
from voiceadapt.corpus import synthetic_ambient_clips
from voiceadapt.errors import ClipTooShortError, IngestError, ShapeError, ValidationError

FC = FeatureConfig()
REDUCED = dict(block_filter_counts=(4, 8, 12, 16, 24, 32), embedding_dim=64, dropout_p=0.0,
               batch_size=8, epochs=300, seed=0)
OVERFIT_LABELS = np.linspace(1.5, 9.5, 8)


def _closed_form_param_count(filters, embedding):
    total, cin = 0, 1
    for f in filters:
        total += 9 * cin * f + 2 * f + 9 * f * f + 2 * f
        cin = f
    return total + (cin * embedding + embedding) + (embedding + 1)


def _overfit_features():
    clips = synthetic_ambient_clips(OVERFIT_LABELS, n_frames=64, seed=0)
    return arp.stack_features([arp.clip_features(c, FC) for c in clips], 64).astype(np.float64)


@pytest.fixture(scope="module")
def default_model():
    return arp.build_arp()


# architecture --------------------------------------------------------------


def test_default_config_invariants():
    cfg = arp.ArpConfig()
    assert cfg.block_filter_counts == (16, 32, 64, 128, 256, 512)
    assert (cfg.embedding_dim, cfg.learning_rate, cfg.batch_size, cfg.epochs) == (2048, 0.005, 64, 100)
    for bad in [(1, 2, 3, 4, 5), (1, 2, 3, 4, 5, 5), (8, 4, 16, 32, 64, 128)]:
        with pytest.raises(ValidationError):
            arp.ArpConfig(block_filter_counts=bad)
    assert arp.ArpConfig.from_dict(cfg.to_dict()) == cfg


def test_default_output_is_scalar(default_model, rng):
    x = rng.standard_normal((2, 1, 483, 64))
    assert nn.forward(default_model, x).shape == (2, 1)


def test_layer_structure(default_model):
    kinds = [layer.spec.kind for layer in default_model.layers]
    block = ["conv2d", "batch_norm", "relu", "conv2d", "batch_norm", "relu", "avg_pool2d"]
    assert kinds == block * 6 + ["global_avg_pool", "fully_connected", "relu", "dropout", "fully_connected"]


@pytest.mark.parametrize("filters,embedding", [((16, 32, 64, 128, 256, 512), 2048),
                                               ((8, 16, 32, 64, 128, 256), 2048),
                                               ((4, 8, 12, 16, 24, 32), 64)])
def test_parameter_count_closed_form(filters, embedding):
    w = arp.build_arp(arp.ArpConfig(block_filter_counts=filters, embedding_dim=embedding))
    assert w.n_parameters() == _closed_form_param_count(filters, embedding)


def test_too_small_input_has_hint():
    with pytest.raises(ShapeError, match="need at least 64"):
        arp.build_arp(n_frames=63)
    with pytest.raises(ShapeError, match="need at least 64"):
        arp.build_arp(arp.ArpConfig(features=FeatureConfig(n_mels=32)))


def test_metadata_carries_features_and_minimum(default_model):
    assert default_model.metadata["model"] == "arp"
    assert default_model.metadata["min_frames"] == 64
    assert arp.weights_features(default_model) == FC


# gradients -----------------------------------------------------------------


def _draw(shape):
    def draw(seed):
        r = np.random.default_rng(seed)
        return r.standard_normal(shape), r.uniform(1, 10, (shape[0], 1))
    return draw


@pytest.mark.parametrize("training", [True, False])
def test_two_block_gradient_check(training):
    w = arp.build_stack((8, 16), 8, 8, embedding_dim=16, dropout_p=0.0, seed=1)
    _, _, report = nn.kink_free_inputs(w, _draw((2, 1, 8, 8)), training=training)
    assert max(report.values()) < 1e-4


def test_halved_config_gradient_check_sampled():
    # too many units to find an input with no kink anywhere, so sample three
    # kink-free entries per tensor instead
    cfg = arp.ArpConfig(block_filter_counts=(8, 16, 32, 64, 128, 256))
    w = arp.build_arp(cfg, n_frames=64)
    x, y = _draw((2, 1, 64, 64))(0)
    report, kinks = nn.check_gradients(w, x, y, sample=3, rng=np.random.default_rng(0),
                                       skip_kinks=True, return_kinks=True)
    assert len(report) == sum(len(layer.params) for layer in w.layers)
    assert not any(np.isnan(v) for v in report.values())
    assert max(report.values()) < 1e-4
    assert kinks <= len(report)


# training ------------------------------------------------------------------


@pytest.fixture(scope="module")
def overfit_run():
    x = _overfit_features()
    y = OVERFIT_LABELS.reshape(-1, 1)
    weights, history = arp.train_arp_arrays(x, y, arp.ArpConfig(**REDUCED), x_val=x, y_val=y,
                                            select_best=False)
    return x, y, weights, history


def test_overfit_eight_clips(overfit_run):
    x, y, weights, _ = overfit_run
    assert nn.evaluate_mse(weights, x, y) < 0.05


def test_training_loss_trend(overfit_run):
    *_, history = overfit_run
    loss = np.array([r["loss"] for r in history if r["split"] == "train"])
    assert len(loss) == 300
    rises = np.diff(loss[9:]) > 1e-3
    assert rises.mean() <= 0.05
    assert loss[-1] < 1e-3 * loss[0]


def test_label_shuffle_control(overfit_run):
    x, y, _, _ = overfit_run
    _, history = arp.train_arp_arrays(x, y, arp.ArpConfig(**REDUCED), x_val=x, y_val=y,
                                      shuffle_labels=True, select_best=False)
    val = np.array([r["loss"] for r in history if r["split"] == "val"])
    label_var = float(np.var(OVERFIT_LABELS))
    assert val[-1] >= label_var
    assert val[-50:].mean() >= label_var


def test_best_validation_checkpoint_is_selected():
    x = _overfit_features()
    y = OVERFIT_LABELS.reshape(-1, 1)
    cfg = arp.ArpConfig(**{**REDUCED, "epochs": 6})
    best, history = arp.train_arp_arrays(x[:6], y[:6], cfg, x_val=x[6:], y_val=y[6:])
    val = [r["loss"] for r in history if r["split"] == "val"]
    assert nn.evaluate_mse(best, x[6:], y[6:]) == pytest.approx(min(val))


# inference -----------------------------------------------------------------


def _with_head_bias(weights, bias):
    w = weights.copy()
    w.layers[-1].params["weight"][:] = 0.0
    w.layers[-1].params["bias"][:] = bias
    return w


@pytest.mark.parametrize("bias,value", [(50.0, 10.0), (-50.0, 1.0), (4.25, 4.25)])
def test_prediction_is_clamped(bias, value, rng):
    w = _with_head_bias(arp.build_arp(arp.ArpConfig(**REDUCED), n_frames=64), bias)
    r = arp.predict_ar(w, AudioClip(rng.standard_normal(FC.min_samples_for_frames(70)) * 0.1, 22050))
    assert r.value == value
    assert r.raw == pytest.approx(bias)


@settings(max_examples=15)
@given(st.floats(0.0, 1.0), st.integers(0, 1000))
def test_any_clip_rating_in_range(amplitude, seed):
    w = arp.build_arp(arp.ArpConfig(**REDUCED), n_frames=64)
    x = np.random.default_rng(seed).uniform(-1, 1, FC.min_samples_for_frames(64)) * amplitude
    assert 1.0 <= arp.predict_ar(w, AudioClip(x, 22050)).value <= 10.0


def test_silence_and_scaled_silence_agree(default_model, rng):
    n = 15 * 22050
    silence = arp.predict_ar(default_model, AudioClip(np.zeros(n), 22050))
    half = arp.predict_ar(default_model, AudioClip(0.5 * np.zeros(n), 22050))
    assert silence == half
    hiss = rng.standard_normal(n) * 1e-9
    assert arp.predict_ar(default_model, AudioClip(hiss, 22050)) == arp.predict_ar(
        default_model, AudioClip(0.5 * hiss, 22050))


def test_prediction_is_deterministic_and_resamples(default_model, rng):
    clip = AudioClip(rng.standard_normal(44100 * 3) * 0.1, 44100)
    a, b = arp.predict_ar(default_model, clip), arp.predict_ar(default_model, clip)
    assert a == b


def test_short_clip_rejected(default_model):
    with pytest.raises(ClipTooShortError, match="too short"):
        arp.predict_ar(default_model, AudioClip(np.zeros(FC.min_samples_for_frames(63)), 22050))
    with pytest.raises(ClipTooShortError):
        arp.predict_ar(default_model, AudioClip(np.zeros(500), 22050))


def test_inference_latency_single_thread(default_model, rng):
    w = default_model.astype(np.float32)
    clip = AudioClip(rng.standard_normal(15 * 22050) * 0.1, 22050)
    with threadpool_limits(limits=1):
        arp.predict_ar(w, clip)
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            arp.predict_ar(w, clip)
            times.append(time.perf_counter() - t0)
    assert float(np.median(times)) <= 0.100


def test_eval_predictions_ignore_batch_composition(rng):
    w = arp.build_arp(arp.ArpConfig(**REDUCED), n_frames=64)
    for layer in w.layers:
        if "running_var" in layer.buffers:
            layer.buffers["running_mean"][:] = rng.standard_normal(layer.buffers["running_mean"].shape)
            layer.buffers["running_var"][:] = rng.uniform(0.5, 2, layer.buffers["running_var"].shape)
    x = rng.standard_normal((6, 1, 64, 64))
    alone = np.concatenate([nn.forward(w, x[i:i + 1]) for i in range(6)])
    together = nn.forward(w, x)
    shuffled = nn.forward(w, x[::-1])[::-1]
    np.testing.assert_allclose(together, alone, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(shuffled, alone, rtol=1e-12, atol=1e-12)


def test_float32_inference_matches_float64(tmp_path, rng):
    w = arp.build_arp(arp.ArpConfig(**REDUCED), n_frames=64)
    nn.save_weights(w, tmp_path / "arp.weights")
    w32 = arp.load_arp(tmp_path / "arp.weights")
    assert w32.dtype == np.float32
    clip = AudioClip(rng.standard_normal(FC.min_samples_for_frames(80)) * 0.2, 22050)
    assert arp.predict_ar(w32, clip).raw == pytest.approx(arp.predict_ar(w, clip).raw, rel=1e-4, abs=1e-4)


def test_load_rejects_other_models(tmp_path):
    from voiceadapt import etv
    nn.save_weights(etv.build_etv(), tmp_path / "e.weights")
    with pytest.raises(ValidationError):
        arp.load_arp(tmp_path / "e.weights")


# data ingestion ------------------------------------------------------------


def test_seeded_split_reference_proportions():
    s = arp.seeded_split(2890, seed=0)
    assert (len(s["train"]), len(s["val"]), len(s["test"])) == (2200, 245, 445)
    assert sorted(s["train"] + s["val"] + s["test"]) == list(range(2890))
    assert arp.seeded_split(100, 3) == arp.seeded_split(100, 3)


def test_dataset_rejects_file_in_two_splits():
    recs = [arp.DeltaRecord(arp.Path("a.wav"), 3.0), arp.DeltaRecord(arp.Path("a.wav"), 3.0)]
    with pytest.raises(ValidationError, match="both"):
        arp.DeltaDataset(recs, {"train": [0], "test": [1]})
    with pytest.raises(ValidationError):
        arp.DeltaDataset([arp.DeltaRecord(arp.Path("b.wav"), 11.0)], {"train": [0]})


def test_manifest_errors_carry_line_numbers(tmp_path):
    m = tmp_path / "manifest.csv"
    m.write_text("filename,annoyance\na.wav,3\nb.wav,abc\na.wav,4\n,5\nc.wav,12\n")
    with pytest.raises(IngestError) as err:
        arp.load_delta_manifest(m, tmp_path)
    assert [ln for ln, _ in err.value.errors] == [3, 4, 5, 6]
    m.write_text("name,score\na.wav,3\n")
    with pytest.raises(IngestError, match="header"):
        arp.load_delta_manifest(m, tmp_path)


def _write_manifest(tmp_path, labels):
    clips = synthetic_ambient_clips(labels, n_frames=70, seed=4)
    lines = ["filename,annoyance"]
    for i, (c, lab) in enumerate(zip(clips, labels)):
        write_wav(tmp_path / f"clip{i}.wav", c)
        lines.append(f"clip{i}.wav,{lab}")
    (tmp_path / "manifest.csv").write_text("\n".join(lines) + "\n")
    return tmp_path / "manifest.csv"


def test_split_file_and_end_to_end_training(tmp_path):
    labels = [2.0, 3.5, 5.0, 6.5, 8.0, 9.0]
    manifest = _write_manifest(tmp_path, labels)
    split = tmp_path / "split.csv"
    split.write_text("filename,split\nclip0.wav,train\nclip1.wav,train\nclip2.wav,train\n"
                     "clip3.wav,train\nclip4.wav,val\nclip5.wav,test\n")
    ds = arp.load_delta_manifest(manifest, tmp_path, split_file=split)
    assert [len(ds.subset(s)) for s in ("train", "val", "test")] == [4, 1, 1]
    records = []
    cfg = arp.ArpConfig(**{**REDUCED, "epochs": 2})
    weights, metrics = arp.train_arp(ds, cfg, log=records.append)
    assert metrics.test_mse is not None and metrics.test_mae is not None
    assert metrics.test_mae ** 2 <= metrics.test_mse + 1e-12
    assert [r["epoch"] for r in records] == [1, 1, 2, 2]
    assert {r["split"] for r in records} == {"train", "val"}
    bad = tmp_path / "bad_split.csv"
    bad.write_text("filename,split\nclip0.wav,holdout\n")
    with pytest.raises(IngestError):
        arp.load_delta_manifest(manifest, tmp_path, split_file=bad)
