import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voiceadapt import etv, nn
from voiceadapt.corpus import load_shipped_corpus
from voiceadapt.errors import ValidationError
from voiceadapt.types import DISTANCE_RANGE_CM, VOICE_ORDER, VOICE_RANGES, EnvironmentContext, UserProfile

from factories import make_tuple, random_tuples


# filtering -----------------------------------------------------------------


def test_filter_examples():
    keep = make_tuple(similarity=1.0, ux=6)
    drop_ux = make_tuple(similarity=1.0, ux=5)
    drop_sim = make_tuple(similarity=0.99, ux=9)
    assert etv.filter_training_set([keep, drop_ux, drop_sim]) == [keep]


def test_filter_matches_linear_scan():
    tuples = random_tuples(100, seed=4)
    expected = []
    for t in tuples:
        if t.phonetic_similarity >= 1.0 - 1e-9 and t.ux > 5:
            expected.append(t)
    assert 0 < len(expected) < 100
    assert etv.filter_training_set(tuples) == expected


def test_filter_empty_result():
    with pytest.raises(ValidationError, match="no admissible tuples"):
        etv.filter_training_set([make_tuple(ux=2), make_tuple(similarity=0.5)])


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_filter_is_idempotent(seed):
    tuples = random_tuples(30, seed=seed) + [make_tuple()]
    once = etv.filter_training_set(tuples)
    assert etv.filter_training_set(once) == once


# augmentation --------------------------------------------------------------


def test_augment_zero_noise_duplicates():
    tuples = random_tuples(5, seed=1)
    out = etv.augment(tuples, noise_scale=0.0, copies=3, seed=0)
    assert len(out) == 15
    for i, t in enumerate(tuples):
        ex = etv.to_example(t)
        assert out[3 * i:3 * i + 3] == [ex] * 3


def test_augment_is_seeded():
    tuples = random_tuples(10, seed=2)
    assert etv.augment(tuples, 0.05, 4, seed=7) == etv.augment(tuples, 0.05, 4, seed=7)
    assert etv.augment(tuples, 0.05, 4, seed=7) != etv.augment(tuples, 0.05, 4, seed=8)


def test_augment_only_touches_inputs():
    tuples = random_tuples(10, seed=3)
    out = etv.augment(tuples, 0.5, 2, seed=0)
    for i, t in enumerate(tuples):
        assert out[2 * i].targets == tuple(t.voice.as_array())
        assert out[2 * i].inputs != etv.to_example(t).inputs


def test_augment_noise_scale_per_feature():
    tuples = random_tuples(200, seed=5)
    x = np.array([etv.to_example(t).inputs for t in tuples])
    out = etv.augment(tuples, 0.01, 20, seed=1)
    jit = np.array([e.inputs for e in out]).reshape(200, 20, 5)
    noise = jit - x[:, None, :]
    inside = (noise != 0).all(axis=2)
    ratio = noise[inside].std(axis=0) / (0.01 * x.std(axis=0))
    np.testing.assert_allclose(ratio, 1.0, atol=0.05)


def test_augment_keeps_distance_in_range():
    edge = [make_tuple(distance=60.0), make_tuple(distance=500.0), make_tuple(distance=61.0)]
    out = etv.augment(edge + random_tuples(20, seed=9), noise_scale=3.0, copies=500, seed=2)
    d = np.array([e.inputs[1] for e in out])
    assert len(d) >= 10_000
    assert d.min() >= DISTANCE_RANGE_CM[0] and d.max() <= DISTANCE_RANGE_CM[1]
    x = np.array([e.inputs for e in out])
    np.testing.assert_array_equal(etv.clamp_inputs(x), x)


def test_augment_rejects_negative_noise():
    with pytest.raises(ValidationError):
        etv.augment(random_tuples(2), noise_scale=-1.0)


# normalisation -------------------------------------------------------------


@given(st.integers(0, 2**32 - 1))
def test_input_normalisation_round_trip(seed):
    r = np.random.default_rng(seed)
    x = r.uniform([1, 60, 1, 1, 0.04], [10, 500, 6, 5, 0.78], size=(50, 5))
    norm = etv.Normalizer.fit(x)
    np.testing.assert_allclose(norm.denorm_inputs(norm.norm_inputs(x)), x, rtol=0, atol=1e-9)
    z = norm.norm_inputs(x)
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)


def test_output_normalisation_maps_ranges_to_unit_interval():
    norm = etv.Normalizer.fit(np.ones((3, 5)))
    lo = np.array([VOICE_RANGES[k][0] for k in VOICE_ORDER])
    hi = np.array([VOICE_RANGES[k][1] for k in VOICE_ORDER])
    np.testing.assert_allclose(norm.norm_outputs(lo), 0.0)
    np.testing.assert_allclose(norm.norm_outputs(hi), 1.0)
    y = np.array([1.0, 1.0, 1.0, 0.0])
    np.testing.assert_allclose(norm.denorm_outputs(norm.norm_outputs(y)), y, atol=1e-12)


def test_normalizer_stored_and_order_checked(tmp_path):
    norm = etv.Normalizer.fit(np.random.default_rng(0).standard_normal((10, 5)))
    w = etv.build_etv(etv.EtvConfig(), norm)
    nn.save_weights(w, tmp_path / "e.weights")
    back = etv.load_etv(tmp_path / "e.weights")
    assert etv.weights_normalizer(back) == norm
    d = norm.to_dict()
    d["input_features"] = list(reversed(d["input_features"]))
    with pytest.raises(ValidationError, match="order"):
        etv.Normalizer.from_dict(d)


def test_load_rejects_weights_without_normalisation(tmp_path):
    nn.save_weights(etv.build_etv(), tmp_path / "e.weights")
    with pytest.raises(ValidationError):
        etv.load_etv(tmp_path / "e.weights")


# training ------------------------------------------------------------------


def test_architecture():
    w = etv.build_etv()
    kinds = [layer.spec.kind for layer in w.layers]
    assert kinds == ["fully_connected", "relu", "fully_connected", "relu", "fully_connected"]
    assert [layer.params["weight"].shape for layer in w.layers if layer.params] == [(5, 16), (16, 32), (32, 4)]


def test_full_mlp_gradient_check():
    w = etv.build_etv(etv.EtvConfig(seed=3))
    r = np.random.default_rng(0)
    x, y = r.standard_normal((6, 5)), r.uniform(0, 1, (6, 4))
    assert max(nn.check_gradients(w, x, y).values()) < 1e-4


def _memorised():
    tuples = random_tuples(16, seed=11, similarity=1.0, ux=8.0)
    cfg = etv.EtvConfig(holdout_fraction=0.0, augment_copies=0, epochs=2000, batch_size=1, seed=0)
    weights, metrics = etv.train_etv(tuples, cfg)
    return tuples, weights, metrics


@pytest.fixture(scope="module")
def memorised():
    return _memorised()


def test_memorisation_mse(memorised):
    _, _, metrics = memorised
    assert metrics.n_train == 16 and metrics.n_holdout == 0
    assert metrics.train_mse < 1e-3


def test_memorised_contexts_reproduce_voice(memorised):
    tuples, weights, _ = memorised
    for t in tuples:
        v = etv.adapt_voice(weights, t.context, t.user)
        np.testing.assert_allclose(v.as_array(), t.voice.as_array(), atol=0.05)


def test_constant_target_converges():
    target = (1.3, 0.9, 1.7, 2.0)
    tuples = random_tuples(64, seed=12, similarity=1.0, ux=9.0, voice=target)
    cfg = etv.EtvConfig(holdout_fraction=0.0, augment_copies=0, epochs=6000, batch_size=64,
                        learning_rate=3e-3)
    weights, _ = etv.train_etv(tuples, cfg)
    norm = etv.weights_normalizer(weights)
    x = np.array([etv.to_example(t).inputs for t in tuples])
    out = nn.forward(weights, norm.norm_inputs(x))
    np.testing.assert_allclose(out, np.broadcast_to(norm.norm_outputs(np.array(target)), out.shape),
                               rtol=0, atol=1e-2)


def test_training_is_deterministic():
    tuples = random_tuples(60, seed=13, similarity=1.0, ux=7.0)
    cfg = etv.EtvConfig(epochs=5)
    w1, m1 = etv.train_etv(tuples, cfg)
    w2, m2 = etv.train_etv(tuples, cfg)
    assert m1.history == m2.history
    for a, b in zip(w1.layers, w2.layers):
        for k in a.params:
            assert a.params[k].tobytes() == b.params[k].tobytes()


def test_holdout_is_taken_before_augmentation():
    tuples = random_tuples(40, seed=14, similarity=1.0, ux=7.0)
    _, m = etv.train_etv(tuples, etv.EtvConfig(epochs=1))
    assert m.n_holdout == 4
    assert m.n_train == 36 * 5


def test_training_on_filtered_shipped_corpus_meets_target():
    _, metrics = etv.train_etv(load_shipped_corpus("study_corpus.csv"), etv.EtvConfig())
    assert metrics.holdout_mse <= 0.15


# inference -----------------------------------------------------------------


def _wild_model():
    norm = etv.Normalizer.fit(np.random.default_rng(1).uniform([1, 60, 1, 1, 0.04], [10, 500, 6, 5, 0.8],
                                                                (20, 5)))
    w = etv.build_etv(etv.EtvConfig(seed=5), norm)
    for layer in w.layers:
        for v in layer.params.values():
            v *= 30.0
    return w


WILD = _wild_model()


@settings(max_examples=200)
@given(st.floats(1, 10), st.floats(1, 1e5), st.floats(1e-3, 1e3), st.integers(1, 5), st.integers(1, 6))
def test_adapt_voice_always_in_range(ar, distance, t30, hearing, cefr):
    v = etv.adapt_voice(WILD, EnvironmentContext(ar, distance, t30), UserProfile(hearing, cefr))
    for k in VOICE_ORDER:
        lo, hi = VOICE_RANGES[k]
        assert lo <= getattr(v, k) <= hi


def test_adapt_voice_is_deterministic():
    ctx, user = EnvironmentContext(6.5, 250.0, 0.56), UserProfile(3, 4)
    assert etv.adapt_voice(WILD, ctx, user) == etv.adapt_voice(WILD, ctx, user)


def test_wild_model_actually_needs_clamping():
    raw = etv.predict_raw(WILD, np.array([[10, 500, 1, 5, 0.78], [1, 60, 6, 1, 0.04]]))
    lo = np.array([VOICE_RANGES[k][0] for k in VOICE_ORDER])
    hi = np.array([VOICE_RANGES[k][1] for k in VOICE_ORDER])
    assert np.any((raw < lo) | (raw > hi))
