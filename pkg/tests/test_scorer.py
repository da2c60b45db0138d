import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egoact.data import FrameSample, SynthConfig, make_splits, synth_generate
from egoact.gradcheck import FLOOR, STEP, rel_error
from egoact.scorer import (ScorerParams, ScorerTrainConfig, init_scorer, load_scorer, loss_and_grad,
                           predict_dataset, sample_secondaries, save_scorer, score, train_frame_model)


def frame(rng, D=3, n=4, label=0):
    return FrameSample(rng.standard_normal(D), rng.standard_normal((n, D)), label)


def test_single_secondary_is_the_max():
    rng = np.random.default_rng(0)
    fr = frame(rng, n=1)
    p = ScorerParams.init(4, 3, 1, scale=1.0)
    out = score(p, fr)
    assert np.all(out.argmax_secondary == 0)
    np.testing.assert_allclose(out.scores, p.W_p @ fr.primary + p.b + p.W_z @ fr.secondaries[0])


def test_zero_params_uniform():
    out = score(ScorerParams.zeros(5, 3), frame(np.random.default_rng(1)))
    np.testing.assert_array_equal(out.scores, 0.0)
    np.testing.assert_allclose(out.probs, 0.2)


def test_hand_set_weights_match_enumeration():
    W_p = np.array([[1.0, 0.0], [0.0, 1.0]])
    W_z = np.array([[1.0, -1.0], [0.5, 2.0]])
    b = np.array([0.1, -0.2])
    fr = FrameSample(np.array([0.3, -0.4]), np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 2.0]]), 0)
    out = score(ScorerParams(W_p, W_z, b), fr)
    for a in range(2):
        best = max(W_z[a] @ fr.secondaries[z] for z in range(3))
        assert out.scores[a] == pytest.approx(W_p[a] @ fr.primary + b[a] + best, abs=1e-15)
    assert list(out.argmax_secondary) == [0, 2]


def test_tie_goes_to_lowest_index():
    fr = FrameSample(np.zeros(2), np.array([[1.0, 0.0], [1.0, 0.0]]), 0)
    out = score(ScorerParams(np.zeros((1, 2)), np.ones((1, 2)), np.zeros(1)), fr)
    assert out.argmax_secondary[0] == 0


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        score(ScorerParams.zeros(2, 4), frame(np.random.default_rng(0), D=3))


def test_perfect_prediction_loss_and_grads_vanish():
    fr = FrameSample(np.array([1.0, 0.0]), np.zeros((1, 2)), 0)
    p = ScorerParams(np.array([[100.0, 0.0], [-100.0, 0.0]]), np.zeros((2, 2)), np.zeros(2))
    loss, g = loss_and_grad(p, [(fr, None)])
    assert loss < 1e-50
    assert max(np.abs(a).max() for a in g.named_arrays().values()) < 1e-50


def test_random_instance_matches_finite_differences():
    rng = np.random.default_rng(3)
    p = ScorerParams(rng.standard_normal((3, 4)), rng.standard_normal((3, 4)), rng.standard_normal(3))
    batch = [(frame(rng, D=4, n=3, label=i % 3), None) for i in range(3)]
    _, g = loss_and_grad(p, batch)
    worst = 0.0
    for name, arr in p.named_arrays().items():
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + STEP
            lp = loss_and_grad(p, batch)[0]
            arr[idx] = old - STEP
            lm = loss_and_grad(p, batch)[0]
            arr[idx] = old
            worst = max(worst, rel_error((lp - lm) / (2 * STEP), g.named_arrays()[name][idx], FLOOR))
    assert worst < 1e-4


def test_batch_of_two_is_mean():
    rng = np.random.default_rng(4)
    p = ScorerParams.init(3, 3, 0, scale=1.0)
    b1, b2 = (frame(rng, label=0), None), (frame(rng, label=2), None)
    l1, g1 = loss_and_grad(p, [b1])
    l2, g2 = loss_and_grad(p, [b2])
    l12, g12 = loss_and_grad(p, [b1, b2])
    assert l12 == pytest.approx((l1 + l2) / 2, abs=1e-14)
    np.testing.assert_allclose(g12.W_z, (g1.W_z + g2.W_z) / 2, atol=1e-14)


def test_sample_k_covers_all():
    fr = frame(np.random.default_rng(0), n=3)
    assert list(sample_secondaries(fr, 5, np.random.default_rng(0))) == [0, 1, 2]


def test_sample_k1_uniform():
    fr = frame(np.random.default_rng(0), n=3)
    rng = np.random.default_rng(7)
    counts = np.bincount([sample_secondaries(fr, 1, rng)[0] for _ in range(30_000)], minlength=3)
    assert np.all(np.abs(counts / 30_000 - 1 / 3) < 0.02)


def test_sample_deterministic():
    fr = frame(np.random.default_rng(0), n=20)
    a = sample_secondaries(fr, 5, np.random.default_rng(11))
    b = sample_secondaries(fr, 5, np.random.default_rng(11))
    np.testing.assert_array_equal(a, b)


def test_zero_lr_keeps_init():
    ds = synth_generate(SynthConfig(num_sequences=2, seed=0))
    cfg = ScorerTrainConfig(learning_rate=0.0, max_iterations=20, seed=5)
    params, hist = train_frame_model(ds, cfg)
    init = init_scorer(ds, cfg)
    for k, v in params.named_arrays().items():
        np.testing.assert_array_equal(v, init.named_arrays()[k])
    assert len(hist.rows) == 20


def test_separable_primary_reaches_99_percent():
    ds = synth_generate(SynthConfig(num_actions=6, feature_dim=16, noise_sigma=0.05,
                                    discriminative_placement="primary", num_sequences=20, seed=0))
    params, _ = train_frame_model(ds, ScorerTrainConfig(learning_rate=0.05, max_iterations=500, seed=0))
    outs = predict_dataset(params, ds)
    acc = np.mean([o.label == f.label for o, f in zip(itertools.chain(*outs), ds.frames())])
    assert acc >= 0.99


def test_training_is_deterministic():
    ds = synth_generate(SynthConfig(num_sequences=3, seed=1))
    cfg = ScorerTrainConfig(learning_rate=0.05, max_iterations=50, seed=2)
    a, ha = train_frame_model(ds, cfg)
    b, hb = train_frame_model(ds, cfg)
    assert ha.rows == hb.rows
    np.testing.assert_array_equal(a.W_z, b.W_z)


def test_freeze_secondary_keeps_wz_zero():
    ds = synth_generate(SynthConfig(num_sequences=3, seed=1))
    p, _ = train_frame_model(ds, ScorerTrainConfig(learning_rate=0.05, max_iterations=30,
                                                   freeze_secondary=True))
    assert not p.W_z.any()


def test_predict_zero_params_uniform_and_stable():
    ds = synth_generate(SynthConfig(num_actions=4, num_sequences=2, seed=1))
    z = ScorerParams.zeros(4, ds.feature_dim)
    a = predict_dataset(z, ds, use_all_secondaries=False, num_sampled=2, seed=3)
    b = predict_dataset(z, ds, use_all_secondaries=False, num_sampled=2, seed=3)
    for oa, ob in zip(itertools.chain(*a), itertools.chain(*b)):
        np.testing.assert_allclose(oa.probs, 0.25)
        np.testing.assert_array_equal(oa.argmax_secondary, ob.argmax_secondary)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 6))
def test_subset_max_monotone(seed, k):
    rng = np.random.default_rng(seed)
    p = ScorerParams(rng.standard_normal((3, 4)), rng.standard_normal((3, 4)), rng.standard_normal(3))
    fr = frame(rng, D=4, n=6)
    full = score(p, fr).scores
    sub = score(p, fr, sample_secondaries(fr, k, rng)).scores
    assert np.all(full >= sub - 1e-12)


def test_checkpoint_round_trip(tmp_path):
    p = ScorerParams.init(3, 5, 9, scale=1.0)
    save_scorer(p, tmp_path / "s.json", {"note": "x"})
    q = load_scorer(tmp_path / "s.json")
    for k, v in p.named_arrays().items():
        np.testing.assert_array_equal(v, q.named_arrays()[k])
