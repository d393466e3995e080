import numpy as np
import pytest

from ovtal.classifier import (
    ClassifierConfig,
    NmsConfig,
    Vocabulary,
    classify,
    fuse_scores,
    pool_instance_features,
    roi_align_1d,
    soft_nms,
)
from ovtal.exceptions import InputError
from ovtal.localizer import ActionInstance


def rng_for(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def orthogonal_vocab(c=4, d=8):
    protos = np.eye(c, d)
    return Vocabulary(names=[f"class_{i}" for i in range(c)], prototypes=protos,
                      novel_mask=np.array([False] * (c // 2) + [True] * (c - c // 2)))


# ------------------------------------------------------------------ RoI-Align

def test_roi_align_constant_sequence():
    feats = np.tile([2.0, -1.0, 0.5], (12, 1))
    for interval in [(0.0, 12.0), (3.2, 7.9), (0.5, 1.0)]:
        for bins in (1, 3, 8):
            np.testing.assert_allclose(roi_align_1d(feats, interval, bins), [2.0, -1.0, 0.5])


def test_roi_align_single_snippet_center():
    rng = rng_for(0)
    feats = rng.normal(size=(6, 4))
    np.testing.assert_allclose(roi_align_1d(feats, (2.0, 3.0), bins=1), feats[2])


def test_roi_align_hand_interpolation():
    feats = np.array([[0.0], [1.0]])
    np.testing.assert_allclose(roi_align_1d(feats, (0.5, 1.5), bins=1), [0.5])


def test_roi_align_linear_in_features():
    rng = rng_for(1)
    a = rng.normal(size=(9, 5))
    b = rng.normal(size=(9, 5))
    for interval, bins in [((1.3, 6.7), 4), ((0.0, 9.0), 3), ((4.2, 4.9), 2)]:
        lhs = roi_align_1d(a + b, interval, bins)
        rhs = roi_align_1d(a, interval, bins) + roi_align_1d(b, interval, bins)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_roi_align_rejects_bad_interval():
    feats = np.zeros((4, 2))
    with pytest.raises(InputError):
        roi_align_1d(feats, (-0.1, 2.0), 2)
    with pytest.raises(InputError):
        roi_align_1d(feats, (1.0, 5.0), 2)
    with pytest.raises(InputError):
        roi_align_1d(feats, (2.0, 2.0), 2)


# ------------------------------------------------------------------ classify

def test_classify_matches_prototype():
    vocab = orthogonal_vocab()
    pooled = vocab.prototypes[2:3] * 3.7  # scaling must not matter (cosine)
    top_ids, top_scores, probs = classify(pooled, vocab, ClassifierConfig())
    assert top_ids[0, 0] == 2
    assert 0.0 < top_scores[0, 0] < 1.0


def test_classify_uniform_when_equidistant():
    d = 8
    vocab = Vocabulary(names=[f"c{i}" for i in range(5)],
                       prototypes=np.tile(np.eye(1, d), (5, 1)),
                       novel_mask=np.zeros(5, dtype=bool))
    pooled = np.eye(1, d)
    _, _, probs = classify(pooled, vocab, ClassifierConfig())
    np.testing.assert_allclose(probs[0], 0.2)


def test_classify_hand_softmax_two_classes():
    # similarities (1, 0) at temperature 0.5 -> softmax(2, 0)
    vocab = Vocabulary(names=["a", "b"], prototypes=np.eye(2, 4), novel_mask=np.array([False, True]))
    pooled = np.eye(1, 4)
    _, top_scores, probs = classify(pooled, vocab, ClassifierConfig(temperature=0.5))
    expected = np.exp([2.0, 0.0]) / np.exp([2.0, 0.0]).sum()
    np.testing.assert_allclose(probs[0], expected, rtol=1e-9)
    np.testing.assert_allclose(top_scores[0, 0], expected[0], rtol=1e-9)


def test_classify_rows_sum_to_one_and_rescaling_invariance():
    rng = rng_for(7)
    vocab = Vocabulary(names=[f"c{i}" for i in range(6)], prototypes=rng.normal(size=(6, 16)),
                       novel_mask=np.zeros(6, dtype=bool))
    pooled = rng.normal(size=(10, 16))
    _, _, probs = classify(pooled, vocab, ClassifierConfig())
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    scaled = Vocabulary(names=vocab.names, prototypes=vocab.prototypes * rng.uniform(0.1, 9.0, size=(6, 1)),
                        novel_mask=vocab.novel_mask)
    _, _, probs2 = classify(pooled, scaled, ClassifierConfig())
    np.testing.assert_allclose(probs, probs2, atol=1e-12)


def test_classify_zero_norm_rejected():
    vocab = orthogonal_vocab()
    with pytest.raises(InputError):
        classify(np.zeros((1, 8)), vocab, ClassifierConfig())


def test_classify_empty_batch():
    vocab = orthogonal_vocab()
    top_ids, top_scores, probs = classify(np.zeros((0, 8)), vocab, ClassifierConfig())
    assert top_ids.shape == (0, 1) and probs.shape == (0, 4)


def test_pool_instance_features_shape():
    rng = rng_for(3)
    feats = rng.normal(size=(20, 6))
    inst = [ActionInstance(start=1.0, end=4.0), ActionInstance(start=10.0, end=19.5)]
    pooled = pool_instance_features(feats, inst, bins=4)
    assert pooled.shape == (2, 6)


# ------------------------------------------------------------------ fusion

def test_fuse_equal_scores_fixed_point():
    for x in (0.0, 0.3, 1.0):
        assert fuse_scores(x, x, "geometric") == pytest.approx(x)
        assert fuse_scores(x, x, "arithmetic") == pytest.approx(x)


def test_fuse_hand_values():
    np.testing.assert_allclose(fuse_scores(0.81, 0.25, "geometric"), 0.45)
    assert fuse_scores(1.0, 0.0, "geometric") == 0.0
    assert fuse_scores(1.0, 0.0, "arithmetic") == 0.5
    assert fuse_scores(0.7, 0.2, "actionness_only") == 0.7
    assert fuse_scores(0.7, 0.2, "category_only") == 0.2


def test_fuse_bounds_between_inputs():
    rng = rng_for(11)
    for _ in range(200):
        s_a, s_c = rng.uniform(0, 1, size=2)
        lo, hi = min(s_a, s_c), max(s_a, s_c)
        for mode in ("geometric", "arithmetic"):
            v = fuse_scores(s_a, s_c, mode)
            assert lo - 1e-12 <= v <= hi + 1e-12


def test_fuse_rejects_out_of_range():
    with pytest.raises(InputError):
        fuse_scores(1.2, 0.5, "geometric")
    with pytest.raises(InputError):
        fuse_scores(0.5, -0.1, "arithmetic")


def test_fusion_modes_preserve_argmax():
    # fused ranking over categories for a fixed instance: the top-1 category must
    # be the same under every mode because each fusion is increasing in s_c
    rng = rng_for(13)
    for _ in range(100):
        s_a = float(rng.uniform(0.05, 1.0))
        s_c = rng.uniform(0.01, 1.0, size=6)
        tops = set()
        for mode in ("geometric", "arithmetic", "actionness_only", "category_only"):
            fused = [fuse_scores(s_a, float(c), mode) for c in s_c]
            if mode == "actionness_only":
                continue  # constant in s_c; argmax over categories is undefined
            tops.add(int(np.argmax(fused)))
        assert len(tops) == 1 and tops == {int(np.argmax(s_c))}


# ------------------------------------------------------------------ SoftNMS

def inst(start, end, s=None, s_a=None):
    return ActionInstance(start=start, end=end, s=s, s_a=s_a)


def test_nms_single_instance_unchanged():
    out = soft_nms([inst(0, 4, s=0.42)])
    assert len(out) == 1 and out[0].s == 0.42


def test_nms_two_identical_intervals_linear():
    # supp-profile hand case: second decays to 0.8 * (1 - 1) = 0 and is pruned
    cfg = NmsConfig(iou_threshold=0.1, min_score=0.001, top_k=200, decay="linear")
    out = soft_nms([inst(2, 5, s=0.9), inst(2, 5, s=0.8)], cfg)
    assert len(out) == 1
    assert out[0].s == 0.9


def test_nms_disjoint_untouched():
    cfg = NmsConfig()
    out = soft_nms([inst(0, 2, s=0.5), inst(3, 6, s=0.9), inst(10, 12, s=0.7)], cfg)
    assert sorted(i.s for i in out) == [0.5, 0.7, 0.9]
    assert [i.s for i in out] == [0.9, 0.7, 0.5]  # descending


def test_nms_gaussian_decay():
    cfg = NmsConfig(decay="gaussian", sigma=0.5, iou_threshold=0.1, min_score=1e-9)
    out = soft_nms([inst(0, 10, s=1.0), inst(0, 10, s=0.5)], cfg)
    assert len(out) == 2
    np.testing.assert_allclose(out[1].s, 0.5 * np.exp(-1.0 / 0.5))


def test_nms_never_increases_top_survives_topk():
    rng = rng_for(21)
    cfg = NmsConfig(top_k=5)
    for _ in range(50):
        n = int(rng.integers(1, 20))
        starts = rng.uniform(0, 50, size=n)
        lengths = rng.uniform(0.5, 10, size=n)
        scores = rng.uniform(0.002, 1.0, size=n)
        pool = [inst(float(s), float(s + l), s=float(sc)) for s, l, sc in zip(starts, lengths, scores)]
        out = soft_nms(pool, cfg)
        assert len(out) <= 5
        by_interval = {(i.start, i.end): i.s for i in out}
        for i in pool:
            if (i.start, i.end) in by_interval:
                assert by_interval[(i.start, i.end)] <= i.s + 1e-12
        best = max(pool, key=lambda i: i.s)
        assert by_interval.get((best.start, best.end)) == pytest.approx(best.s)


def test_nms_on_actionness_for_pseudo_labels():
    cfg = NmsConfig()
    out = soft_nms([inst(0, 4, s_a=0.9), inst(0, 4, s_a=0.6)], cfg, on_actionness=True)
    assert len(out) == 1
    assert out[0].s_a == 0.9 and out[0].s is None
