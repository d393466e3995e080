import numpy as np
import pytest

from ovtal.classifier import NmsConfig
from ovtal.dataio import Annotation, VideoRecord
from ovtal.exceptions import ConfigError, InputError, ShapeError
from ovtal.localizer import PyramidGeometry, SnippetFeatures, localizer_init
from ovtal.selftrain import (
    PseudoDataset,
    TrainConfig,
    ema_update,
    generate_pseudo_labels,
    merge_datasets,
    pseudo_label_quality,
    train_config_from_dict,
    train_stage1,
    train_stage2,
)
from ovtal.synthbench import SynthConfig, gen_benchmark


def tiny_bench(**kw):
    defaults = dict(c_base=3, c_novel=2, dim=12, videos_labeled=6, videos_unlabeled_id=4,
                    videos_unlabeled_od=4, videos_val=4, s_min=48, s_max=64,
                    instances_min=1, instances_max=2, seg_len_min=6, seg_len_max=10,
                    distractor_classes=1, seed=3)
    defaults.update(kw)
    return gen_benchmark(SynthConfig(**defaults))


def tiny_config(**kw):
    defaults = dict(max_lr=2e-3, warmup_epochs=1, main_epochs=3, batch_size=3,
                    channels=8, levels=3, seed=5)
    defaults.update(kw)
    return TrainConfig(**defaults)


# ------------------------------------------------------------------- EMA

def scalar_params(value, seed=0):
    p = localizer_init(PyramidGeometry.default(1), 2, 2, seed=seed)
    for t in p.tensors.values():
        t.data[:] = value
    return p


def test_ema_lambda_one_is_noop():
    teacher = scalar_params(1.0)
    student = scalar_params(0.0)
    before = {k: v.data.copy() for k, v in teacher.tensors.items()}
    ema_update(teacher, student, 1.0)
    for k in before:
        np.testing.assert_array_equal(teacher.tensors[k].data, before[k])


def test_ema_lambda_zero_copies_student():
    teacher = scalar_params(1.0)
    student = scalar_params(-2.5)
    ema_update(teacher, student, 0.0)
    for k in teacher.tensors:
        np.testing.assert_array_equal(teacher.tensors[k].data, student.tensors[k].data)


def test_ema_hand_value():
    teacher = scalar_params(1.0)
    student = scalar_params(0.0)
    ema_update(teacher, student, 0.9)
    for t in teacher.tensors.values():
        np.testing.assert_allclose(t.data, 0.9)


def test_ema_geometric_contraction_exact():
    lam = 0.75
    theta_teacher, theta_student = 1.0, 0.0
    teacher = scalar_params(theta_teacher)
    student = scalar_params(theta_student)
    for k in range(1, 12):
        ema_update(teacher, student, lam)
        expected = lam ** k * (theta_teacher - theta_student) + theta_student
        for t in teacher.tensors.values():
            np.testing.assert_array_equal(t.data, np.full_like(t.data, expected))


def test_ema_stays_between_endpoints():
    rng = np.random.Generator(np.random.Philox(key=9))
    teacher = localizer_init(PyramidGeometry.default(2), 4, 4, seed=1)
    student = localizer_init(PyramidGeometry.default(2), 4, 4, seed=2)
    for lam in (0.0, 0.3, 0.77, 1.0):
        t0 = {k: v.data.copy() for k, v in teacher.tensors.items()}
        ema_update(teacher, student, lam)
        for k, v in teacher.tensors.items():
            lo = np.minimum(t0[k], student.tensors[k].data)
            hi = np.maximum(t0[k], student.tensors[k].data)
            assert np.all(v.data >= lo - 1e-15) and np.all(v.data <= hi + 1e-15)


def test_ema_rejects_bad_lambda_and_shapes():
    teacher = scalar_params(0.0)
    student = scalar_params(1.0)
    with pytest.raises(InputError):
        ema_update(teacher, student, 1.5)
    student.tensors["proj_b"].data = np.zeros(5)
    with pytest.raises(ShapeError):
        ema_update(teacher, student, 0.5)


# ------------------------------------------------------------------- config

def test_train_config_from_dict_rejects_unknown():
    with pytest.raises(ConfigError, match="nope"):
        train_config_from_dict({"max_lr": 0.01, "nope": 1})
    cfg = train_config_from_dict({"max_lr": 0.01, "main_epochs": 2})
    assert cfg.max_lr == 0.01 and cfg.main_epochs == 2


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(main_epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(pseudo_label_threshold=1.5)
    with pytest.raises(ConfigError):
        TrainConfig(ema_lambda=-0.1)


# ------------------------------------------------------------------- stage 1

def test_stage1_deterministic_and_loss_decreases():
    bench = tiny_bench()
    cfg = tiny_config()
    params_a, trace_a = train_stage1(bench.labeled_train, cfg)
    params_b, trace_b = train_stage1(bench.labeled_train, cfg)
    assert trace_a == trace_b
    for k in params_a.tensors:
        np.testing.assert_array_equal(params_a.tensors[k].data, params_b.tensors[k].data)
    assert trace_a[-1] < trace_a[0]


def test_stage1_rejects_empty():
    with pytest.raises(InputError):
        train_stage1([], tiny_config())


# ------------------------------------------------------------------- pseudo labels

def trained_tiny():
    bench = tiny_bench()
    cfg = tiny_config()
    params, _ = train_stage1(bench.labeled_train, cfg)
    return bench, cfg, params


def test_pseudo_threshold_one_empty():
    bench, cfg, params = trained_tiny()
    pseudo = generate_pseudo_labels(params, bench.unlabeled_id, NmsConfig(), threshold=1.0)
    assert pseudo.videos == [] and pseudo.num_instances == 0


def test_pseudo_threshold_zero_keeps_all_postnms():
    bench, cfg, params = trained_tiny()
    all_kept = generate_pseudo_labels(params, bench.unlabeled_id, NmsConfig(), threshold=0.0)
    assert all_kept.num_instances == int(all_kept.histogram.sum())


def test_pseudo_instances_respect_threshold_and_validity():
    bench, cfg, params = trained_tiny()
    for thr in (0.2, 0.05, 0.4):
        pseudo = generate_pseudo_labels(params, bench.unlabeled_id, NmsConfig(), threshold=thr)
        for rec in pseudo.videos:
            assert rec.provenance == "in_domain"
            assert len(rec.annotations) >= 1
            for ann in rec.annotations:
                assert ann.actionness >= thr
                assert 0.0 <= ann.start < ann.end <= rec.features.duration_snippets
                assert ann.class_name is None


def test_pseudo_quality_pairs():
    bench, cfg, params = trained_tiny()
    pseudo = generate_pseudo_labels(params, bench.unlabeled_id, NmsConfig(), threshold=0.05)
    pairs, rho = pseudo_label_quality(pseudo, bench.unlabeled_id)
    assert pairs.shape[1] == 2
    assert np.all(pairs[:, 1] >= 0.0) and np.all(pairs[:, 1] <= 1.0)


# ------------------------------------------------------------------- merge

def test_merge_empty_pseudo_is_labeled():
    labeled = tiny_bench().labeled_train
    joint = merge_datasets(labeled, PseudoDataset(videos=[], threshold=1.0))
    assert joint == list(labeled)


def test_merge_counts_and_provenance():
    bench, cfg, params = trained_tiny()
    pseudo = generate_pseudo_labels(params, bench.unlabeled_id, NmsConfig(), threshold=0.0)
    joint = merge_datasets(bench.labeled_train, pseudo)
    assert len(joint) == len(bench.labeled_train) + len(pseudo.videos)
    tags = {r.provenance for r in joint}
    assert tags == {"labeled", "in_domain"}


def test_merge_rejects_id_collision():
    bench, cfg, params = trained_tiny()
    pseudo = generate_pseudo_labels(params, bench.unlabeled_id, NmsConfig(), threshold=0.0)
    with pytest.raises(InputError):
        merge_datasets(bench.labeled_train + pseudo.videos[:1], pseudo)


# ------------------------------------------------------------------- stage 2

def test_stage2_lambda_one_returns_stage1_teacher():
    bench, cfg, params = trained_tiny()
    pseudo = generate_pseudo_labels(params, bench.unlabeled_id, NmsConfig(), threshold=0.0)
    joint = merge_datasets(bench.labeled_train, pseudo)
    cfg2 = tiny_config(ema_lambda=1.0, main_epochs=2)
    teacher, trace = train_stage2(params, joint, cfg2)
    for k in params.tensors:
        np.testing.assert_array_equal(teacher.tensors[k].data, params.tensors[k].data)
    assert trace  # training still happened on the student


def test_stage2_without_pseudo_videos_is_noop():
    bench, cfg, params = trained_tiny()
    teacher, trace = train_stage2(params, bench.labeled_train, tiny_config())
    assert trace == []
    for k in params.tensors:
        np.testing.assert_array_equal(teacher.tensors[k].data, params.tensors[k].data)


def test_stage2_moves_teacher_with_small_lambda():
    bench, cfg, params = trained_tiny()
    pseudo = generate_pseudo_labels(params, bench.unlabeled_id, NmsConfig(), threshold=0.0)
    joint = merge_datasets(bench.labeled_train, pseudo)
    teacher, trace = train_stage2(params, joint, tiny_config(ema_lambda=0.5, main_epochs=2))
    moved = any(not np.array_equal(teacher.tensors[k].data, params.tensors[k].data)
                for k in params.tensors)
    assert moved and trace


def test_stage2_rejects_empty_joint():
    bench, cfg, params = trained_tiny()
    with pytest.raises(InputError):
        train_stage2(params, [], tiny_config())
