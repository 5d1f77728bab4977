"""Training loop, evaluation protocol, cross-validation reports."""

import json
import warnings

import numpy as np
import pytest

from mfinception.config import preset
from mfinception.data import generate_synthetic, stratified_folds
from mfinception.errors import StructuralError
from mfinception.network import build_network
from mfinception.sampler import SamplePlan, baseline_assignment, sample_one
from mfinception.training import (
    FoldReport,
    RunReport,
    TrainConfig,
    aggregate_reports,
    cross_validate,
    evaluate_model,
    predict,
    refresh_batchnorm,
    train_model,
)

SMALL = dict(width_multiplier=1 / 16, input_resolution=(32, 32))


def small_net(init_seed=0, **kw):
    cfg = preset("cmi1", **{**SMALL, **kw})
    return build_network(cfg, baseline_assignment(cfg), init_seed=init_seed)


def small_data(per_class=6, seed=0, **kw):
    return generate_synthetic(num_classes=4, per_class=per_class,
                              resolution=(32, 32), seed=seed, **kw)


def test_train_config_validation():
    with pytest.raises(StructuralError):
        TrainConfig(epochs=0)
    with pytest.raises(StructuralError):
        TrainConfig(batch_size=0)
    with pytest.raises(StructuralError):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(StructuralError):
        TrainConfig(precision="float16")
    assert TrainConfig(precision="float64").dtype == np.float64


def test_zero_learning_rate_is_a_legal_no_op():
    plan = small_net()
    before = [p.data.copy() for _, p in plan.parameters()]
    ds = small_data()
    res = train_model(plan, ds, TrainConfig(epochs=1, learning_rate=0.0,
                                            batch_size=8, bn_refresh=False))
    assert res.failed_epoch is None
    assert len(res.losses) == 1
    for b, (_, p) in zip(before, plan.parameters()):
        assert np.array_equal(b, p.data)


def test_loss_decreases_on_separable_data():
    plan = small_net()
    ds = small_data(per_class=8)
    res = train_model(plan, ds, TrainConfig(epochs=6, batch_size=8, seed=0))
    assert res.losses[-1] < res.losses[0]
    assert res.t_train_seconds > 0


def test_training_is_deterministic_per_seed():
    losses = []
    for _ in range(2):
        plan = small_net(init_seed=3)
        res = train_model(plan, small_data(), TrainConfig(epochs=2, batch_size=8,
                                                          seed=11))
        losses.append(res.losses)
    assert losses[0] == losses[1]


def test_divergence_marks_failed_epoch_without_crashing():
    plan = small_net()
    ds = small_data()
    with np.errstate(over="ignore", invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = train_model(plan, ds, TrainConfig(epochs=4, batch_size=8,
                                                learning_rate=1e9))
    assert res.failed_epoch is not None
    assert 0 <= res.failed_epoch < 4


def test_overfit_tiny_set_scores_one_on_train_slice():
    # memorize 8 samples, then evaluate on the same slice
    plan = small_net()
    ds = small_data(per_class=2)
    train_model(plan, ds, TrainConfig(epochs=12, batch_size=8, seed=0))
    _, f1, _ = evaluate_model(plan, ds)
    assert f1 == 1.0


def test_evaluate_returns_predictions_f1_seconds_in_order():
    plan = small_net()
    ds = small_data(per_class=3)
    preds, f1, secs = evaluate_model(plan, ds)
    assert preds.shape == (12,)
    assert preds.dtype.kind == "i"
    assert 0.0 <= f1 <= 1.0
    assert secs >= 0.0
    assert np.array_equal(preds, predict(plan, ds.images))


def test_refresh_batchnorm_matches_full_batch_statistics():
    # with one refresh batch covering the whole set, running stats must equal
    # the batch statistics of that set exactly
    plan = small_net()
    ds = small_data(per_class=4)
    refresh_batchnorm(plan, ds.images, batch_size=len(ds))
    from mfinception import ops
    from mfinception.autograd import Tensor, no_grad

    blk = plan.blocks[0]
    with no_grad():
        y = ops.conv2d(Tensor(ds.images), blk.conv.weight, blk.conv.bias,
                       blk.conv.stride, blk.conv.padding)
    assert np.allclose(blk.bn.running_mean, y.data.mean(axis=(0, 2, 3)), atol=1e-5)
    assert np.allclose(blk.bn.running_var, y.data.var(axis=(0, 2, 3)), atol=1e-4)


def test_cross_validate_report_fields():
    ds = small_data(per_class=6)
    fp = stratified_folds(ds, 3, seed=0)
    cfg = preset("cmi1", **SMALL)
    assignment = sample_one(SamplePlan(arch=cfg, num_models=1, base_seed=5), 0)
    report = cross_validate(cfg, assignment, ds, fp,
                            TrainConfig(epochs=1, batch_size=8),
                            model_index=3, init_seed=17)
    assert report.arch_id == "k1m2n1"
    assert report.model_index == 3
    assert report.assignment_seed == "5:0"
    assert report.init_seed == 17
    assert len(report.folds) == 3
    assert [f.fold for f in report.folds] == [0, 1, 2]
    assert report.parameter_count > 0
    assert report.serialized_bytes == report.parameter_count * 4 + 65536
    # model-level times aggregate the folds
    assert report.t_train_seconds == pytest.approx(
        sum(f.t_train_seconds for f in report.folds))
    assert report.f1_valid == pytest.approx(
        float(np.mean([f.f1_valid for f in report.folds])))


def test_cross_validate_writes_checkpoint_when_asked(tmp_path):
    ds = small_data(per_class=3)
    fp = stratified_folds(ds, 3, seed=0)
    cfg = preset("cmi1", **SMALL)
    path = tmp_path / "last_fold.ckpt"
    cross_validate(cfg, baseline_assignment(cfg), ds, fp,
                   TrainConfig(epochs=1, batch_size=8),
                   checkpoint_path=path)
    from mfinception.checkpoint import deserialize_model

    back = deserialize_model(path)
    assert back.cb_count == 58


def test_run_report_json_round_trip():
    fold = FoldReport(fold=0, f1_train=0.9, f1_valid=0.8, t_train_seconds=1.0,
                      t_test_seconds=0.1, final_loss=0.2, failed_epoch=None,
                      losses=(1.0, 0.2))
    report = RunReport(arch_id="cmi1", model_index=2, assignment_seed="7:2",
                       f1_train=0.9, f1_valid=0.8, t_train_seconds=1.0,
                       t_test_seconds=0.1, parameter_count=100,
                       serialized_bytes=65936, init_seed=4, epochs=5,
                       folds=(fold,))
    doc = json.loads(json.dumps(report.to_json()))
    assert RunReport.from_json(doc) == report


def test_aggregate_reports_best_and_mean():
    def rep(i, f1):
        return RunReport(arch_id="cmi1", model_index=i, assignment_seed=f"0:{i}",
                         f1_train=f1, f1_valid=f1, t_train_seconds=10.0 + i,
                         t_test_seconds=1.0, parameter_count=100,
                         serialized_bytes=66336)

    reports = [rep(0, 0.7), rep(1, 0.9), rep(2, 0.9)]
    agg = aggregate_reports(reports)
    assert agg["best"].model_index == 1  # tie on f1 -> lower model index
    assert agg["mean"]["f1_valid"] == pytest.approx((0.7 + 0.9 + 0.9) / 3)
    assert agg["mean"]["t_train_seconds"] == pytest.approx(11.0)
    assert agg["mean"]["models"] == 3
    with pytest.raises(StructuralError):
        aggregate_reports([])


def test_report_field_validation():
    with pytest.raises(StructuralError):
        RunReport(arch_id="x", model_index=0, assignment_seed=None,
                  f1_train=1.2, f1_valid=0.5, t_train_seconds=1.0,
                  t_test_seconds=0.1, parameter_count=1, serialized_bytes=8)
    with pytest.raises(StructuralError):
        RunReport(arch_id="x", model_index=0, assignment_seed=None,
                  f1_train=0.5, f1_valid=0.5, t_train_seconds=-1.0,
                  t_test_seconds=0.1, parameter_count=1, serialized_bytes=8)
