"""Acceptance gate: one check per release criterion.

Each test prints a single [criterion NN] PASS/FAIL line on the live
terminal (capture bypassed) so a plain pytest run shows the verdict
sheet.  Tolerances are pinned next to each assertion; wall-clock limits
are generous for slow machines but still catch algorithmic regressions.
"""

import json
import time
import warnings
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from mfinception import kernels, ops
from mfinception.activations import ACTIVATION_KINDS
from mfinception.autograd import Tensor, make_node
from mfinception.checkpoint import HEADER_BYTES, serialize_model
from mfinception.cli import main
from mfinception.config import ArchConfig, cb_count, preset, validate_config
from mfinception.data import generate_synthetic, stratified_folds
from mfinception.gradcheck import (
    NETWORK_TOLERANCE,
    OP_TOLERANCE,
    network_gradient_errors,
    standard_op_checks,
)
from mfinception.metrics import macro_f1
from mfinception.network import build_network
from mfinception.sampler import SamplePlan, baseline_assignment, sample_assignments, sample_one
from mfinception.stats import arch_stats
from mfinception.training import RunReport, TrainConfig, cross_validate, train_model

ORDERED_PRESETS = ("cmi1", "cmi2", "cmi3", "mi")


def _say(capsys, num, word, label):
    with capsys.disabled():
        print(f"\n[criterion {num:02d}] {word}  {label}")


@contextmanager
def verdict(capsys, num, label):
    try:
        yield
    except BaseException:
        _say(capsys, num, "FAIL", label)
        raise
    _say(capsys, num, "PASS", label)


def legal_triples():
    out = []
    for k in range(1, 5):
        for m in range(1, 8):
            for n in range(1, 4):
                if k + m + n < 14:
                    out.append((k, m, n))
    return out


def test_criterion_01_block_arithmetic(capsys):
    with verdict(capsys, 1, "cb_count arithmetic matches a walk of every built plan"):
        started = time.perf_counter()
        assert cb_count(1, 2, 1) == 58
        assert cb_count(2, 3, 2) == 85
        assert cb_count(3, 4, 3) == 112
        assert cb_count(4, 7, 3) == 149
        for k, m, n in legal_triples():
            cfg = ArchConfig(k=k, m=m, n=n, width_multiplier=1 / 64,
                             input_resolution=(32, 32))
            plan = build_network(cfg, baseline_assignment(cfg), init_seed=0)
            assert len(plan.blocks) == cb_count(k, m, n), (k, m, n)
        assert time.perf_counter() - started < 1.0


def test_criterion_02_constraint_gate(capsys):
    with verdict(capsys, 2, "compression lattice: 83 accepted, (4,7,3) rejected"):
        started = time.perf_counter()
        accepted, rejected = [], []
        for k in range(1, 5):
            for m in range(1, 8):
                for n in range(1, 4):
                    cfg = ArchConfig(k=k, m=m, n=n)
                    (accepted if not validate_config(cfg) else rejected).append((k, m, n))
        assert len(accepted) == 83
        assert rejected == [(4, 7, 3)]
        assert accepted == legal_triples()
        assert time.perf_counter() - started < 1.0


def test_criterion_03_uniform_relu_equivalence(capsys):
    with verdict(capsys, 3, "all-RELU assignment == hard-coded RELU, outputs and grads"):
        cfg = preset("cmi1", width_multiplier=1 / 16, input_resolution=(32, 32))
        dispatched = build_network(cfg, baseline_assignment(cfg, "RELU"), init_seed=7)
        pinned = build_network(cfg, baseline_assignment(cfg, "RELU"), init_seed=7)

        def hard_relu(t):
            mask = (t.data > 0).astype(t.data.dtype)
            return make_node(t.data * mask, (t,), lambda dy: (dy * mask,))

        for blk in pinned.blocks:
            blk.activation_override = hard_relu

        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.uniform(0, 1, size=(2, 3, 32, 32)).astype(np.float32)
            labels = rng.integers(0, cfg.num_classes, size=2)
            grads = []
            for net in (dispatched, pinned):
                net.zero_grad()
                logits = net(Tensor(x), training=False)
                ops.softmax_cross_entropy(logits, labels).backward()
                grads.append((logits.data, [p.grad for _, p in net.parameters()]))
            (ya, ga), (yb, gb) = grads
            assert np.array_equal(ya, yb)  # tolerance: exact
            assert all(np.array_equal(a, b) for a, b in zip(ga, gb))


def test_criterion_04_gradient_correctness(capsys):
    with verdict(capsys, 4, "finite differences: every op <= 1e-5, network <= 1e-4"):
        started = time.perf_counter()
        for name, run in standard_op_checks(seed=0):
            assert run() <= OP_TOLERANCE, name

        cfg = preset("cmi1", width_multiplier=1 / 8, input_resolution=(64, 64))
        assignment = sample_one(SamplePlan(arch=cfg, num_models=1, base_seed=4), 0)
        plan = build_network(cfg, assignment, init_seed=4, dtype=np.float64)
        rng = np.random.default_rng(4)
        blocks = [plan.blocks[i]
                  for i in rng.choice(len(plan.blocks), size=3, replace=False)]
        params = [(f"cb{b.cb_index:03d}.{n}", p)
                  for b in blocks for n, p in b.parameters()]
        images = rng.uniform(0, 1, size=(1, 3, 64, 64))
        labels = rng.integers(0, cfg.num_classes, size=1)
        errors = network_gradient_errors(plan, images, labels, params)
        worst = max(errors.values())
        assert worst <= NETWORK_TOLERANCE, worst
        assert time.perf_counter() - started < 300.0


def brute_force_macro_f1(y_true, y_pred, num_classes):
    """Independent oracle: exact rational per-class F1 from raw counts."""
    scores = []
    for c in range(num_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        scores.append(Fraction(2 * tp, 2 * tp + fp + fn) if tp else Fraction(0))
    return float(sum(scores) / num_classes)


def test_criterion_05_metric_oracle(capsys):
    with verdict(capsys, 5, "macro_f1 == brute-force confusion arithmetic, 200 draws"):
        assert macro_f1([0, 0, 1, 1], [0, 0, 1, 0], num_classes=2) == \
            pytest.approx(11 / 15, abs=1e-12)
        rng = np.random.default_rng(55)
        for trial in range(200):
            k = int(rng.integers(2, 7))
            n = int(rng.integers(1, 51))
            y_true = rng.integers(0, k, size=n)
            y_pred = rng.integers(0, k, size=n)
            want = brute_force_macro_f1(y_true.tolist(), y_pred.tolist(), k)
            got = macro_f1(y_true, y_pred, num_classes=k)
            assert got == pytest.approx(want, abs=1e-12), trial


def proportional_gap(labels, plan):
    worst = 0.0
    for f in range(plan.num_folds):
        fold_labels = labels[plan.fold_indices(f)]
        for c in np.unique(labels):
            got = int((fold_labels == c).sum())
            want = (labels == c).sum() / plan.num_folds
            worst = max(worst, abs(got - want))
    return worst


def test_criterion_06_stratification(capsys):
    with verdict(capsys, 6, "500 multisets: folds proportional within 1, exact partition"):
        rng = np.random.default_rng(66)
        cases = [(np.repeat([0, 1, 2, 3], [150, 130, 100, 56]), 3)]  # 436 samples
        while len(cases) < 500:
            k = int(rng.integers(2, 7))
            folds = int(rng.integers(2, 6))
            n = int(rng.integers(max(k, folds), 120))
            cases.append((rng.integers(0, k, size=n), folds))
        for trial, (labels, folds) in enumerate(cases):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                plan = stratified_folds(labels, folds, seed=trial)
            assert proportional_gap(labels, plan) <= 1.0, trial
            merged = np.concatenate([plan.fold_indices(f) for f in range(folds)])
            assert sorted(merged.tolist()) == list(range(len(labels))), trial


def test_criterion_07_desk_scale_learning(capsys):
    with verdict(capsys, 7, "width-1/8 CMI1: 3-fold valid macro-F1 >= 0.90 in 30 epochs"):
        started = time.perf_counter()
        cfg = preset("cmi1", width_multiplier=1 / 8, input_resolution=(64, 64))
        ds = generate_synthetic(num_classes=4, per_class=30, resolution=(64, 64),
                                seed=0)  # 120 images
        fold_plan = stratified_folds(ds, 3, seed=0)
        assignment = sample_one(SamplePlan(arch=cfg, num_models=1, base_seed=0), 0)
        report = cross_validate(cfg, assignment, ds, fold_plan,
                                TrainConfig(epochs=30, batch_size=16, seed=0),
                                init_seed=0)
        assert report.f1_valid >= 0.90
        for fold in report.folds:
            assert fold.failed_epoch is None
            assert fold.losses[29] < fold.losses[0]
        assert time.perf_counter() - started < 1200.0


def test_criterion_08_cost_ordering(capsys, tmp_path):
    with verdict(capsys, 8, "flops, params, wall T_train, checkpoint bytes all ordered"):
        # static accounting at two widths (tolerance: strict inequality)
        full_width_params = {}
        for width in (1 / 8, 1.0):
            flops, params = [], []
            for name in ORDERED_PRESETS:
                cfg = preset(name, width_multiplier=width, input_resolution=(64, 64))
                plan = build_network(cfg, baseline_assignment(cfg), init_seed=0)
                stats = arch_stats(plan)
                flops.append(stats.flops_per_image)
                params.append(stats.parameter_count)
                if width == 1.0:
                    full_width_params[name] = stats.parameter_count
            assert flops == sorted(flops) and len(set(flops)) == 4
            assert params == sorted(params) and len(set(params)) == 4

        # mean wall-clock training time, 3 repetitions x 5 epochs at width 1/8
        ds = generate_synthetic(num_classes=4, per_class=12, resolution=(32, 32),
                                seed=0)
        train_cfg = TrainConfig(epochs=5, batch_size=16, seed=0, bn_refresh=False)
        mean_seconds, sizes = [], []
        for name in ORDERED_PRESETS:
            cfg = preset(name, width_multiplier=1 / 8, input_resolution=(32, 32))
            reps = []
            for rep in range(3):
                plan = build_network(cfg, baseline_assignment(cfg), init_seed=rep)
                reps.append(train_model(plan, ds, train_cfg).t_train_seconds)
            mean_seconds.append(sum(reps) / 3)
            path = tmp_path / f"{name}.ckpt"
            serialize_model(plan, path)
            stats = arch_stats(plan)
            assert path.stat().st_size == stats.parameter_count * 4 + HEADER_BYTES
            sizes.append(path.stat().st_size)
        assert mean_seconds == sorted(mean_seconds), mean_seconds
        assert sizes == sorted(sizes) and len(set(sizes)) == 4

        # reference sizes under the 8-byte convention; reported, not asserted
        reference_mb = {"cmi1": 129, "cmi2": 190, "cmi3": 252, "mi": 323}
        with capsys.disabled():
            for name in ORDERED_PRESETS:
                mb = full_width_params[name] * 8 / 1e6
                print(f"    {name}: {mb:7.1f} MB at full width "
                      f"(reference {reference_mb[name]} MB)")


def test_criterion_09_sampler_statistics(capsys):
    with verdict(capsys, 9, "10,034 sampled entries: each kind in [0.23, 0.27]"):
        cfg = preset("cmi1")
        plan = SamplePlan(arch=cfg, num_models=173, base_seed=9)  # 173*58 = 10034
        entries = [kind
                   for a in sample_assignments(plan)
                   for kind in a.entries]
        assert len(entries) == 10034
        for kind in ACTIVATION_KINDS:
            freq = entries.count(kind) / len(entries)
            assert 0.23 <= freq <= 0.27, (kind, freq)
        again = sample_assignments(plan)
        first = sample_assignments(plan)
        assert [a.to_json().encode() for a in first] == \
            [a.to_json().encode() for a in again]


def strip_timing(doc):
    if isinstance(doc, dict):
        return {k: strip_timing(v) for k, v in doc.items()
                if k not in ("t_train_seconds", "t_test_seconds")}
    if isinstance(doc, list):
        return [strip_timing(v) for v in doc]
    return doc


def sweep_doc(architectures, out_dir):
    return {
        "architectures": architectures,
        "dataset": {"synthetic": {"num_classes": 4, "per_class": 6, "seed": 3}},
        "num_models": 2,
        "include_baseline": True,
        "folds": 3,
        "width_multiplier": 1 / 16,
        "resolution": [32, 32],
        "train": {"epochs": 1, "batch_size": 8, "seed": 0},
        "output_dir": out_dir,
    }


def test_criterion_10_protocol_determinism(capsys, tmp_path):
    with verdict(capsys, 10, "fixed-seed sweep repeats byte-stable; 8-column table"):
        docs = {}
        for run in ("a", "b"):
            cfg_path = tmp_path / f"sweep_{run}.json"
            cfg_path.write_text(json.dumps(sweep_doc(["cmi1", "cmi2"], f"runs_{run}")))
            assert main(["train", "--config", str(cfg_path)]) == 0
            run_dir = tmp_path / f"runs_{run}"
            docs[run] = {
                p.name: strip_timing(json.loads(p.read_text()))
                for p in sorted(run_dir.iterdir())
            }
        assert sorted(docs["a"]) == [
            "ci1__model00.json", "ci2__model00.json",
            "cmi1__model00.json", "cmi1__model01.json",
            "cmi2__model00.json", "cmi2__model01.json",
        ]
        assert docs["a"] == docs["b"]

        # extend the first run directory to all four architecture families,
        # then render the best-model table: 8 architecture columns
        cfg_path = tmp_path / "sweep_rest.json"
        rest = sweep_doc(["cmi3", "mi"], "runs_a")
        rest["num_models"] = 1
        cfg_path.write_text(json.dumps(rest))
        assert main(["train", "--config", str(cfg_path)]) == 0
        capsys.readouterr()
        assert main(["report", "--runs", str(tmp_path / "runs_a")]) == 0
        out = capsys.readouterr().out
        header = next(l for l in out.splitlines() if l.startswith("| metric"))
        assert header == "| metric | CMI1 | CMI2 | CMI3 | MI | CI1 | CI2 | CI3 | I |"
